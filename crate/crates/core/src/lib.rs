//! Controllable and readable polynomial neural networks.
//!
//! A CR-PNN computes an explicit multivariate polynomial of bounded degree:
//! every layer is a linear map followed by a Hadamard product with (a power
//! of) the bias-augmented input, so each layer raises the degree by a known
//! amount. The network order `L`, the largest degree it can represent, is the
//! precision knob.
//!
//! Two structures are provided:
//!
//! * **CR-PNN I** stacks `L - 1` Taylor layers and a linear output layer.
//! * **CR-PNN II** replaces the deep stack by an *expanded layer* that raises
//!   the input to the power `c` in one step, followed by `l` Taylor layers and
//!   the output layer, reaching the same order with `l + 2` weighted layers.
//!
//! ```
//! use crpnn::{CrpnnModel, NetworkSpec, expand_to_spectrum};
//!
//! # fn main() -> crpnn::Result<()> {
//! let spec = NetworkSpec::crpnn2(2, 1, 6)?;
//! assert_eq!(spec.taylor_layers(), Some(2));
//! assert_eq!(spec.power(), Some(3));
//!
//! let model = CrpnnModel::init_weights(spec, 7, None)?;
//! let spectrum = expand_to_spectrum(&model)?;
//! assert!(spectrum.max_degree().unwrap() <= 6);
//! # Ok(())
//! # }
//! ```
//!
//! The `book/` directory at the repository root walks through the concepts;
//! its code listings are compiled and run as doctests of this crate.

mod csvio;
mod error;

pub mod bench;
pub mod datagen;
pub mod matrix;
pub mod network;
pub mod spectrum;
pub mod topology;
pub mod training;

pub use bench::{run_bench, BenchProtocol, BenchReport};
pub use datagen::{
    gen_random_polynomial, make_dataset, sample_sine_trajectory, Dataset, TargetPolynomial,
};
pub use error::{Error, Result};
pub use matrix::{ColumnVector, Matrix, Tally};
pub use network::{CrpnnModel, LayerKind, NetworkSpec, Variant};
pub use spectrum::{compare_spectra, expand_to_spectrum, Monomial, RelationSpectrum};
pub use topology::{
    layer_count_compare, mult_count_crpnn1, mult_count_crpnn2, order_of, plan_topology,
    TopologyPlan,
};
pub use training::{
    backward, grad_check, loss_mse, sgd_step, train, train_with, BatchSize, GradientSet,
    TrainConfig, TrainRecord,
};

// Compiles and runs every listing in the book as a doctest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/topology.md")]
    mod topology {}
    #[doc = include_str!("../../../book/src/forward.md")]
    mod forward {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/complexity.md")]
    mod complexity {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
