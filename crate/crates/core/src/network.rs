//! The two network structures and their forward passes.
//!
//! Both networks work on the bias-augmented input `x~ = [x_1, ..., x_n, 1]`.
//! Every hidden activation has width `n + 1`.
//!
//! * CR-PNN I stacks `L - 1` Taylor layers, `A^i = (W^i A^{i-1}) ∘ x~`,
//!   starting from `A^0 = x~`, and finishes with a linear output layer. Each
//!   Taylor layer raises the degree by one.
//! * CR-PNN II starts with an expanded layer `A^1 = (W^1 x~) ∘ x~^c`, follows
//!   it with `l` Taylor layers and the same linear output layer. With
//!   `c = L - l - 1` the network has order `L` using `l + 2` weighted layers.
//!
//! Batches are matrices with one sample per column.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ColumnVector, Matrix, Tally};
use crate::topology::{plan_topology, TopologyPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Crpnn1,
    Crpnn2,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Crpnn1 => "crpnn1",
            Variant::Crpnn2 => "crpnn2",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crpnn1" => Ok(Variant::Crpnn1),
            "crpnn2" => Ok(Variant::Crpnn2),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?}, expected crpnn1 or crpnn2"
            ))),
        }
    }
}

/// What a weighted layer does after its linear map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Hadamard product with `x~^c`.
    Expanded { power: u32 },
    /// Hadamard product with `x~`.
    Taylor,
    /// Linear map only.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkSpec {
    variant: Variant,
    n: usize,
    m: usize,
    order: usize,
    plan: Option<TopologyPlan>,
}

impl NetworkSpec {
    pub fn new(variant: Variant, n: usize, m: usize, order: usize) -> Result<Self> {
        match variant {
            Variant::Crpnn1 => Self::crpnn1(n, m, order),
            Variant::Crpnn2 => Self::crpnn2(n, m, order),
        }
    }

    pub fn crpnn1(n: usize, m: usize, order: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid(
                "input and output dimensions must be at least 1",
            ));
        }
        if order == 0 {
            return Err(Error::invalid("CR-PNN I order must be at least 1"));
        }
        Ok(NetworkSpec {
            variant: Variant::Crpnn1,
            n,
            m,
            order,
            plan: None,
        })
    }

    pub fn crpnn2(n: usize, m: usize, order: usize) -> Result<Self> {
        let plan = plan_topology(n, m, order)?;
        Ok(NetworkSpec {
            variant: Variant::Crpnn2,
            n,
            m,
            order,
            plan: Some(plan),
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// The CR-PNN II sizing record; `None` for CR-PNN I.
    pub fn plan(&self) -> Option<&TopologyPlan> {
        self.plan.as_ref()
    }

    pub fn taylor_layers(&self) -> Option<usize> {
        self.plan.map(|p| p.taylor_layers)
    }

    pub fn power(&self) -> Option<usize> {
        self.plan.map(|p| p.power)
    }

    /// Kinds of the weighted layers, input side first.
    pub fn layer_kinds(&self) -> Vec<LayerKind> {
        let mut kinds = Vec::new();
        match self.plan {
            None => kinds.extend(std::iter::repeat_n(LayerKind::Taylor, self.order - 1)),
            Some(plan) => {
                kinds.push(LayerKind::Expanded {
                    power: plan.power as u32,
                });
                kinds.extend(std::iter::repeat_n(LayerKind::Taylor, plan.taylor_layers));
            }
        }
        kinds.push(LayerKind::Output);
        kinds
    }

    /// `(rows, cols)` of every weight matrix, input side first.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        let w = self.n + 1;
        self.layer_kinds()
            .into_iter()
            .map(|k| match k {
                LayerKind::Output => (self.m, w),
                _ => (w, w),
            })
            .collect()
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shapes().iter().map(|(r, c)| r * c).sum()
    }
}

/// Activations recorded by a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    /// `activations[0]` is the augmented input; `activations[j]` is the output
    /// of weighted layer `j`. The last entry is the network output.
    pub activations: Vec<Matrix>,
    /// `x~^c` for CR-PNN II.
    pub power: Option<Matrix>,
}

impl ForwardTrace {
    pub fn augmented(&self) -> &Matrix {
        &self.activations[0]
    }

    pub fn output(&self) -> &Matrix {
        self.activations
            .last()
            .expect("trace holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrpnnModel {
    spec: NetworkSpec,
    pub(crate) weights: Vec<Matrix>,
}

impl CrpnnModel {
    /// Wraps explicit weights after checking them against the spec.
    pub fn from_weights(spec: NetworkSpec, weights: Vec<Matrix>) -> Result<Self> {
        let shapes = spec.weight_shapes();
        if weights.len() != shapes.len() {
            return Err(Error::Document(format!(
                "{} network of order {} needs {} weight matrices, got {}",
                spec.variant,
                spec.order,
                shapes.len(),
                weights.len()
            )));
        }
        for (layer, (w, &(rows, cols))) in weights.iter().zip(&shapes).enumerate() {
            if w.shape() != (rows, cols) {
                return Err(Error::LayerShape {
                    layer,
                    expected_rows: rows,
                    expected_cols: cols,
                    found_rows: w.rows(),
                    found_cols: w.cols(),
                });
            }
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("weights of layer {layer}"),
                });
            }
        }
        Ok(CrpnnModel { spec, weights })
    }

    /// Every weight uniform in `(-r, r)`, `r = scale` or `1/sqrt(n+1)`.
    pub fn init_weights(spec: NetworkSpec, seed: u64, scale: Option<f64>) -> Result<Self> {
        let r = match scale {
            Some(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(Error::invalid(format!(
                    "init scale must be positive, got {s}"
                )))
            }
            Some(s) => s,
            None => 1.0 / ((spec.n + 1) as f64).sqrt(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = spec
            .weight_shapes()
            .into_iter()
            .map(|(rows, cols)| {
                Matrix::from_fn(rows, cols, |_, _| loop {
                    let w = rng.gen_range(-r..r);
                    if w != -r {
                        break w;
                    }
                })
            })
            .collect();
        Ok(CrpnnModel { spec, weights })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// Mutable row-major entries of one layer's weights.
    pub fn layer_data_mut(&mut self, layer: usize) -> &mut [f64] {
        self.weights[layer].as_mut_slice()
    }

    pub fn output_weights(&self) -> &Matrix {
        self.weights
            .last()
            .expect("every model has an output layer")
    }

    pub fn forward(&self, x: &ColumnVector) -> Result<ColumnVector> {
        self.forward_tallied(x, &mut Tally::off())
    }

    pub fn forward_tallied(&self, x: &ColumnVector, tally: &mut Tally) -> Result<ColumnVector> {
        let y = self.predict_batch_tallied(&Matrix::from_column(x), tally)?;
        Ok(y.column(0))
    }

    /// Forward pass of a CR-PNN I model.
    pub fn forward_crpnn1(&self, x: &ColumnVector) -> Result<ColumnVector> {
        self.expect_variant(Variant::Crpnn1)?;
        self.forward(x)
    }

    /// Forward pass of a CR-PNN II model.
    pub fn forward_crpnn2(&self, x: &ColumnVector) -> Result<ColumnVector> {
        self.expect_variant(Variant::Crpnn2)?;
        self.forward(x)
    }

    /// Forward pass over a batch whose columns are samples (`n x K`),
    /// returning `m x K`.
    pub fn predict_batch(&self, xs: &Matrix) -> Result<Matrix> {
        self.predict_batch_tallied(xs, &mut Tally::off())
    }

    pub fn predict_batch_tallied(&self, xs: &Matrix, tally: &mut Tally) -> Result<Matrix> {
        self.check_input(xs)?;
        // Samples are independent, so the batch is pushed through in column
        // tiles small enough that every live activation stays in cache.
        const TILE: usize = 256;
        let k = xs.cols();
        if k <= TILE {
            return self.predict_tile(&xs.augment_rows(), tally);
        }
        let mut out = Matrix::zeros(self.spec.m, k);
        let mut start = 0;
        while start < k {
            let end = (start + TILE).min(k);
            let tile = Matrix::from_fn(self.spec.n + 1, end - start, |r, c| {
                if r < self.spec.n {
                    xs.get(r, start + c)
                } else {
                    1.0
                }
            });
            let y = self.predict_tile(&tile, tally)?;
            for r in 0..self.spec.m {
                out.as_mut_slice()[r * k + start..r * k + end].copy_from_slice(y.row(r));
            }
            start = end;
        }
        Ok(out)
    }

    fn predict_tile(&self, aug: &Matrix, tally: &mut Tally) -> Result<Matrix> {
        let power = self.expanded_power(aug, tally)?;
        let mut current = Matrix::zeros(0, 0);
        let mut next = Matrix::zeros(0, 0);
        for (layer, (kind, w)) in self
            .spec
            .layer_kinds()
            .into_iter()
            .zip(&self.weights)
            .enumerate()
        {
            let input = if layer == 0 { aug } else { &current };
            let factor = match kind {
                LayerKind::Expanded { .. } => power.as_ref(),
                LayerKind::Taylor => Some(aug),
                LayerKind::Output => None,
            };
            w.product_into(input, factor, &mut next, tally)?;
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Forward pass that keeps every activation and fails on overflow.
    pub(crate) fn forward_trace(&self, xs: &Matrix) -> Result<ForwardTrace> {
        self.check_input(xs)?;
        let tally = &mut Tally::off();
        let aug = xs.augment_rows();
        let power = self.expanded_power(&aug, tally)?;
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(aug);
        for (layer, (kind, w)) in self
            .spec
            .layer_kinds()
            .into_iter()
            .zip(&self.weights)
            .enumerate()
        {
            let next = Self::apply_layer(
                kind,
                w,
                activations.last().unwrap(),
                &activations[0],
                power.as_ref(),
                tally,
            )?;
            if !next.is_finite() {
                return Err(Error::Overflow { layer });
            }
            activations.push(next);
        }
        Ok(ForwardTrace { activations, power })
    }

    fn apply_layer(
        kind: LayerKind,
        w: &Matrix,
        input: &Matrix,
        aug: &Matrix,
        power: Option<&Matrix>,
        tally: &mut Tally,
    ) -> Result<Matrix> {
        match kind {
            LayerKind::Expanded { .. } => {
                let p = power.expect("expanded layer needs the input power");
                w.matmul_hadamard_tallied(input, p, tally)
            }
            LayerKind::Taylor => w.matmul_hadamard_tallied(input, aug, tally),
            LayerKind::Output => w.matmul_tallied(input, tally),
        }
    }

    fn expanded_power(&self, aug: &Matrix, tally: &mut Tally) -> Result<Option<Matrix>> {
        match self.spec.power() {
            Some(c) => Ok(Some(aug.elementwise_power_tallied(c as u32, tally)?)),
            None => Ok(None),
        }
    }

    fn check_input(&self, xs: &Matrix) -> Result<()> {
        if xs.rows() != self.spec.n {
            return Err(Error::Shape {
                op: "forward",
                left_rows: self.spec.n,
                left_cols: 1,
                right_rows: xs.rows(),
                right_cols: xs.cols(),
            });
        }
        Ok(())
    }

    fn expect_variant(&self, variant: Variant) -> Result<()> {
        if self.spec.variant != variant {
            return Err(Error::invalid(format!(
                "model is {}, not {variant}",
                self.spec.variant
            )));
        }
        Ok(())
    }

    /// Serializes to the JSON model document.
    pub fn save_model(&self) -> String {
        let doc = ModelDocument {
            variant: self.spec.variant,
            n: self.spec.n,
            m: self.spec.m,
            order: self.spec.order,
            taylor_layers: self.spec.taylor_layers(),
            power: self.spec.power(),
            weights: self
                .weights
                .iter()
                .map(|w| WeightDocument {
                    rows: w.rows(),
                    cols: w.cols(),
                    data: w.as_slice().to_vec(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&doc).expect("model documents always serialize");
        s.push('\n');
        s
    }

    pub fn load_model(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
        let spec = NetworkSpec::new(doc.variant, doc.n, doc.m, doc.order)?;
        if doc.taylor_layers != spec.taylor_layers() || doc.power != spec.power() {
            return Err(Error::Document(format!(
                "declared taylor_layers={:?}, power={:?} but order {} over n={} implies {:?}, {:?}",
                doc.taylor_layers,
                doc.power,
                doc.order,
                doc.n,
                spec.taylor_layers(),
                spec.power()
            )));
        }
        let shapes = spec.weight_shapes();
        if doc.weights.len() != shapes.len() {
            return Err(Error::Document(format!(
                "expected {} weight matrices, found {}",
                shapes.len(),
                doc.weights.len()
            )));
        }
        let mut weights = Vec::with_capacity(shapes.len());
        for (layer, (w, (rows, cols))) in doc.weights.into_iter().zip(shapes).enumerate() {
            if (w.rows, w.cols) != (rows, cols) {
                return Err(Error::LayerShape {
                    layer,
                    expected_rows: rows,
                    expected_cols: cols,
                    found_rows: w.rows,
                    found_cols: w.cols,
                });
            }
            weights.push(
                Matrix::new(rows, cols, w.data)
                    .map_err(|e| Error::Document(format!("layer {layer}: {e}")))?,
            );
        }
        CrpnnModel::from_weights(spec, weights)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    variant: Variant,
    n: usize,
    m: usize,
    order: usize,
    taylor_layers: Option<usize>,
    power: Option<usize>,
    weights: Vec<WeightDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightDocument {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}
