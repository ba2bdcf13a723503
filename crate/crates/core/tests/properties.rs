//! Invariants checked over randomly drawn models and batches.

use crpnn::training::internal_loss;
use crpnn::{
    backward, expand_to_spectrum, loss_mse, sgd_step, CrpnnModel, Matrix, Monomial, NetworkSpec,
    RelationSpectrum, Variant,
};
use proptest::prelude::*;

/// A valid (variant, n, m, order) with small dimensions.
fn small_spec() -> impl Strategy<Value = NetworkSpec> {
    (1usize..=3, 1usize..=2, prop::bool::ANY, 0usize..=3).prop_map(|(n, m, second, extra)| {
        if second {
            NetworkSpec::crpnn2(n, m, n + 2 + extra).unwrap()
        } else {
            NetworkSpec::crpnn1(n, m, 1 + extra).unwrap()
        }
    })
}

fn batch(rows: usize, cols: usize, seed: u64) -> Matrix {
    crpnn::datagen::uniform_inputs(rows, cols, seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients(spec in small_spec(), seed in 0u64..1000, k in 2usize..6) {
        let model = CrpnnModel::init_weights(spec, seed, None).unwrap();
        let xs = batch(spec.n(), k, seed + 1);
        let ys = batch(spec.m(), k, seed + 2);
        let full = backward(&model, &xs, &ys).unwrap();
        let mut mean = full.layers.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect::<Vec<_>>();
        for c in 0..k {
            let single = backward(&model, &xs.select_columns(&[c]), &ys.select_columns(&[c])).unwrap();
            for (acc, g) in mean.iter_mut().zip(&single.layers) {
                acc.axpy_neg(-1.0 / k as f64, g).unwrap();
            }
        }
        for (a, b) in full.layers.iter().zip(&mean) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn reported_mse_is_twice_internal_loss_per_output(spec in small_spec(), seed in 0u64..1000, k in 1usize..8) {
        let model = CrpnnModel::init_weights(spec, seed, None).unwrap();
        let xs = batch(spec.n(), k, seed + 3);
        let ys = batch(spec.m(), k, seed + 4);
        let mse = loss_mse(&model.predict_batch(&xs).unwrap(), &ys).unwrap();
        let internal = internal_loss(&model, &xs, &ys).unwrap();
        let expected = 2.0 * internal / spec.m() as f64;
        prop_assert!((mse - expected).abs() <= 1e-12 * (1.0 + mse), "{mse} vs {expected}");
    }

    #[test]
    fn small_sgd_step_lowers_loss(spec in small_spec(), seed in 0u64..1000) {
        let mut model = CrpnnModel::init_weights(spec, seed, None).unwrap();
        let xs = batch(spec.n(), 8, seed + 5);
        let ys = batch(spec.m(), 8, seed + 6);
        let before = internal_loss(&model, &xs, &ys).unwrap();
        let grads = backward(&model, &xs, &ys).unwrap();
        prop_assume!(grads.max_abs() > 1e-8);
        sgd_step(&mut model, &grads, 1e-4).unwrap();
        let after = internal_loss(&model, &xs, &ys).unwrap();
        prop_assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn spectrum_degree_never_exceeds_order(spec in small_spec(), seed in 0u64..1000) {
        let model = CrpnnModel::init_weights(spec, seed, None).unwrap();
        let s = expand_to_spectrum(&model).unwrap();
        prop_assert!(s.max_degree().unwrap_or(0) as usize <= spec.order());
    }

    #[test]
    fn scaling_output_layer_scales_every_coefficient(spec in small_spec(), seed in 0u64..1000, e in -4i32..=4) {
        let s = 2f64.powi(e);
        let mut model = CrpnnModel::init_weights(spec, seed, None).unwrap();
        let base = expand_to_spectrum(&model).unwrap();
        let last = model.weights().len() - 1;
        model.layer_data_mut(last).iter_mut().for_each(|w| *w *= s);
        let scaled = expand_to_spectrum(&model).unwrap();
        prop_assert_eq!(scaled, base.scaled(s));
    }

    #[test]
    fn spectrum_csv_round_trips(
        terms in prop::collection::vec(((0u32..4, 0u32..4), 0usize..2, -1e3f64..1e3), 0..12)
    ) {
        let terms = terms
            .into_iter()
            .map(|((a, b), out, c)| (out, Monomial::new(vec![a, b]), c));
        let s = RelationSpectrum::from_terms(2, 2, terms).unwrap();
        let back = RelationSpectrum::from_csv(s.to_csv().as_bytes()).unwrap();
        // Trailing outputs with no terms are not recoverable from the file.
        for out in 0..back.m() {
            prop_assert_eq!(back.terms(out).collect::<Vec<_>>(), s.terms(out).collect::<Vec<_>>());
        }
        for out in back.m()..s.m() {
            prop_assert_eq!(s.terms(out).count(), 0);
        }
    }

    #[test]
    fn model_documents_round_trip(spec in small_spec(), seed in 0u64..1000) {
        let model = CrpnnModel::init_weights(spec, seed, Some(0.9)).unwrap();
        let text = model.save_model();
        let loaded = CrpnnModel::load_model(&text).unwrap();
        prop_assert_eq!(&loaded, &model);
        prop_assert_eq!(loaded.save_model(), text);
    }
}

#[test]
fn crpnn1_of_order_three_reaches_every_monomial() {
    let spec = NetworkSpec::new(Variant::Crpnn1, 2, 1, 3).unwrap();
    for seed in 0..10 {
        let model = CrpnnModel::init_weights(spec, seed, None).unwrap();
        let s = expand_to_spectrum(&model).unwrap();
        for mono in crpnn::datagen::enumerate_monomials(2, 3) {
            assert!(
                s.coefficient(0, &mono).abs() > 1e-12,
                "seed {seed}: {mono} missing"
            );
        }
    }
}
