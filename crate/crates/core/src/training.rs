//! Error backpropagation and plain gradient descent.
//!
//! The loss being minimized is `(1/(2B)) * sum ||y_hat - y||^2` over a batch
//! of `B` samples. With that normalization the backward pass is exactly:
//!
//! ```text
//! dA^{out}  = Y_hat - Y
//! dZ^j      = dA^j                  (output layer)
//! dZ^j      = dA^j ∘ x~             (Taylor layer)
//! dZ^1      = dA^1 ∘ x~^c           (expanded layer)
//! dA^{j-1}  = (W^j)^T dZ^j
//! dW^j      = (1/B) dZ^j (A^{j-1})^T
//! ```
//!
//! and the update is `W <- W - alpha * dW`. The mean squared error reported
//! per epoch averages over all `K * m` target entries, so on a full batch it is
//! twice the internal loss.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{CrpnnModel, LayerKind};

/// Epoch MSE above which training is aborted.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Absolute gradient discrepancy treated as agreement by [`grad_check`].
pub const GRAD_CHECK_ABS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: BatchSize,
    /// Seeds minibatch shuffling.
    pub seed: u64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 2000,
            batch_size: BatchSize::Full,
            seed: 0,
            lr_decay: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self, samples: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let BatchSize::Fixed(b) = self.batch_size {
            if b == 0 || b > samples {
                return Err(Error::invalid(format!(
                    "batch size {b} must lie in [1, {samples}]"
                )));
            }
        }
        if let Some(d) = self.lr_decay {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid(format!(
                    "lr decay must be positive, got {d}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-layer weight gradients, shaped like the model's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Matrix>,
}

impl GradientSet {
    pub fn zeros_like(model: &CrpnnModel) -> Self {
        GradientSet {
            layers: model
                .weights()
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().fold(0.0, |acc, g| acc.max(g.max_abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    /// Full-dataset MSE after each epoch.
    pub mse: Vec<f64>,
    pub final_mse: f64,
    pub epochs_run: usize,
    pub wall_seconds: f64,
}

/// Mean of squared differences over every entry.
pub fn loss_mse(predictions: &Matrix, targets: &Matrix) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Shape {
            op: "loss_mse",
            left_rows: predictions.rows(),
            left_cols: predictions.cols(),
            right_rows: targets.rows(),
            right_cols: targets.cols(),
        });
    }
    let sum: f64 = predictions
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.as_slice().len() as f64)
}

/// `(1/(2B)) * sum ||y_hat - y||^2` over the batch columns.
pub fn internal_loss(model: &CrpnnModel, inputs: &Matrix, targets: &Matrix) -> Result<f64> {
    let predictions = model.predict_batch(inputs)?;
    let mse = loss_mse(&predictions, targets)?;
    Ok(mse * targets.rows() as f64 / 2.0)
}

pub fn backward(model: &CrpnnModel, inputs: &Matrix, targets: &Matrix) -> Result<GradientSet> {
    let batch = inputs.cols();
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let spec = model.spec();
    if targets.rows() != spec.m() || targets.cols() != batch {
        return Err(Error::Shape {
            op: "backward",
            left_rows: spec.m(),
            left_cols: batch,
            right_rows: targets.rows(),
            right_cols: targets.cols(),
        });
    }
    let trace = model.forward_trace(inputs)?;

    let mut d_act = trace.output().clone();
    d_act.axpy_neg(1.0, targets)?;

    let kinds = spec.layer_kinds();
    let inv_batch = 1.0 / batch as f64;
    let mut layers = vec![Matrix::zeros(0, 0); kinds.len()];
    for j in (0..kinds.len()).rev() {
        let mut d_z = d_act;
        match kinds[j] {
            LayerKind::Output => {}
            LayerKind::Taylor => d_z = d_z.hadamard(trace.augmented())?,
            LayerKind::Expanded { .. } => {
                let p = trace
                    .power
                    .as_ref()
                    .expect("expanded layer records its power");
                d_z = d_z.hadamard(p)?;
            }
        }
        let mut d_w = d_z.matmul(&trace.activations[j].transpose())?;
        d_w.scale(inv_batch);
        layers[j] = d_w;
        d_act = if j > 0 {
            model.weights[j].transpose().matmul(&d_z)?
        } else {
            Matrix::zeros(0, 0)
        };
    }
    Ok(GradientSet { layers })
}

/// `W <- W - alpha * dW` for every layer.
pub fn sgd_step(model: &mut CrpnnModel, grads: &GradientSet, learning_rate: f64) -> Result<()> {
    if grads.layers.len() != model.weights.len() {
        return Err(Error::invalid(format!(
            "gradient set has {} layers, model has {}",
            grads.layers.len(),
            model.weights.len()
        )));
    }
    for (w, g) in model.weights.iter().zip(&grads.layers) {
        if w.shape() != g.shape() {
            return Err(Error::Shape {
                op: "sgd_step",
                left_rows: w.rows(),
                left_cols: w.cols(),
                right_rows: g.rows(),
                right_cols: g.cols(),
            });
        }
    }
    for (w, g) in model.weights.iter_mut().zip(&grads.layers) {
        w.axpy_neg(learning_rate, g)?;
    }
    Ok(())
}

pub fn train(
    model: CrpnnModel,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(CrpnnModel, TrainRecord)> {
    train_with(model, dataset, config, |_, _| Ok(()))
}

/// [`train`] with a callback receiving `(epoch, mse)` after every epoch,
/// epochs numbered from 1.
pub fn train_with(
    mut model: CrpnnModel,
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64) -> Result<()>,
) -> Result<(CrpnnModel, TrainRecord)> {
    let samples = dataset.len();
    if samples == 0 {
        return Err(Error::invalid("empty dataset"));
    }
    if dataset.n() != model.spec().n() || dataset.m() != model.spec().m() {
        return Err(Error::invalid(format!(
            "dataset has n={}, m={} but model expects n={}, m={}",
            dataset.n(),
            dataset.m(),
            model.spec().n(),
            model.spec().m()
        )));
    }
    config.validate(samples)?;

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples).collect();
    let mut lr = config.learning_rate;
    let mut trajectory = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        match config.batch_size {
            BatchSize::Full => {
                let grads = backward(&model, dataset.inputs(), dataset.targets())?;
                sgd_step(&mut model, &grads, lr)?;
            }
            BatchSize::Fixed(b) => {
                order.shuffle(&mut rng);
                for chunk in order.chunks(b) {
                    let xs = dataset.inputs().select_columns(chunk);
                    let ys = dataset.targets().select_columns(chunk);
                    let grads = backward(&model, &xs, &ys)?;
                    sgd_step(&mut model, &grads, lr)?;
                }
            }
        }
        let mse = loss_mse(&model.predict_batch(dataset.inputs())?, dataset.targets())?;
        if !mse.is_finite() || mse > DIVERGENCE_LIMIT {
            return Err(Error::Diverged { epoch, mse });
        }
        trajectory.push(mse);
        on_epoch(epoch, mse)?;
        if let Some(d) = config.lr_decay {
            lr *= d;
        }
    }

    let final_mse = match trajectory.last() {
        Some(&mse) => mse,
        None => loss_mse(&model.predict_batch(dataset.inputs())?, dataset.targets())?,
    };
    let record = TrainRecord {
        epochs_run: trajectory.len(),
        mse: trajectory,
        final_mse,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}

/// Worst disagreement between [`backward`] and central differences of the
/// internal loss, using step `h * max(1, |w|)` per weight.
///
/// Each weight contributes `|a - f| / max(|a|, |f|)`, or zero when
/// `|a - f| <= GRAD_CHECK_ABS_TOLERANCE`.
pub fn grad_check(model: &CrpnnModel, inputs: &Matrix, targets: &Matrix, h: f64) -> Result<f64> {
    let analytic = backward(model, inputs, targets)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (layer, grad) in analytic.layers.iter().enumerate() {
        for idx in 0..grad.as_slice().len() {
            let w = probe.layer_data_mut(layer)[idx];
            let step = h * w.abs().max(1.0);

            probe.layer_data_mut(layer)[idx] = w + step;
            let plus = internal_loss(&probe, inputs, targets)?;
            probe.layer_data_mut(layer)[idx] = w - step;
            let minus = internal_loss(&probe, inputs, targets)?;
            probe.layer_data_mut(layer)[idx] = w;

            let numeric = (plus - minus) / (2.0 * step);
            let a = grad.as_slice()[idx];
            let diff = (a - numeric).abs();
            if diff > GRAD_CHECK_ABS_TOLERANCE {
                worst = worst.max(diff / a.abs().max(numeric.abs()));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSpec;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn mse_by_hand() {
        let t = m(&[&[0.0, 0.0]]);
        assert_eq!(loss_mse(&t, &t).unwrap(), 0.0);
        assert_eq!(loss_mse(&m(&[&[1.0, 1.0]]), &t).unwrap(), 1.0);
        assert_eq!(loss_mse(&m(&[&[3.0]]), &m(&[&[1.0]])).unwrap(), 4.0);
        assert!(loss_mse(&m(&[&[3.0]]), &t).is_err());
    }

    #[test]
    fn single_layer_gradient_by_hand() {
        let spec = NetworkSpec::crpnn1(1, 1, 1).unwrap();
        let model = CrpnnModel::from_weights(spec, vec![m(&[&[1.0, 1.0]])]).unwrap();
        let g = backward(&model, &m(&[&[2.0]]), &m(&[&[1.0]])).unwrap();
        assert_eq!(g.layers[0].as_slice(), &[4.0, 2.0]);
    }

    #[test]
    fn exact_fit_has_zero_gradient() {
        let model =
            CrpnnModel::init_weights(NetworkSpec::crpnn2(2, 1, 5).unwrap(), 3, None).unwrap();
        let xs = m(&[&[0.1, 0.5, -0.3], &[0.7, -0.2, 0.4]]);
        let ys = model.predict_batch(&xs).unwrap();
        let g = backward(&model, &xs, &ys).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(grad_check(&model, &xs, &ys, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn crpnn2_gradients_match_finite_differences() {
        let model =
            CrpnnModel::init_weights(NetworkSpec::crpnn2(3, 1, 7).unwrap(), 8, None).unwrap();
        let xs = m(&[
            &[0.2, -0.6, 0.9, 0.1],
            &[-0.4, 0.3, 0.5, -0.8],
            &[0.7, 0.2, -0.1, 0.6],
        ]);
        let ys = m(&[&[0.5, -1.0, 0.25, 2.0]]);
        assert!(grad_check(&model, &xs, &ys, 1e-6).unwrap() < 1e-5);
    }

    #[test]
    fn sgd_step_cases() {
        let spec = NetworkSpec::crpnn1(1, 1, 1).unwrap();
        let mut model = CrpnnModel::from_weights(spec, vec![m(&[&[1.0, -3.0]])]).unwrap();
        let before = model.clone();
        let grads = GradientSet {
            layers: vec![m(&[&[2.0, 5.0]])],
        };
        sgd_step(&mut model, &grads, 0.0).unwrap();
        assert_eq!(model, before);
        let zeros = GradientSet::zeros_like(&model);
        sgd_step(&mut model, &zeros, 0.3).unwrap();
        assert_eq!(model, before);
        sgd_step(&mut model, &grads, 0.1).unwrap();
        assert_eq!(model.weights()[0].get(0, 0), 0.8);

        let wrong = GradientSet {
            layers: vec![m(&[&[1.0]])],
        };
        assert!(sgd_step(&mut model, &wrong, 0.1).is_err());
    }

    #[test]
    fn zero_epochs_leaves_model_alone() {
        let model =
            CrpnnModel::init_weights(NetworkSpec::crpnn1(1, 1, 2).unwrap(), 0, None).unwrap();
        let data = Dataset::new(m(&[&[0.1, 0.2]]), m(&[&[1.0, 2.0]])).unwrap();
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, record) = train(model.clone(), &data, &config).unwrap();
        assert_eq!(trained, model);
        assert!(record.mse.is_empty());
        assert_eq!(record.epochs_run, 0);
        assert!(record.final_mse > 0.0);
    }

    #[test]
    fn config_is_validated() {
        let model =
            CrpnnModel::init_weights(NetworkSpec::crpnn1(1, 1, 2).unwrap(), 0, None).unwrap();
        let data = Dataset::new(m(&[&[0.1, 0.2]]), m(&[&[1.0, 2.0]])).unwrap();
        for config in [
            TrainConfig {
                learning_rate: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: BatchSize::Fixed(3),
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: BatchSize::Fixed(0),
                ..TrainConfig::default()
            },
        ] {
            assert!(train(model.clone(), &data, &config).is_err());
        }
    }

    #[test]
    fn divergence_is_reported() {
        let model =
            CrpnnModel::init_weights(NetworkSpec::crpnn1(1, 1, 4).unwrap(), 0, Some(1.0)).unwrap();
        let data = Dataset::new(m(&[&[0.9, -0.9, 0.5]]), m(&[&[100.0, -100.0, 50.0]])).unwrap();
        let config = TrainConfig {
            learning_rate: 10.0,
            epochs: 100,
            ..TrainConfig::default()
        };
        match train(model, &data, &config) {
            Err(Error::Diverged { .. }) | Err(Error::Overflow { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
