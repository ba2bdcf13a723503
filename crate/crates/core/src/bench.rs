//! Wall-clock comparison of the two structures.
//!
//! Each run builds a freshly seeded model and dataset, performs one untimed
//! forward pass and one untimed epoch, then times `forward_reps` batched
//! forward passes and `epochs` training epochs separately. Alongside the
//! timings every configuration reports the analytic per-sample multiply count
//! and the count measured by the instrumented kernel; the two must agree.

use std::time::Instant;

use serde::Serialize;

use crate::datagen::{gen_random_polynomial, sample_sine_trajectory, uniform_inputs, Dataset};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Tally};
use crate::network::{CrpnnModel, NetworkSpec, Variant};
use crate::spectrum::monomial_count;
use crate::topology::{mult_count_crpnn1, mult_count_crpnn2};
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchProtocol {
    pub variants: Vec<Variant>,
    pub n: usize,
    pub m: usize,
    pub order: usize,
    pub samples: usize,
    pub forward_reps: usize,
    pub epochs: usize,
    pub runs: usize,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for BenchProtocol {
    fn default() -> Self {
        BenchProtocol {
            variants: vec![Variant::Crpnn1, Variant::Crpnn2],
            n: 5,
            m: 1,
            order: 14,
            samples: 5000,
            forward_reps: 1000,
            epochs: 1000,
            runs: 10,
            seed: 0,
            learning_rate: 1e-3,
        }
    }
}

/// Mean and sample standard deviation (divisor `runs - 1`) of per-run times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingStats {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub runs: Vec<f64>,
}

impl TimingStats {
    pub fn from_runs(runs: Vec<f64>) -> Self {
        let k = runs.len();
        let mean = if k == 0 {
            0.0
        } else {
            runs.iter().sum::<f64>() / k as f64
        };
        let sd = if k < 2 {
            0.0
        } else {
            (runs.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
        };
        let mut sorted = runs.clone();
        sorted.sort_by(f64::total_cmp);
        let median = match k {
            0 => 0.0,
            _ if k % 2 == 1 => sorted[k / 2],
            _ => 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]),
        };
        TimingStats {
            mean,
            sd,
            median,
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigReport {
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    pub order: usize,
    pub weighted_layers: usize,
    /// Seconds for `forward_reps` batched forward passes.
    pub forward_seconds: TimingStats,
    /// Seconds for `epochs` full-batch training epochs.
    pub epoch_seconds: TimingStats,
    /// Multiplications per sample per forward pass; additions are not counted.
    pub theoretical_multiplies: u64,
    pub measured_multiplies: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub protocol: BenchProtocol,
    pub configs: Vec<ConfigReport>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn config(&self, variant: Variant) -> Option<&ConfigReport> {
        self.configs.iter().find(|c| c.variant == variant)
    }
}

/// Analytic per-sample forward multiply count of a network.
pub fn theoretical_multiplies(variant: Variant, n: usize, m: usize, order: usize) -> Result<u64> {
    match variant {
        Variant::Crpnn1 => Ok(mult_count_crpnn1(n, m, order)),
        Variant::Crpnn2 => mult_count_crpnn2(n, m, order),
    }
}

/// Per-sample multiply count measured by running `model` on `inputs`.
pub fn measured_multiplies(model: &CrpnnModel, inputs: &Matrix) -> Result<u64> {
    let mut tally = Tally::on();
    model.predict_batch_tallied(inputs, &mut tally)?;
    let total = tally.count().expect("tally is on");
    let k = inputs.cols() as u64;
    if !total.is_multiple_of(k) {
        return Err(Error::invalid(format!(
            "{total} multiplies do not split evenly over {k} samples"
        )));
    }
    Ok(total / k)
}

/// Inputs from the sine trajectory over `t in [0, 7]` (first `n` rows), or
/// uniform in `[-1, 1]` when `n > 5`.
pub fn bench_inputs(n: usize, samples: usize, seed: u64) -> Result<Matrix> {
    if n <= 5 {
        let all = sample_sine_trajectory(samples, 0.0, 7.0)?;
        Ok(Matrix::from_fn(n, samples, |r, k| all.get(r, k)))
    } else {
        Ok(uniform_inputs(n, samples, seed))
    }
}

fn bench_dataset(n: usize, m: usize, samples: usize, seed: u64) -> Result<Dataset> {
    let inputs = bench_inputs(n, samples, seed)?;
    let degree = 3;
    let items = monomial_count(n, degree).min(10) as usize;
    let mut targets = Matrix::zeros(m, samples);
    for out in 0..m {
        let target =
            gen_random_polynomial(n, degree, items, -1.0, 1.0, seed.wrapping_add(out as u64))?;
        let values = target.spectrum.evaluate_batch(&inputs)?;
        for k in 0..samples {
            targets.set(out, k, values.get(0, k));
        }
    }
    Dataset::new(inputs, targets)
}

pub fn run_bench(protocol: &BenchProtocol) -> Result<BenchReport> {
    let p = protocol;
    if p.variants.is_empty() {
        return Err(Error::invalid("no variants to benchmark"));
    }
    if p.samples == 0 || p.forward_reps == 0 || p.epochs == 0 || p.runs == 0 {
        return Err(Error::invalid("bench counts must all be positive"));
    }
    let specs = p
        .variants
        .iter()
        .map(|&v| NetworkSpec::new(v, p.n, p.m, p.order))
        .collect::<Result<Vec<_>>>()?;

    let mut configs = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut forward_runs = Vec::with_capacity(p.runs);
        let mut epoch_runs = Vec::with_capacity(p.runs);
        let mut measured = None;
        for run in 0..p.runs {
            let seed = p.seed.wrapping_add(run as u64);
            let model = CrpnnModel::init_weights(spec, seed, None)?;
            let data = bench_dataset(p.n, p.m, p.samples, seed)?;
            if measured.is_none() {
                measured = Some(measured_multiplies(&model, data.inputs())?);
            }

            std::hint::black_box(model.predict_batch(data.inputs())?);
            let start = Instant::now();
            for _ in 0..p.forward_reps {
                std::hint::black_box(model.predict_batch(std::hint::black_box(data.inputs()))?);
            }
            forward_runs.push(start.elapsed().as_secs_f64());

            let config = TrainConfig {
                learning_rate: p.learning_rate,
                epochs: 1,
                seed,
                ..TrainConfig::default()
            };
            let (warm, _) = train(model, &data, &config)?;
            let config = TrainConfig {
                epochs: p.epochs,
                ..config
            };
            let start = Instant::now();
            std::hint::black_box(train(warm, &data, &config)?);
            epoch_runs.push(start.elapsed().as_secs_f64());
        }
        configs.push(ConfigReport {
            variant: spec.variant(),
            n: p.n,
            m: p.m,
            order: p.order,
            weighted_layers: spec.weight_shapes().len(),
            forward_seconds: TimingStats::from_runs(forward_runs),
            epoch_seconds: TimingStats::from_runs(epoch_runs),
            theoretical_multiplies: theoretical_multiplies(spec.variant(), p.n, p.m, p.order)?,
            measured_multiplies: measured.expect("at least one run"),
        });
    }
    Ok(BenchReport {
        protocol: p.clone(),
        configs,
    })
}
