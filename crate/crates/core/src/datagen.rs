//! Synthetic experiment data: random polynomial targets, the five-sine input
//! trajectory, and dataset CSV files.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::csvio::{parse_f64, read_table};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::spectrum::{monomial_count, Monomial, RelationSpectrum};

/// Inputs as columns (`n x K`) paired with targets (`m x K`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    targets: Matrix,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Matrix) -> Result<Self> {
        if inputs.cols() != targets.cols() {
            return Err(Error::invalid(format!(
                "{} input samples but {} target samples",
                inputs.cols(),
                targets.cols()
            )));
        }
        if !inputs.is_finite() || !targets.is_finite() {
            return Err(Error::NonFinite {
                context: "dataset".into(),
            });
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    pub fn n(&self) -> usize {
        self.inputs.rows()
    }

    pub fn m(&self) -> usize {
        self.targets.rows()
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.inputs.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with header `x1,...,xn,y1,...,ym` and one row per sample.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let names: Vec<String> = (1..=self.n())
            .map(|i| format!("x{i}"))
            .chain((1..=self.m()).map(|i| format!("y{i}")))
            .collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for k in 0..self.len() {
            let cells = (0..self.n())
                .map(|r| self.inputs.get(r, k))
                .chain((0..self.m()).map(|r| self.targets.get(r, k)));
            for (i, v) in cells.enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let table = read_table(bytes)?;
        let n = table
            .header
            .iter()
            .take_while(|h| h.starts_with('x'))
            .count();
        let m = table.header.len() - n;
        if n == 0 || m == 0 {
            return Err(Error::parse(
                1,
                "header must be x1,...,xn,y1,...,ym with n, m >= 1",
            ));
        }
        for (i, h) in table.header.iter().enumerate() {
            let expected = if i < n {
                format!("x{}", i + 1)
            } else {
                format!("y{}", i - n + 1)
            };
            if *h != expected {
                return Err(Error::parse(
                    1,
                    format!("expected column {expected}, found {h:?}"),
                ));
            }
        }
        if table.rows.is_empty() {
            return Err(Error::parse(2, "dataset has no samples"));
        }
        let k = table.rows.len();
        let mut inputs = Matrix::zeros(n, k);
        let mut targets = Matrix::zeros(m, k);
        for (col, (line, rec)) in table.rows.iter().enumerate() {
            for (i, cell) in rec.iter().enumerate() {
                let v = parse_f64(cell, *line, &table.header[i])?;
                if i < n {
                    inputs.set(i, col, v);
                } else {
                    targets.set(i - n, col, v);
                }
            }
        }
        Dataset::new(inputs, targets)
    }
}

/// A random single-output polynomial with its generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPolynomial {
    pub spectrum: RelationSpectrum,
    pub seed: u64,
    pub items: usize,
    pub degree: usize,
}

/// All monomials in `n` variables of total degree `<= degree`, in
/// (degree, lexicographic) order.
pub fn enumerate_monomials(n: usize, degree: usize) -> Vec<Monomial> {
    fn fill(prefix: &mut Vec<u32>, n: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n - 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in 0..=remaining {
            prefix.push(e);
            fill(prefix, n, remaining - e, out);
            prefix.pop();
        }
    }
    let mut all = Vec::new();
    for d in 0..=degree as u32 {
        let mut shell = Vec::new();
        fill(&mut Vec::with_capacity(n), n, d, &mut shell);
        shell.sort();
        all.extend(shell.into_iter().map(Monomial::new));
    }
    all
}

/// Draws `items` distinct monomials of degree `<= degree` uniformly among
/// the sets that reach degree `degree`, with coefficients uniform in
/// `[low, high]`.
pub fn gen_random_polynomial(
    n: usize,
    degree: usize,
    items: usize,
    low: f64,
    high: f64,
    seed: u64,
) -> Result<TargetPolynomial> {
    if n == 0 {
        return Err(Error::invalid("polynomial needs at least one variable"));
    }
    if items == 0 {
        return Err(Error::invalid("polynomial needs at least one item"));
    }
    if !(low.is_finite() && high.is_finite() && low <= high) || (low == 0.0 && high == 0.0) {
        return Err(Error::invalid(format!(
            "bad coefficient range [{low}, {high}]"
        )));
    }
    let available = monomial_count(n, degree);
    if items as u128 > available {
        return Err(Error::Capacity {
            requested: items,
            available,
            degree,
            n,
        });
    }
    let all = enumerate_monomials(n, degree);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Rejection keeps the draw uniform among sets containing a top-degree term.
    let picked = loop {
        let mut idx = sample(&mut rng, all.len(), items).into_vec();
        if idx.iter().any(|&i| all[i].degree() as usize == degree) {
            idx.sort_unstable();
            break idx;
        }
    };
    let terms = picked.into_iter().map(|i| {
        let coef = loop {
            let c = rng.gen_range(low..=high);
            if c != 0.0 {
                break c;
            }
        };
        (0, all[i].clone(), coef)
    });
    let spectrum = RelationSpectrum::from_terms(n, 1, terms)?;
    Ok(TargetPolynomial {
        spectrum,
        seed,
        items,
        degree,
    })
}

/// The five-sine trajectory sampled at `samples` evenly spaced `t` in
/// `[t_start, t_end]`, endpoints included. Rows are `sin 2t`, `sin 3t`,
/// `sin 5t`, `sin(7t + 20)`, `sin 11t`.
pub fn sample_sine_trajectory(samples: usize, t_start: f64, t_end: f64) -> Result<Matrix> {
    if samples < 2 {
        return Err(Error::invalid("trajectory needs at least two samples"));
    }
    if t_end.partial_cmp(&t_start) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::invalid(format!(
            "empty time range [{t_start}, {t_end}]"
        )));
    }
    let step = (t_end - t_start) / (samples - 1) as f64;
    let times: Vec<f64> = (0..samples)
        .map(|k| {
            if k == samples - 1 {
                t_end
            } else {
                t_start + k as f64 * step
            }
        })
        .collect();
    Ok(Matrix::from_fn(5, samples, |r, k| {
        let t = times[k];
        match r {
            0 => (2.0 * t).sin(),
            1 => (3.0 * t).sin(),
            2 => (5.0 * t).sin(),
            3 => (7.0 * t + 20.0).sin(),
            _ => (11.0 * t).sin(),
        }
    }))
}

/// Evaluates `target` on every input column.
pub fn make_dataset(target: &RelationSpectrum, inputs: &Matrix) -> Result<Dataset> {
    let targets = target.evaluate_batch(inputs)?;
    Dataset::new(inputs.clone(), targets)
}

/// `n x samples` inputs uniform in `[-1, 1]`.
pub fn uniform_inputs(n: usize, samples: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, samples, |_, _| rng.gen_range(-1.0..=1.0))
}
