//! Relation spectra: the explicit polynomial a trained network computes.
//!
//! A CR-PNN is a polynomial in its inputs, so a trained model can be read
//! back as a list of monomial coefficients per output. [`expand_to_spectrum`]
//! obtains that list exactly by pushing symbolic polynomials through the
//! layers instead of numbers:
//!
//! * a linear map combines the coordinate polynomials with the weights,
//! * the Hadamard product with `x~` multiplies coordinate `j` by `x_j` (the
//!   bias coordinate by 1),
//! * the expanded layer multiplies coordinate `j` by `x_j^c`.
//!
//! Spectra are stored sparsely. Absent monomials have coefficient zero, which
//! is what makes structural zeros of an architecture visible.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::csvio::{parse_f64, read_table};
use crate::error::{Error, Result};
use crate::matrix::{ColumnVector, Matrix};
use crate::network::{CrpnnModel, LayerKind};

/// Coefficients smaller than this fraction of the largest one in the same
/// output are treated as cancellation noise and dropped.
pub const CANONICAL_RELATIVE_THRESHOLD: f64 = 1e-14;

/// Largest `C(n+L, n)` that [`expand_to_spectrum`] accepts.
pub const EXPANSION_LIMIT: u128 = 1_000_000;

/// Presence threshold used by [`compare_spectra`].
pub const SUPPORT_THRESHOLD: f64 = 1e-9;

/// Exponent vector of a monomial `x_1^e_1 ... x_n^e_n`.
///
/// Ordered by total degree first, then lexicographically by exponents.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn constant(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    /// `x_j` (0-based `j`).
    pub fn variable(n: usize, j: usize) -> Self {
        let mut e = vec![0; n];
        e[j] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// This monomial times `x_j^k`.
    pub fn times_variable(&self, j: usize, k: u32) -> Monomial {
        let mut e = self.0.clone();
        e[j] += k;
        Monomial(e)
    }

    /// Value at `x`, each power taken by repeated multiplication.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (&xi, &e) in x.iter().zip(&self.0) {
            for _ in 0..e {
                acc *= xi;
            }
        }
        acc
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                f.write_char('*')?;
            }
            first = false;
            write!(f, "x{}", i + 1)?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        if first {
            f.write_char('1')?;
        }
        Ok(())
    }
}

type Poly = BTreeMap<Monomial, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct RelationSpectrum {
    n: usize,
    outputs: Vec<Poly>,
}

impl RelationSpectrum {
    /// The zero polynomial for each of `m` outputs.
    pub fn empty(n: usize, m: usize) -> Self {
        RelationSpectrum {
            n,
            outputs: vec![Poly::new(); m],
        }
    }

    /// Builds a spectrum from `(output, monomial, coefficient)` terms.
    /// Repeated monomials are summed and exact zeros are dropped.
    pub fn from_terms(
        n: usize,
        m: usize,
        terms: impl IntoIterator<Item = (usize, Monomial, f64)>,
    ) -> Result<Self> {
        let mut s = RelationSpectrum::empty(n, m);
        for (output, mono, coef) in terms {
            s.add_term(output, mono, coef)?;
        }
        s.outputs
            .iter_mut()
            .for_each(|p| p.retain(|_, c| *c != 0.0));
        Ok(s)
    }

    fn add_term(&mut self, output: usize, mono: Monomial, coef: f64) -> Result<()> {
        if mono.n() != self.n {
            return Err(Error::invalid(format!(
                "monomial has {} exponents, spectrum has {} inputs",
                mono.n(),
                self.n
            )));
        }
        if !coef.is_finite() {
            return Err(Error::NonFinite {
                context: format!("coefficient of {mono}"),
            });
        }
        let m = self.outputs.len();
        let poly = self.outputs.get_mut(output).ok_or_else(|| {
            Error::invalid(format!("output index {output} out of range for m = {m}"))
        })?;
        *poly.entry(mono).or_insert(0.0) += coef;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.outputs.len()
    }

    /// Number of stored terms across all outputs.
    pub fn len(&self) -> usize {
        self.outputs.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coefficient of `mono` in output `output`; zero when absent.
    pub fn coefficient(&self, output: usize, mono: &Monomial) -> f64 {
        self.outputs
            .get(output)
            .and_then(|p| p.get(mono))
            .copied()
            .unwrap_or(0.0)
    }

    /// Terms of one output in (degree, lexicographic) order.
    pub fn terms(&self, output: usize) -> impl Iterator<Item = (&Monomial, f64)> {
        self.outputs[output].iter().map(|(k, v)| (k, *v))
    }

    /// Largest total degree present, `None` when empty.
    pub fn max_degree(&self) -> Option<u32> {
        self.outputs
            .iter()
            .filter_map(|p| p.keys().map(Monomial::degree).max())
            .max()
    }

    /// Returns a copy with every coefficient multiplied by `s`.
    pub fn scaled(&self, s: f64) -> RelationSpectrum {
        let mut out = self.clone();
        for p in &mut out.outputs {
            p.values_mut().for_each(|c| *c *= s);
            p.retain(|_, c| *c != 0.0);
        }
        out
    }

    pub fn evaluate(&self, x: &ColumnVector) -> Result<ColumnVector> {
        if x.dim() != self.n {
            return Err(Error::Shape {
                op: "evaluate_spectrum",
                left_rows: self.n,
                left_cols: 1,
                right_rows: x.dim(),
                right_cols: 1,
            });
        }
        let values = self
            .outputs
            .iter()
            .map(|p| {
                p.iter()
                    .map(|(mono, c)| c * mono.evaluate(x.as_slice()))
                    .sum()
            })
            .collect();
        ColumnVector::new(values)
    }

    /// Evaluates every column of `xs` (`n x K`), returning `m x K`.
    pub fn evaluate_batch(&self, xs: &Matrix) -> Result<Matrix> {
        if xs.rows() != self.n {
            return Err(Error::Shape {
                op: "evaluate_spectrum",
                left_rows: self.n,
                left_cols: 1,
                right_rows: xs.rows(),
                right_cols: xs.cols(),
            });
        }
        let mut out = Matrix::zeros(self.m(), xs.cols());
        for k in 0..xs.cols() {
            let y = self.evaluate(&xs.column(k))?;
            for (i, v) in y.iter().enumerate() {
                out.set(i, k, *v);
            }
        }
        Ok(out)
    }

    /// Human-readable polynomial of one output, e.g. `0.5 + 1*x1 - 2*x1*x2`.
    pub fn render(&self, output: usize) -> String {
        let mut s = String::new();
        for (i, (mono, c)) in self.terms(output).enumerate() {
            let sign = if c < 0.0 { '-' } else { '+' };
            if i == 0 {
                if c < 0.0 {
                    s.push('-');
                }
            } else {
                let _ = write!(s, " {sign} ");
            }
            if mono.degree() == 0 {
                let _ = write!(s, "{}", c.abs());
            } else {
                let _ = write!(s, "{}*{mono}", c.abs());
            }
        }
        if s.is_empty() {
            s.push('0');
        }
        s
    }

    /// CSV with header `e_1,...,e_n,output,coefficient`, rows sorted by
    /// output, total degree, then exponents.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 1..=self.n {
            let _ = write!(out, "e_{i},");
        }
        out.push_str("output,coefficient\n");
        for (output, poly) in self.outputs.iter().enumerate() {
            for (mono, c) in poly {
                for e in mono.exponents() {
                    let _ = write!(out, "{e},");
                }
                let _ = writeln!(out, "{output},{c:?}");
            }
        }
        out
    }

    /// Parses the CSV written by [`RelationSpectrum::to_csv`]. The output
    /// count is one past the largest output index present (at least 1).
    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let table = read_table(bytes)?;
        let header = &table.header;
        let k = header.len();
        if k < 3 || header[k - 2] != "output" || header[k - 1] != "coefficient" {
            return Err(Error::parse(
                1,
                "header must be e_1,...,e_n,output,coefficient",
            ));
        }
        let n = k - 2;
        for (i, h) in header[..n].iter().enumerate() {
            if *h != format!("e_{}", i + 1) {
                return Err(Error::parse(
                    1,
                    format!("expected column e_{}, found {h:?}", i + 1),
                ));
            }
        }
        let mut terms = Vec::with_capacity(table.rows.len());
        let mut m = 1;
        for (line, rec) in &table.rows {
            let mut exps = Vec::with_capacity(n);
            for (i, cell) in rec.iter().take(n).enumerate() {
                if cell.starts_with('-') {
                    return Err(Error::parse(
                        *line,
                        format!("negative exponent {cell} in e_{}", i + 1),
                    ));
                }
                let e: u32 = cell.parse().map_err(|_| {
                    Error::parse(
                        *line,
                        format!("e_{}: {cell:?} is not a non-negative integer", i + 1),
                    )
                })?;
                exps.push(e);
            }
            let output: usize = rec[n].parse().map_err(|_| {
                Error::parse(*line, format!("output: {:?} is not an index", &rec[n]))
            })?;
            let coef = parse_f64(&rec[n + 1], *line, "coefficient")?;
            m = m.max(output + 1);
            terms.push((*line, output, Monomial(exps), coef));
        }
        let mut s = RelationSpectrum::empty(n, m);
        for (line, output, mono, coef) in terms {
            if s.outputs[output].contains_key(&mono) {
                return Err(Error::parse(
                    line,
                    format!("duplicate monomial {mono} for output {output}"),
                ));
            }
            if coef != 0.0 {
                s.outputs[output].insert(mono, coef);
            }
        }
        Ok(s)
    }
}

/// `C(a, b)` without overflow for the sizes used here.
pub fn binomial(a: u128, b: u128) -> u128 {
    let b = b.min(a.saturating_sub(b));
    (0..b).fold(1u128, |acc, i| acc * (a - i) / (i + 1))
}

/// Number of monomials of total degree `<= degree` in `n` variables.
pub fn monomial_count(n: usize, degree: usize) -> u128 {
    binomial((n + degree) as u128, n as u128)
}

/// Expands a model into the exact polynomial it computes.
pub fn expand_to_spectrum(model: &CrpnnModel) -> Result<RelationSpectrum> {
    let spec = model.spec();
    let n = spec.n();
    let bound = monomial_count(n, spec.order());
    if bound > EXPANSION_LIMIT {
        return Err(Error::SpectrumTooLarge {
            bound,
            limit: EXPANSION_LIMIT,
        });
    }

    // Coordinate j < n starts as x_j, the bias coordinate as 1.
    let mut coords: Vec<Poly> = (0..n)
        .map(|j| Poly::from([(Monomial::variable(n, j), 1.0)]))
        .collect();
    coords.push(Poly::from([(Monomial::constant(n), 1.0)]));

    for (kind, w) in spec.layer_kinds().into_iter().zip(model.weights()) {
        let mut next = linear_map(w, &coords);
        match kind {
            LayerKind::Taylor => multiply_by_inputs(&mut next, 1),
            LayerKind::Expanded { power } => multiply_by_inputs(&mut next, power),
            LayerKind::Output => {}
        }
        coords = next;
    }

    for p in &mut coords {
        canonicalize(p);
    }
    Ok(RelationSpectrum { n, outputs: coords })
}

fn linear_map(w: &Matrix, coords: &[Poly]) -> Vec<Poly> {
    (0..w.rows())
        .map(|r| {
            let mut acc = Poly::new();
            for (&wk, poly) in w.row(r).iter().zip(coords) {
                if wk == 0.0 {
                    continue;
                }
                for (mono, c) in poly {
                    *acc.entry(mono.clone()).or_insert(0.0) += wk * c;
                }
            }
            acc.retain(|_, c| *c != 0.0);
            acc
        })
        .collect()
}

/// Multiplies coordinate `j` by `x_j^power`; the trailing bias coordinate is
/// left alone.
fn multiply_by_inputs(coords: &mut [Poly], power: u32) {
    let n = coords.len() - 1;
    for (j, poly) in coords.iter_mut().take(n).enumerate() {
        *poly = std::mem::take(poly)
            .into_iter()
            .map(|(mono, c)| (mono.times_variable(j, power), c))
            .collect();
    }
}

fn canonicalize(poly: &mut Poly) {
    let max = poly.values().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let threshold = CANONICAL_RELATIVE_THRESHOLD * max;
    poly.retain(|_, c| *c != 0.0 && c.abs() >= threshold);
}

/// Result of [`compare_spectra`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumComparison {
    /// Largest coefficient gap, absent terms counting as zero.
    pub max_abs_coeff_diff: f64,
    /// Monomials above [`SUPPORT_THRESHOLD`] in exactly one of the spectra.
    pub support_symmetric_difference: usize,
}

pub fn compare_spectra(a: &RelationSpectrum, b: &RelationSpectrum) -> Result<SpectrumComparison> {
    if a.n != b.n || a.m() != b.m() {
        return Err(Error::invalid(format!(
            "cannot compare spectra over (n={}, m={}) and (n={}, m={})",
            a.n,
            a.m(),
            b.n,
            b.m()
        )));
    }
    let mut max_diff = 0.0f64;
    let mut sym_diff = 0;
    for (pa, pb) in a.outputs.iter().zip(&b.outputs) {
        let keys: std::collections::BTreeSet<&Monomial> = pa.keys().chain(pb.keys()).collect();
        for mono in keys {
            let ca = pa.get(mono).copied().unwrap_or(0.0);
            let cb = pb.get(mono).copied().unwrap_or(0.0);
            max_diff = max_diff.max((ca - cb).abs());
            if (ca.abs() > SUPPORT_THRESHOLD) != (cb.abs() > SUPPORT_THRESHOLD) {
                sym_diff += 1;
            }
        }
    }
    Ok(SpectrumComparison {
        max_abs_coeff_diff: max_diff,
        support_symmetric_difference: sym_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSpec;

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    fn x(v: &[f64]) -> ColumnVector {
        ColumnVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_toy_expands_to_x5_plus_1() {
        let spec = NetworkSpec::crpnn2(1, 1, 5).unwrap();
        let out = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let model =
            CrpnnModel::from_weights(spec, vec![Matrix::identity(2), Matrix::identity(2), out])
                .unwrap();
        let s = expand_to_spectrum(&model).unwrap();
        let expected =
            RelationSpectrum::from_terms(1, 1, [(0, mono(&[5]), 1.0), (0, mono(&[0]), 1.0)])
                .unwrap();
        assert_eq!(s, expected);
        assert_eq!(s.render(0), "1 + 1*x1^5");
    }

    #[test]
    fn zero_model_has_empty_spectrum() {
        let spec = NetworkSpec::crpnn1(2, 1, 3).unwrap();
        let weights = spec
            .weight_shapes()
            .into_iter()
            .map(|(r, c)| Matrix::zeros(r, c))
            .collect();
        let model = CrpnnModel::from_weights(spec, weights).unwrap();
        let s = expand_to_spectrum(&model).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.max_degree(), None);
    }

    #[test]
    fn random_crpnn1_matches_forward() {
        let model =
            CrpnnModel::init_weights(NetworkSpec::crpnn1(3, 2, 5).unwrap(), 11, None).unwrap();
        let s = expand_to_spectrum(&model).unwrap();
        let mut state = 0.37f64;
        for _ in 0..100 {
            let p: Vec<f64> = (0..3)
                .map(|_| {
                    state = (state * 7.3 + 0.11).fract();
                    2.0 * state - 1.0
                })
                .collect();
            let f = model.forward(&x(&p)).unwrap();
            let e = s.evaluate(&x(&p)).unwrap();
            for (a, b) in f.iter().zip(e.iter()) {
                assert!((a - b).abs() / (1.0 + a.abs()) < 1e-9);
            }
        }
    }

    #[test]
    fn evaluate_by_hand() {
        let s =
            RelationSpectrum::from_terms(2, 1, [(0, mono(&[1, 1]), -2.0), (0, mono(&[0, 0]), 0.5)])
                .unwrap();
        assert_eq!(s.evaluate(&x(&[3.0, 4.0])).unwrap().as_slice(), &[-23.5]);
        assert_eq!(s.evaluate(&x(&[0.0, 0.0])).unwrap().as_slice(), &[0.5]);
        assert!(s.evaluate(&x(&[1.0])).is_err());

        let empty = RelationSpectrum::empty(2, 3);
        assert_eq!(
            empty.evaluate(&x(&[1.0, 2.0])).unwrap().as_slice(),
            &[0.0; 3]
        );
    }

    #[test]
    fn comparisons() {
        let a = RelationSpectrum::from_terms(1, 1, [(0, mono(&[1]), 1.0)]).unwrap();
        let b = RelationSpectrum::from_terms(1, 1, [(0, mono(&[1]), 1.25)]).unwrap();
        let c = RelationSpectrum::from_terms(1, 1, [(0, mono(&[2]), 1.0)]).unwrap();
        let same = compare_spectra(&a, &a).unwrap();
        assert_eq!(
            (same.max_abs_coeff_diff, same.support_symmetric_difference),
            (0.0, 0)
        );
        let ab = compare_spectra(&a, &b).unwrap();
        assert_eq!(
            (ab.max_abs_coeff_diff, ab.support_symmetric_difference),
            (0.25, 0)
        );
        let ac = compare_spectra(&a, &c).unwrap();
        assert_eq!(
            (ac.max_abs_coeff_diff, ac.support_symmetric_difference),
            (1.0, 2)
        );
        assert!(compare_spectra(&a, &RelationSpectrum::empty(2, 1)).is_err());
    }

    #[test]
    fn csv_schema() {
        let s = RelationSpectrum::from_terms(2, 1, [(0, mono(&[2, 0]), 3.0)]).unwrap();
        assert_eq!(s.to_csv(), "e_1,e_2,output,coefficient\n2,0,0,3.0\n");
    }

    #[test]
    fn csv_rows_are_sorted() {
        let s = RelationSpectrum::from_terms(
            2,
            2,
            [
                (1, mono(&[0, 0]), 4.0),
                (0, mono(&[2, 0]), 1.0),
                (0, mono(&[0, 2]), 2.0),
                (0, mono(&[1, 0]), 3.0),
            ],
        )
        .unwrap();
        let csv = s.to_csv();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows, ["1,0,0,3.0", "0,2,0,2.0", "2,0,0,1.0", "0,0,1,4.0"]);
        let back = RelationSpectrum::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_csv(), csv);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad_count = "e_1,e_2,output,coefficient\n1,0,0,1.0\n1,0,1.0\n";
        match RelationSpectrum::from_csv(bad_count.as_bytes()) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        let negative = "e_1,output,coefficient\n-1,0,1.0\n";
        match RelationSpectrum::from_csv(negative.as_bytes()) {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("negative")),
            other => panic!("{other:?}"),
        }
        let wrong_header = "e_1,e_3,output,coefficient\n";
        assert!(RelationSpectrum::from_csv(wrong_header.as_bytes()).is_err());
        let dup = "e_1,output,coefficient\n1,0,1.0\n1,0,2.0\n";
        assert!(matches!(
            RelationSpectrum::from_csv(dup.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn guard_rejects_huge_expansions() {
        let model =
            CrpnnModel::init_weights(NetworkSpec::crpnn1(10, 1, 30).unwrap(), 0, None).unwrap();
        assert!(matches!(
            expand_to_spectrum(&model),
            Err(Error::SpectrumTooLarge { .. })
        ));
    }

    #[test]
    fn binomials() {
        assert_eq!(monomial_count(5, 14), 11628);
        assert_eq!(monomial_count(1, 1), 2);
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(3, 0), 1);
    }

    #[test]
    fn monomial_order_and_display() {
        let mut v = vec![mono(&[0, 2]), mono(&[3, 0]), mono(&[0, 0]), mono(&[1, 1])];
        v.sort();
        assert_eq!(
            v,
            vec![mono(&[0, 0]), mono(&[0, 2]), mono(&[1, 1]), mono(&[3, 0])]
        );
        assert_eq!(mono(&[2, 0, 1]).to_string(), "x1^2*x3");
        assert_eq!(mono(&[0, 0]).to_string(), "1");
    }
}
