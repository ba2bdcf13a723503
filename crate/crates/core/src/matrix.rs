//! Dense row-major `f64` kernel.
//!
//! Every product that a network forward pass performs goes through one of the
//! `*_tallied` functions here. A [`Tally`] is either switched off (the hot
//! path) or switched on, in which case it accumulates the exact number of
//! scalar multiplications performed. The counted and uncounted paths are the
//! same code.

use std::fmt;

use crate::error::{Error, Result};

/// Per-invocation scalar multiplication counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    count: Option<u64>,
}

impl Tally {
    /// A tally that records nothing.
    pub fn off() -> Self {
        Tally { count: None }
    }

    /// A tally that starts counting from zero.
    pub fn on() -> Self {
        Tally { count: Some(0) }
    }

    #[inline]
    pub fn add(&mut self, multiplies: u64) {
        if let Some(c) = self.count.as_mut() {
            *c += multiplies;
        }
    }

    /// The accumulated count, or `None` when counting is off.
    pub fn count(&self) -> Option<u64> {
        self.count
    }
}

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting empty shapes, length
    /// mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("matrix entry ({}, {})", i / cols, i % cols),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Matrix::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// A single-column matrix holding `v`.
    pub fn from_column(v: &ColumnVector) -> Self {
        Matrix {
            rows: v.dim(),
            cols: 1,
            data: v.as_slice().to_vec(),
        }
    }

    /// Stacks column vectors side by side.
    pub fn from_columns(columns: &[ColumnVector]) -> Result<Self> {
        let rows = columns.first().map_or(0, ColumnVector::dim);
        if columns.iter().any(|c| c.dim() != rows) {
            return Err(Error::invalid("columns of differing length"));
        }
        let mut m = Matrix::zeros(rows, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                m.data[i * m.cols + j] = *v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> ColumnVector {
        ColumnVector((0..self.rows).map(|r| self.get(r, c)).collect())
    }

    /// Gathers the given columns, in order, into a new matrix.
    pub fn select_columns(&self, indices: &[usize]) -> Matrix {
        Matrix::from_fn(self.rows, indices.len(), |r, j| self.get(r, indices[j]))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self -= alpha * other`, element by element.
    pub fn axpy_neg(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape("axpy", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= alpha * b;
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        self.matmul_tallied(other, &mut Tally::off())
    }

    /// Standard product; charges `rows * inner * cols` multiplications.
    pub fn matmul_tallied(&self, other: &Matrix, tally: &mut Tally) -> Result<Matrix> {
        let mut out = Matrix::zeros(0, 0);
        self.product_into(other, None, &mut out, tally)?;
        Ok(out)
    }

    /// `(self * rhs) ∘ factor`. Charges exactly what [`Matrix::matmul_tallied`]
    /// followed by [`Matrix::hadamard_assign`] would.
    pub fn matmul_hadamard_tallied(
        &self,
        rhs: &Matrix,
        factor: &Matrix,
        tally: &mut Tally,
    ) -> Result<Matrix> {
        let mut out = Matrix::zeros(0, 0);
        self.product_into(rhs, Some(factor), &mut out, tally)?;
        Ok(out)
    }

    /// Writes `self * rhs`, optionally multiplied elementwise by `factor`,
    /// into `out`, reusing its allocation. Each output row is scaled by the
    /// matching `factor` row while it is still in cache.
    pub fn product_into(
        &self,
        rhs: &Matrix,
        factor: Option<&Matrix>,
        out: &mut Matrix,
        tally: &mut Tally,
    ) -> Result<()> {
        if self.cols != rhs.rows {
            return Err(self.shape_error("matmul", rhs));
        }
        let (n, k, p) = (self.rows, self.cols, rhs.cols);
        if let Some(f) = factor {
            if f.shape() != (n, p) {
                return Err(Error::Shape {
                    op: "hadamard",
                    left_rows: n,
                    left_cols: p,
                    right_rows: f.rows,
                    right_cols: f.cols,
                });
            }
        }
        out.rows = n;
        out.cols = p;
        out.data.clear();
        out.data.resize(n * p, 0.0);
        for i in 0..n {
            let out_row = &mut out.data[i * p..(i + 1) * p];
            for (kk, &a) in self.row(i).iter().enumerate() {
                let b_row = &rhs.data[kk * p..(kk + 1) * p];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
            if let Some(f) = factor {
                for (o, &v) in out_row.iter_mut().zip(f.row(i)) {
                    *o *= v;
                }
            }
        }
        let hadamard = if factor.is_some() { n * p } else { 0 };
        tally.add((n * k * p + hadamard) as u64);
        Ok(())
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.hadamard_tallied(other, &mut Tally::off())
    }

    pub fn hadamard_tallied(&self, other: &Matrix, tally: &mut Tally) -> Result<Matrix> {
        let mut out = self.clone();
        out.hadamard_assign(other, tally)?;
        Ok(out)
    }

    /// In-place elementwise product; charges one multiplication per entry.
    pub fn hadamard_assign(&mut self, other: &Matrix, tally: &mut Tally) -> Result<()> {
        self.check_same_shape("hadamard", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
        tally.add(self.data.len() as u64);
        Ok(())
    }

    pub fn elementwise_power(&self, c: u32) -> Result<Matrix> {
        self.elementwise_power_tallied(c, &mut Tally::off())
    }

    /// Raises every entry to the `c`-th power as `c - 1` successive Hadamard
    /// products with `self`.
    pub fn elementwise_power_tallied(&self, c: u32, tally: &mut Tally) -> Result<Matrix> {
        if c == 0 {
            return Err(Error::invalid("elementwise power must be at least 1"));
        }
        // c - 1 Hadamard passes, run block by block so each block stays in
        // cache between passes. Same products, same count.
        const BLOCK: usize = 512;
        let mut data = self.data.clone();
        for (out, base) in data.chunks_mut(BLOCK).zip(self.data.chunks(BLOCK)) {
            for _ in 1..c {
                for (o, &b) in out.iter_mut().zip(base) {
                    *o *= b;
                }
            }
        }
        tally.add((c as u64 - 1) * self.data.len() as u64);
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Appends a row of ones: the batched form of [`ColumnVector::augment`].
    pub fn augment_rows(&self) -> Matrix {
        let mut data = Vec::with_capacity((self.rows + 1) * self.cols);
        data.extend_from_slice(&self.data);
        data.extend(std::iter::repeat_n(1.0, self.cols));
        Matrix {
            rows: self.rows + 1,
            cols: self.cols,
            data,
        }
    }

    fn check_same_shape(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(self.shape_error(op, other));
        }
        Ok(())
    }

    fn shape_error(&self, op: &'static str, other: &Matrix) -> Error {
        Error::Shape {
            op,
            left_rows: self.rows,
            left_cols: self.cols,
            right_rows: other.rows,
            right_cols: other.cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnVector(Vec<f64>);

impl ColumnVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("vector dimension must be positive"));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("vector entry {i}"),
            });
        }
        Ok(ColumnVector(entries))
    }

    pub fn ones(dim: usize) -> Self {
        ColumnVector(vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn hadamard(&self, other: &ColumnVector) -> Result<ColumnVector> {
        self.hadamard_tallied(other, &mut Tally::off())
    }

    pub fn hadamard_tallied(
        &self,
        other: &ColumnVector,
        tally: &mut Tally,
    ) -> Result<ColumnVector> {
        if self.dim() != other.dim() {
            return Err(Error::Shape {
                op: "hadamard",
                left_rows: self.dim(),
                left_cols: 1,
                right_rows: other.dim(),
                right_cols: 1,
            });
        }
        tally.add(self.dim() as u64);
        Ok(ColumnVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect(),
        ))
    }

    pub fn elementwise_power(&self, c: u32) -> Result<ColumnVector> {
        self.elementwise_power_tallied(c, &mut Tally::off())
    }

    pub fn elementwise_power_tallied(&self, c: u32, tally: &mut Tally) -> Result<ColumnVector> {
        if c == 0 {
            return Err(Error::invalid("elementwise power must be at least 1"));
        }
        let mut out = self.clone();
        for _ in 1..c {
            out = out.hadamard_tallied(self, tally)?;
        }
        Ok(out)
    }

    /// `[x_1, ..., x_n]` becomes `[x_1, ..., x_n, 1]`.
    pub fn augment(&self) -> ColumnVector {
        let mut v = Vec::with_capacity(self.dim() + 1);
        v.extend_from_slice(&self.0);
        v.push(1.0);
        ColumnVector(v)
    }
}

impl From<ColumnVector> for Vec<f64> {
    fn from(v: ColumnVector) -> Self {
        v.0
    }
}

impl std::ops::Index<usize> for ColumnVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> ColumnVector {
        ColumnVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn matmul_by_hand() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[[5.0], [6.0]]).unwrap();
        let mut t = Tally::on();
        let c = a.matmul_tallied(&b, &mut t).unwrap();
        assert_eq!(c.as_slice(), &[17.0, 39.0]);
        assert_eq!(t.count(), Some(4));
    }

    #[test]
    fn identity_is_neutral() {
        let b = Matrix::from_rows(&[[1.5, -2.0], [0.25, 3.0], [7.0, 8.0]]).unwrap();
        assert_eq!(Matrix::identity(3).matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("2x3") && err.contains("2x2"), "{err}");
    }

    #[test]
    fn hadamard_cases() {
        assert_eq!(
            col(&[1.0, 2.0]).hadamard(&col(&[3.0, 4.0])).unwrap(),
            col(&[3.0, 8.0])
        );
        assert_eq!(
            col(&[2.0, 3.0]).hadamard(&col(&[0.0, 1.0])).unwrap(),
            col(&[0.0, 3.0])
        );
        let a = col(&[1.5, -2.5, 4.0]);
        assert_eq!(a.hadamard(&ColumnVector::ones(3)).unwrap(), a);
        assert!(col(&[1.0]).hadamard(&col(&[1.0, 2.0])).is_err());

        let mut t = Tally::on();
        a.hadamard_tallied(&a, &mut t).unwrap();
        assert_eq!(t.count(), Some(3));
    }

    #[test]
    fn powers() {
        assert_eq!(
            col(&[2.0, 3.0]).elementwise_power(3).unwrap(),
            col(&[8.0, 27.0])
        );
        let v = col(&[0.3, -1.7]);
        assert_eq!(v.elementwise_power(1).unwrap(), v);
        assert!(v.elementwise_power(0).is_err());

        let aug = col(&[0.9]).augment();
        let p = aug.elementwise_power(7).unwrap();
        assert_eq!(p[1], 1.0);

        let mut t = Tally::on();
        col(&[1.0, 2.0, 3.0])
            .elementwise_power_tallied(4, &mut t)
            .unwrap();
        assert_eq!(t.count(), Some(9));

        let m = Matrix::from_rows(&[[2.0, 3.0], [1.0, -1.0]]).unwrap();
        let mut t = Tally::on();
        let p = m.elementwise_power_tallied(3, &mut t).unwrap();
        assert_eq!(p.as_slice(), &[8.0, 27.0, 1.0, -1.0]);
        assert_eq!(t.count(), Some(8));
    }

    #[test]
    fn fused_kernel_matches_separate_steps() {
        let w = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.25, 3.0, -1.0]]).unwrap();
        let a = Matrix::from_rows(&[[0.1, 0.7], [-0.4, 0.2], [1.0, 1.0]]).unwrap();
        let f = Matrix::from_rows(&[[2.0, -1.0], [0.5, 4.0]]).unwrap();
        let (mut t1, mut t2) = (Tally::on(), Tally::on());
        let fused = w.matmul_hadamard_tallied(&a, &f, &mut t1).unwrap();
        let mut split = w.matmul_tallied(&a, &mut t2).unwrap();
        split.hadamard_assign(&f, &mut t2).unwrap();
        assert_eq!(fused, split);
        assert_eq!(t1.count(), t2.count());
        assert!(w.matmul_hadamard_tallied(&a, &a, &mut t1).is_err());
    }

    #[test]
    fn augment_appends_one() {
        assert_eq!(col(&[2.0, 3.0]).augment(), col(&[2.0, 3.0, 1.0]));
        assert_eq!(col(&[0.0]).augment(), col(&[0.0, 1.0]));
        let m = Matrix::from_rows(&[[1.0, 2.0]]).unwrap().augment_rows();
        assert_eq!(m.as_slice(), &[1.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Matrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(0, 2, vec![]).is_err());
        assert!(ColumnVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn tally_off_records_nothing() {
        let a = Matrix::identity(3);
        let mut t = Tally::off();
        a.matmul_tallied(&a, &mut t).unwrap();
        assert_eq!(t.count(), None);
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        prop::collection::vec(-1.0f64..1.0, rows * cols)
            .prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
    }

    proptest! {
        #[test]
        fn matmul_is_associative(
            a in small_matrix(3, 4),
            b in small_matrix(4, 2),
            c in small_matrix(2, 5),
        ) {
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.as_slice().iter().zip(right.as_slice()) {
                prop_assert!(rel_close(*x, *y, 1e-12));
            }
        }

        #[test]
        fn power_exponents_add(
            v in prop::collection::vec(-1.5f64..1.5, 1..6),
            a in 1u32..6,
            b in 1u32..6,
        ) {
            let v = ColumnVector::new(v).unwrap();
            let lhs = v.elementwise_power(a + b).unwrap();
            let rhs = v.elementwise_power(a).unwrap()
                .hadamard(&v.elementwise_power(b).unwrap()).unwrap();
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!(rel_close(*x, *y, 1e-12));
            }
        }

        #[test]
        fn hadamard_commutes(
            pair in (1usize..8).prop_flat_map(|d| (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )),
        ) {
            let a = ColumnVector::new(pair.0).unwrap();
            let b = ColumnVector::new(pair.1).unwrap();
            prop_assert_eq!(a.hadamard(&b).unwrap(), b.hadamard(&a).unwrap());
        }

        #[test]
        fn matmul_count_is_exact(r in 1usize..6, k in 1usize..6, c in 1usize..6) {
            let mut t = Tally::on();
            Matrix::zeros(r, k).matmul_tallied(&Matrix::zeros(k, c), &mut t).unwrap();
            prop_assert_eq!(t.count(), Some((r * k * c) as u64));
        }
    }
}
