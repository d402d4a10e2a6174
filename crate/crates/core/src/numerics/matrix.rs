use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// Dense complex column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVec {
    data: Vec<Complex64>,
}

fn all_finite(data: &[Complex64]) -> bool {
    data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

impl CMat {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::domain(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::domain("matrix entries must be finite"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds from real rows; convenient in tests.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        Self::from_fn(r, c, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub(crate) fn get_mut(&mut self, i: usize, j: usize) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> CVec {
        CVec::from_raw((0..self.rows).map(|i| self.get(i, j)).collect())
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn matmul(&self, rhs: &CMat) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = CMat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^H * self`, Hermitian by construction.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut out = CMat::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ai = row[i].conj();
                for j in i..n {
                    *out.get_mut(i, j) += ai * row[j];
                }
            }
        }
        for i in 0..n {
            let d = out.get(i, i).re;
            out.set(i, i, Complex64::new(d, 0.0));
            for j in (i + 1)..n {
                let v = out.get(i, j);
                out.set(j, i, v.conj());
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &CVec) -> CVec {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        CVec::from_raw(
            (0..self.rows)
                .map(|i| {
                    self.row(i)
                        .iter()
                        .zip(v.data())
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect(),
        )
    }

    pub fn add(&self, rhs: &CMat) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, rhs: &CMat) -> Self {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }

    /// `self + s I`.
    pub fn add_diag(&self, s: f64) -> Self {
        assert!(self.is_square());
        let mut out = self.clone();
        for i in 0..self.rows {
            out.get_mut(i, i).re += s;
        }
        out
    }

    /// Scales column `j` by `scales[j]`, i.e. `self * diag(scales)`.
    pub fn scale_columns(&self, scales: &[Complex64]) -> Self {
        assert_eq!(self.cols, scales.len());
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j) * scales[j])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl CVec {
    pub fn new(data: Vec<Complex64>) -> Result<Self> {
        if !all_finite(&data) {
            return Err(Error::domain("vector entries must be finite"));
        }
        Ok(Self { data })
    }

    pub(crate) fn from_raw(data: Vec<Complex64>) -> Self {
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_raw(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::from_raw(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Standard basis vector `e_k` of length `n`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.data[k] = Complex64::new(1.0, 0.0);
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.data
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Inner product `self^H rhs`.
    pub fn dot(&self, rhs: &CVec) -> Complex64 {
        assert_eq!(self.len(), rhs.len());
        self.data.iter().zip(&rhs.data).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_raw(self.data.iter().map(|a| a * s).collect())
    }

    pub fn add(&self, rhs: &CVec) -> Self {
        assert_eq!(self.len(), rhs.len());
        Self::from_raw(self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, rhs: &CVec) -> Self {
        assert_eq!(self.len(), rhs.len());
        Self::from_raw(self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect())
    }

    /// Returns `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(Complex64::new(1.0 / n, 0.0)))
    }

    /// Rotates the global phase so the largest-magnitude entry (first one on
    /// ties) is real and nonnegative.
    pub fn phase_normalized(&self) -> Self {
        let max = self.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return self.clone();
        }
        let pivot = self
            .data
            .iter()
            .position(|z| z.norm() >= max * (1.0 - 1e-12))
            .expect("max exists");
        let z = self.data[pivot];
        self.scale(z.conj() / z.norm())
    }

    /// Hermitian quadratic form `self^H A self` (real part).
    pub fn quad_form(&self, a: &CMat) -> f64 {
        self.dot(&a.mul_vec(self)).re
    }
}
