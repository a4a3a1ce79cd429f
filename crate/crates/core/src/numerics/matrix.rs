use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix extents must be positive");
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        assert!(rows >= 1 && cols >= 1, "matrix extents must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape {
                rows,
                cols,
                reason: "extents must be positive",
            });
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidShape {
                rows,
                cols,
                reason: "entry count does not match extents",
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real `(re, im)` pairs given row by row.
    pub fn from_rows(rows: &[Vec<(f64, f64)>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidShape {
                rows: r,
                cols: c,
                reason: "ragged rows",
            });
        }
        let data = rows
            .iter()
            .flatten()
            .map(|&(re, im)| Complex::new(T::lit(re), T::lit(im)))
            .collect();
        Self::from_vec(r, c, data)
    }

    /// Column vector from a slice.
    pub fn column_vector(v: &[Complex<T>]) -> Self {
        Self::from_vec(v.len(), 1, v.to_vec()).expect("non-empty vector")
    }

    /// Square diagonal matrix.
    pub fn diag(v: &[Complex<T>]) -> Self {
        let mut m = Self::zeros(v.len(), v.len());
        for (i, &x) in v.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[Complex<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex<T>> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[Complex<T>]) {
        assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for l in 0..k {
                let a = self.data[i * k + l];
                if a.is_zero() {
                    continue;
                }
                let b_row = &other.data[l * n..(l + 1) * n];
                for (c, &b) in out_row.iter_mut().zip(b_row) {
                    *c = *c + a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch {
                op: "mul_vec",
                left: self.shape(),
                right: (v.len(), 1),
            });
        }
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(Complex::zero(), |acc, (&a, &b)| acc + a * b)
            })
            .collect())
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self · diag(v)`: scales column `j` by `v[j]`.
    pub fn scale_columns(&self, v: &[Complex<T>]) -> Result<Self> {
        if v.len() != self.cols {
            return Err(Error::DimensionMismatch {
                op: "scale_columns",
                left: self.shape(),
                right: (v.len(), v.len()),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * v[j]))
    }

    /// `diag(v) · self`: scales row `i` by `v[i]`.
    pub fn scale_rows(&self, v: &[Complex<T>]) -> Result<Self> {
        if v.len() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "scale_rows",
                left: (v.len(), v.len()),
                right: self.shape(),
            });
        }
        Ok(Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * v[i]))
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        self.map(|z| z * s)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>,
    ) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    /// Adds `s` to every diagonal entry of a square matrix.
    pub fn add_diagonal(&self, s: T) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)].re += s;
        }
        out
    }

    /// Squared Frobenius norm `Σ |a_ij|²`.
    ///
    /// Entries `(i, j)` and `(j, i)` are summed as a pair and pairs are
    /// visited in a transpose-symmetric order, so `A` and `A^H` give
    /// bit-identical results.
    pub fn fro_norm_sq(&self) -> T {
        let n = self.rows.max(self.cols);
        let at = |i: usize, j: usize| {
            if i < self.rows && j < self.cols {
                self[(i, j)].norm_sqr()
            } else {
                T::zero()
            }
        };
        let mut acc = T::zero();
        for lo in 0..n {
            acc += at(lo, lo);
            for hi in lo + 1..n {
                acc += at(lo, hi) + at(hi, lo);
            }
        }
        acc
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).fold(Complex::zero(), |acc, i| acc + self[(i, i)])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Largest entrywise modulus of `self - other`; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).norm()))
    }

    /// `‖self − other‖_F / ‖other‖_F` (absolute when `other` is zero).
    pub fn rel_diff(&self, other: &Self) -> T {
        let num = self.sub(other).expect("rel_diff shape mismatch").fro_norm_sq().sqrt();
        let den = other.fro_norm_sq().sqrt();
        if den > T::zero() {
            num / den
        } else {
            num
        }
    }

    /// Largest `|a_ij − conj(a_ji)|` of a square matrix.
    pub fn hermitian_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Element-wise precision conversion.
    pub fn cast<U: Real>(&self) -> ComplexMatrix<U> {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::lit(z.re.as_f64()), U::lit(z.im.as_f64())))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<T> {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for ComplexMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in &self.data[i * self.cols..(i + 1) * self.cols] {
                write!(f, "({:?}, {:?}) ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::numerics::sample_cn;

    type M = ComplexMatrix<f64>;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn identity_times_b_is_b() {
        let mut rng = RngStream::new(1, 0);
        let b = sample_cn::<f64>(3, 5, 1.0, &mut rng);
        assert_eq!(M::identity(3).matmul(&b).unwrap(), b);
    }

    #[test]
    fn scalar_product_by_hand() {
        let a = M::from_vec(1, 1, vec![c(2.0, 1.0)]).unwrap();
        let b = M::from_vec(1, 1, vec![c(3.0, -1.0)]).unwrap();
        assert_eq!(a.matmul(&b).unwrap()[(0, 0)], c(7.0, 1.0));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = RngStream::new(2, 0);
        let a = sample_cn::<f64>(5, 4, 1.0, &mut rng);
        let b = sample_cn::<f64>(4, 3, 1.0, &mut rng);
        let fast = a.matmul(&b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = c(0.0, 0.0);
                for l in 0..4 {
                    acc += a[(i, l)] * b[(l, j)];
                }
                assert!((acc - fast[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_rejects_mismatch_with_both_shapes() {
        let err = M::zeros(2, 3).matmul(&M::zeros(2, 3)).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                op: "matmul",
                left: (2, 3),
                right: (2, 3)
            }
        );
    }

    #[test]
    fn conj_transpose_cases() {
        assert_eq!(M::identity(4).conj_transpose(), M::identity(4));
        let a = M::from_vec(1, 1, vec![c(0.0, 1.0)]).unwrap();
        assert_eq!(a.conj_transpose()[(0, 0)], c(0.0, -1.0));
        let mut rng = RngStream::new(3, 0);
        let r = sample_cn::<f64>(4, 6, 1.0, &mut rng);
        assert_eq!(r.conj_transpose().conj_transpose(), r);
        assert_eq!(r.conj_transpose().shape(), (6, 4));
    }

    #[test]
    fn fro_norm_cases() {
        assert_eq!(M::zeros(3, 2).fro_norm_sq(), 0.0);
        assert_eq!(M::identity(4).fro_norm_sq(), 4.0);
        let mut rng = RngStream::new(4, 0);
        let a = sample_cn::<f64>(6, 3, 1.0, &mut rng);
        let tr = a.conj_transpose().matmul(&a).unwrap().trace();
        assert!((tr.re - a.fro_norm_sq()).abs() < 1e-12);
        assert!(tr.im.abs() < 1e-12);
        assert_eq!(a.fro_norm_sq(), a.conj_transpose().fro_norm_sq());
    }

    #[test]
    fn from_vec_rejects_bad_counts() {
        assert!(M::from_vec(2, 2, vec![c(0.0, 0.0); 3]).is_err());
        assert!(M::from_vec(0, 2, vec![]).is_err());
    }
}
