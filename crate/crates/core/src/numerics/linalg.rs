//! Factorization-based solves. Inverses are never formed; every `(·)^{-1}`
//! in the estimators goes through [`Cholesky`] or [`Qr`].

use num_complex::Complex;
use num_traits::Zero;

use super::ComplexMatrix;
use crate::error::{Error, Result};
use crate::scalar::Real;

fn hermitian_tolerance<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0))
}

/// Lower-triangular factor `L` with `A = L·L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: ComplexMatrix<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors a Hermitian positive definite matrix.
    pub fn new(a: &ComplexMatrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidShape {
                rows: a.rows(),
                cols: a.cols(),
                reason: "Cholesky needs a square matrix",
            });
        }
        let scale = a.max_abs();
        let asym = a.hermitian_asymmetry();
        if asym > hermitian_tolerance::<T>() * scale.max(T::min_positive_value()) {
            return Err(Error::NotHermitian {
                asymmetry: asym.as_f64(),
            });
        }
        let n = a.rows();
        // A pivot at rounding level relative to the diagonal signals rank deficiency.
        let max_diag = (0..n).fold(T::zero(), |m, i| m.max(a[(i, i)].re.abs()));
        let floor = T::epsilon() * T::lit(4.0 * n as f64) * max_diag;
        let mut l = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > floor) || !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: d.as_f64(),
                });
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex::new(djj, T::zero());
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor(&self) -> &ComplexMatrix<T> {
        &self.l
    }

    /// Solves `L·Y = B`.
    pub fn solve_lower(&self, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        let n = self.l.rows();
        check_rows("cholesky solve", &self.l, b)?;
        let mut y = b.clone();
        for c in 0..b.cols() {
            for i in 0..n {
                let mut s = y[(i, c)];
                for k in 0..i {
                    s = s - self.l[(i, k)] * y[(k, c)];
                }
                y[(i, c)] = s / self.l[(i, i)].re;
            }
        }
        Ok(y)
    }

    /// Solves `L^H·X = Y`.
    pub fn solve_upper(&self, y: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        let n = self.l.rows();
        check_rows("cholesky solve", &self.l, y)?;
        let mut x = y.clone();
        for c in 0..y.cols() {
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s = s - self.l[(k, i)].conj() * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)].re;
            }
        }
        Ok(x)
    }

    /// Solves `A·X = B`.
    pub fn solve(&self, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        self.solve_upper(&self.solve_lower(b)?)
    }
}

fn check_rows<T: Real>(op: &'static str, a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// Householder QR of a tall matrix, `A = Q·R` with `Q` kept implicitly.
#[derive(Debug, Clone)]
pub struct Qr<T> {
    rows: usize,
    cols: usize,
    /// Unit Householder vectors, `reflectors[k]` acts on rows `k..`.
    reflectors: Vec<Vec<Complex<T>>>,
    r: ComplexMatrix<T>,
}

impl<T: Real> Qr<T> {
    pub fn new(a: &ComplexMatrix<T>) -> Result<Self> {
        let (m, n) = a.shape();
        if m < n {
            return Err(Error::RankRequirement(format!(
                "QR of a {m}x{n} matrix needs rows >= cols"
            )));
        }
        let mut work = a.clone();
        let mut reflectors = Vec::with_capacity(n);
        for k in 0..n {
            let x: Vec<Complex<T>> = (k..m).map(|i| work[(i, k)]).collect();
            let norm = x.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            let mut v = x;
            if norm > T::zero() {
                let phase = if v[0].norm() > T::zero() {
                    v[0] / v[0].norm()
                } else {
                    Complex::new(T::one(), T::zero())
                };
                // alpha = -phase·‖x‖ avoids cancellation in v0 = x0 - alpha.
                v[0] = v[0] + phase * norm;
                let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
                for z in &mut v {
                    *z = *z / vnorm;
                }
                apply_reflector(&v, &mut work, k, k);
            } else {
                v.iter_mut().for_each(|z| *z = Complex::zero());
            }
            reflectors.push(v);
        }
        let r = ComplexMatrix::from_fn(n, n, |i, j| if j >= i { work[(i, j)] } else { Complex::zero() });
        Ok(Self {
            rows: m,
            cols: n,
            reflectors,
            r,
        })
    }

    pub fn r(&self) -> &ComplexMatrix<T> {
        &self.r
    }

    /// `max|R_ii| / min|R_ii|`, infinite when a pivot vanishes.
    pub fn condition_estimate(&self) -> f64 {
        let diag: Vec<f64> = (0..self.cols).map(|i| self.r[(i, i)].norm().as_f64()).collect();
        let hi = diag.iter().cloned().fold(0.0, f64::max);
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }

    fn check_rank(&self) -> Result<()> {
        let cond = self.condition_estimate();
        if !(cond < 1e10) {
            return Err(Error::Singular { condition: cond });
        }
        Ok(())
    }

    /// Applies `Q^H` to `b` in place.
    pub fn apply_qh(&self, b: &mut ComplexMatrix<T>) -> Result<()> {
        if b.rows() != self.rows {
            return Err(Error::DimensionMismatch {
                op: "qr apply",
                left: (self.rows, self.cols),
                right: b.shape(),
            });
        }
        for (k, v) in self.reflectors.iter().enumerate() {
            apply_reflector(v, b, k, 0);
        }
        Ok(())
    }

    /// Least-squares solution `X = R^{-1}·(Q^H·B)[..n]`, i.e. `A^†·B`.
    pub fn solve_least_squares(&self, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        self.check_rank()?;
        let mut qb = b.clone();
        self.apply_qh(&mut qb)?;
        let n = self.cols;
        let mut x = ComplexMatrix::zeros(n, b.cols());
        for c in 0..b.cols() {
            for i in (0..n).rev() {
                let mut s = qb[(i, c)];
                for k in i + 1..n {
                    s = s - self.r[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.r[(i, i)];
            }
        }
        Ok(x)
    }
}

/// `(I − 2vv^H)` applied to rows `k..` and columns `col0..` of `a`.
fn apply_reflector<T: Real>(v: &[Complex<T>], a: &mut ComplexMatrix<T>, k: usize, col0: usize) {
    let two = T::lit(2.0);
    for j in col0..a.cols() {
        let mut dot = Complex::zero();
        for (off, vi) in v.iter().enumerate() {
            dot = dot + vi.conj() * a[(k + off, j)];
        }
        if dot.is_zero() {
            continue;
        }
        let s = dot * two;
        for (off, &vi) in v.iter().enumerate() {
            a[(k + off, j)] = a[(k + off, j)] - vi * s;
        }
    }
}

/// Left pseudo-inverse `(A^H A)^{-1} A^H` of a full-column-rank matrix.
pub fn left_pinv<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let qr = Qr::new(a)?;
    qr.solve_least_squares(&ComplexMatrix::identity(a.rows()))
}

/// Solves `A·X = B` for Hermitian positive definite `A`.
pub fn solve_hermitian<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    Cholesky::new(a)?.solve(b)
}
