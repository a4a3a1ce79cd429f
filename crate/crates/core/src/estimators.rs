//! LS and LMMSE estimators for the single- and double-reflection links.
//!
//! The LMMSE forms are the dimensionally consistent ones:
//!
//! - single link: `Ĥ = Y·(Φ^H·R·Φ + ϑ·I)^{-1}·Φ^H·R`
//! - double link: `Ĥ3 = R·(R + (H2k^H·H2k)^{-1}·ϑ)^{-1}·H2k^†·Y3`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{solve_hermitian, Cholesky, ComplexMatrix, Qr};
use crate::scalar::Real;

/// Empirical channel correlation `R = E[H^H·H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix<T> {
    r: ComplexMatrix<T>,
    sample_count: usize,
}

impl<T: Real> CorrelationMatrix<T> {
    /// Wraps an externally known correlation, checking it is Hermitian PSD-ish.
    pub fn new(r: ComplexMatrix<T>, sample_count: usize) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::InvalidShape {
                rows: r.rows(),
                cols: r.cols(),
                reason: "correlation matrix must be square",
            });
        }
        let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0)) * r.max_abs().max(T::min_positive_value());
        let asym = r.hermitian_asymmetry();
        if asym > tol {
            return Err(Error::NotHermitian {
                asymmetry: asym.as_f64(),
            });
        }
        Ok(Self { r, sample_count })
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.r
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.r.rows()
    }
}

/// How the noise scalar ϑ relates to the per-entry variance σ².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    /// `ϑ = E[tr(W^H·W)] = rows·cols·σ²`.
    PaperTrace,
    /// `ϑ = σ²`.
    PerEntry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScalar {
    pub value: f64,
    pub convention: NoiseConvention,
}

impl NoiseScalar {
    /// ϑ for a noise matrix of `rows × cols` iid `CN(0, σ²)` entries.
    pub fn new(convention: NoiseConvention, noise_var: f64, rows: usize, cols: usize) -> Self {
        let value = match convention {
            NoiseConvention::PaperTrace => (rows * cols) as f64 * noise_var,
            NoiseConvention::PerEntry => noise_var,
        };
        Self { value, convention }
    }

    /// Raw value, convention recorded as per-entry.
    pub fn raw(value: f64) -> Self {
        Self {
            value,
            convention: NoiseConvention::PerEntry,
        }
    }
}

fn check_noise(theta: &NoiseScalar) -> Result<()> {
    if !(theta.value >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise scalar must be >= 0, got {}",
            theta.value
        )));
    }
    Ok(())
}

fn singular(e: Error) -> Error {
    match e {
        Error::NotPositiveDefinite { value, .. } => Error::Singular {
            condition: if value == 0.0 { f64::INFINITY } else { 1.0 / value.abs() },
        },
        other => other,
    }
}

/// `Ĥ = Y·Φ^H·(Φ·Φ^H)^{-1}`.
pub fn ls_single<T: Real>(y: &ComplexMatrix<T>, phi: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    if y.cols() != phi.cols() {
        return Err(Error::DimensionMismatch {
            op: "ls_single",
            left: y.shape(),
            right: phi.shape(),
        });
    }
    let gram = phi.matmul(&phi.conj_transpose())?;
    // X^H = (ΦΦ^H)^{-1}·Φ·Y^H
    let rhs = phi.matmul(&y.conj_transpose())?;
    let xh = solve_hermitian(&gram, &rhs).map_err(singular)?;
    Ok(xh.conj_transpose())
}

/// `Ĥ = Y·(Φ^H·R·Φ + ϑ·I)^{-1}·Φ^H·R`.
pub fn lmmse_single<T: Real>(
    y: &ComplexMatrix<T>,
    phi: &ComplexMatrix<T>,
    r: &CorrelationMatrix<T>,
    theta: &NoiseScalar,
) -> Result<ComplexMatrix<T>> {
    check_noise(theta)?;
    if y.cols() != phi.cols() || r.dim() != phi.rows() {
        return Err(Error::DimensionMismatch {
            op: "lmmse_single",
            left: y.shape(),
            right: phi.shape(),
        });
    }
    let r_phi = r.matrix().matmul(phi)?;
    let inner = phi.conj_transpose().matmul(&r_phi)?.add_diagonal(T::lit(theta.value));
    // Ĥ^H = R·Φ·S^{-1}·Y^H, S Hermitian.
    let z = solve_hermitian(&hermitize(&inner), &y.conj_transpose()).map_err(singular)?;
    Ok(r_phi.matmul(&z)?.conj_transpose())
}

/// `Ĥ3 = (H2k^H·H2k)^{-1}·H2k^H·Y3`, through a QR of `H2k`.
pub fn ls_double<T: Real>(h2: &ComplexMatrix<T>, y3: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    if h2.rows() < h2.cols() {
        return Err(Error::RankRequirement(format!(
            "M = {} < N = {}: rank(H2k) = N needs M >= N",
            h2.rows(),
            h2.cols()
        )));
    }
    Qr::new(h2)?.solve_least_squares(y3)
}

/// `Ĥ3 = R·(R + G^{-1}·ϑ)^{-1}·H2k^†·Y3` with `G = H2k^H·H2k`.
///
/// With `G = L·L^H` this equals `R·L·(L^H·R·L + ϑ·I)^{-1}·L^H·H2k^†·Y3`,
/// which only needs Hermitian solves.
pub fn lmmse_double<T: Real>(
    h2: &ComplexMatrix<T>,
    y3: &ComplexMatrix<T>,
    r: &CorrelationMatrix<T>,
    theta: &NoiseScalar,
) -> Result<ComplexMatrix<T>> {
    check_noise(theta)?;
    let ls = ls_double(h2, y3)?;
    lmmse_double_from_ls(h2, &ls, r, theta)
}

/// The LMMSE refinement applied to an already computed `H2k^†·Y3`.
pub fn lmmse_double_from_ls<T: Real>(
    h2: &ComplexMatrix<T>,
    ls: &ComplexMatrix<T>,
    r: &CorrelationMatrix<T>,
    theta: &NoiseScalar,
) -> Result<ComplexMatrix<T>> {
    check_noise(theta)?;
    if r.dim() != h2.cols() || ls.rows() != h2.cols() {
        return Err(Error::DimensionMismatch {
            op: "lmmse_double",
            left: r.matrix().shape(),
            right: h2.shape(),
        });
    }
    let gram = h2.conj_transpose().matmul(h2)?;
    let chol = Cholesky::new(&hermitize(&gram)).map_err(singular)?;
    let l = chol.factor();
    let lh = l.conj_transpose();
    let r_l = r.matrix().matmul(l)?;
    let inner = lh.matmul(&r_l)?.add_diagonal(T::lit(theta.value));
    let z = solve_hermitian(&hermitize(&inner), &lh.matmul(ls)?).map_err(singular)?;
    r_l.matmul(&z)
}

/// Averages away rounding asymmetry of an analytically Hermitian product.
fn hermitize<T: Real>(a: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let half = T::lit(0.5);
    ComplexMatrix::from_fn(a.rows(), a.cols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * half)
}

/// `R = (1/T)·Σ_t H_t^H·H_t`.
pub fn empirical_correlation<T: Real>(samples: &[ComplexMatrix<T>]) -> Result<CorrelationMatrix<T>> {
    let first = samples.first().ok_or(Error::Empty("empirical_correlation needs at least one sample"))?;
    let n = first.cols();
    let mut acc = ComplexMatrix::zeros(n, n);
    for h in samples {
        if h.shape() != first.shape() {
            return Err(Error::DimensionMismatch {
                op: "empirical_correlation",
                left: first.shape(),
                right: h.shape(),
            });
        }
        acc = acc.add(&h.conj_transpose().matmul(h)?)?;
    }
    let r = hermitize(&acc.scale(T::one() / T::lit(samples.len() as f64)));
    CorrelationMatrix::new(r, samples.len())
}

/// Streaming accumulator for [`empirical_correlation`] when samples are generated on the fly.
#[derive(Debug, Clone)]
pub struct CorrelationAccumulator<T> {
    acc: Option<ComplexMatrix<T>>,
    count: usize,
}

impl<T: Real> Default for CorrelationAccumulator<T> {
    fn default() -> Self {
        Self { acc: None, count: 0 }
    }
}

impl<T: Real> CorrelationAccumulator<T> {
    pub fn push(&mut self, h: &ComplexMatrix<T>) -> Result<()> {
        let term = h.conj_transpose().matmul(h)?;
        self.acc = Some(match self.acc.take() {
            None => term,
            Some(a) => a.add(&term)?,
        });
        self.count += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<CorrelationMatrix<T>> {
        let acc = self.acc.ok_or(Error::Empty("empirical_correlation needs at least one sample"))?;
        let r = hermitize(&acc.scale(T::one() / T::lit(self.count as f64)));
        CorrelationMatrix::new(r, self.count)
    }
}

/// `(1/T)·Σ_t ‖H_t − Ĥ_t‖²_F / ‖H_t‖²_F`, accumulated in `f64`.
pub fn nmse<T: Real>(estimates: &[ComplexMatrix<T>], labels: &[ComplexMatrix<T>]) -> Result<f64> {
    if estimates.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "nmse",
            left: (estimates.len(), 1),
            right: (labels.len(), 1),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("nmse needs at least one sample"));
    }
    let mut acc = 0.0;
    for (est, h) in estimates.iter().zip(labels) {
        acc += nmse_single(est, h)?;
    }
    Ok(acc / labels.len() as f64)
}

/// `‖H − Ĥ‖²_F / ‖H‖²_F` for one sample.
pub fn nmse_single<T: Real>(estimate: &ComplexMatrix<T>, label: &ComplexMatrix<T>) -> Result<f64> {
    let den = label.fro_norm_sq().as_f64();
    if !(den > 0.0) {
        return Err(Error::InvalidParameter("nmse label has zero norm".into()));
    }
    Ok(label.sub(estimate)?.fro_norm_sq().as_f64() / den)
}
