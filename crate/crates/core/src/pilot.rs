//! Training reflection schedules and received-signal synthesis.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::{double_reflection_term, CascadedChannels, RisPhase};
use crate::error::{Error, Result};
use crate::numerics::{sample_cn, ComplexMatrix, RngStream};
use crate::scalar::Real;

/// Which single-reflection link a schedule trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingleLink {
    /// Through RIS1 (RIS2 OFF), estimates `H1k`.
    Ris1,
    /// Through RIS2 (RIS1 OFF), estimates `H2k`.
    Ris2,
}

/// Reflection matrix `Φ` (N×I) for one single-reflection training phase.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleLinkSchedule<T> {
    pub link: SingleLink,
    phi: ComplexMatrix<T>,
}

impl<T: Real> SingleLinkSchedule<T> {
    pub fn phi(&self) -> &ComplexMatrix<T> {
        &self.phi
    }

    pub fn elements(&self) -> usize {
        self.phi.rows()
    }

    pub fn slots(&self) -> usize {
        self.phi.cols()
    }

    /// Reflection vector used in slot `t`.
    pub fn slot(&self, t: usize) -> Result<RisPhase<T>> {
        RisPhase::from_coeffs(self.phi.column(t))
    }
}

/// First `elements` rows of the `slots`-point DFT matrix, `Φ[n][t] = exp(−2πi·n·t/I)`.
///
/// Unit-modulus entries and `Φ·Φ^H = I·I_N`.
pub fn build_single_schedule<T: Real>(link: SingleLink, elements: usize, slots: usize) -> Result<SingleLinkSchedule<T>> {
    if elements == 0 {
        return Err(Error::InvalidParameter("schedule needs at least one element".into()));
    }
    if slots < elements {
        return Err(Error::RankRequirement(format!(
            "pilot slots I = {slots} < N = {elements}: rank(Φ) = N needs I >= N"
        )));
    }
    let step = -std::f64::consts::TAU / slots as f64;
    let phi = ComplexMatrix::from_fn(elements, slots, |n, t| {
        // Reduce n·t mod I first so the angle stays small and exact.
        let k = (n * t) % slots;
        Complex::from_polar(T::one(), T::lit(step * k as f64))
    });
    Ok(SingleLinkSchedule { link, phi })
}

/// RIS2 full-ON, RIS1 sweeps one element per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleLinkSchedule {
    elements: usize,
}

impl DoubleLinkSchedule {
    pub fn new(elements: usize) -> Self {
        Self { elements }
    }

    pub fn slots(&self) -> usize {
        self.elements
    }

    pub fn theta2<T: Real>(&self) -> RisPhase<T> {
        RisPhase::full_on(self.elements)
    }

    /// RIS1 state in slot `n`: element `n` ON, the rest OFF.
    pub fn theta1<T: Real>(&self, n: usize) -> RisPhase<T> {
        RisPhase::one_hot(self.elements, n)
    }
}

/// Reference for the noise power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrMode {
    /// `SNR = P/σ²`.
    Transmit,
    /// `SNR = (average clean received power)/σ²`.
    Receive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub mode: SnrMode,
    pub pilot_power: f64,
}

impl NoiseSpec {
    pub fn transmit(snr_db: f64) -> Self {
        Self {
            snr_db,
            mode: SnrMode::Transmit,
            pilot_power: 1.0,
        }
    }

    pub fn receive(snr_db: f64) -> Self {
        Self {
            snr_db,
            mode: SnrMode::Receive,
            pilot_power: 1.0,
        }
    }
}

/// Per-entry complex noise variance σ² for the given SNR convention.
pub fn noise_variance(spec: &NoiseSpec, avg_rx_power: Option<f64>) -> Result<f64> {
    let atten = 10f64.powf(-spec.snr_db / 10.0);
    let reference = match spec.mode {
        SnrMode::Transmit => spec.pilot_power,
        SnrMode::Receive => match avg_rx_power {
            Some(p) if p > 0.0 => p,
            Some(p) => {
                return Err(Error::InvalidParameter(format!(
                    "receive-mode SNR needs a positive average received power, got {p}"
                )))
            }
            None => {
                return Err(Error::InvalidParameter(
                    "receive-mode SNR needs the average received power".into(),
                ))
            }
        },
    };
    let var = reference * atten;
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::InvalidParameter(format!("noise variance {var} is not positive")));
    }
    Ok(var)
}

/// `Y = H·Φ + W` with `W ~ CN(0, σ²)` and unit pilots.
pub fn synthesize_single_rx<T: Real>(
    h: &ComplexMatrix<T>,
    sched: &SingleLinkSchedule<T>,
    noise_var: f64,
    rng: &mut RngStream,
) -> Result<ComplexMatrix<T>> {
    let clean = h.matmul(sched.phi())?;
    let w = sample_cn::<T>(clean.rows(), clean.cols(), noise_var, rng);
    clean.add(&w)
}

fn check_double_rank(h2: (usize, usize)) -> Result<()> {
    let (m, n) = h2;
    if m < n {
        return Err(Error::RankRequirement(format!(
            "M = {m} < N = {n}: rank(H2k) = N needs M >= N"
        )));
    }
    Ok(())
}

/// `Y3 = H2k·H3k + W3` after N one-hot slots, with single-reflection
/// contributions assumed cancelled.
pub fn synthesize_double_rx<T: Real>(
    h2: &ComplexMatrix<T>,
    h3: &ComplexMatrix<T>,
    noise_var: f64,
    rng: &mut RngStream,
) -> Result<ComplexMatrix<T>> {
    check_double_rank(h2.shape())?;
    let clean = h2.matmul(h3)?;
    let w = sample_cn::<T>(clean.rows(), clean.cols(), noise_var, rng);
    clean.add(&w)
}

/// Builds `Y3` slot by slot from the per-slot received signal
/// `H2k·diag(h_3k,n)·θ2·θ1[n] + w`, given the noise matrix explicitly.
pub fn double_rx_slotwise<T: Real>(
    cc: &CascadedChannels<T>,
    sched: &DoubleLinkSchedule,
    noise: &ComplexMatrix<T>,
) -> Result<ComplexMatrix<T>> {
    check_double_rank(cc.h2.shape())?;
    let mut y = ComplexMatrix::zeros(cc.h2.rows(), sched.slots());
    let theta2 = sched.theta2::<T>();
    for n in 0..sched.slots() {
        let clean = double_reflection_term(cc, &sched.theta1(n), &theta2)?;
        let col: Vec<_> = clean.iter().zip(noise.column(n)).map(|(&a, b)| a + b).collect();
        y.set_column(n, &col);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_cascaded, SystemConfig};

    type M = ComplexMatrix<f64>;

    #[test]
    fn two_point_dft() {
        let s = build_single_schedule::<f64>(SingleLink::Ris1, 2, 2).unwrap();
        let expected = M::from_rows(&[vec![(1.0, 0.0), (1.0, 0.0)], vec![(1.0, 0.0), (-1.0, 0.0)]]).unwrap();
        assert!(s.phi().max_abs_diff(&expected) < 1e-15);
        let one = build_single_schedule::<f64>(SingleLink::Ris2, 1, 1).unwrap();
        assert_eq!(one.phi(), &M::identity(1));
    }

    #[test]
    fn dft_rows_are_orthogonal() {
        for (n, i) in [(1, 1), (3, 3), (4, 7), (8, 8), (5, 16), (32, 32)] {
            let s = build_single_schedule::<f64>(SingleLink::Ris1, n, i).unwrap();
            let g = s.phi().matmul(&s.phi().conj_transpose()).unwrap();
            assert!(g.max_abs_diff(&M::identity(n).scale(i as f64)) < 1e-10, "({n}, {i})");
            assert!(s.phi().as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn too_few_slots_is_rejected() {
        let err = build_single_schedule::<f64>(SingleLink::Ris1, 4, 3).unwrap_err();
        assert!(matches!(err, Error::RankRequirement(msg) if msg.contains("rank")));
    }

    #[test]
    fn noise_variance_conventions() {
        assert_eq!(noise_variance(&NoiseSpec::transmit(0.0), None).unwrap(), 1.0);
        assert!((noise_variance(&NoiseSpec::transmit(10.0), None).unwrap() - 0.1).abs() < 1e-16);
        let p = 3.7e-5;
        let v = noise_variance(&NoiseSpec::receive(-10.0), Some(p)).unwrap();
        assert!((v - 10.0 * p).abs() < 1e-18);
        assert!(noise_variance(&NoiseSpec::receive(0.0), None).is_err());
        // transmit mode ignores the received power
        assert_eq!(noise_variance(&NoiseSpec::transmit(0.0), Some(5.0)).unwrap(), 1.0);
    }

    #[test]
    fn noiseless_and_identity_schedules() {
        let mut rng = RngStream::new(1, 0);
        let h = sample_cn::<f64>(6, 4, 1.0, &mut rng);
        let s = build_single_schedule::<f64>(SingleLink::Ris1, 4, 6).unwrap();
        let y = synthesize_single_rx(&h, &s, 0.0, &mut rng).unwrap();
        assert_eq!(y, h.matmul(s.phi()).unwrap());

        let eye = SingleLinkSchedule {
            link: SingleLink::Ris1,
            phi: M::identity(4),
        };
        let y = synthesize_single_rx(&h, &eye, 0.5, &mut RngStream::new(2, 0)).unwrap();
        let w = sample_cn::<f64>(6, 4, 0.5, &mut RngStream::new(2, 0));
        assert!(y.max_abs_diff(&h.add(&w).unwrap()) < 1e-15);
    }

    #[test]
    fn noise_energy_monte_carlo() {
        let (m, n, i) = (4, 3, 5);
        let var = 0.7;
        let mut rng = RngStream::new(3, 0);
        let h = sample_cn::<f64>(m, n, 1.0, &mut rng);
        let s = build_single_schedule::<f64>(SingleLink::Ris2, n, i).unwrap();
        let clean = h.matmul(s.phi()).unwrap();
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let y = synthesize_single_rx(&h, &s, var, &mut rng).unwrap();
            acc += y.sub(&clean).unwrap().fro_norm_sq();
        }
        let expected = (m * i) as f64 * var;
        assert!((acc / trials as f64 / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn double_rx_cases() {
        let mut rng = RngStream::new(4, 0);
        let h2 = sample_cn::<f64>(6, 4, 1.0, &mut rng);
        let h3 = sample_cn::<f64>(4, 4, 1.0, &mut rng);
        let y = synthesize_double_rx(&h2, &h3, 0.0, &mut rng).unwrap();
        assert_eq!(y, h2.matmul(&h3).unwrap());

        let y = synthesize_double_rx(&h2, &M::identity(4), 0.3, &mut RngStream::new(5, 0)).unwrap();
        let w = sample_cn::<f64>(6, 4, 0.3, &mut RngStream::new(5, 0));
        assert!(y.max_abs_diff(&h2.add(&w).unwrap()) < 1e-15);

        let short = sample_cn::<f64>(3, 4, 1.0, &mut rng);
        assert!(matches!(
            synthesize_double_rx(&short, &h3, 0.1, &mut rng),
            Err(Error::RankRequirement(_))
        ));
    }

    #[test]
    fn slotwise_matches_matrix_form() {
        let cfg = SystemConfig {
            antennas: 8,
            elements: 4,
            ..SystemConfig::default()
        };
        let (_, cc) = sample_cascaded::<f64>(&cfg, 0, &RngStream::new(6, 0)).unwrap();
        let noise = sample_cn::<f64>(8, 4, 1e-6, &mut RngStream::new(7, 0));
        let sched = DoubleLinkSchedule::new(4);
        let slotwise = double_rx_slotwise(&cc, &sched, &noise).unwrap();
        let matrix = cc.h2.matmul(&cc.h3).unwrap().add(&noise).unwrap();
        assert!(slotwise.rel_diff(&matrix) < 1e-12);
    }

    #[test]
    fn double_schedule_is_a_bijection() {
        let sched = DoubleLinkSchedule::new(5);
        let mut seen = [0usize; 5];
        for n in 0..sched.slots() {
            let t1 = sched.theta1::<f64>(n);
            let on: Vec<_> = (0..5).filter(|&i| t1.coeffs()[i].norm() > 0.0).collect();
            assert_eq!(on, vec![n]);
            assert_eq!(t1.coeffs()[n], Complex::new(1.0, 0.0));
            seen[n] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert!(sched.theta2::<f64>().coeffs().iter().all(|z| *z == Complex::new(1.0, 0.0)));
    }
}
