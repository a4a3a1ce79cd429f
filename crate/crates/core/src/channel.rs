//! Rician link generation and the cascaded channel matrices.
//!
//! A [`ChannelSet`] holds one draw of the five constituent links
//! (`h_k1`, `h_k2`, `D`, `N1`, `N2`), each already carrying its own path
//! loss. [`assemble_cascaded`] turns it into `H1k = N1·diag(h_k1)`,
//! `H2k = N2·diag(h_k2)` and `H3k` with columns
//! `h_3k,n = diag(h_k2)^{-1}·d_n·h_k1[n]`.

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_cn, ComplexMatrix, RngStream};
use crate::scalar::Real;

/// Statistics of one constituent link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    /// Rician factor γ (LoS to NLoS power ratio).
    pub rician_factor: f64,
    pub distance_m: f64,
    pub pathloss_exponent: f64,
    /// (departure, arrival) angles of the LoS component, radians.
    pub los_angles: (f64, f64),
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rician_factor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rician factor must be >= 0, got {}",
                self.rician_factor
            )));
        }
        if !(self.distance_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "link distance must be > 0, got {}",
                self.distance_m
            )));
        }
        if !(self.pathloss_exponent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "path loss exponent must be > 0, got {}",
                self.pathloss_exponent
            )));
        }
        Ok(())
    }
}

/// Reference path loss `β0` (dB) at distance `d0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub beta0_db: f64,
    pub reference_distance_m: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            beta0_db: -15.0,
            reference_distance_m: 10.0,
        }
    }
}

/// The five links of the double-RIS topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSet {
    /// user -> RIS1
    pub h_k1: LinkSpec,
    /// user -> RIS2
    pub h_k2: LinkSpec,
    /// RIS1 -> RIS2
    pub d: LinkSpec,
    /// RIS1 -> BS
    pub n1: LinkSpec,
    /// RIS2 -> BS
    pub n2: LinkSpec,
}

impl Default for LinkSet {
    fn default() -> Self {
        let link = |gamma, d, alpha, angles| LinkSpec {
            rician_factor: gamma,
            distance_m: d,
            pathloss_exponent: alpha,
            los_angles: angles,
        };
        Self {
            h_k1: link(0.0, 16.0, 2.0, (0.3, -0.5)),
            h_k2: link(10.0, 90.0, 2.3, (0.7, 0.2)),
            d: link(10.0, 80.0, 2.3, (-0.4, 0.6)),
            n1: link(10.0, 90.0, 2.3, (0.5, -0.3)),
            n2: link(0.0, 16.0, 2.0, (-0.2, 0.4)),
        }
    }
}

impl LinkSet {
    pub fn validate(&self) -> Result<()> {
        for l in [&self.h_k1, &self.h_k2, &self.d, &self.n1, &self.n2] {
            l.validate()?;
        }
        Ok(())
    }
}

/// Antenna/element counts plus link statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas `M`.
    pub antennas: usize,
    /// Elements per RIS `N`.
    pub elements: usize,
    /// Users `K`.
    pub users: usize,
    #[serde(default)]
    pub path_loss: PathLossModel,
    #[serde(default)]
    pub links: LinkSet,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            antennas: 64,
            elements: 32,
            users: 1,
            path_loss: PathLossModel::default(),
            links: LinkSet::default(),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.elements == 0 || self.users == 0 {
            return Err(Error::InvalidParameter(
                "antenna, element and user counts must be >= 1".into(),
            ));
        }
        if !(self.path_loss.reference_distance_m > 0.0) {
            return Err(Error::InvalidParameter("reference distance must be > 0".into()));
        }
        self.links.validate()
    }
}

/// One realization of all constituent links (path loss included).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<T> {
    pub h_k1: Vec<Complex<T>>,
    pub h_k2: Vec<Complex<T>>,
    pub d: ComplexMatrix<T>,
    pub n1: ComplexMatrix<T>,
    pub n2: ComplexMatrix<T>,
}

/// Cascaded matrices derived from a [`ChannelSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedChannels<T> {
    /// `N1·diag(h_k1)`, M×N.
    pub h1: ComplexMatrix<T>,
    /// `N2·diag(h_k2)`, M×N.
    pub h2: ComplexMatrix<T>,
    /// Double-reflection matrix, N×N.
    pub h3: ComplexMatrix<T>,
}

/// Reflection coefficients of one RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhase<T> {
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> RisPhase<T> {
    /// `θ_n = β·exp(i·φ_n)`.
    pub fn new(amplitude: f64, phases: &[f64]) -> Result<Self> {
        if !(0.0..=1.0).contains(&amplitude) {
            return Err(Error::InvalidParameter(format!(
                "reflection amplitude must lie in [0, 1], got {amplitude}"
            )));
        }
        let tau = std::f64::consts::TAU;
        if let Some(p) = phases.iter().find(|p| !(0.0..tau).contains(*p)) {
            return Err(Error::InvalidParameter(format!("phase {p} outside [0, 2π)")));
        }
        Ok(Self {
            coeffs: phases
                .iter()
                .map(|&p| Complex::from_polar(T::lit(amplitude), T::lit(p)))
                .collect(),
        })
    }

    /// Arbitrary coefficients, each of modulus at most one.
    pub fn from_coeffs(coeffs: Vec<Complex<T>>) -> Result<Self> {
        let limit = T::one() + T::epsilon() * T::lit(16.0);
        if let Some(z) = coeffs.iter().find(|z| z.norm() > limit) {
            return Err(Error::InvalidParameter(format!(
                "reflection coefficient modulus {} exceeds 1",
                z.norm()
            )));
        }
        Ok(Self { coeffs })
    }

    /// Non-reflective state.
    pub fn off(n: usize) -> Self {
        Self {
            coeffs: vec![Complex::zero(); n],
        }
    }

    /// All coefficients equal to one.
    pub fn full_on(n: usize) -> Self {
        Self {
            coeffs: vec![Complex::new(T::one(), T::zero()); n],
        }
    }

    /// Only element `i` reflecting, with zero phase.
    pub fn one_hot(n: usize, i: usize) -> Self {
        let mut s = Self::off(n);
        s.coeffs[i] = Complex::new(T::one(), T::zero());
        s
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// `β = 10^(β0_db/10)·(d/d0)^(−α)`.
pub fn path_loss_linear(distance_m: f64, exponent: f64, model: &PathLossModel) -> Result<f64> {
    if !(distance_m > 0.0) || !(model.reference_distance_m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "distances must be positive (d = {distance_m}, d0 = {})",
            model.reference_distance_m
        )));
    }
    Ok(10f64.powf(model.beta0_db / 10.0) * (distance_m / model.reference_distance_m).powf(-exponent))
}

/// Half-wavelength ULA response `a(θ)[n] = exp(iπ·n·sin θ)`.
pub fn steering_vector<T: Real>(len: usize, angle: f64) -> Vec<Complex<T>> {
    let s = std::f64::consts::PI * angle.sin();
    (0..len)
        .map(|n| Complex::from_polar(T::one(), T::lit(s * n as f64)))
        .collect()
}

/// Unit-modulus LoS matrix `a_rx(arrival)·a_tx(departure)^T`.
pub fn los_component<T: Real>(rows: usize, cols: usize, angles: (f64, f64)) -> ComplexMatrix<T> {
    let tx = steering_vector::<T>(cols, angles.0);
    let rx = steering_vector::<T>(rows, angles.1);
    ComplexMatrix::from_fn(rows, cols, |i, j| rx[i] * tx[j])
}

/// `sqrt(β)·(sqrt(γ/(γ+1))·H̄ + sqrt(1/(γ+1))·H̃)` with `H̃ ~ CN(0, 1)`.
pub fn sample_rician<T: Real>(
    rows: usize,
    cols: usize,
    spec: &LinkSpec,
    model: &PathLossModel,
    rng: &mut RngStream,
) -> Result<ComplexMatrix<T>> {
    spec.validate()?;
    let beta = path_loss_linear(spec.distance_m, spec.pathloss_exponent, model)?;
    let gamma = spec.rician_factor;
    let nlos = sample_cn::<f64>(rows, cols, 1.0, rng);
    let (w_los, w_nlos) = if gamma.is_infinite() {
        (1.0, 0.0)
    } else {
        ((gamma / (gamma + 1.0)).sqrt(), (1.0 / (gamma + 1.0)).sqrt())
    };
    let amp = beta.sqrt();
    let mut out = nlos.scale(w_nlos);
    if w_los != 0.0 {
        let los = los_component::<f64>(rows, cols, spec.los_angles);
        out = los.scale(w_los).add(&out)?;
    }
    Ok(out.scale(amp).cast())
}

const TAG_H_K1: u64 = 1;
const TAG_H_K2: u64 = 2;
const TAG_D: u64 = 3;
const TAG_N1: u64 = 4;
const TAG_N2: u64 = 5;

/// Draws the five links of user `user`, each from its own derived stream.
pub fn sample_channel_set<T: Real>(cfg: &SystemConfig, user: usize, rng: &RngStream) -> Result<ChannelSet<T>> {
    cfg.validate()?;
    let (m, n) = (cfg.antennas, cfg.elements);
    let base = rng.derive(user as u64);
    let draw = |rows, cols, spec: &LinkSpec, tag| {
        sample_rician::<T>(rows, cols, spec, &cfg.path_loss, &mut base.derive(tag))
    };
    Ok(ChannelSet {
        h_k1: draw(n, 1, &cfg.links.h_k1, TAG_H_K1)?.into_vec(),
        h_k2: draw(n, 1, &cfg.links.h_k2, TAG_H_K2)?.into_vec(),
        d: draw(n, n, &cfg.links.d, TAG_D)?,
        n1: draw(m, n, &cfg.links.n1, TAG_N1)?,
        n2: draw(m, n, &cfg.links.n2, TAG_N2)?,
    })
}

/// Builds `H1k`, `H2k`, `H3k`; fails if any `|h_k2[n]|` is too small to invert.
pub fn assemble_cascaded<T: Real>(cs: &ChannelSet<T>) -> Result<CascadedChannels<T>> {
    let tiny = T::lit(1e-300);
    for (index, z) in cs.h_k2.iter().enumerate() {
        let mag = z.norm();
        if !(mag >= tiny) || mag.is_zero() {
            return Err(Error::DegenerateChannel {
                index,
                magnitude: mag.as_f64(),
            });
        }
    }
    let n = cs.h_k1.len();
    if cs.h_k2.len() != n || cs.d.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            op: "assemble_cascaded",
            left: (n, 1),
            right: cs.d.shape(),
        });
    }
    let h1 = cs.n1.scale_columns(&cs.h_k1)?;
    let h2 = cs.n2.scale_columns(&cs.h_k2)?;
    let h3 = ComplexMatrix::from_fn(n, n, |i, j| cs.d[(i, j)] * cs.h_k1[j] / cs.h_k2[i]);
    Ok(CascadedChannels { h1, h2, h3 })
}

/// Draws a channel set and its cascade, resampling on a degenerate `h_k2`.
pub fn sample_cascaded<T: Real>(
    cfg: &SystemConfig,
    user: usize,
    rng: &RngStream,
) -> Result<(ChannelSet<T>, CascadedChannels<T>)> {
    const ATTEMPTS: u64 = 16;
    let mut last = None;
    for attempt in 0..ATTEMPTS {
        let stream = if attempt == 0 { rng.clone() } else { rng.derive(0xD06E_0000 + attempt) };
        let cs = sample_channel_set::<T>(cfg, user, &stream)?;
        match assemble_cascaded(&cs) {
            Ok(cc) => return Ok((cs, cc)),
            Err(e @ Error::DegenerateChannel { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn check_phase_len<T: Real>(theta: &RisPhase<T>, n: usize) -> Result<()> {
    if theta.len() != n {
        return Err(Error::DimensionMismatch {
            op: "reflection vector",
            left: (theta.len(), 1),
            right: (n, 1),
        });
    }
    Ok(())
}

/// `N2·Φ2·D·Φ1·h_k1 + N2·Φ2·h_k2 + N1·Φ1·h_k1` with `Φj = diag(θj)`.
pub fn effective_channel<T: Real>(
    cs: &ChannelSet<T>,
    theta1: &RisPhase<T>,
    theta2: &RisPhase<T>,
) -> Result<Vec<Complex<T>>> {
    let n = cs.h_k1.len();
    check_phase_len(theta1, n)?;
    check_phase_len(theta2, n)?;
    let t1 = theta1.coeffs();
    let t2 = theta2.coeffs();
    let phi1_h1: Vec<_> = cs.h_k1.iter().zip(t1).map(|(&h, &t)| h * t).collect();
    let d_term = cs.d.mul_vec(&phi1_h1)?;
    let mut via_ris2: Vec<_> = d_term
        .iter()
        .zip(&cs.h_k2)
        .zip(t2)
        .map(|((&a, &h), &t)| t * (a + h))
        .collect();
    let mut out = cs.n2.mul_vec(&via_ris2)?;
    via_ris2.clear();
    let single = cs.n1.mul_vec(&phi1_h1)?;
    for (o, s) in out.iter_mut().zip(single) {
        *o = *o + s;
    }
    Ok(out)
}

/// `Σ_n H2k·diag(h_3k,n)·θ2·θ1[n]`, the double-reflection part of the cascaded form.
pub fn double_reflection_term<T: Real>(
    cc: &CascadedChannels<T>,
    theta1: &RisPhase<T>,
    theta2: &RisPhase<T>,
) -> Result<Vec<Complex<T>>> {
    let n = cc.h3.rows();
    check_phase_len(theta1, n)?;
    check_phase_len(theta2, n)?;
    let mut acc = vec![Complex::zero(); n];
    for (col, &t1) in theta1.coeffs().iter().enumerate() {
        if t1.is_zero() {
            continue;
        }
        for (i, a) in acc.iter_mut().enumerate() {
            *a = *a + cc.h3[(i, col)] * theta2.coeffs()[i] * t1;
        }
    }
    cc.h2.mul_vec(&acc)
}

/// The same effective channel evaluated through `H1k`, `H2k`, `H3k`.
pub fn effective_channel_cascaded<T: Real>(
    cc: &CascadedChannels<T>,
    theta1: &RisPhase<T>,
    theta2: &RisPhase<T>,
) -> Result<Vec<Complex<T>>> {
    let mut out = double_reflection_term(cc, theta1, theta2)?;
    let via2 = cc.h2.mul_vec(theta2.coeffs())?;
    let via1 = cc.h1.mul_vec(theta1.coeffs())?;
    for ((o, a), b) in out.iter_mut().zip(via2).zip(via1) {
        *o = *o + a + b;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    type M = ComplexMatrix<f64>;

    fn beta0() -> f64 {
        10f64.powf(-1.5)
    }

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            antennas: 6,
            elements: 4,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn path_loss_reference_values() {
        let model = PathLossModel::default();
        let at_ref = path_loss_linear(10.0, 2.3, &model).unwrap();
        assert!((at_ref - 0.031_622_776_601_683_79).abs() < 1e-15);
        let decade = path_loss_linear(100.0, 2.0, &model).unwrap();
        assert!((decade - beta0() * 1e-2).abs() < 1e-15);
        // 10^(-1.5) · 9^(-2.3), evaluated independently as exp(ln terms).
        let expected = (-1.5 * std::f64::consts::LN_10 - 2.3 * 9f64.ln()).exp();
        let far = path_loss_linear(90.0, 2.3, &model).unwrap();
        assert!((far - expected).abs() < 1e-15 * expected.max(1.0));
        assert!((far - 2.019_492_424_042_683_6e-4).abs() < 1e-17);
    }

    #[test]
    fn path_loss_rejects_nonpositive_distance() {
        assert!(path_loss_linear(0.0, 2.0, &PathLossModel::default()).is_err());
        assert!(path_loss_linear(-3.0, 2.0, &PathLossModel::default()).is_err());
    }

    #[test]
    fn path_loss_is_monotone() {
        let model = PathLossModel::default();
        let mut prev = f64::INFINITY;
        for d in [11.0, 20.0, 50.0, 90.0, 400.0] {
            let b = path_loss_linear(d, 2.3, &model).unwrap();
            assert!(b < prev);
            assert!(b < path_loss_linear(d, 2.0, &model).unwrap());
            prev = b;
        }
    }

    #[test]
    fn rayleigh_link_is_scaled_nlos_draw() {
        let spec = LinkSpec {
            rician_factor: 0.0,
            distance_m: 16.0,
            pathloss_exponent: 2.0,
            los_angles: (0.1, 0.2),
        };
        let model = PathLossModel::default();
        let h = sample_rician::<f64>(5, 3, &spec, &model, &mut RngStream::new(1, 1)).unwrap();
        let beta = path_loss_linear(16.0, 2.0, &model).unwrap();
        let raw = sample_cn::<f64>(5, 3, 1.0, &mut RngStream::new(1, 1)).scale(beta.sqrt());
        assert_eq!(h, raw);
    }

    #[test]
    fn huge_rician_factor_approaches_los() {
        let spec = LinkSpec {
            rician_factor: 1e12,
            distance_m: 30.0,
            pathloss_exponent: 2.3,
            los_angles: (0.4, -0.7),
        };
        let model = PathLossModel::default();
        let h = sample_rician::<f64>(4, 4, &spec, &model, &mut RngStream::new(2, 0)).unwrap();
        let beta = path_loss_linear(30.0, 2.3, &model).unwrap();
        let los = los_component::<f64>(4, 4, spec.los_angles).scale(beta.sqrt());
        assert!(h.max_abs_diff(&los) < 1e-5);
        assert!(los.as_slice().iter().all(|z| (z.norm() - beta.sqrt()).abs() < 1e-12));
    }

    #[test]
    fn second_moment_matches_path_loss() {
        let model = PathLossModel::default();
        for gamma in [0.0, 1.0, 10.0] {
            let spec = LinkSpec {
                rician_factor: gamma,
                distance_m: 20.0,
                pathloss_exponent: 2.0,
                los_angles: (0.3, 0.1),
            };
            let beta = path_loss_linear(20.0, 2.0, &model).unwrap();
            let draws = 100_000;
            let h = sample_rician::<f64>(draws, 1, &spec, &model, &mut RngStream::new(3, gamma as u64)).unwrap();
            // With a 1-column LoS matrix every row shares the same unit entry.
            let p = h.fro_norm_sq() / draws as f64;
            // NLoS power fraction 1/(γ+1); |x|² of CN(0,1) has unit std.
            let se = beta / (gamma + 1.0) / (draws as f64).sqrt();
            assert!((p - beta).abs() < 4.0 * se + 1e-12, "γ={gamma}: {p} vs {beta}");
        }
    }

    #[test]
    fn rayleigh_entries_have_zero_mean() {
        let spec = LinkSpec {
            rician_factor: 0.0,
            distance_m: 10.0,
            pathloss_exponent: 2.0,
            los_angles: (0.0, 0.0),
        };
        let n = 100_000;
        let h = sample_rician::<f64>(n, 1, &spec, &PathLossModel::default(), &mut RngStream::new(4, 0)).unwrap();
        let mean = h.as_slice().iter().fold(Complex::new(0.0, 0.0), |a, &z| a + z) / n as f64;
        let se = (beta0() / 2.0 / n as f64).sqrt();
        assert!(mean.re.abs() < 3.0 * se && mean.im.abs() < 3.0 * se);
    }

    #[test]
    fn channel_set_is_deterministic_per_stream() {
        let cfg = small_cfg();
        let rng = RngStream::new(5, 9);
        let a = sample_channel_set::<f64>(&cfg, 0, &rng).unwrap();
        let b = sample_channel_set::<f64>(&cfg, 0, &rng).unwrap();
        assert_eq!(a, b);
        let other_user = sample_channel_set::<f64>(&cfg, 1, &rng).unwrap();
        assert_ne!(a, other_user);
    }

    #[test]
    fn los_limit_config_is_deterministic() {
        let mut cfg = small_cfg();
        for l in [
            &mut cfg.links.h_k1,
            &mut cfg.links.h_k2,
            &mut cfg.links.d,
            &mut cfg.links.n1,
            &mut cfg.links.n2,
        ] {
            l.rician_factor = f64::INFINITY;
        }
        let a = sample_channel_set::<f64>(&cfg, 0, &RngStream::new(1, 0)).unwrap();
        let b = sample_channel_set::<f64>(&cfg, 0, &RngStream::new(2, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn h_k2_energy_matches_path_loss() {
        let cfg = SystemConfig {
            antennas: 2,
            elements: 8,
            ..SystemConfig::default()
        };
        let draws = 10_000;
        let base = RngStream::new(6, 0);
        let mut acc = 0.0;
        for t in 0..draws {
            let cs = sample_channel_set::<f64>(&cfg, 0, &base.derive(t)).unwrap();
            acc += cs.h_k2.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let expected = 8.0 * path_loss_linear(90.0, 2.3, &cfg.path_loss).unwrap();
        let emp = acc / draws as f64;
        assert!((emp / expected - 1.0).abs() < 0.01, "{emp} vs {expected}");
    }

    fn ones(n: usize) -> Vec<Complex<f64>> {
        vec![Complex::new(1.0, 0.0); n]
    }

    #[test]
    fn cascade_collapses_for_trivial_links() {
        let mut rng = RngStream::new(7, 0);
        let n = 4;
        let cs = ChannelSet {
            h_k1: ones(n),
            h_k2: ones(n),
            d: M::identity(n),
            n1: sample_cn(6, n, 1.0, &mut rng),
            n2: sample_cn(6, n, 1.0, &mut rng),
        };
        let cc = assemble_cascaded(&cs).unwrap();
        assert_eq!(cc.h1, cs.n1);
        assert_eq!(cc.h2, cs.n2);
        assert_eq!(cc.h3, M::identity(n));

        let h_k1 = sample_cn::<f64>(n, 1, 1.0, &mut rng).into_vec();
        let cs = ChannelSet { h_k1: h_k1.clone(), ..cs };
        let cc = assemble_cascaded(&cs).unwrap();
        assert_eq!(cc.h3, M::diag(&h_k1));
    }

    #[test]
    fn cascade_invariants_hold_entrywise() {
        let cfg = small_cfg();
        let cs = sample_channel_set::<f64>(&cfg, 0, &RngStream::new(8, 0)).unwrap();
        let cc = assemble_cascaded(&cs).unwrap();
        assert_eq!(cc.h1, cs.n1.matmul(&M::diag(&cs.h_k1)).unwrap());
        assert_eq!(cc.h2, cs.n2.matmul(&M::diag(&cs.h_k2)).unwrap());
        for n in 0..4 {
            let col = cc.h3.column(n);
            for i in 0..4 {
                let expected = cs.d[(i, n)] * cs.h_k1[n] / cs.h_k2[i];
                assert_eq!(col[i], expected);
            }
        }
    }

    #[test]
    fn degenerate_h_k2_is_rejected() {
        let cfg = small_cfg();
        let mut cs = sample_channel_set::<f64>(&cfg, 0, &RngStream::new(9, 0)).unwrap();
        cs.h_k2[2] = Complex::new(0.0, 0.0);
        assert!(matches!(
            assemble_cascaded(&cs),
            Err(Error::DegenerateChannel { index: 2, .. })
        ));
    }

    #[test]
    fn off_states_isolate_single_terms() {
        let cfg = small_cfg();
        let rng = RngStream::new(10, 0);
        let cs = sample_channel_set::<f64>(&cfg, 0, &rng).unwrap();
        let mut r = rng.derive(99);
        let random_phase = |r: &mut RngStream| {
            let p: Vec<f64> = (0..4).map(|_| r.uniform() * std::f64::consts::TAU).collect();
            RisPhase::<f64>::new(0.8, &p).unwrap()
        };
        let t1 = random_phase(&mut r);
        let t2 = random_phase(&mut r);

        let h = effective_channel(&cs, &RisPhase::off(4), &t2).unwrap();
        let expected = cs.n2.mul_vec(&cs.h_k2.iter().zip(t2.coeffs()).map(|(&a, &b)| a * b).collect::<Vec<_>>()).unwrap();
        for (a, b) in h.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-18);
        }

        let h = effective_channel(&cs, &t1, &RisPhase::off(4)).unwrap();
        let expected = cs.n1.mul_vec(&cs.h_k1.iter().zip(t1.coeffs()).map(|(&a, &b)| a * b).collect::<Vec<_>>()).unwrap();
        for (a, b) in h.iter().zip(&expected) {
            assert!((a - b).norm() < 1e-18);
        }
    }

    #[test]
    fn ris_phase_validation() {
        assert!(RisPhase::<f64>::new(1.2, &[0.0]).is_err());
        assert!(RisPhase::<f64>::new(0.5, &[7.0]).is_err());
        let p = RisPhase::<f64>::new(0.5, &[0.0, 1.0]).unwrap();
        assert!(p.coeffs().iter().all(|z| (z.norm() - 0.5).abs() < 1e-15));
        assert!(RisPhase::from_coeffs(vec![Complex::new(1.5, 0.0)]).is_err());
    }

    #[test]
    fn system_config_round_trips_through_json() {
        let cfg = SystemConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: SystemConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.antennas, 64);
        assert_eq!(cfg.elements, 32);
    }
}
