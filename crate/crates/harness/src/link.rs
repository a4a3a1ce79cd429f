use std::fmt;

use rayon::prelude::*;
use risce_core::channel::{sample_cascaded, CascadedChannels};
use risce_core::estimators::{ls_double, ls_single, CorrelationAccumulator, CorrelationMatrix};
use risce_core::pilot::{
    build_single_schedule, noise_variance, synthesize_double_rx, synthesize_single_rx, NoiseSpec, SingleLink,
    SingleLinkSchedule, SnrMode,
};
use risce_core::{CMatrix, RngStream};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub(crate) const SAMPLE_STREAM: u64 = 0x5a3e;
const CALIBRATION_STREAM: u64 = 0xca11;
const CORRELATION_STREAM: u64 = 0xc0de;
const TRAIN_STREAM: u64 = 0x7a1;

/// Cascaded link under estimation: `H1k`, `H2k` (single reflection) or `H3k` (double).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Link {
    H1 = 1,
    H2 = 2,
    H3 = 3,
}

impl Link {
    pub const ALL: [Link; 3] = [Link::H1, Link::H2, Link::H3];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Link::H1),
            2 => Ok(Link::H2),
            3 => Ok(Link::H3),
            _ => Err(HarnessError::Config(format!("link id must be 1, 2 or 3, got {id}"))),
        }
    }

    /// `(M_t, N_t)`: M×N for the single-reflection links, N×N for `H3k`.
    pub fn dims(self, cfg: &ExperimentConfig) -> (usize, usize) {
        let (m, n) = (cfg.system.antennas, cfg.system.elements);
        match self {
            Link::H1 | Link::H2 => (m, n),
            Link::H3 => (n, n),
        }
    }

    fn single(self) -> Option<SingleLink> {
        match self {
            Link::H1 => Some(SingleLink::Ris1),
            Link::H2 => Some(SingleLink::Ris2),
            Link::H3 => None,
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

/// One training-phase measurement of a link.
#[derive(Clone, Debug)]
pub struct Observation {
    /// Received pilots: `Y` (M×I) or `Y3` (M×N).
    pub received: CMatrix,
    /// `H2k` of the same realization.
    pub h2: CMatrix,
    /// LS estimate `Ỹ`.
    pub noisy: CMatrix,
    /// Clean cascaded matrix `H`.
    pub clean: CMatrix,
}

/// Synthesizes the received pilots for `link` and returns them with the LS observation.
pub fn observe(
    link: Link,
    cc: &CascadedChannels<f64>,
    schedule: Option<&SingleLinkSchedule<f64>>,
    noise_var: f64,
    rng: &mut RngStream,
) -> Result<Observation> {
    let (received, noisy, clean) = match link {
        Link::H1 | Link::H2 => {
            let sched = schedule.ok_or_else(|| HarnessError::Config("single-reflection link needs a schedule".into()))?;
            let h = if link == Link::H1 { &cc.h1 } else { &cc.h2 };
            let y = synthesize_single_rx(h, sched, noise_var, rng)?;
            let est = ls_single(&y, sched.phi())?;
            (y, est, h.clone())
        }
        Link::H3 => {
            let y3 = synthesize_double_rx(&cc.h2, &cc.h3, noise_var, rng)?;
            let est = ls_double(&cc.h2, &y3)?;
            (y3, est, cc.h3.clone())
        }
    };
    Ok(Observation {
        received,
        h2: cc.h2.clone(),
        noisy,
        clean,
    })
}

/// `(Ỹ, H)` for one realization.
pub fn make_noisy_observation(
    link: Link,
    cc: &CascadedChannels<f64>,
    schedule: Option<&SingleLinkSchedule<f64>>,
    noise_var: f64,
    rng: &mut RngStream,
) -> Result<(CMatrix, CMatrix)> {
    let o = observe(link, cc, schedule, noise_var, rng)?;
    Ok((o.noisy, o.clean))
}

/// Everything fixed per (config, link) that sample generation needs.
#[derive(Clone, Debug)]
pub struct LinkContext {
    pub link: Link,
    pub schedule: Option<SingleLinkSchedule<f64>>,
    /// Mean clean received power per entry; only computed for receive-mode SNR.
    pub rx_power: Option<f64>,
    /// σ² per grid point.
    pub noise_vars: Vec<f64>,
}

impl LinkContext {
    pub fn new(cfg: &ExperimentConfig, link: Link) -> Result<Self> {
        let schedule = match link.single() {
            Some(s) => Some(build_single_schedule::<f64>(s, cfg.system.elements, cfg.slots())?),
            None => None,
        };
        let rx_power = match cfg.snr_mode {
            SnrMode::Receive => Some(calibrate_rx_power(cfg, link, schedule.as_ref())?),
            SnrMode::Transmit => None,
        };
        let noise_vars = cfg
            .snr_grid_db
            .iter()
            .map(|&snr| {
                let spec = match cfg.snr_mode {
                    SnrMode::Transmit => NoiseSpec::transmit(snr),
                    SnrMode::Receive => NoiseSpec::receive(snr),
                };
                noise_variance(&spec, rx_power)
            })
            .collect::<risce_core::Result<_>>()?;
        Ok(Self {
            link,
            schedule,
            rx_power,
            noise_vars,
        })
    }
}

fn clean_rx(link: Link, cc: &CascadedChannels<f64>, schedule: Option<&SingleLinkSchedule<f64>>) -> Result<CMatrix> {
    Ok(match (link, schedule) {
        (Link::H1, Some(s)) => cc.h1.matmul(s.phi())?,
        (Link::H2, Some(s)) => cc.h2.matmul(s.phi())?,
        _ => cc.h2.matmul(&cc.h3)?,
    })
}

/// Mean per-entry power of the noiseless received pilots over `calibration_draws` realizations.
pub fn calibrate_rx_power(cfg: &ExperimentConfig, link: Link, schedule: Option<&SingleLinkSchedule<f64>>) -> Result<f64> {
    let base = RngStream::new(cfg.seed, CALIBRATION_STREAM).derive(link.id() as u64);
    let powers: Vec<f64> = (0..cfg.calibration_draws as u64)
        .into_par_iter()
        .map(|i| {
            let (_, cc) = sample_cascaded::<f64>(&cfg.system, 0, &base.derive(i))?;
            let y = clean_rx(link, &cc, schedule)?;
            Ok(y.fro_norm_sq() / (y.rows() * y.cols()) as f64)
        })
        .collect::<Result<_>>()?;
    Ok(powers.iter().sum::<f64>() / powers.len() as f64)
}

/// `R = E[H^H·H]` from `correlation_draws` clean realizations on their own stream.
pub fn correlation_prior(cfg: &ExperimentConfig, link: Link) -> Result<CorrelationMatrix<f64>> {
    let base = RngStream::new(cfg.seed, CORRELATION_STREAM).derive(link.id() as u64);
    let mut acc = CorrelationAccumulator::default();
    for i in 0..cfg.correlation_draws as u64 {
        let (_, cc) = sample_cascaded::<f64>(&cfg.system, 0, &base.derive(i))?;
        acc.push(match link {
            Link::H1 => &cc.h1,
            Link::H2 => &cc.h2,
            Link::H3 => &cc.h3,
        })?;
    }
    Ok(acc.finish()?)
}

/// A 53-bit seed drawn from `rng`.
pub fn draw_seed(mut rng: RngStream) -> u64 {
    (rng.uniform() * (1u64 << 53) as f64) as u64
}

/// Training seed of a link; both network variants share it.
pub fn train_seed(cfg: &ExperimentConfig, link: Link) -> u64 {
    draw_seed(RngStream::new(cfg.seed, TRAIN_STREAM).derive(link.id() as u64))
}

/// Sample `t` of a link's dataset.
#[derive(Clone, Debug)]
pub struct Realization {
    pub index: usize,
    /// Position in the SNR grid.
    pub snr_index: usize,
    pub snr_db: f64,
    pub noise_var: f64,
    pub obs: Observation,
}

/// Stream of sample `t`, shared by generation and evaluation.
pub fn sample_stream(seed: u64, link: Link, t: usize) -> RngStream {
    RngStream::new(seed, SAMPLE_STREAM).derive_path(&[link.id() as u64, t as u64])
}

/// Clean channels of sample `t` without the noise draw.
pub fn sample_channels(cfg: &ExperimentConfig, link: Link, t: usize) -> Result<CascadedChannels<f64>> {
    let (_, cc) = sample_cascaded::<f64>(&cfg.system, 0, &sample_stream(cfg.seed, link, t).derive(0))?;
    Ok(cc)
}

/// Regenerates sample `t` bit-for-bit from the master seed.
pub fn realize(cfg: &ExperimentConfig, ctx: &LinkContext, t: usize) -> Result<Realization> {
    let cc = sample_channels(cfg, ctx.link, t)?;
    let mut rng = sample_stream(cfg.seed, ctx.link, t).derive(1);
    let snr_index = rng.index(cfg.snr_grid_db.len());
    let noise_var = ctx.noise_vars[snr_index];
    let obs = observe(ctx.link, &cc, ctx.schedule.as_ref(), noise_var, &mut rng)?;
    Ok(Realization {
        index: t,
        snr_index,
        snr_db: cfg.snr_grid_db[snr_index],
        noise_var,
        obs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk();
        cfg.calibration_draws = 50;
        cfg.correlation_draws = 50;
        cfg
    }

    #[test]
    fn dims_per_link() {
        let cfg = tiny();
        assert_eq!(Link::H1.dims(&cfg), (16, 8));
        assert_eq!(Link::H2.dims(&cfg), (16, 8));
        assert_eq!(Link::H3.dims(&cfg), (8, 8));
        assert!(Link::from_id(0).is_err());
        assert_eq!(Link::from_id(3).unwrap(), Link::H3);
    }

    #[test]
    fn realization_is_reproducible_and_shaped() {
        let cfg = tiny();
        for link in Link::ALL {
            let ctx = LinkContext::new(&cfg, link).unwrap();
            let a = realize(&cfg, &ctx, 5).unwrap();
            let b = realize(&cfg, &ctx, 5).unwrap();
            assert_eq!(a.obs.noisy, b.obs.noisy);
            assert_eq!(a.obs.noisy.shape(), link.dims(&cfg));
            assert_eq!(a.obs.clean.shape(), link.dims(&cfg));
            assert_ne!(realize(&cfg, &ctx, 6).unwrap().obs.clean, a.obs.clean);
        }
    }

    #[test]
    fn receive_mode_noise_scales_with_snr() {
        let cfg = tiny();
        let ctx = LinkContext::new(&cfg, Link::H1).unwrap();
        let p = ctx.rx_power.unwrap();
        for (v, snr) in ctx.noise_vars.iter().zip(&cfg.snr_grid_db) {
            assert!((v / (p * 10f64.powf(-snr / 10.0)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prior_is_hermitian_and_sized() {
        let cfg = tiny();
        assert_eq!(correlation_prior(&cfg, Link::H1).unwrap().dim(), 8);
        assert_eq!(correlation_prior(&cfg, Link::H3).unwrap().dim(), 8);
    }
}
