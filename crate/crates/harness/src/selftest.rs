use risce_core::channel::sample_cascaded;
use risce_core::estimators::nmse_single;
use risce_core::RngStream;
use risce_nn::{Net, NetConfig};

use crate::ablation::{reference_values, REFERENCE_SKIP_OFF, REFERENCE_SKIP_ON};
use crate::config::ExperimentConfig;
use crate::dataset::{generate_dataset, split_indices, Dataset};
use crate::evaluation::{evaluate_estimators, oracle_estimator};
use crate::link::{make_noisy_observation, realize, Link, LinkContext};
use crate::visual::residual_grid;

/// Outcome of one self-test check.
pub struct Check {
    pub name: &'static str,
    pub outcome: std::result::Result<(), String>,
}

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk();
    cfg.samples = 24;
    cfg.calibration_draws = 50;
    cfg.correlation_draws = 50;
    cfg
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

type CheckFn = fn() -> std::result::Result<(), String>;

fn noiseless_observation_is_clean() -> std::result::Result<(), String> {
    let cfg = small();
    for link in Link::ALL {
        let ctx = LinkContext::new(&cfg, link).map_err(|e| e.to_string())?;
        let (_, cc) = sample_cascaded::<f64>(&cfg.system, 0, &RngStream::new(1, 2)).map_err(|e| e.to_string())?;
        let mut rng = RngStream::new(1, 3);
        let (y, h) = make_noisy_observation(link, &cc, ctx.schedule.as_ref(), 0.0, &mut rng).map_err(|e| e.to_string())?;
        let rel = y.rel_diff(&h);
        ensure(rel < 1e-12, || format!("link {link}: relative gap {rel:e}"))?;
    }
    Ok(())
}

fn dataset_round_trip() -> std::result::Result<(), String> {
    let mut cfg = small();
    cfg.samples = 10;
    let ds = generate_dataset(&cfg, Link::H3).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    ds.write(&mut bytes).map_err(|e| e.to_string())?;
    let back = Dataset::read(&mut bytes.as_slice())?;
    ensure(back == ds, || "records changed across write/read".into())
}

fn generation_is_deterministic() -> std::result::Result<(), String> {
    let cfg = small();
    let a = generate_dataset(&cfg, Link::H1).map_err(|e| e.to_string())?;
    let b = generate_dataset(&cfg, Link::H1).map_err(|e| e.to_string())?;
    ensure(a == b, || "same seed produced different datasets".into())
}

fn split_is_exact() -> std::result::Result<(), String> {
    let (a, b) = split_indices(100, 0.8, 9);
    ensure((a.len(), b.len()) == (80, 20), || format!("{}/{}", a.len(), b.len()))?;
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    ensure(all == (0..100).collect::<Vec<_>>(), || "split is not a partition".into())?;
    ensure(split_indices(100, 0.8, 9) == (a, b), || "split not reproducible".into())
}

fn oracle_estimator_scores_zero() -> std::result::Result<(), String> {
    let cfg = small();
    let ctx = LinkContext::new(&cfg, Link::H2).map_err(|e| e.to_string())?;
    let idx: Vec<usize> = (0..cfg.samples).collect();
    let rows = evaluate_estimators(&cfg, &ctx, &idx, &[("oracle".into(), oracle_estimator())]).map_err(|e| e.to_string())?;
    ensure(!rows.is_empty() && rows.iter().all(|r| r.nmse == 0.0), || "nonzero NMSE for the labels".into())
}

fn input_panel_is_ls_residual() -> std::result::Result<(), String> {
    let cfg = small();
    let ctx = LinkContext::new(&cfg, Link::H3).map_err(|e| e.to_string())?;
    let r = realize(&cfg, &ctx, 0).map_err(|e| e.to_string())?;
    let g = residual_grid(&r.obs.noisy, &r.obs.clean).map_err(|e| e.to_string())?;
    let d = r.obs.noisy.sub(&r.obs.clean).map_err(|e| e.to_string())?;
    let exact = (0..d.rows()).all(|i| (0..d.cols()).all(|j| g[i][j] == d[(i, j)].norm()));
    ensure(exact && g.len() == 8 && g[0].len() == 8, || "S0 grid differs from |Ỹ − H|".into())
}

fn nmse_is_scale_invariant() -> std::result::Result<(), String> {
    let cfg = small();
    let ctx = LinkContext::new(&cfg, Link::H1).map_err(|e| e.to_string())?;
    let r = realize(&cfg, &ctx, 3).map_err(|e| e.to_string())?;
    let raw = nmse_single(&r.obs.noisy, &r.obs.clean).map_err(|e| e.to_string())?;
    let s = 1.0 / 37.5;
    let scaled = nmse_single(&r.obs.noisy.scale(s), &r.obs.clean.scale(s)).map_err(|e| e.to_string())?;
    ensure((raw - scaled).abs() <= 1e-6 * raw, || format!("{raw} vs {scaled}"))
}

fn reference_is_embedded() -> std::result::Result<(), String> {
    let off = [0.3842, 0.2409, 0.2590, 0.0939, 0.0522, 0.0312];
    let on = [0.3232, 0.2200, 0.1567, 0.0930, 0.0508, 0.0294];
    ensure(REFERENCE_SKIP_OFF == off && REFERENCE_SKIP_ON == on, || "table values differ".into())?;
    ensure(reference_values(0.0) == Some((0.2590, 0.1567)), || "lookup at 0 dB".into())
}

fn checkpoint_round_trip() -> std::result::Result<(), String> {
    let cfg = NetConfig {
        channels: 4,
        blocks: 1,
        skip_connection: true,
        post_concat_channels: 4,
        rows: 4,
        cols: 4,
        head: Default::default(),
    };
    let net = Net::init(cfg.clone(), 5).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    risce_nn::checkpoint::write_params(&net.params, &mut bytes).map_err(|e| e.to_string())?;
    let params = risce_nn::checkpoint::read_params::<f32, _>(bytes.as_slice()).map_err(|e| e.to_string())?;
    let back = Net::from_params(cfg, params).map_err(|e| e.to_string())?;
    ensure(back == net, || "parameters changed".into())
}

pub const CHECKS: [(&str, CheckFn); 9] = [
    ("noiseless observation equals the clean channel", noiseless_observation_is_clean),
    ("dataset write/read round trip", dataset_round_trip),
    ("dataset generation is deterministic", generation_is_deterministic),
    ("80/20 split is an exact partition", split_is_exact),
    ("label estimator scores zero NMSE", oracle_estimator_scores_zero),
    ("input panel equals the LS residual", input_panel_is_ls_residual),
    ("NMSE ignores normalization", nmse_is_scale_invariant),
    ("ablation reference values", reference_is_embedded),
    ("checkpoint round trip", checkpoint_round_trip),
];

pub fn run() -> Vec<Check> {
    CHECKS
        .iter()
        .map(|&(name, f)| Check { name, outcome: f() })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run() {
            assert!(c.outcome.is_ok(), "{}: {:?}", c.name, c.outcome);
        }
    }
}
