use std::collections::BTreeSet;
use std::path::PathBuf;

use rayon::prelude::*;
use risce_core::estimators::{lmmse_double_from_ls, lmmse_single, nmse_single, NoiseConvention, NoiseScalar};
use risce_core::CMatrix;
use risce_nn::{predict_batch, Net};

use crate::config::ExperimentConfig;
use crate::dataset::{dataset_path, dataset_split, read_header};
use crate::error::{io_err, HarnessError, Result};
use crate::link::{correlation_prior, realize, Link, LinkContext, Realization};
use crate::training::{check_header, checkpoint_path, load_model, Variant};

pub const RESULTS_HEADER: &str = "link_id,estimator,snr_db,nmse,nmse_db";

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub link: Link,
    pub estimator: String,
    pub snr_db: f64,
    pub nmse: f64,
}

impl ResultRow {
    pub fn nmse_db(&self) -> f64 {
        10.0 * self.nmse.log10()
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in rows {
        s += &format!("{},{},{},{:e},{:.6}\n", r.link, r.estimator, r.snr_db, r.nmse, r.nmse_db());
    }
    s
}

/// Maps one realization to a channel estimate.
pub type Estimator<'a> = Box<dyn Fn(&Realization) -> Result<CMatrix> + Sync + 'a>;

/// Mean per-sample NMSE of every estimator at every grid SNR over `indices`.
/// Rows are estimator-major in grid order; grid points without samples are skipped.
pub fn evaluate_estimators(
    cfg: &ExperimentConfig,
    ctx: &LinkContext,
    indices: &[usize],
    estimators: &[(String, Estimator<'_>)],
) -> Result<Vec<ResultRow>> {
    let per_sample: Vec<(usize, Vec<f64>)> = indices
        .par_iter()
        .map(|&t| {
            let r = realize(cfg, ctx, t)?;
            let errs = estimators
                .iter()
                .map(|(_, est)| Ok(nmse_single(&est(&r)?, &r.obs.clean)?))
                .collect::<Result<_>>()?;
            Ok((r.snr_index, errs))
        })
        .collect::<Result<_>>()?;
    let grid = cfg.snr_grid_db.len();
    let mut sums = vec![vec![0.0; grid]; estimators.len()];
    let mut counts = vec![0usize; grid];
    for (s, errs) in &per_sample {
        counts[*s] += 1;
        for (e, v) in errs.iter().enumerate() {
            sums[e][*s] += v;
        }
    }
    let mut rows = Vec::new();
    for (e, (name, _)) in estimators.iter().enumerate() {
        for s in (0..grid).filter(|&s| counts[s] > 0) {
            rows.push(ResultRow {
                link: ctx.link,
                estimator: name.clone(),
                snr_db: cfg.snr_grid_db[s],
                nmse: sums[e][s] / counts[s] as f64,
            });
        }
    }
    Ok(rows)
}

/// LS and both LMMSE conventions, with the link's correlation prior.
pub fn classical_estimators<'a>(cfg: &ExperimentConfig, ctx: &'a LinkContext) -> Result<Vec<(String, Estimator<'a>)>> {
    let r = correlation_prior(cfg, ctx.link)?;
    let mut out: Vec<(String, Estimator<'a>)> = vec![("ls".into(), Box::new(|x: &Realization| Ok(x.obs.noisy.clone())))];
    for (name, conv) in [
        ("lmmse_paper_trace", NoiseConvention::PaperTrace),
        ("lmmse_per_entry", NoiseConvention::PerEntry),
    ] {
        let r = r.clone();
        let est: Estimator<'a> = Box::new(move |x: &Realization| {
            let (rows, cols) = x.obs.received.shape();
            let theta = NoiseScalar::new(conv, x.noise_var, rows, cols);
            Ok(match &ctx.schedule {
                Some(s) => lmmse_single(&x.obs.received, s.phi(), &r, &theta)?,
                None => lmmse_double_from_ls(&x.obs.h2, &x.obs.noisy, &r, &theta)?,
            })
        });
        out.push((name.into(), est));
    }
    Ok(out)
}

/// The network applied to the LS observation at the dataset's normalization scale.
pub fn network_estimator<'a>(net: &'a Net, scale: f64) -> Estimator<'a> {
    Box::new(move |x: &Realization| {
        let out = predict_batch(net, &[x.obs.noisy.cast::<f32>()], scale as f32)?;
        Ok(out[0].cast())
    })
}

/// Returns the labels themselves; its NMSE column must be exactly zero.
pub fn oracle_estimator<'a>() -> Estimator<'a> {
    Box::new(|x: &Realization| Ok(x.obs.clean.clone()))
}

fn required_artifacts(cfg: &ExperimentConfig, link: Link) -> Vec<PathBuf> {
    let mut v = vec![dataset_path(cfg, link)];
    v.extend(Variant::BOTH.map(|var| checkpoint_path(cfg, link, var, cfg.net.blocks)));
    v
}

/// Validation-set NMSE of all five estimators for each link, written to `results.csv`.
pub fn run_evaluation(cfg: &ExperimentConfig, links: &[Link]) -> Result<Vec<ResultRow>> {
    let missing: Vec<PathBuf> = links
        .iter()
        .flat_map(|&l| required_artifacts(cfg, l))
        .filter(|p| !p.exists())
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::MissingArtifacts(missing));
    }
    let mut rows = Vec::new();
    for &link in links {
        let path = dataset_path(cfg, link);
        let header = read_header(&path)?;
        check_header(cfg, link, &header, &path)?;
        let (train, val) = dataset_split(cfg, link);
        let train_set: BTreeSet<usize> = train.into_iter().collect();
        assert!(
            val.iter().all(|t| !train_set.contains(t)),
            "validation indices overlap the training split"
        );
        let ctx = LinkContext::new(cfg, link)?;
        let nets = Variant::BOTH
            .iter()
            .map(|&v| Ok((v, load_model(cfg, link, v, cfg.net.blocks)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut estimators = classical_estimators(cfg, &ctx)?;
        for (v, net) in &nets {
            estimators.push((v.estimator().into(), network_estimator(net, header.scale)));
        }
        rows.extend(evaluate_estimators(cfg, &ctx, &val, &estimators)?);
    }
    let out = cfg.output_dir.join("results.csv");
    std::fs::write(&out, results_csv(&rows)).map_err(io_err(&out))?;
    Ok(rows)
}
