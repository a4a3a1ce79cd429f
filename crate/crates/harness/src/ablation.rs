use risce_nn::{EpochRecord, TrainHistory};

use crate::config::ExperimentConfig;
use crate::dataset::{dataset_split, read_header, dataset_path};
use crate::error::{io_err, Result};
use crate::evaluation::{evaluate_estimators, network_estimator, Estimator};
use crate::link::{Link, LinkContext};
use crate::training::{checkpoint_path, history_json_path, load_history, load_model, train_variant, Variant};

/// Reference double-reflection NMSE without and with the skip connection.
pub const REFERENCE_SNR_DB: [f64; 6] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0];
pub const REFERENCE_SKIP_OFF: [f64; 6] = [0.3842, 0.2409, 0.2590, 0.0939, 0.0522, 0.0312];
pub const REFERENCE_SKIP_ON: [f64; 6] = [0.3232, 0.2200, 0.1567, 0.0930, 0.0508, 0.0294];

pub const ABLATION_HEADER: &str =
    "snr_db,skip_off_nmse,skip_on_nmse,relative_improvement,reference_skip_off_nmse,reference_skip_on_nmse";

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub snr_db: f64,
    pub skip_off: f64,
    pub skip_on: f64,
    pub reference_skip_off: Option<f64>,
    pub reference_skip_on: Option<f64>,
}

impl AblationRow {
    /// `(off − on)/off`.
    pub fn relative_improvement(&self) -> f64 {
        (self.skip_off - self.skip_on) / self.skip_off
    }
}

/// Reference values for a grid point, when it is one of the published ones.
pub fn reference_values(snr_db: f64) -> Option<(f64, f64)> {
    REFERENCE_SNR_DB
        .iter()
        .position(|&s| s == snr_db)
        .map(|i| (REFERENCE_SKIP_OFF[i], REFERENCE_SKIP_ON[i]))
}

#[derive(Clone, Debug)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// `(epoch, skip-off hash, skip-on hash)`.
    pub batch_hashes: Vec<(usize, u64, u64)>,
}

impl AblationReport {
    pub fn same_data_order(&self) -> bool {
        self.batch_hashes.iter().all(|&(_, a, b)| a == b)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.4}"));
        let mut s = format!("{ABLATION_HEADER}\n");
        for r in &self.rows {
            s += &format!(
                "{},{:e},{:e},{:.6},{},{}\n",
                r.snr_db,
                r.skip_off,
                r.skip_on,
                r.relative_improvement(),
                opt(r.reference_skip_off),
                opt(r.reference_skip_on)
            );
        }
        s
    }

    pub fn hash_log(&self) -> String {
        let mut s = String::from("epoch,skip_off_hash,skip_on_hash\n");
        for (e, a, b) in &self.batch_hashes {
            s += &format!("{e},{a:016x},{b:016x}\n");
        }
        s
    }
}

fn history_for(
    cfg: &ExperimentConfig,
    link: Link,
    variant: Variant,
    reuse: bool,
    observe: &mut impl FnMut(Variant, &EpochRecord),
) -> Result<TrainHistory> {
    let blocks = cfg.net.blocks;
    let have = checkpoint_path(cfg, link, variant, blocks).exists() && history_json_path(cfg, link, variant, blocks).exists();
    if reuse && have {
        return load_history(cfg, link, variant, blocks);
    }
    Ok(train_variant(cfg, link, variant, blocks, |r| observe(variant, r))?.history)
}

/// Skip-on against skip-off on the double-reflection link, same seed and data.
/// With `reuse`, checkpoints already on disk are evaluated instead of retrained.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    reuse: bool,
    mut observe: impl FnMut(Variant, &EpochRecord),
) -> Result<AblationReport> {
    let link = Link::H3;
    let off = history_for(cfg, link, Variant::Attention, reuse, &mut observe)?;
    let on = history_for(cfg, link, Variant::Sc, reuse, &mut observe)?;
    let scale = read_header(&dataset_path(cfg, link))?.scale;
    let net_off = load_model(cfg, link, Variant::Attention, cfg.net.blocks)?;
    let net_on = load_model(cfg, link, Variant::Sc, cfg.net.blocks)?;
    let ctx = LinkContext::new(cfg, link)?;
    let (_, val) = dataset_split(cfg, link);
    let estimators: Vec<(String, Estimator<'_>)> = vec![
        ("off".into(), network_estimator(&net_off, scale)),
        ("on".into(), network_estimator(&net_on, scale)),
    ];
    let res = evaluate_estimators(cfg, &ctx, &val, &estimators)?;
    let (offs, ons) = res.split_at(res.len() / 2);
    let rows = offs
        .iter()
        .zip(ons)
        .map(|(a, b)| {
            let reference = reference_values(a.snr_db);
            AblationRow {
                snr_db: a.snr_db,
                skip_off: a.nmse,
                skip_on: b.nmse,
                reference_skip_off: reference.map(|p| p.0),
                reference_skip_on: reference.map(|p| p.1),
            }
        })
        .collect();
    let batch_hashes = off
        .epochs
        .iter()
        .zip(&on.epochs)
        .map(|(a, b)| (a.epoch, a.batch_hash, b.batch_hash))
        .collect();
    let report = AblationReport { rows, batch_hashes };
    for (name, text) in [("ablation.csv", report.to_csv()), ("ablation_batch_hashes.csv", report.hash_log())] {
        let path = cfg.output_dir.join(name);
        std::fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_lookup() {
        assert_eq!(reference_values(-10.0), Some((0.3842, 0.3232)));
        assert_eq!(reference_values(15.0), Some((0.0312, 0.0294)));
        assert_eq!(reference_values(1.0), None);
    }

    #[test]
    fn csv_leaves_unknown_reference_empty() {
        let report = AblationReport {
            rows: vec![AblationRow {
                snr_db: 1.0,
                skip_off: 0.5,
                skip_on: 0.25,
                reference_skip_off: None,
                reference_skip_on: None,
            }],
            batch_hashes: vec![(1, 7, 7)],
        };
        assert!(report.to_csv().ends_with("\n1,5e-1,2.5e-1,0.500000,,\n"));
        assert!(report.same_data_order());
        let with_ref = AblationReport {
            rows: vec![AblationRow {
                snr_db: -5.0,
                skip_off: 0.5,
                skip_on: 0.25,
                reference_skip_off: Some(0.2409),
                reference_skip_on: Some(0.22),
            }],
            batch_hashes: vec![],
        };
        assert!(with_ref.to_csv().ends_with(",0.2409,0.2200\n"));
        assert_eq!(report.hash_log(), "epoch,skip_off_hash,skip_on_hash\n1,0000000000000007,0000000000000007\n");
    }
}
