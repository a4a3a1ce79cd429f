use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use risce_nn::checkpoint::{read_params, write_params};
use risce_nn::{EpochRecord, Net, NetParams, Pair, TrainConfig, TrainHistory, TrainOutcome};

use crate::config::ExperimentConfig;
use crate::dataset::{dataset_path, dataset_split, Dataset, Header};
use crate::error::{io_err, HarnessError, Result};
use crate::link::{train_seed, Link};

/// Network variant: with (`sc`) or without (`attention`) the skip connection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Variant {
    Sc,
    Attention,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Sc, Variant::Attention];

    pub fn skip_connection(self) -> bool {
        self == Variant::Sc
    }

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Sc => "sc",
            Variant::Attention => "attention",
        }
    }

    /// Estimator name in result tables.
    pub fn estimator(self) -> &'static str {
        match self {
            Variant::Sc => "sc_attention",
            Variant::Attention => "attention_only",
        }
    }
}

fn artifact(cfg: &ExperimentConfig, link: Link, variant: Variant, blocks: usize, suffix: &str) -> PathBuf {
    cfg.output_dir
        .join(format!("link{link}_{}_b{blocks}{suffix}", variant.tag()))
}

pub fn checkpoint_path(cfg: &ExperimentConfig, link: Link, variant: Variant, blocks: usize) -> PathBuf {
    artifact(cfg, link, variant, blocks, ".ckpt")
}

pub fn history_csv_path(cfg: &ExperimentConfig, link: Link, variant: Variant, blocks: usize) -> PathBuf {
    artifact(cfg, link, variant, blocks, "_history.csv")
}

pub fn history_json_path(cfg: &ExperimentConfig, link: Link, variant: Variant, blocks: usize) -> PathBuf {
    artifact(cfg, link, variant, blocks, "_history.json")
}

/// Loads a dataset file and checks it was generated for this config.
pub fn load_dataset(cfg: &ExperimentConfig, link: Link) -> Result<Dataset> {
    let path = dataset_path(cfg, link);
    if !path.exists() {
        return Err(HarnessError::MissingArtifacts(vec![path]));
    }
    let ds = Dataset::load(&path)?;
    check_header(cfg, link, &ds.header, &path)?;
    Ok(ds)
}

pub(crate) fn check_header(cfg: &ExperimentConfig, link: Link, h: &Header, path: &Path) -> Result<()> {
    let (rows, cols) = link.dims(cfg);
    if h.link != link || (h.rows, h.cols) != (rows, cols) || h.samples != cfg.samples {
        return Err(HarnessError::Format {
            path: path.to_path_buf(),
            reason: format!(
                "dataset is link {} {}x{} with {} samples, config expects link {link} {rows}x{cols} with {}",
                h.link, h.rows, h.cols, h.samples, cfg.samples
            ),
        });
    }
    Ok(())
}

/// Normalized training and validation pairs.
pub fn training_pairs(cfg: &ExperimentConfig, ds: &Dataset) -> (Vec<Pair<f32>>, Vec<Pair<f32>>) {
    let (train, val) = dataset_split(cfg, ds.header.link);
    let inv = (1.0 / ds.header.scale) as f32;
    let pick = |idx: &[usize]| {
        idx.iter()
            .map(|&t| Pair {
                noisy: ds.records[t].noisy.scale(inv),
                clean: ds.records[t].clean.scale(inv),
            })
            .collect()
    };
    (pick(&train), pick(&val))
}

pub fn train_config(cfg: &ExperimentConfig, link: Link) -> TrainConfig {
    TrainConfig {
        epochs: cfg.train.epochs,
        lr: cfg.train.lr,
        weight_decay: cfg.train.weight_decay,
        batch_size: cfg.train.batch_size,
        seed: train_seed(cfg, link),
    }
}

/// Trains one variant on the link's dataset and writes its checkpoint and history.
pub fn train_variant(
    cfg: &ExperimentConfig,
    link: Link,
    variant: Variant,
    blocks: usize,
    observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<f32>> {
    let ds = load_dataset(cfg, link)?;
    let (train, val) = training_pairs(cfg, &ds);
    let net_cfg = cfg.net_config(link, blocks, variant.skip_connection())?;
    let outcome = risce_nn::train::train_with_observer(&train, &val, &net_cfg, &train_config(cfg, link), observe)?;
    save_model(&outcome.params, &checkpoint_path(cfg, link, variant, blocks))?;
    let csv = history_csv_path(cfg, link, variant, blocks);
    std::fs::write(&csv, outcome.history.to_csv()).map_err(io_err(&csv))?;
    let json = history_json_path(cfg, link, variant, blocks);
    let text = serde_json::to_string_pretty(&outcome.history).expect("history serializes");
    std::fs::write(&json, text).map_err(io_err(&json))?;
    Ok(outcome)
}

pub fn save_model(net: &Net, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    write_params(&net.params, BufWriter::new(file)).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_model(cfg: &ExperimentConfig, link: Link, variant: Variant, blocks: usize) -> Result<Net> {
    let path = checkpoint_path(cfg, link, variant, blocks);
    let file = File::open(&path).map_err(io_err(&path))?;
    let fmt = |e: risce_nn::NnError| HarnessError::Format {
        path: path.clone(),
        reason: e.to_string(),
    };
    let params = read_params::<f32, _>(BufReader::new(file)).map_err(fmt)?;
    NetParams::from_params(cfg.net_config(link, blocks, variant.skip_connection())?, params).map_err(fmt)
}

pub fn load_history(cfg: &ExperimentConfig, link: Link, variant: Variant, blocks: usize) -> Result<TrainHistory> {
    let path = history_json_path(cfg, link, variant, blocks);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Format {
        path,
        reason: e.to_string(),
    })
}
