use std::path::{Path, PathBuf};

use risce_core::channel::SystemConfig;
use risce_core::pilot::SnrMode;
use risce_nn::{NetConfig, OutputHead};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarnessError, Result};
use crate::link::Link;

/// Network shape shared by all links. Spatial extents come from the link and
/// the skip connection from the trained variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSettings {
    pub channels: usize,
    pub blocks: usize,
    pub post_concat_channels: usize,
    #[serde(default)]
    pub head: OutputHead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Pilot slots `I` of the single-reflection phases; `null` means `N`.
    #[serde(default)]
    pub pilot_slots: Option<usize>,
    pub snr_grid_db: Vec<f64>,
    pub snr_mode: SnrMode,
    pub samples: usize,
    pub split: f64,
    pub net: NetSettings,
    pub train: TrainSettings,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Clean draws behind each LMMSE correlation prior.
    pub correlation_draws: usize,
    /// Clean draws behind each receive-mode power reference.
    pub calibration_draws: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    Desk,
    Full,
}

const SNR_GRID: [f64; 6] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0];

impl ExperimentConfig {
    /// CPU-sized run: M = 16, N = 8, C = 32, B = 2, T = 4000, 30 epochs, receive-mode SNR.
    pub fn desk() -> Self {
        Self {
            system: SystemConfig {
                antennas: 16,
                elements: 8,
                ..SystemConfig::default()
            },
            pilot_slots: None,
            snr_grid_db: SNR_GRID.to_vec(),
            snr_mode: SnrMode::Receive,
            samples: 4000,
            split: 0.8,
            net: NetSettings {
                channels: 32,
                blocks: 2,
                post_concat_channels: 64,
                head: OutputHead::Projection,
            },
            train: TrainSettings {
                epochs: 30,
                lr: 1e-3,
                weight_decay: 1e-5,
                batch_size: 64,
            },
            seed: 2024,
            output_dir: PathBuf::from("runs/desk"),
            correlation_draws: 10_000,
            calibration_draws: 1000,
        }
    }

    /// Full-size run: M = 64, N = 32, C = 128, B = 4, T = 120000, 100 epochs, transmit-mode SNR.
    pub fn full() -> Self {
        Self {
            system: SystemConfig::default(),
            snr_mode: SnrMode::Transmit,
            samples: 120_000,
            net: NetSettings {
                channels: 128,
                blocks: 4,
                post_concat_channels: 256,
                head: OutputHead::Projection,
            },
            train: TrainSettings {
                epochs: 100,
                ..Self::desk().train
            },
            output_dir: PathBuf::from("runs/full"),
            ..Self::desk()
        }
    }

    pub fn profile(p: Profile) -> Self {
        match p {
            Profile::Desk => Self::desk(),
            Profile::Full => Self::full(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad("split must lie in (0, 1)");
        }
        if self.samples < 10 {
            return bad("samples must be at least 10");
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_grid_db must be a nonempty list of finite values");
        }
        if self.pilot_slots.is_some_and(|i| i < self.system.elements) {
            return bad("pilot_slots must be at least the element count N (rank requirement)");
        }
        if self.system.antennas < self.system.elements {
            return bad("double-reflection estimation needs antennas M >= elements N");
        }
        if self.correlation_draws == 0 || self.calibration_draws == 0 {
            return bad("correlation_draws and calibration_draws must be positive");
        }
        self.net_config(Link::H3, self.net.blocks, true)?;
        if self.train.epochs == 0 || self.train.batch_size == 0 || !(self.train.lr >= 0.0) {
            return bad("epochs and batch_size must be positive, lr non-negative");
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.pilot_slots.unwrap_or(self.system.elements)
    }

    pub fn net_config(&self, link: Link, blocks: usize, skip: bool) -> Result<NetConfig> {
        let (rows, cols) = link.dims(self);
        let cfg = NetConfig {
            channels: self.net.channels,
            blocks,
            skip_connection: skip,
            post_concat_channels: self.net.post_concat_channels,
            rows,
            cols,
            head: self.net.head,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
