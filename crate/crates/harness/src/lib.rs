//! Data generation, experiments and reporting for the double-RIS channel
//! estimation study.
//!
//! Every sample is regenerated on demand from `(master seed, link, index)`,
//! so datasets, evaluations and visualizations agree on each realization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ablation;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod link;
pub mod selftest;
pub mod training;
pub mod visual;

pub use ablation::{run_ablation, AblationReport, AblationRow};
pub use config::{ExperimentConfig, NetSettings, Profile, TrainSettings};
pub use dataset::{generate_dataset, generate_dataset_file, split_indices, Dataset, Header, Record};
pub use error::{HarnessError, Result};
pub use evaluation::{run_evaluation, ResultRow};
pub use link::{make_noisy_observation, Link, LinkContext};
pub use training::{train_variant, Variant};
pub use visual::{visualize_blocks, VisualReport};
