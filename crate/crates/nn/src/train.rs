use rayon::prelude::*;
use risce_core::{ComplexMatrix, RngStream};
use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::element::Element;
use crate::error::{mismatch, NnError, Result};
use crate::net::{pack_complex, unpack_complex, NetConfig, NetParams};
use crate::tensor::Tensor;

/// Stream id under the training seed reserved for batch shuffling.
const SHUFFLE_STREAM: u64 = 0x5fu64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(NnError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.weight_decay >= 0.0) {
            return Err(NnError::InvalidConfig("lr and weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Noisy observation and its clean label.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair<T> {
    pub noisy: ComplexMatrix<T>,
    pub clean: ComplexMatrix<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-sample loss seen during the epoch's updates.
    pub train_nmse: f64,
    /// NaN when there is no validation split.
    pub val_nmse: f64,
    /// FNV-1a over the epoch's sample order.
    pub batch_hash: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_train_nmse: f64,
    pub initial_val_nmse: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (lowest validation NMSE, else the last).
    pub best_epoch: usize,
}

impl TrainHistory {
    /// `epoch,train_nmse,val_nmse`, with row 0 holding the untrained network.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_nmse,val_nmse\n");
        s += &format!("0,{:e},{:e}\n", self.initial_train_nmse, self.initial_val_nmse);
        for r in &self.epochs {
            s += &format!("{},{:e},{:e}\n", r.epoch, r.train_nmse, r.val_nmse);
        }
        s
    }

    pub fn final_train_nmse(&self) -> f64 {
        self.epochs.last().map_or(self.initial_train_nmse, |r| r.train_nmse)
    }
}

pub struct TrainOutcome<T> {
    pub params: NetParams<T>,
    pub history: TrainHistory,
}

fn fnv1a(order: &[usize]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &i in order {
        for b in (i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

struct Packed<T> {
    input: Tensor<T>,
    label: Tensor<T>,
}

fn pack_all<T: Element>(pairs: &[Pair<T>], cfg: &NetConfig) -> Result<Vec<Packed<T>>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.noisy.shape() != (cfg.rows, cfg.cols) || p.clean.shape() != (cfg.rows, cfg.cols) {
                return Err(mismatch("training pair", &[p.noisy.rows(), p.noisy.cols()], &[cfg.rows, cfg.cols]));
            }
            let label = pack_complex(&p.clean);
            if label.sum_sq() == 0.0 {
                return Err(NnError::ZeroLabel(i));
            }
            Ok(Packed {
                input: pack_complex(&p.noisy),
                label,
            })
        })
        .collect()
}

fn mean_nmse<T: Element>(net: &NetParams<T>, data: &[Packed<T>]) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let per: Vec<f64> = data
        .par_iter()
        .map(|s| {
            let out = net.forward_tensor(&s.input)?;
            let err: f64 = out
                .data()
                .iter()
                .zip(s.label.data())
                .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
                .sum();
            Ok(err / s.label.sum_sq())
        })
        .collect::<Result<_>>()?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Mean per-sample NMSE of the network over `pairs`.
pub fn evaluate_nmse<T: Element>(net: &NetParams<T>, pairs: &[Pair<T>]) -> Result<f64> {
    mean_nmse(net, &pack_all(pairs, &net.config)?)
}

pub fn train<T: Element>(
    train_set: &[Pair<T>],
    val_set: &[Pair<T>],
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_observer(train_set, val_set, net_cfg, cfg, |_| {})
}

/// [`train`], calling `observe` after every epoch.
pub fn train_with_observer<T: Element>(
    train_set: &[Pair<T>],
    val_set: &[Pair<T>],
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let train_data = pack_all(train_set, net_cfg)?;
    let val_data = pack_all(val_set, net_cfg)?;
    let mut net = NetParams::<T>::init(net_cfg.clone(), cfg.seed)?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        &net.params,
    );
    let initial_train_nmse = mean_nmse(&net, &train_data)?;
    let initial_val_nmse = mean_nmse(&net, &val_data)?;
    let shuffle = RngStream::new(cfg.seed, SHUFFLE_STREAM);

    let mut best: Option<(f64, usize, NetParams<T>)> = None;
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        shuffle.derive(epoch as u64).shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, Vec<Tensor<T>>)> = batch
                .par_iter()
                .map(|&i| net.loss_and_grads(&train_data[i].input, &train_data[i].label))
                .collect::<Result<_>>()?;
            let inv = T::lit(1.0 / batch.len() as f64);
            for (loss, grads) in results {
                if !loss.is_finite() {
                    return Err(NnError::Divergence { epoch });
                }
                loss_sum += loss;
                for (p, mut g) in net.params.iter_mut().zip(grads) {
                    g.scale_assign(inv);
                    p.grad.add_assign(&g);
                }
            }
            adam.step(&mut net.params);
        }
        let record = EpochRecord {
            epoch,
            train_nmse: loss_sum / train_data.len() as f64,
            val_nmse: mean_nmse(&net, &val_data)?,
            batch_hash: fnv1a(&order),
        };
        if !record.val_nmse.is_nan() && best.as_ref().is_none_or(|b| record.val_nmse < b.0) {
            best = Some((record.val_nmse, epoch, net.clone()));
        }
        observe(&record);
        records.push(record);
    }
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (net, cfg.epochs),
    };
    Ok(TrainOutcome {
        params,
        history: TrainHistory {
            initial_train_nmse,
            initial_val_nmse,
            epochs: records,
            best_epoch,
        },
    })
}

/// Runs the network on raw observations: each input is divided by `scale`
/// before the forward pass and the output multiplied back.
pub fn predict_batch<T: Element>(net: &NetParams<T>, noisy: &[ComplexMatrix<T>], scale: T) -> Result<Vec<ComplexMatrix<T>>> {
    let inv = T::one() / scale;
    noisy
        .par_iter()
        .map(|y| {
            if y.shape() != (net.config.rows, net.config.cols) {
                return Err(mismatch("predict_batch", &[y.rows(), y.cols()], &[net.config.rows, net.config.cols]));
            }
            let out = net.forward_tensor(&pack_complex(&y.scale(inv)))?;
            Ok(unpack_complex(&out)?.scale(scale))
        })
        .collect()
}
