//! Adam, the step-halving learning-rate schedule and the mini-batch training
//! loop.
//!
//! Training is deterministic: parameters come from the network seed, and
//! epoch `e` is shuffled by a ChaCha generator seeded with `shuffle_seed` on
//! stream `e`. Resuming from a saved [`TrainState`] therefore reproduces the
//! uninterrupted run exactly.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::formats::fmt_f64;
use crate::data::SceneDataset;
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossBreakdown, LossWeights, Target};
use crate::model::{self, NetworkSpec, Parameters};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_halving_period: usize,
    pub shuffle_seed: u64,
    /// Not serialized: run configs carry the weights in their own section.
    #[serde(skip)]
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            epochs: 120,
            lr_halving_period: 30,
            shuffle_seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidSpec(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be >= 1".into()));
        }
        if self.lr_halving_period == 0 {
            return Err(Error::InvalidSpec("lr_halving_period must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps.is_finite() && self.eps > 0.0)
        {
            return Err(Error::InvalidSpec("invalid Adam hyperparameters".into()));
        }
        self.weights.validate()
    }
}

/// Learning rate for a zero-based epoch: halved every `lr_halving_period` epochs.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let halvings = epoch / config.lr_halving_period;
    config.lr * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Index of the first non-finite gradient entry, reported by [`adam_step`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NonFiniteGradient(pub usize);

/// One bias-corrected Adam update in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> std::result::Result<(), NonFiniteGradient> {
    assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
    assert_eq!(params.len(), state.m.len(), "parameter/state length mismatch");
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NonFiniteGradient(i));
    }
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let t = state.t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + config.eps);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// Zero-based epoch index.
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub offset: f64,
    pub absolute: f64,
    pub ce: f64,
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: Parameters,
    pub adam: AdamState,
    /// Number of completed epochs.
    pub epoch: usize,
}

impl TrainState {
    pub fn fresh(spec: &NetworkSpec) -> Result<Self> {
        let params = model::init(spec)?;
        let adam = AdamState::new(params.len());
        Ok(TrainState { params, adam, epoch: 0 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub state: TrainState,
}

impl TrainReport {
    pub fn params(&self) -> &Parameters {
        &self.state.params
    }
}

/// Trains a freshly initialized network for `config.epochs` epochs.
pub fn train(dataset: &SceneDataset, spec: &NetworkSpec, config: &TrainConfig) -> Result<TrainReport> {
    let state = TrainState::fresh(spec)?;
    train_from(dataset, state, config, |_, _| Ok(()))
}

/// Continues training until `config.epochs` epochs are complete, calling
/// `on_epoch` after each one.
pub fn train_from<F>(
    dataset: &SceneDataset,
    mut state: TrainState,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&EpochLog, &TrainState) -> Result<()>,
{
    config.validate()?;
    check_compatible(dataset, state.params.spec())?;
    if dataset.train.is_empty() && state.epoch < config.epochs {
        return Err(Error::InvalidInput("training set is empty".into()));
    }

    let n = dataset.train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut logs = Vec::new();
    let mut grad = vec![0.0; state.params.len()];

    while state.epoch < config.epochs {
        let epoch = state.epoch;
        let lr = lr_at(epoch, config);
        order.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let mut sum = LossBreakdown::default();
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / idx.len() as f64;
            for &i in idx {
                let s = &dataset.train[i];
                let (pred, cache) = model::forward_cached(&state.params, &s.feature)?;
                let target = Target {
                    offsets: &s.offsets,
                    z: s.pose.position[2],
                    orientation: s.pose.orientation,
                    nearest: dataset.nearest_labels[i],
                };
                let (b, mut g) = total_loss(&pred, &target, &config.weights).map_err(|e| match e {
                    Error::DegenerateOrientation { norm } => Error::Divergence {
                        epoch,
                        batch,
                        msg: format!("orientation output collapsed (norm {norm:e})"),
                    },
                    other => other,
                })?;
                if !b.total.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch,
                        msg: format!("non-finite loss on frame {}", s.frame_id),
                    });
                }
                sum.offset_term += b.offset_term;
                sum.absolute_term += b.absolute_term;
                sum.ce_term += b.ce_term;
                sum.total += b.total;
                scale_grad(&mut g, scale);
                model::backward_cached(&state.params, &cache, &g, &mut grad)?;
            }
            adam_step(state.params.values_mut(), &grad, &mut state.adam, lr, config).map_err(
                |NonFiniteGradient(i)| Error::Divergence {
                    epoch,
                    batch,
                    msg: format!("non-finite gradient at parameter {i}"),
                },
            )?;
        }

        let inv = 1.0 / n as f64;
        let log = EpochLog {
            epoch,
            lr,
            total: sum.total * inv,
            offset: sum.offset_term * inv,
            absolute: sum.absolute_term * inv,
            ce: sum.ce_term * inv,
        };
        state.epoch += 1;
        on_epoch(&log, &state)?;
        logs.push(log);
    }
    Ok(TrainReport { epochs: logs, state })
}

fn scale_grad(g: &mut crate::model::PredictionGrad, s: f64) {
    g.logits.iter_mut().for_each(|v| *v *= s);
    g.offsets.iter_mut().flatten().for_each(|v| *v *= s);
    g.z *= s;
    g.orient_raw.iter_mut().for_each(|v| *v *= s);
}

/// Checks that the network matches the dataset's features and anchors.
pub fn check_compatible(dataset: &SceneDataset, spec: &NetworkSpec) -> Result<()> {
    if spec.num_anchors != dataset.num_anchors() {
        return Err(Error::InvalidInput(format!(
            "network predicts {} anchors but the dataset's anchor map has {}",
            spec.num_anchors,
            dataset.num_anchors()
        )));
    }
    let dim = dataset.feature_dim();
    if dim != 0 && dim != spec.input_dim {
        return Err(Error::InvalidInput(format!(
            "network expects {}-dim features, dataset has {dim}",
            spec.input_dim
        )));
    }
    Ok(())
}

pub const LOG_HEADER: &str = "epoch,lr,total,offset,absolute,ce";

pub fn format_log_csv(logs: &[EpochLog]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for l in logs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            l.epoch,
            fmt_f64(l.lr),
            fmt_f64(l.total),
            fmt_f64(l.offset),
            fmt_f64(l.absolute),
            fmt_f64(l.ce)
        );
    }
    s
}

pub fn write_log_csv(path: &Path, logs: &[EpochLog]) -> Result<()> {
    std::fs::write(path, format_log_csv(logs))?;
    Ok(())
}
