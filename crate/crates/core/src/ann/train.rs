//! Offline full-batch gradient descent with a bold-driver step rule.
//!
//! Each epoch proposes `theta - step * grad`. A proposal that lowers the
//! training loss is accepted and the step grows by 1.2; otherwise it is
//! discarded and the step halves. The returned network is the one with the
//! lowest validation MSE seen.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::mlp::{Affine, Mlp, Normalization};
use super::{AnnError, MIN_ROWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Initial step on the normalized-target loss.
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Fraction of rows used for training; the rest is validation.
    pub train_fraction: f64,
    /// Stop once an accepted step improves the training MSE (pu^2) by less than this.
    pub tolerance: f64,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, max_epochs: 1500, train_fraction: 0.75, tolerance: 0.0, seed: 7, hidden: 10 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), AnnError> {
        let bad = |m: String| Err(AnnError::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance must be >= 0, got {}", self.tolerance));
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training MSE of the current (last accepted) parameters, pu^2.
    pub train_mse: f64,
    pub val_mse: f64,
    pub step: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Converged,
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_rows: usize,
    pub val_rows: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stop: StopReason,
}

/// Rows normalized once, flat row-major.
struct Split {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Split {
    fn build(ds: &Dataset, idx: &[usize], norm: &Normalization) -> Self {
        let w = norm.input.len();
        let mut x = Vec::with_capacity(idx.len() * w);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            let r = &ds.rows[i];
            x.extend(r.x.iter().zip(&norm.input).map(|(v, a)| a.normalize(*v)));
            y.push(norm.output.normalize(r.y));
        }
        Self { x, y }
    }
}

fn fit_normalization(ds: &Dataset, idx: &[usize], width: usize) -> Normalization {
    let mut lo = vec![f64::INFINITY; width + 1];
    let mut hi = vec![f64::NEG_INFINITY; width + 1];
    for &i in idx {
        let r = &ds.rows[i];
        for (k, v) in r.x.iter().chain(std::iter::once(&r.y)).enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    let input = (0..width).map(|k| Affine::from_range(lo[k], hi[k])).collect();
    Normalization { input, output: Affine::from_range(lo[width], hi[width]) }
}

pub fn train(ds: &Dataset, config: &TrainConfig) -> Result<(Mlp, TrainReport), AnnError> {
    config.validate()?;
    if ds.len() < MIN_ROWS {
        return Err(AnnError::DatasetTooSmall { rows: ds.len(), min: MIN_ROWS });
    }
    ds.check_trainable()?;
    let width = ds.width().expect("non-empty dataset");

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((ds.len() as f64 * config.train_fraction).round() as usize).clamp(1, ds.len() - 1);
    let (train_idx, val_idx) = order.split_at(n_train);

    let norm = fit_normalization(ds, train_idx, width);
    let train_set = Split::build(ds, train_idx, &norm);
    let val_set = Split::build(ds, val_idx, &norm);

    let mut net = Mlp::random(width, config.hidden, &mut rng);
    net.norm = norm;
    // losses below are on normalized targets; multiply by s^2 for pu^2
    let s2 = net.norm.output.scale * net.norm.output.scale;

    let mut params = net.params();
    let mut grad = vec![0.0; params.len()];
    let mut loss = net.loss_grad_normalized(&train_set.x, &train_set.y, Some(&mut grad));
    if !loss.is_finite() {
        return Err(AnnError::NonFiniteLoss { epoch: 0 });
    }
    let mut val = net.loss_grad_normalized(&val_set.x, &val_set.y, None);
    let mut best = (0usize, val, params.clone());

    let mut step = config.learning_rate;
    let mut cand = net.clone();
    let mut cand_params = vec![0.0; params.len()];
    let mut cand_grad = vec![0.0; params.len()];
    let mut epochs = Vec::with_capacity(config.max_epochs);
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        for ((c, p), g) in cand_params.iter_mut().zip(&params).zip(&grad) {
            *c = p - step * g;
        }
        cand.set_params(&cand_params);
        let cand_loss = cand.loss_grad_normalized(&train_set.x, &train_set.y, Some(&mut cand_grad));
        if !cand_loss.is_finite() {
            return Err(AnnError::NonFiniteLoss { epoch });
        }
        let accepted = cand_loss < loss;
        let mut converged = false;
        if accepted {
            converged = (loss - cand_loss) * s2 < config.tolerance;
            std::mem::swap(&mut params, &mut cand_params);
            std::mem::swap(&mut grad, &mut cand_grad);
            loss = cand_loss;
            net.set_params(&params);
            val = net.loss_grad_normalized(&val_set.x, &val_set.y, None);
            if val < best.1 {
                best = (epoch, val, params.clone());
            }
            step *= 1.2;
        } else {
            step *= 0.5;
        }
        epochs.push(EpochRecord { epoch, train_mse: loss * s2, val_mse: val * s2, step, accepted });
        if converged {
            stop = StopReason::Converged;
            break;
        }
        if step < 1e-300 {
            stop = StopReason::StepUnderflow;
            break;
        }
    }

    net.set_params(&best.2);
    let report = TrainReport {
        train_rows: train_idx.len(),
        val_rows: val_idx.len(),
        epochs,
        best_epoch: best.0,
        best_val_mse: best.1 * s2,
        stop,
    };
    Ok((net, report))
}
