//! Mini-batch training loop shared by the supervised models.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Head, Mlp};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Share of rows held out for model selection; 0 disables selection.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 256,
            epochs: 5,
            learning_rate: 1e-3,
            batch_size: 64,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "hidden width and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidConfig(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub selected_epoch: usize,
}

pub(crate) struct Problem<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub targets: &'a [f64],
    pub weights: Option<&'a [f64]>,
}

impl Problem<'_> {
    pub fn rows(&self, idx: &[usize]) -> (Array2<f64>, Vec<f64>, Option<Vec<f64>>) {
        (
            self.inputs.select(Axis(0), idx),
            idx.iter().map(|&i| self.targets[i]).collect(),
            self.weights.map(|w| idx.iter().map(|&i| w[i]).collect()),
        )
    }
}

pub(crate) fn evaluate_loss(net: &Mlp, head: Head, p: &Problem, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return f64::NAN;
    }
    let (x, y, w) = p.rows(idx);
    head.loss(net.predict(x.view()).view(), &y, w.as_deref()).0
}

/// Trains `net` in place. With a validation slice, the parameters of the
/// epoch with the lowest validation loss are kept. `stop` is consulted after
/// every epoch and ends training early when it returns true.
pub(crate) fn fit(
    net: &mut Mlp,
    head: Head,
    problem: &Problem,
    cfg: &TrainConfig,
    rng: &mut Rng,
    mut stop: impl FnMut(&Mlp) -> bool,
) -> History {
    let n = problem.inputs.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = if cfg.validation_fraction > 0.0 && n >= 10 {
        ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut opt = Adam::for_net(cfg.learning_rate, net);
    let mut history = History::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(rng);
        for batch in train_idx.chunks(cfg.batch_size) {
            let (x, y, w) = problem.rows(batch);
            let trace = net.forward(x.view());
            let (_, d_out) = head.loss(trace.output.view(), &y, w.as_deref());
            let (grads, _) = net.backward(&trace, d_out.view());
            opt.step(net, &grads);
        }
        history
            .train_loss
            .push(evaluate_loss(net, head, problem, &train_idx));
        if n_val > 0 {
            let v = evaluate_loss(net, head, problem, &val_idx);
            history.validation_loss.push(v);
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, net.params_vec()));
                history.selected_epoch = epoch;
            }
        } else {
            history.selected_epoch = epoch;
        }
        if stop(net) {
            break;
        }
    }
    if let Some((_, params)) = best {
        net.set_params(&params);
    }
    history
}
