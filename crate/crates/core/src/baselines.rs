//! Comparison models: uncorrected training, inverse propensity weighting and
//! a Dragonnet-style multi-head network.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bias::BiasedTrainSet;
use crate::data::{Dataset, FeatureSchema, FeatureView, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::gradcheck::{self, GradCheck};
use crate::nn::loss::sigmoid;
use crate::nn::{Activation, Adam, Gradients, Head, Mlp};
use crate::seed;
use crate::task::{train_task_model, TaskModel, TaskOptions};
use crate::train::{self, Problem, TrainConfig};

pub const DEFAULT_CLIP_MIN: f64 = 0.01;

/// Probability that a label is observed, per recommendation condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityTable {
    pub e_0: f64,
    pub e_1: f64,
    pub clip_min: f64,
}

impl PropensityTable {
    pub fn get(&self, r: bool) -> f64 {
        if r {
            self.e_1
        } else {
            self.e_0
        }
    }

    pub fn weight(&self, r: bool) -> f64 {
        1.0 / self.get(r)
    }
}

/// Observed share per condition, floored at `clip_min`.
pub fn estimate_propensities(b: &BiasedTrainSet, clip_min: f64) -> Result<PropensityTable> {
    if !(clip_min > 0.0 && clip_min <= 1.0) {
        return Err(Error::InvalidConfig("clip_min must be in (0, 1]".into()));
    }
    let e = |r: bool| -> Result<f64> {
        let c = b.condition_counts(r);
        if c.rows == 0 {
            return Err(Error::InvalidInput(format!(
                "recommendation condition r = {} has no rows",
                u8::from(r)
            )));
        }
        Ok((c.observed as f64 / c.rows as f64).max(clip_min))
    };
    Ok(PropensityTable {
        e_0: e(false)?,
        e_1: e(true)?,
        clip_min,
    })
}

/// Per-row `P(A = 1 | features)` from a logistic model, floored at
/// `clip_min`. An alternative to the per-condition frequencies.
pub fn estimate_logistic_propensities(
    b: &BiasedTrainSet,
    view: FeatureView,
    clip_min: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Err(Error::NoRows);
    }
    let x = b.inputs(view);
    let a: Vec<f64> = b.rows().iter().map(|r| f64::from(u8::from(r.a()))).collect();
    let mut rng = seed::rng(seed);
    let mut net = Mlp::new(&[x.ncols(), 1], Activation::Identity, &mut rng);
    let cfg = TrainConfig {
        epochs: 20,
        learning_rate: 1e-2,
        validation_fraction: 0.0,
        ..TrainConfig::default()
    };
    let problem = Problem {
        inputs: x.view(),
        targets: &a,
        weights: None,
    };
    train::fit(&mut net, Head::Sigmoid, &problem, &cfg, &mut rng, |_| false);
    Ok(net
        .predict(x.view())
        .column(0)
        .iter()
        .map(|&z| sigmoid(z).max(clip_min))
        .collect())
}

/// Horvitz-Thompson estimate of the full label mean from observed labels.
pub fn ipw_mean(b: &BiasedTrainSet, p: &PropensityTable) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::NoRows);
    }
    let s: f64 = b
        .rows()
        .iter()
        .filter_map(|r| r.label.map(|y| y * p.weight(r.r)))
        .sum();
    Ok(s / b.len() as f64)
}

/// Trains on observed rows only, unweighted.
pub fn train_uncorrected(
    b: &BiasedTrainSet,
    task: TaskSpec,
    options: &TaskOptions,
    seed: u64,
) -> Result<TaskModel> {
    let (d, _) = b.observed()?;
    train_task_model(&d, task, options, seed, None)
}

/// Trains on observed rows with loss weights `1 / e_r`.
pub fn train_ipw(
    b: &BiasedTrainSet,
    p: &PropensityTable,
    task: TaskSpec,
    options: &TaskOptions,
    seed: u64,
) -> Result<TaskModel> {
    let (d, r) = b.observed()?;
    let w: Vec<f64> = r.iter().map(|&r| p.weight(r)).collect();
    train_task_model(&d, task, options, seed, Some(&w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DragonnetConfig {
    pub trunk_width: usize,
    pub head_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight of the propensity loss.
    pub propensity_weight: f64,
    pub view: FeatureView,
}

impl Default for DragonnetConfig {
    fn default() -> Self {
        DragonnetConfig {
            trunk_width: 200,
            head_width: 100,
            epochs: 5,
            learning_rate: 1e-3,
            batch_size: 64,
            propensity_weight: 1.0,
            view: FeatureView::All,
        }
    }
}

impl DragonnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trunk_width == 0 || self.head_width == 0 {
            return Err(Error::InvalidConfig("Dragonnet layer widths must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Shared trunk, a propensity head for `P(r = 1 | features)` and one outcome
/// head per recommendation condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DragonnetModel {
    /// Output is passed through ELU to form the shared representation.
    pub trunk: Mlp,
    pub propensity: Mlp,
    /// `[r = 0, r = 1]`.
    pub outcome: [Mlp; 2],
    pub config: DragonnetConfig,
    pub seed: u64,
    pub schema: FeatureSchema,
    pub task: TaskSpec,
}

/// One supervised batch for the Dragonnet objective.
#[derive(Debug, Clone)]
pub struct DragonnetBatch {
    pub inputs: Array2<f64>,
    pub r: Vec<bool>,
    /// `None` for unobserved rows; they only feed the propensity loss.
    pub labels: Vec<Option<f64>>,
}

struct Forward {
    trunk: crate::nn::Trace,
    rep: Array2<f64>,
    prop: crate::nn::Trace,
    out: [crate::nn::Trace; 2],
}

impl DragonnetModel {
    fn forward(&self, x: ArrayView2<f64>) -> Forward {
        let trunk = self.trunk.forward(x);
        let rep = trunk.output.mapv(|z| Activation::Elu.apply(z));
        let prop = self.propensity.forward(rep.view());
        let out = [self.outcome[0].forward(rep.view()), self.outcome[1].forward(rep.view())];
        Forward { trunk, rep, prop, out }
    }

    /// Estimated `P(r = 1 | features)`.
    pub fn propensity_scores(&self, d: &Dataset) -> Vec<f64> {
        let x = d.inputs(self.config.view);
        let f = self.forward(x.view());
        f.prop.output.column(0).mapv(sigmoid).to_vec()
    }

    /// Outcome of each row from the head of its estimated condition.
    pub fn predict(&self, d: &Dataset) -> Result<Vec<f64>> {
        let x = d.inputs(self.config.view);
        let f = self.forward(x.view());
        Ok((0..x.nrows())
            .map(|i| {
                let c = usize::from(f.prop.output[[i, 0]] >= 0.0);
                Head::Sigmoid.decide(f.out[c].output.row(i))
            })
            .collect())
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.trunk.params_vec();
        p.extend(self.propensity.params());
        p.extend(self.outcome[0].params());
        p.extend(self.outcome[1].params());
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let mut at = 0;
        let [o0, o1] = &mut self.outcome;
        for net in [&mut self.trunk, &mut self.propensity, o0, o1] {
            let n = net.param_count();
            net.set_params(&p[at..at + n]);
            at += n;
        }
    }
}

/// Outcome loss on observed rows (each through the head of its condition)
/// plus the weighted propensity loss on all rows, both averaged over the
/// batch. Returns the loss and gradients for trunk, propensity and the two
/// outcome heads.
pub fn dragonnet_objective(m: &DragonnetModel, batch: &DragonnetBatch) -> (f64, [Gradients; 4]) {
    let n = batch.inputs.nrows();
    let f = m.forward(batch.inputs.view());
    let r_targets: Vec<f64> = batch.r.iter().map(|&r| f64::from(u8::from(r))).collect();
    let (lp, dp) = Head::Sigmoid.loss(f.prop.output.view(), &r_targets, None);
    let alpha = m.config.propensity_weight;
    let dp = dp * alpha;
    let (gp, mut d_rep) = m.propensity.backward(&f.prop, dp.view());
    let mut total = alpha * lp;

    let mut out_grads = Vec::with_capacity(2);
    for c in 0..2 {
        let mut targets = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            if batch.r[i] == (c == 1) {
                if let Some(y) = batch.labels[i] {
                    targets[i] = y;
                    weights[i] = 1.0;
                }
            }
        }
        let (l, d) = Head::Sigmoid.loss(f.out[c].output.view(), &targets, Some(&weights));
        total += l;
        let (g, dr) = m.outcome[c].backward(&f.out[c], d.view());
        d_rep += &dr;
        out_grads.push(g);
    }
    Zip::from(&mut d_rep)
        .and(&f.trunk.output)
        .and(&f.rep)
        .for_each(|d, &z, &a| *d *= Activation::Elu.derivative(z, a));
    let (gt, _) = m.trunk.backward(&f.trunk, d_rep.view());
    let g1 = out_grads.pop().expect("two heads");
    let g0 = out_grads.pop().expect("two heads");
    (total, [gt, gp, g0, g1])
}

fn batch_from(b: &BiasedTrainSet, x: &Array2<f64>, idx: &[usize]) -> DragonnetBatch {
    DragonnetBatch {
        inputs: x.select(Axis(0), idx),
        r: idx.iter().map(|&i| b.rows()[i].r).collect(),
        labels: idx.iter().map(|&i| b.rows()[i].label).collect(),
    }
}

/// Trains on every row: observed labels feed the outcome head of their
/// condition, all rows feed the propensity head. Binary tasks only.
pub fn train_dragonnet(
    b: &BiasedTrainSet,
    task: TaskSpec,
    cfg: &DragonnetConfig,
    seed: u64,
) -> Result<TaskModel> {
    cfg.validate()?;
    if task.kind != TaskKind::Binary {
        return Err(Error::Unsupported("Dragonnet supports binary tasks only".into()));
    }
    if b.n_observed() == 0 {
        return Err(Error::InvalidInput("no observed labels".into()));
    }
    let width = cfg.view.width(b.schema());
    if width == 0 {
        return Err(Error::InvalidConfig("feature view selects no columns".into()));
    }
    let mut rng = seed::rng(seed);
    let (t, h) = (cfg.trunk_width, cfg.head_width);
    let mut m = DragonnetModel {
        trunk: Mlp::new(&[width, t, t], Activation::Elu, &mut rng),
        propensity: Mlp::new(&[t, 1], Activation::Elu, &mut rng),
        outcome: [
            Mlp::new(&[t, h, 1], Activation::Elu, &mut rng),
            Mlp::new(&[t, h, 1], Activation::Elu, &mut rng),
        ],
        config: *cfg,
        seed,
        schema: b.schema(),
        task,
    };
    let mut opts = [
        Adam::for_net(cfg.learning_rate, &m.trunk),
        Adam::for_net(cfg.learning_rate, &m.propensity),
        Adam::for_net(cfg.learning_rate, &m.outcome[0]),
        Adam::for_net(cfg.learning_rate, &m.outcome[1]),
    ];
    let x = b.inputs(cfg.view);
    let mut order: Vec<usize> = (0..b.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = batch_from(b, &x, chunk);
            let (_, g) = dragonnet_objective(&m, &batch);
            opts[0].step(&mut m.trunk, &g[0]);
            opts[1].step(&mut m.propensity, &g[1]);
            let [o0, o1] = &mut m.outcome;
            opts[2].step(o0, &g[2]);
            opts[3].step(o1, &g[3]);
        }
    }
    Ok(TaskModel::Dragonnet(m))
}

/// Finite-difference check of the Dragonnet objective on `rows` rows of `b`.
pub fn dragonnet_gradient_check(
    m: &DragonnetModel,
    b: &BiasedTrainSet,
    rows: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck> {
    if rows == 0 || b.is_empty() {
        return Err(Error::InvalidInput("gradient check needs a nonempty batch".into()));
    }
    let mut rng = seed::rng(seed);
    let mut idx: Vec<usize> = (0..b.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(rows);
    let batch = batch_from(b, &b.inputs(m.config.view), &idx);
    let (_, g) = dragonnet_objective(m, &batch);
    let analytic: Vec<f64> = g.iter().flat_map(|g| g.iter()).collect();
    let mut probe = m.clone();
    Ok(gradcheck::check(&m.params(), &analytic, step, |p| {
        probe.set_params(p);
        dragonnet_objective(&probe, &batch).0
    }))
}
