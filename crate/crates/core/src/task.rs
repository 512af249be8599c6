//! Downstream task models and their evaluation.

use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::DragonnetModel;
use crate::bias::{BiasedTrainSet, OracleAccess};
use crate::checkpoint;
use crate::data::{Dataset, FeatureSchema, FeatureView, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::nn::gradcheck::{self, GradCheck};
use crate::nn::{Activation, Head, Mlp};
use crate::seed;
use crate::train::{self, History, Problem, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskOptions {
    pub train: TrainConfig,
    /// Feature blocks the model consumes.
    pub view: FeatureView,
}

/// Single-hidden-layer network with a task head.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub net: Mlp,
    pub head: Head,
    pub options: TaskOptions,
    pub history: History,
    pub seed: u64,
    /// Regression labels are standardized with `(mean, sd)` during training.
    pub label_norm: (f64, f64),
    pub schema: FeatureSchema,
    pub task: TaskSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskModel {
    Network(NetworkModel),
    Dragonnet(DragonnetModel),
}

impl TaskModel {
    pub fn schema(&self) -> FeatureSchema {
        match self {
            TaskModel::Network(m) => m.schema,
            TaskModel::Dragonnet(m) => m.schema,
        }
    }

    pub fn task(&self) -> TaskSpec {
        match self {
            TaskModel::Network(m) => m.task,
            TaskModel::Dragonnet(m) => m.task,
        }
    }

    /// Predicted labels, one per row of `d`.
    pub fn predict(&self, d: &Dataset) -> Result<Vec<f64>> {
        if d.schema() != self.schema() {
            return Err(Error::Schema(format!(
                "model expects {:?}, dataset has {:?}",
                self.schema(),
                d.schema()
            )));
        }
        match self {
            TaskModel::Network(m) => {
                let x = d.inputs(m.options.view);
                let out = m.net.predict(x.view());
                let (mean, sd) = m.label_norm;
                Ok(m.head
                    .decide_all(out.view())
                    .into_iter()
                    .map(|v| match m.head {
                        Head::Linear => v * sd + mean,
                        _ => v,
                    })
                    .collect())
            }
            TaskModel::Dragonnet(m) => m.predict(d),
        }
    }

    /// Stable digest of the model configuration.
    pub fn config_hash(&self) -> String {
        match self {
            TaskModel::Network(m) => checkpoint::hash_json(&("network", m.options, m.schema, m.task)),
            TaskModel::Dragonnet(m) => checkpoint::hash_json(&("dragonnet", m.config, m.schema, m.task)),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            TaskModel::Network(m) => m.seed,
            TaskModel::Dragonnet(m) => m.seed,
        }
    }
}

impl NetworkModel {
    fn label_norm_for(task: TaskSpec, ys: &[f64]) -> (f64, f64) {
        if task.kind != TaskKind::Regression {
            return (0.0, 1.0);
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        (mean, if sd > 1e-12 { sd } else { 1.0 })
    }
}

/// Trains a network on `d`. `weights` scale the per-row loss.
pub fn train_task_model(
    d: &Dataset,
    task: TaskSpec,
    options: &TaskOptions,
    seed: u64,
    weights: Option<&[f64]>,
) -> Result<TaskModel> {
    options.train.validate()?;
    task.validate()?;
    if d.is_empty() {
        return Err(Error::NoRows);
    }
    if let Some(w) = weights {
        if w.len() != d.len() {
            return Err(Error::DimensionMismatch {
                expected: d.len(),
                actual: w.len(),
            });
        }
    }
    let labels = d.labels();
    if task.is_classification() && labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::SingleClass);
    }
    let width = options.view.width(d.schema());
    if width == 0 {
        return Err(Error::InvalidConfig("feature view selects no columns".into()));
    }
    let label_norm = NetworkModel::label_norm_for(task, &labels);
    let targets: Vec<f64> = labels
        .iter()
        .map(|y| (y - label_norm.0) / label_norm.1)
        .collect();
    let head = Head::for_task(task);
    let mut rng = seed::rng(seed);
    let mut net = Mlp::new(
        &[width, options.train.hidden, head.outputs()],
        Activation::Elu,
        &mut rng,
    );
    let x = d.inputs(options.view);
    let problem = Problem {
        inputs: x.view(),
        targets: &targets,
        weights,
    };
    let history = train::fit(&mut net, head, &problem, &options.train, &mut rng, |_| false);
    Ok(TaskModel::Network(NetworkModel {
        net,
        head,
        options: *options,
        history,
        seed,
        label_norm,
        schema: d.schema(),
        task,
    }))
}

/// Trains on the training set with every withheld label restored.
pub fn train_oracle(
    b: &BiasedTrainSet,
    task: TaskSpec,
    options: &TaskOptions,
    seed: u64,
    access: OracleAccess,
) -> Result<TaskModel> {
    let d = b.restored(access)?;
    train_task_model(&d, task, options, seed, None)
}

/// Scores `m` on `d_eval`. Evaluation never mutates its inputs.
pub fn evaluate(m: &TaskModel, d_eval: &Dataset, task: TaskSpec) -> Result<MetricsReport> {
    if d_eval.is_empty() {
        return Err(Error::NoRows);
    }
    let pred = m.predict(d_eval)?;
    Ok(MetricsReport {
        scores: metrics::score(task, &d_eval.labels(), &pred)?,
        n_eval: d_eval.len(),
        seed: m.seed(),
        config_hash: m.config_hash(),
    })
}

/// Finite-difference check of the (optionally weighted) training loss of a
/// network model on `rows` rows of `d`.
pub fn network_gradient_check(
    m: &NetworkModel,
    d: &Dataset,
    weights: Option<&[f64]>,
    rows: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck> {
    if rows == 0 || d.is_empty() {
        return Err(Error::InvalidInput("gradient check needs a nonempty batch".into()));
    }
    let mut rng = seed::rng(seed);
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(rows);
    let x = d.inputs(m.options.view).select(Axis(0), &idx);
    let y: Vec<f64> = idx
        .iter()
        .map(|&i| (d.rows()[i].y - m.label_norm.0) / m.label_norm.1)
        .collect();
    let w: Option<Vec<f64>> = weights.map(|w| idx.iter().map(|&i| w[i]).collect());
    let trace = m.net.forward(x.view());
    let (_, d_out) = m.head.loss(trace.output.view(), &y, w.as_deref());
    let (g, _) = m.net.backward(&trace, d_out.view());
    let mut probe = m.net.clone();
    Ok(gradcheck::check(&m.net.params_vec(), &g.to_vec(), step, |p| {
        probe.set_params(p);
        m.head.loss(probe.predict(x.view()).view(), &y, w.as_deref()).0
    }))
}
