//! Counterfactual label GAN.
//!
//! The generator maps `(features, z)` to a label distribution. Its output on
//! observed rows is the factual estimate and is tied to the true label by a
//! supervised loss; its output on unobserved rows is the counterfactual label
//! `Y^{A=1}`. One discriminator per recommendation condition `c` receives a
//! balanced mix of factual labels from observed rows with `r = c` and
//! generated labels for unobserved rows with `r = c`, each paired with the
//! row's features, and learns to tell them apart. The generator is trained to
//! fool every discriminator on its own condition, which pushes the generated
//! label distribution given `(features, r = c)` toward the factual one for the
//! same condition rather than toward the factual distribution pooled over
//! conditions.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::bias::BiasedTrainSet;
use crate::checkpoint::{self, Checkpoint};
use crate::data::{self, FeatureSchema, FeatureView, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::gradcheck::{self, GradCheck};
use crate::nn::loss::{sigmoid, softplus};
use crate::nn::{Activation, Adam, Gradients, Head, Mlp};
use crate::seed::{self, Rng as SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub hidden_size: usize,
    pub g_iters: usize,
    pub d_steps: usize,
    pub learning_rate: f64,
    pub separate_discriminators: bool,
    pub scale_features: bool,
    /// Length of the generator noise input; `None` means `d_tab`.
    pub noise_dim: Option<usize>,
    pub batch_size: usize,
    pub supervised_weight: f64,
    pub adversarial_weight: f64,
    /// Feature blocks the generator and discriminators consume.
    pub view: FeatureView,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            hidden_size: 128,
            g_iters: 500,
            d_steps: 8,
            learning_rate: 1e-4,
            separate_discriminators: true,
            scale_features: false,
            noise_dim: None,
            batch_size: 128,
            supervised_weight: 1.0,
            adversarial_weight: 1.0,
            view: FeatureView::All,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g_iters == 0 {
            return Err(Error::Untrained);
        }
        if self.hidden_size == 0 || self.d_steps == 0 || self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "hidden_size and d_steps must be positive and batch_size at least 2".into(),
            ));
        }
        if self.noise_dim == Some(0) {
            return Err(Error::InvalidConfig("noise_dim must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.supervised_weight >= 0.0 && self.adversarial_weight >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    /// Most likely class, `p >= 0.5`, or the raw regression output.
    #[default]
    Expected,
    /// A draw from the generated label distribution.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaler {
    fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let sd = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, m)| {
                let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                if v > 1e-24 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Scaler {
            mean: mean.to_vec(),
            sd,
        }
    }

    fn apply(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.sd) {
                *v = (*v - m) / s;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationStats {
    pub supervised_loss: f64,
    /// Per discriminator.
    #[serde(with = "checkpoint::nan_vec")]
    pub generator_adversarial_loss: Vec<f64>,
    #[serde(with = "checkpoint::nan_vec")]
    pub discriminator_loss: Vec<f64>,
    /// Accuracy of each discriminator on its last training batch.
    #[serde(with = "checkpoint::nan_vec")]
    pub discriminator_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Telemetry {
    pub iterations: Vec<IterationStats>,
    /// Accuracy of each discriminator on a fresh balanced batch after
    /// training; `NaN` for a condition without rows.
    #[serde(with = "checkpoint::nan_vec")]
    pub final_discriminator_accuracy: Vec<f64>,
    /// Rows shown to each discriminator over the whole run.
    pub rows_shown: Vec<u64>,
    /// Rows shown to a discriminator whose condition differs from the row's
    /// recommendation bit. Always zero for separate discriminators.
    pub condition_violations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CganModel {
    pub generator: Mlp,
    pub discriminators: Vec<Mlp>,
    pub config: GanConfig,
    pub telemetry: Telemetry,
    task: TaskSpec,
    schema: FeatureSchema,
    noise_dim: usize,
    scaler: Option<Scaler>,
    /// `(mean, sd)` used to standardize regression labels.
    label_norm: (f64, f64),
}

/// Generated labels for the unobserved rows, keyed by id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CfLabels {
    pub labels: BTreeMap<u64, f64>,
}

impl CfLabels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<f64> {
        self.labels.get(&id).copied()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["id", "label"])?;
        for (id, y) in &self.labels {
            w.write_record([id.to_string(), data::fmt_value(*y)])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = data::open_reader(path)?;
        let mut labels = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let id = data::parse_id(&rec, 0, i + 1)?;
            labels.insert(id, data::parse_cell(&rec, 1, "label", i + 1)?);
        }
        Ok(CfLabels { labels })
    }
}

fn label_width(task: TaskSpec) -> usize {
    match task.kind {
        TaskKind::Multiclass { classes } => classes,
        _ => 1,
    }
}

/// Discriminator-side encoding of factual labels.
fn encode_factual(task: TaskSpec, ys: &[f64]) -> Array2<f64> {
    let k = label_width(task);
    let mut out = Array2::zeros((ys.len(), k));
    for (i, &y) in ys.iter().enumerate() {
        match task.kind {
            TaskKind::Multiclass { .. } => out[[i, y as usize]] = 1.0,
            _ => out[[i, 0]] = y,
        }
    }
    out
}

/// Possible discriminator-side label encodings of a discrete head, one per
/// row: `[[0], [1]]` for binary, the identity for `K` classes. `None` for
/// regression.
fn label_values(head: Head) -> Option<Array2<f64>> {
    match head {
        Head::Sigmoid => Some(Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).expect("shape")),
        Head::Softmax(k) => Some(Array2::eye(k)),
        Head::Linear => None,
    }
}

/// Class probabilities `n × K` of a discrete head.
fn class_probs(head: Head, logits: ArrayView2<f64>) -> Array2<f64> {
    match head {
        Head::Sigmoid => {
            let mut p = Array2::zeros((logits.nrows(), 2));
            for (i, &z) in logits.column(0).iter().enumerate() {
                let q = sigmoid(z);
                p[[i, 0]] = 1.0 - q;
                p[[i, 1]] = q;
            }
            p
        }
        _ => head.distribution(logits),
    }
}

/// Chain rule through [`class_probs`].
fn class_probs_backward(head: Head, logits: ArrayView2<f64>, d_probs: ArrayView2<f64>) -> Array2<f64> {
    match head {
        Head::Sigmoid => {
            let mut g = Array2::zeros((logits.nrows(), 1));
            for (i, &z) in logits.column(0).iter().enumerate() {
                let q = sigmoid(z);
                g[[i, 0]] = (d_probs[[i, 1]] - d_probs[[i, 0]]) * q * (1.0 - q);
            }
            g
        }
        _ => {
            let p = head.distribution(logits);
            let mut g = Array2::zeros(logits.raw_dim());
            for ((pr, dr), mut gr) in p.rows().into_iter().zip(d_probs.rows()).zip(g.rows_mut()) {
                let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                for ((gk, &pk), &dk) in gr.iter_mut().zip(pr.iter()).zip(dr.iter()) {
                    *gk = pk * (dk - dot);
                }
            }
            g
        }
    }
}

/// Discriminator logits `n × K` for every row paired with every possible
/// label value.
fn discriminate_all_labels(disc: &Mlp, features: ArrayView2<f64>, values: &Array2<f64>) -> Array2<f64> {
    let n = features.nrows();
    let mut out = Array2::zeros((n, values.nrows()));
    for (k, v) in values.rows().into_iter().enumerate() {
        let labels = Array2::from_shape_fn((n, v.len()), |(_, j)| v[j]);
        let z = disc.predict(hcat(features.view(), labels.view()).view());
        out.column_mut(k).assign(&z.column(0));
    }
    out
}

fn hcat<'a>(a: ArrayView2<'a, f64>, b: ArrayView2<'a, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("row counts match")
}

/// Fixed inputs for one generator update.
#[derive(Debug, Clone)]
pub struct GeneratorBatch {
    pub sup_features: Array2<f64>,
    pub sup_noise: Array2<f64>,
    /// Head-space targets (standardized for regression).
    pub sup_targets: Vec<f64>,
    /// Per discriminator: features and noise of rows whose generated label is
    /// shown to that discriminator.
    pub adversarial: Vec<Option<(Array2<f64>, Array2<f64>)>>,
}

/// Fixed inputs for one discriminator update.
#[derive(Debug, Clone)]
pub struct DiscriminatorBatch {
    pub real_features: Array2<f64>,
    pub real_labels: Array2<f64>,
    pub fake_features: Array2<f64>,
    pub fake_noise: Array2<f64>,
}

/// Generator objective `w_sup * L_sup + w_adv * mean_c L_adv,c` and its
/// gradient w.r.t. the generator parameters. The adversarial term is the
/// non-saturating `-log D_c(x, G(x, z))`.
pub fn generator_objective(
    generator: &Mlp,
    discriminators: &[Mlp],
    head: Head,
    batch: &GeneratorBatch,
    supervised_weight: f64,
    adversarial_weight: f64,
) -> (f64, Vec<f64>, Gradients) {
    let mut grads = Gradients::zeros_like(generator);
    let mut total = 0.0;

    if batch.sup_features.nrows() > 0 && supervised_weight > 0.0 {
        let input = hcat(batch.sup_features.view(), batch.sup_noise.view());
        let trace = generator.forward(input.view());
        let (l, d) = head.loss(trace.output.view(), &batch.sup_targets, None);
        let (g, _) = generator.backward(&trace, (d * supervised_weight).view());
        grads.add_assign(&g);
        total += supervised_weight * l;
    }

    let active = batch.adversarial.iter().filter(|b| b.is_some()).count();
    let mut adv_losses = vec![f64::NAN; batch.adversarial.len()];
    if active > 0 && adversarial_weight > 0.0 {
        let w = adversarial_weight / active as f64;
        let values = label_values(head);
        for (c, entry) in batch.adversarial.iter().enumerate() {
            let Some((feat, noise)) = entry else { continue };
            let n = feat.nrows() as f64;
            let g_trace = generator.forward(hcat(feat.view(), noise.view()).view());
            let disc = &discriminators[c];
            let (l, d_logits) = match &values {
                // Discrete labels: exact expectation of -log D over the
                // generated class distribution, so D only sees valid labels.
                Some(values) => {
                    let probs = class_probs(head, g_trace.output.view());
                    let d_all = discriminate_all_labels(disc, feat.view(), values);
                    let per = d_all.mapv(|z| softplus(-z));
                    let l = (&probs * &per).sum() / n;
                    let d_probs = per * (w / n);
                    (l, class_probs_backward(head, g_trace.output.view(), d_probs.view()))
                }
                None => {
                    let d_input = hcat(feat.view(), g_trace.output.view());
                    let d_trace = disc.forward(d_input.view());
                    let l = d_trace.output.iter().map(|&z| softplus(-z)).sum::<f64>() / n;
                    let d_logit = d_trace.output.mapv(|z| (sigmoid(z) - 1.0) * w / n);
                    let (_, d_in) = disc.backward(&d_trace, d_logit.view());
                    (l, d_in.slice(s![.., feat.ncols()..]).to_owned())
                }
            };
            adv_losses[c] = l;
            total += w * l;
            let (g, _) = generator.backward(&g_trace, d_logits.view());
            grads.add_assign(&g);
        }
    }
    (total, adv_losses, grads)
}

/// Binary cross-entropy of one discriminator on a balanced real/generated
/// batch, its gradient, and its accuracy on that batch. For discrete labels
/// each generated row enters once per class, weighted by the generated
/// probability of that class.
pub fn discriminator_objective(
    discriminator: &Mlp,
    generator: &Mlp,
    head: Head,
    batch: &DiscriminatorBatch,
) -> (f64, Gradients, f64) {
    let fake_logits = generator.predict(hcat(batch.fake_features.view(), batch.fake_noise.view()).view());
    let n_real = batch.real_features.nrows();
    let n_fake = batch.fake_features.nrows();
    let mut parts = vec![hcat(batch.real_features.view(), batch.real_labels.view())];
    let mut weights = vec![1.0; n_real];
    match label_values(head) {
        Some(values) => {
            let probs = class_probs(head, fake_logits.view());
            for (k, v) in values.rows().into_iter().enumerate() {
                let labels = Array2::from_shape_fn((n_fake, v.len()), |(_, j)| v[j]);
                parts.push(hcat(batch.fake_features.view(), labels.view()));
                weights.extend(probs.column(k).iter());
            }
        }
        None => {
            parts.push(hcat(batch.fake_features.view(), fake_logits.view()));
            weights.extend(std::iter::repeat(1.0).take(n_fake));
        }
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let input = concatenate(Axis(0), &views).expect("same width");
    let rows = input.nrows();
    let targets: Vec<f64> = (0..rows).map(|i| if i < n_real { 1.0 } else { 0.0 }).collect();
    let trace = discriminator.forward(input.view());
    // `loss` averages over all stacked rows; renormalize to real + fake rows.
    let scale = rows as f64 / (n_real + n_fake) as f64;
    let (l, d) = Head::Sigmoid.loss(trace.output.view(), &targets, Some(&weights));
    let (g, _) = discriminator.backward(&trace, (d * scale).view());
    let correct: f64 = trace
        .output
        .iter()
        .zip(&targets)
        .zip(&weights)
        .filter(|((&z, &t), _)| (z >= 0.0) == (t == 1.0))
        .map(|(_, &w)| w)
        .sum();
    (l * scale, g, correct / (n_real + n_fake) as f64)
}

/// Row pools for one discriminator.
#[derive(Debug, Clone, Default)]
struct ConditionPool {
    real: Vec<usize>,
    fake: Vec<usize>,
    /// Recommendation bit this discriminator is restricted to; `None` when a
    /// single discriminator serves both conditions.
    condition: Option<bool>,
}

struct TrainingData {
    features: Array2<f64>,
    targets: Vec<f64>,
    recs: Vec<bool>,
    observed: Vec<usize>,
    pools: Vec<ConditionPool>,
}

fn uniform_noise(rng: &mut SeededRng, rows: usize, dim: usize) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-1.0, 1.0);
    Array2::from_shape_simple_fn((rows, dim), || rng.sample(dist))
}

fn sample_indices(rng: &mut SeededRng, pool: &[usize], n: usize) -> Vec<usize> {
    (0..n).map(|_| pool[rng.gen_range(0..pool.len())]).collect()
}

impl CganModel {
    pub fn task(&self) -> TaskSpec {
        self.task
    }

    pub fn schema(&self) -> FeatureSchema {
        self.schema
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn head(&self) -> Head {
        Head::for_task(self.task)
    }

    fn prepared_features(&self, b: &BiasedTrainSet) -> Array2<f64> {
        let mut x = b.inputs(self.config.view);
        if let Some(s) = &self.scaler {
            s.apply(&mut x);
        }
        x
    }

    fn to_head_target(&self, y: f64) -> f64 {
        match self.task.kind {
            TaskKind::Regression => (y - self.label_norm.0) / self.label_norm.1,
            _ => y,
        }
    }

    fn from_head_value(&self, v: f64) -> f64 {
        match self.task.kind {
            TaskKind::Regression => v * self.label_norm.1 + self.label_norm.0,
            _ => v,
        }
    }

    pub fn schema_hash(&self) -> String {
        checkpoint::hash_json(&(self.schema, self.task, self.config.view, self.noise_dim))
    }

    fn data_for(&self, b: &BiasedTrainSet) -> Result<TrainingData> {
        let features = self.prepared_features(b);
        let recs = b.recs();
        let targets: Vec<f64> = b
            .rows()
            .iter()
            .map(|r| r.label.map_or(f64::NAN, |y| self.to_head_target(y)))
            .collect();
        let observed: Vec<usize> = (0..b.len()).filter(|&i| b.rows()[i].a()).collect();
        let pools = if self.config.separate_discriminators {
            [false, true]
                .into_iter()
                .map(|c| {
                    let real: Vec<usize> = observed.iter().copied().filter(|&i| recs[i] == c).collect();
                    let unlabeled: Vec<usize> =
                        (0..b.len()).filter(|&i| recs[i] == c && !b.rows()[i].a()).collect();
                    let fake = if unlabeled.is_empty() { real.clone() } else { unlabeled };
                    ConditionPool {
                        real,
                        fake,
                        condition: Some(c),
                    }
                })
                .collect()
        } else {
            let unlabeled: Vec<usize> = (0..b.len()).filter(|&i| !b.rows()[i].a()).collect();
            vec![ConditionPool {
                real: observed.clone(),
                fake: if unlabeled.is_empty() { observed.clone() } else { unlabeled },
                condition: None,
            }]
        };
        Ok(TrainingData {
            features,
            targets,
            recs,
            observed,
            pools,
        })
    }

    fn discriminator_batch(
        &self,
        td: &TrainingData,
        pool: &ConditionPool,
        half: usize,
        rng: &mut SeededRng,
        violations: &mut u64,
    ) -> DiscriminatorBatch {
        let real_idx = sample_indices(rng, &pool.real, half);
        let fake_idx = sample_indices(rng, &pool.fake, half);
        if let Some(c) = pool.condition {
            *violations += real_idx
                .iter()
                .chain(&fake_idx)
                .filter(|&&i| td.recs[i] != c)
                .count() as u64;
        }
        let real_targets: Vec<f64> = real_idx
            .iter()
            .map(|&i| self.from_head_value(td.targets[i]))
            .collect();
        let real_labels = match self.task.kind {
            TaskKind::Regression => {
                Array2::from_shape_vec((half, 1), real_idx.iter().map(|&i| td.targets[i]).collect())
                    .expect("shape")
            }
            _ => encode_factual(self.task, &real_targets),
        };
        DiscriminatorBatch {
            real_features: td.features.select(Axis(0), &real_idx),
            real_labels,
            fake_features: td.features.select(Axis(0), &fake_idx),
            fake_noise: uniform_noise(rng, half, self.noise_dim),
        }
    }

    fn generator_batch(&self, td: &TrainingData, rng: &mut SeededRng) -> GeneratorBatch {
        let n = self.config.batch_size;
        let sup_idx = sample_indices(rng, &td.observed, n);
        let adversarial = td
            .pools
            .iter()
            .map(|pool| {
                (!pool.fake.is_empty()).then(|| {
                    let idx = sample_indices(rng, &pool.fake, n);
                    (td.features.select(Axis(0), &idx), uniform_noise(rng, n, self.noise_dim))
                })
            })
            .collect();
        GeneratorBatch {
            sup_features: td.features.select(Axis(0), &sup_idx),
            sup_noise: uniform_noise(rng, n, self.noise_dim),
            sup_targets: sup_idx.iter().map(|&i| td.targets[i]).collect(),
            adversarial,
        }
    }

    /// Writes a checkpoint: header JSON plus generator and discriminator
    /// parameters.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let header = CganHeader {
            kind: "cgan".into(),
            schema_hash: self.schema_hash(),
            task: self.task,
            schema: self.schema,
            config: self.config,
            noise_dim: self.noise_dim,
            scaler: self.scaler.clone(),
            label_norm: self.label_norm,
            generator_shapes: self.generator.shapes(),
            discriminator_shapes: self.discriminators.iter().map(Mlp::shapes).collect(),
            telemetry: self.telemetry.clone(),
        };
        let mut arrays = vec![self.generator.params_vec()];
        arrays.extend(self.discriminators.iter().map(Mlp::params_vec));
        Checkpoint::new(&header, arrays)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let h: CganHeader = c.header_as()?;
        if h.kind != "cgan" {
            return Err(Error::Checkpoint(format!("expected a cgan checkpoint, got {}", h.kind)));
        }
        if c.arrays.len() != 1 + h.discriminator_shapes.len() {
            return Err(Error::Checkpoint("parameter array count mismatch".into()));
        }
        let build = |shapes: &[(usize, usize)], params: &[f64]| -> Result<Mlp> {
            let expected: usize = shapes.iter().map(|(i, o)| i * o + o).sum();
            if expected != params.len() {
                return Err(Error::Checkpoint("parameter length mismatch".into()));
            }
            Ok(Mlp::from_shapes(shapes, Activation::Tanh, params))
        };
        let generator = build(&h.generator_shapes, &c.arrays[0])?;
        let discriminators = h
            .discriminator_shapes
            .iter()
            .zip(&c.arrays[1..])
            .map(|(s, p)| build(s, p))
            .collect::<Result<_>>()?;
        let m = CganModel {
            generator,
            discriminators,
            config: h.config,
            telemetry: h.telemetry,
            task: h.task,
            schema: h.schema,
            noise_dim: h.noise_dim,
            scaler: h.scaler,
            label_norm: h.label_norm,
        };
        if m.schema_hash() != h.schema_hash {
            return Err(Error::Checkpoint("schema hash mismatch".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CganHeader {
    kind: String,
    schema_hash: String,
    task: TaskSpec,
    schema: FeatureSchema,
    config: GanConfig,
    noise_dim: usize,
    scaler: Option<Scaler>,
    label_norm: (f64, f64),
    generator_shapes: Vec<(usize, usize)>,
    discriminator_shapes: Vec<Vec<(usize, usize)>>,
    telemetry: Telemetry,
}

fn untrained_model(
    b: &BiasedTrainSet,
    cfg: &GanConfig,
    task: TaskSpec,
    rng: &mut SeededRng,
) -> Result<CganModel> {
    let schema = b.schema();
    let d_in = cfg.view.width(schema);
    if d_in == 0 {
        return Err(Error::InvalidConfig(format!(
            "feature view {:?} selects no columns",
            cfg.view
        )));
    }
    let noise_dim = cfg.noise_dim.unwrap_or(schema.d_tab.max(1));
    let head = Head::for_task(task);
    let h = cfg.hidden_size;
    let generator = Mlp::new(&[d_in + noise_dim, h, h, head.outputs()], Activation::Tanh, rng);
    let n_disc = if cfg.separate_discriminators { 2 } else { 1 };
    let discriminators = (0..n_disc)
        .map(|_| Mlp::new(&[d_in + label_width(task), h, h, 1], Activation::Tanh, rng))
        .collect();
    let scaler = cfg.scale_features.then(|| Scaler::fit(&b.inputs(cfg.view)));
    let label_norm = if task.kind == TaskKind::Regression {
        let ys: Vec<f64> = b.rows().iter().filter_map(|r| r.label).collect();
        let n = ys.len().max(1) as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n).sqrt();
        (mean, if sd > 1e-12 { sd } else { 1.0 })
    } else {
        (0.0, 1.0)
    };
    Ok(CganModel {
        generator,
        discriminators,
        config: *cfg,
        telemetry: Telemetry::default(),
        task,
        schema,
        noise_dim,
        scaler,
        label_norm,
    })
}

/// Adversarial training: per generator iteration, `d_steps` updates of every
/// discriminator followed by one generator update.
pub fn train_cgan(
    b: &BiasedTrainSet,
    cfg: &GanConfig,
    task: TaskSpec,
    seed: u64,
) -> Result<CganModel> {
    cfg.validate()?;
    task.validate()?;
    if task != b.task() {
        return Err(Error::InvalidInput("task does not match the training set".into()));
    }
    if b.n_observed() == 0 {
        return Err(Error::InvalidInput("no observed labels".into()));
    }
    if cfg.separate_discriminators {
        for c in [false, true] {
            let counts = b.condition_counts(c);
            if counts.rows > 0 && counts.observed == 0 {
                return Err(Error::InvalidInput(format!(
                    "recommendation condition r = {} has no observed labels; \
                     set separate_discriminators = false to train a single discriminator",
                    u8::from(c)
                )));
            }
        }
    }

    let mut rng = seed::rng(seed);
    let mut model = untrained_model(b, cfg, task, &mut rng)?;
    let head = model.head();
    let td = model.data_for(b)?;
    let half = (cfg.batch_size / 2).max(1);

    let mut g_opt = Adam::for_net(cfg.learning_rate, &model.generator);
    let mut d_opts: Vec<Adam> = model
        .discriminators
        .iter()
        .map(|d| Adam::for_net(cfg.learning_rate, d))
        .collect();
    let n_disc = model.discriminators.len();
    let mut telemetry = Telemetry {
        rows_shown: vec![0; n_disc],
        ..Telemetry::default()
    };

    for _ in 0..cfg.g_iters {
        let mut stats = IterationStats {
            discriminator_loss: vec![f64::NAN; n_disc],
            discriminator_accuracy: vec![f64::NAN; n_disc],
            ..IterationStats::default()
        };
        for _ in 0..cfg.d_steps {
            for (c, pool) in td.pools.iter().enumerate() {
                if pool.real.is_empty() || pool.fake.is_empty() {
                    continue;
                }
                let batch =
                    model.discriminator_batch(&td, pool, half, &mut rng, &mut telemetry.condition_violations);
                telemetry.rows_shown[c] += 2 * half as u64;
                let (l, g, acc) =
                    discriminator_objective(&model.discriminators[c], &model.generator, head, &batch);
                d_opts[c].step(&mut model.discriminators[c], &g);
                stats.discriminator_loss[c] = l;
                stats.discriminator_accuracy[c] = acc;
            }
        }
        let mut gb = model.generator_batch(&td, &mut rng);
        for (pool, entry) in td.pools.iter().zip(gb.adversarial.iter_mut()) {
            if pool.real.is_empty() {
                *entry = None;
            }
        }
        let (_, adv, grads) = generator_objective(
            &model.generator,
            &model.discriminators,
            head,
            &gb,
            cfg.supervised_weight,
            cfg.adversarial_weight,
        );
        let input = hcat(gb.sup_features.view(), gb.sup_noise.view());
        stats.supervised_loss = head
            .loss(model.generator.predict(input.view()).view(), &gb.sup_targets, None)
            .0;
        stats.generator_adversarial_loss = adv;
        g_opt.step(&mut model.generator, &grads);
        telemetry.iterations.push(stats);
    }

    let eval_half = 1024;
    telemetry.final_discriminator_accuracy = td
        .pools
        .iter()
        .enumerate()
        .map(|(c, pool)| {
            if pool.real.is_empty() || pool.fake.is_empty() {
                return f64::NAN;
            }
            let mut sink = 0;
            let batch = model.discriminator_batch(&td, pool, eval_half, &mut rng, &mut sink);
            discriminator_objective(&model.discriminators[c], &model.generator, head, &batch).2
        })
        .collect();
    model.telemetry = telemetry;
    Ok(model)
}

/// Generated label `Y^{A=1}` for every unobserved row of `b`.
pub fn generate_counterfactuals(
    m: &CganModel,
    b: &BiasedTrainSet,
    seed: u64,
    mode: GenerationMode,
) -> Result<CfLabels> {
    if b.schema() != m.schema || b.task() != m.task {
        return Err(Error::InvalidInput(
            "training set schema does not match the model".into(),
        ));
    }
    let idx: Vec<usize> = (0..b.len()).filter(|&i| !b.rows()[i].a()).collect();
    if idx.is_empty() {
        return Ok(CfLabels::default());
    }
    let features = m.prepared_features(b).select(Axis(0), &idx);
    let mut rng = seed::rng(seed);
    let noise = uniform_noise(&mut rng, idx.len(), m.noise_dim);
    let logits = m.generator.predict(hcat(features.view(), noise.view()).view());
    let head = m.head();
    let dist = head.distribution(logits.view());
    let mut labels = BTreeMap::new();
    for (k, &i) in idx.iter().enumerate() {
        let y = match (mode, head) {
            (GenerationMode::Expected, _) => head.decide(logits.row(k)),
            (GenerationMode::Sampled, Head::Sigmoid) => {
                if rng.gen::<f64>() < dist[[k, 0]] {
                    1.0
                } else {
                    0.0
                }
            }
            (GenerationMode::Sampled, Head::Softmax(_)) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = dist.ncols() - 1;
                for (c, p) in dist.row(k).iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = c;
                        break;
                    }
                }
                pick as f64
            }
            (GenerationMode::Sampled, Head::Linear) => logits[[k, 0]],
        };
        labels.insert(b.rows()[i].id, m.from_head_value(y));
    }
    Ok(CfLabels { labels })
}

/// Finite-difference check of every generator and discriminator gradient on
/// a random batch of `rows` rows drawn from `b`.
pub fn gradient_check(
    m: &CganModel,
    b: &BiasedTrainSet,
    rows: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheck> {
    if rows == 0 || b.is_empty() {
        return Err(Error::InvalidInput("gradient check needs a nonempty batch".into()));
    }
    let td = m.data_for(b)?;
    let mut rng = seed::rng(seed);
    let head = m.head();
    Ok(check_objectives(m, &td, head, rows, step, &mut rng))
}

fn check_objectives(
    m: &CganModel,
    td: &TrainingData,
    head: Head,
    rows: usize,
    step: f64,
    rng: &mut SeededRng,
) -> GradCheck {
    let n = rows;
    let sup_idx = if td.observed.is_empty() {
        Vec::new()
    } else {
        sample_indices(rng, &td.observed, n)
    };
    let adversarial = td
        .pools
        .iter()
        .map(|p| {
            (!p.fake.is_empty()).then(|| {
                let idx = sample_indices(rng, &p.fake, n);
                (td.features.select(Axis(0), &idx), uniform_noise(rng, n, m.noise_dim))
            })
        })
        .collect();
    let gb = GeneratorBatch {
        sup_features: td.features.select(Axis(0), &sup_idx),
        sup_noise: uniform_noise(rng, sup_idx.len(), m.noise_dim),
        sup_targets: sup_idx.iter().map(|&i| td.targets[i]).collect(),
        adversarial,
    };
    let (sw, aw) = (m.config.supervised_weight, m.config.adversarial_weight);
    let (_, _, g) = generator_objective(&m.generator, &m.discriminators, head, &gb, sw, aw);
    let mut gen = m.generator.clone();
    let mut report = gradcheck::check(&m.generator.params_vec(), &g.to_vec(), step, |p| {
        gen.set_params(p);
        generator_objective(&gen, &m.discriminators, head, &gb, sw, aw).0
    });

    for (c, pool) in td.pools.iter().enumerate() {
        if pool.real.is_empty() || pool.fake.is_empty() {
            continue;
        }
        let mut sink = 0;
        let db = m.discriminator_batch(td, pool, n.max(1), rng, &mut sink);
        let disc = &m.discriminators[c];
        let (_, g, _) = discriminator_objective(disc, &m.generator, head, &db);
        let mut d = disc.clone();
        let r = gradcheck::check(&disc.params_vec(), &g.to_vec(), step, |p| {
            d.set_params(p);
            discriminator_objective(&d, &m.generator, head, &db).0
        });
        report = report.merge(r);
    }
    report
}

/// Untrained model with fresh parameters, for diagnostics and tests.
pub fn init_cgan(b: &BiasedTrainSet, cfg: &GanConfig, task: TaskSpec, seed: u64) -> Result<CganModel> {
    let mut rng = seed::rng(seed);
    untrained_model(b, cfg, task, &mut rng)
}

/// Mean generator output per unobserved row, in head space; convenient for
/// calibration analyses.
pub fn generated_probabilities(m: &CganModel, b: &BiasedTrainSet, seed: u64) -> Result<Array1<f64>> {
    if m.head() != Head::Sigmoid {
        return Err(Error::Unsupported("probabilities are defined for binary tasks".into()));
    }
    let idx: Vec<usize> = (0..b.len()).filter(|&i| !b.rows()[i].a()).collect();
    let features = m.prepared_features(b).select(Axis(0), &idx);
    let mut rng = seed::rng(seed);
    let noise = uniform_noise(&mut rng, idx.len(), m.noise_dim);
    let logits = m.generator.predict(hcat(features.view(), noise.view()).view());
    Ok(logits.column(0).mapv(sigmoid))
}
