//! End-to-end benchmark runner.
//!
//! Per seed: data, split, recommender, bias induction, every toggled method,
//! evaluation on the unbiased and the biased evaluation split, and the
//! label-distribution analyses. Results are aggregated over seeds and rendered
//! as one table per evaluation split.
//!
//! Stage seeds derive from the run seed with [`seed::derive`]. Task networks of
//! every method share one initialization seed, so methods differ only in the
//! data and weights they train on.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, DistReport, DistSource};
use crate::augment;
use crate::baselines::{self, DragonnetConfig, DEFAULT_CLIP_MIN};
use crate::bias::{self, BiasParams, BiasedTrainSet, OracleAccess, Vault};
use crate::checkpoint;
use crate::data::{self, ColumnRoles, Dataset, SplitFractions, TaskKind, TaskSpec};
use crate::error::{Error, Result};
use crate::gan::{self, CfLabels, GanConfig, GenerationMode};
use crate::metrics::MetricsReport;
use crate::seed;
use crate::synth::{self, SynthConfig};
use crate::task::{self, TaskModel, TaskOptions};

/// Overrides the output root of `bench`.
pub const OUTPUT_ROOT_ENV: &str = "CFAUG_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SynthConfig),
    File {
        path: PathBuf,
        /// Standard `id, x_i, w_i, y` layout when absent.
        #[serde(default)]
        roles: Option<ColumnRoles>,
        /// Binarize labels at this positive share before use.
        #[serde(default)]
        positive_share: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Methods {
    pub uncorrected: bool,
    pub ipw: bool,
    pub dragonnet: bool,
    pub ca: bool,
    pub oracle: bool,
}

impl Default for Methods {
    fn default() -> Self {
        Methods {
            uncorrected: true,
            ipw: true,
            dragonnet: true,
            ca: true,
            oracle: true,
        }
    }
}

impl Methods {
    pub fn enabled(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| match m {
                Method::Uncorrected => self.uncorrected,
                Method::Ipw => self.ipw,
                Method::Dragonnet => self.dragonnet,
                Method::Ca => self.ca,
                Method::Oracle => self.oracle,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Uncorrected,
    #[serde(rename = "IPW")]
    Ipw,
    Dragonnet,
    #[serde(rename = "CA")]
    Ca,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Uncorrected,
        Method::Ipw,
        Method::Dragonnet,
        Method::Ca,
        Method::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Uncorrected => "Uncorrected",
            Method::Ipw => "IPW",
            Method::Dragonnet => "Dragonnet",
            Method::Ca => "CA",
            Method::Oracle => "Oracle",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Unbiased,
    Biased,
}

impl EvalSplit {
    pub const ALL: [EvalSplit; 2] = [EvalSplit::Unbiased, EvalSplit::Biased];

    pub fn name(self) -> &'static str {
        match self {
            EvalSplit::Unbiased => "unbiased",
            EvalSplit::Biased => "biased",
        }
    }
}

impl FromStr for EvalSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalSplit::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown evaluation split '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: Option<DataSource>,
    /// Required for file data; synthetic data carries its own task.
    pub task: Option<TaskSpec>,
    pub splits: SplitFractions,
    pub bias: BiasParams,
    pub gan: GanConfig,
    pub generation: GenerationMode,
    /// Task network used by Uncorrected, IPW, CA and Oracle.
    pub model: TaskOptions,
    pub dragonnet: DragonnetConfig,
    pub propensity_clip: f64,
    pub methods: Methods,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Also write the biased training set and the corrected dataset per seed.
    pub write_datasets: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            data: None,
            task: None,
            splits: SplitFractions::default(),
            bias: BiasParams::default(),
            gan: GanConfig::default(),
            generation: GenerationMode::default(),
            model: TaskOptions::default(),
            dragonnet: DragonnetConfig::default(),
            propensity_clip: DEFAULT_CLIP_MIN,
            methods: Methods::default(),
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            write_datasets: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let data = self
            .data
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no dataset source configured".into()))?;
        match data {
            DataSource::Synthetic(s) => {
                s.validate()?;
                if let Some(t) = self.task {
                    let own = if s.continuous { TaskKind::Regression } else { TaskKind::Binary };
                    if t.kind != own {
                        return Err(Error::InvalidConfig(
                            "task does not match the synthetic label type".into(),
                        ));
                    }
                }
            }
            DataSource::File { positive_share, .. } => {
                if self.task.is_none() && positive_share.is_none() {
                    return Err(Error::InvalidConfig("file data needs a task".into()));
                }
            }
        }
        if let Some(t) = self.task {
            t.validate()?;
        }
        if self.methods.enabled().is_empty() {
            return Err(Error::InvalidConfig("no method enabled".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("no seeds".into()));
        }
        if !(self.propensity_clip > 0.0 && self.propensity_clip <= 1.0) {
            return Err(Error::InvalidConfig("propensity_clip must be in (0, 1]".into()));
        }
        data::split_sizes(1000, self.splits)?;
        self.bias.validate()?;
        self.model.train.validate()?;
        if self.methods.ca {
            self.gan.validate()?;
        }
        if self.methods.dragonnet {
            self.dragonnet.validate()?;
        }
        Ok(())
    }

    /// Digest of everything that affects results; the output location is
    /// excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.write_datasets = false;
        checkpoint::hash_json(&c)
    }

    /// Output directory after applying [`OUTPUT_ROOT_ENV`]: when set, runs go
    /// to `<root>/<name>`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.name),
            _ => self.output_dir.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub stdev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub split: EvalSplit,
    pub seeds: usize,
    pub metrics: Vec<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementCell {
    pub metric: String,
    /// Positive when CA is better than the best competing method.
    pub value: f64,
    pub against: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub split: EvalSplit,
    pub cells: Vec<ImprovementCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub method: Method,
    pub split: EvalSplit,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub method: Option<Method>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub toolkit_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub name: String,
    pub task: TaskSpec,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub aggregates: Vec<Aggregate>,
    pub improvements: Vec<Improvement>,
    pub runs: Vec<RunReport>,
    pub failures: Vec<Failure>,
    pub provenance: Provenance,
}

impl ExperimentResult {
    /// Every toggled method succeeded on every seed.
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn aggregate(&self, method: Method, split: EvalSplit) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.split == split)
    }

    /// Mean of `metric` for `method` on `split`.
    pub fn mean(&self, method: Method, split: EvalSplit, metric: &str) -> Option<f64> {
        self.aggregate(method, split)?
            .metrics
            .iter()
            .find(|m| m.metric == metric)
            .map(|m| m.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn lower_is_better(metric: &str) -> bool {
    metric == "NRMSE"
}

/// Mean and sample standard deviation per method, split and metric. Runs are
/// sorted by seed first so the result does not depend on run order.
pub fn aggregate(runs: &[RunReport]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(Method, EvalSplit), Vec<&RunReport>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.method, r.split)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, split), mut rs)| {
            rs.sort_by_key(|r| r.seed);
            let names: Vec<&str> = rs[0].report.values().into_iter().map(|(k, _)| k).collect();
            let metrics = names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let v: Vec<f64> = rs.iter().map(|r| r.report.values()[j].1).collect();
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let stdev = if v.len() > 1 {
                        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    MetricSummary {
                        metric: name.to_string(),
                        mean,
                        stdev,
                    }
                })
                .collect();
            Aggregate {
                method,
                split,
                seeds: rs.len(),
                metrics,
            }
        })
        .collect()
}

/// CA against the best other non-oracle method, per split and metric.
pub fn improvements(aggregates: &[Aggregate]) -> Vec<Improvement> {
    let mut out = Vec::new();
    for split in EvalSplit::ALL {
        let Some(ca) = aggregates.iter().find(|a| a.method == Method::Ca && a.split == split) else {
            continue;
        };
        let others: Vec<&Aggregate> = aggregates
            .iter()
            .filter(|a| a.split == split && !matches!(a.method, Method::Ca | Method::Oracle))
            .collect();
        if others.is_empty() {
            continue;
        }
        let cells = ca
            .metrics
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let lower = lower_is_better(&m.metric);
                let best = others
                    .iter()
                    .map(|a| (a.method, a.metrics[j].mean))
                    .reduce(|x, y| {
                        let y_better = if lower { y.1 < x.1 } else { y.1 > x.1 };
                        if y_better {
                            y
                        } else {
                            x
                        }
                    })
                    .expect("nonempty");
                ImprovementCell {
                    metric: m.metric.clone(),
                    value: if lower { best.1 - m.mean } else { m.mean - best.1 },
                    against: best.0,
                }
            })
            .collect();
        out.push(Improvement { split, cells });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Plain,
    Delimited,
    Markup,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(TableFormat::Plain),
            "delimited" | "csv" => Ok(TableFormat::Delimited),
            "markup" | "markdown" => Ok(TableFormat::Markup),
            other => Err(Error::InvalidInput(format!(
                "unknown table format '{other}' (expected plain, delimited or markup)"
            ))),
        }
    }
}

fn cell(metric: &str, classification: bool, v: f64) -> String {
    if classification && !lower_is_better(metric) {
        format!("{:.1}", 100.0 * v)
    } else {
        format!("{v:.3}")
    }
}

fn signed_cell(metric: &str, classification: bool, v: f64) -> String {
    let s = cell(metric, classification, v.abs());
    if v < 0.0 {
        format!("-{s}")
    } else {
        format!("+{s}")
    }
}

/// One table per evaluation split. Classification scores are shown in
/// percent in the plain and markup formats; the delimited format keeps full
/// precision.
pub fn render_tables(r: &ExperimentResult, format: TableFormat) -> Result<String> {
    if r.aggregates.is_empty() {
        return Err(Error::InvalidInput("result has no successful runs".into()));
    }
    if format == TableFormat::Delimited {
        return render_delimited(r);
    }
    let classification = r.task.is_classification();
    let mut out = String::new();
    for split in EvalSplit::ALL {
        let rows: Vec<&Aggregate> = r
            .methods
            .iter()
            .filter_map(|&m| r.aggregate(m, split))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let metrics: Vec<&str> = rows[0].metrics.iter().map(|m| m.metric.as_str()).collect();
        let mut header = vec!["Method".to_string()];
        header.extend(metrics.iter().map(|m| m.to_string()));
        let mut body: Vec<Vec<String>> = rows
            .iter()
            .map(|a| {
                let mut line = vec![a.method.name().to_string()];
                line.extend(a.metrics.iter().map(|m| {
                    format!(
                        "{} ± {}",
                        cell(&m.metric, classification, m.mean),
                        cell(&m.metric, classification, m.stdev)
                    )
                }));
                line
            })
            .collect();
        if let Some(imp) = r.improvements.iter().find(|i| i.split == split) {
            let mut line = vec!["Improvement".to_string()];
            line.extend(imp.cells.iter().map(|c| {
                format!(
                    "{} vs {}",
                    signed_cell(&c.metric, classification, c.value),
                    c.against.name()
                )
            }));
            body.push(line);
        }
        let title = format!(
            "{} evaluation split ({}, {} seeds)",
            capitalize(split.name()),
            task_label(r.task),
            r.seeds.len()
        );
        match format {
            TableFormat::Plain => {
                let widths: Vec<usize> = (0..header.len())
                    .map(|j| {
                        body.iter()
                            .map(|l| l[j].chars().count())
                            .chain([header[j].len()])
                            .max()
                            .unwrap_or(0)
                    })
                    .collect();
                let line = |cells: &[String]| {
                    cells
                        .iter()
                        .zip(&widths)
                        .map(|(c, w)| format!("{c:<w$}", w = *w))
                        .collect::<Vec<_>>()
                        .join("  ")
                        .trim_end()
                        .to_string()
                };
                writeln!(out, "{title}").ok();
                writeln!(out, "{}", line(&header)).ok();
                for l in &body {
                    writeln!(out, "{}", line(l)).ok();
                }
                out.push('\n');
            }
            TableFormat::Markup => {
                writeln!(out, "### {title}\n").ok();
                writeln!(out, "| {} |", header.join(" | ")).ok();
                writeln!(out, "|{}", "---|".repeat(header.len())).ok();
                for l in &body {
                    writeln!(out, "| {} |", l.join(" | ")).ok();
                }
                out.push('\n');
            }
            TableFormat::Delimited => unreachable!("handled above"),
        }
    }
    Ok(out)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

fn task_label(t: TaskSpec) -> String {
    match t.kind {
        TaskKind::Binary => "binary".into(),
        TaskKind::Multiclass { classes } => format!("{classes}-class"),
        TaskKind::Regression => "regression".into(),
    }
}

const DELIMITED_HEADER: [&str; 6] = ["split", "method", "metric", "mean", "stdev", "against"];

fn render_delimited(r: &ExperimentResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DELIMITED_HEADER)?;
    for split in EvalSplit::ALL {
        for &m in &r.methods {
            if let Some(a) = r.aggregate(m, split) {
                for s in &a.metrics {
                    w.write_record([
                        split.name(),
                        m.name(),
                        &s.metric,
                        &s.mean.to_string(),
                        &s.stdev.to_string(),
                        "",
                    ])?;
                }
            }
        }
        if let Some(imp) = r.improvements.iter().find(|i| i.split == split) {
            for c in &imp.cells {
                w.write_record([split.name(), "Improvement", &c.metric, &c.value.to_string(), "", c.against.name()])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

/// One parsed line of the delimited table format.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry {
    pub split: EvalSplit,
    /// Method name, or `Improvement`.
    pub row: String,
    pub metric: String,
    pub value: f64,
    pub stdev: Option<f64>,
}

pub fn parse_delimited(text: &str) -> Result<Vec<TableEntry>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    if rdr.headers()?.iter().ne(DELIMITED_HEADER) {
        return Err(Error::Schema("not a delimited result table".into()));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::InvalidInput(format!("'{s}' is not a number")))
    };
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            Ok(TableEntry {
                split: rec[0].parse()?,
                row: rec[1].to_string(),
                metric: rec[2].to_string(),
                value: num(&rec[3])?,
                stdev: if rec[4].is_empty() { None } else { Some(num(&rec[4])?) },
            })
        })
        .collect()
}

fn load_base_dataset(cfg: &ExperimentConfig) -> Result<Option<Dataset>> {
    match cfg.data.as_ref().expect("validated") {
        DataSource::Synthetic(_) => Ok(None),
        DataSource::File {
            path,
            roles,
            positive_share,
        } => {
            let roles = match roles {
                Some(r) => r.clone(),
                None => ColumnRoles::standard_from_header(path)?,
            };
            let task = match (cfg.task, positive_share) {
                (Some(t), None) => t,
                _ => TaskSpec::regression(),
            };
            let d = data::load_dataset(path, &roles, task)?;
            Ok(Some(match positive_share {
                Some(p) => data::binarize_labels(&d, *p)?,
                None => d,
            }))
        }
    }
}

fn seed_dataset(cfg: &ExperimentConfig, base: Option<&Dataset>, run_seed: u64) -> Result<Dataset> {
    match (cfg.data.as_ref().expect("validated"), base) {
        (DataSource::Synthetic(s), _) => {
            let s = SynthConfig {
                data_seed: seed::derive(run_seed, &format!("data/{}", s.data_seed)),
                ..*s
            };
            Ok(synth::generate_synthetic(&s)?.0)
        }
        (_, Some(d)) => Ok(d.clone()),
        (_, None) => unreachable!("file data is loaded up front"),
    }
}

/// Everything one seed produced.
struct SeedArtifacts {
    runs: Vec<RunReport>,
    failures: Vec<Failure>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_report(dir: &Path, stem: &str, report: &DistReport) -> Result<()> {
    let mut buf = Vec::new();
    report.write_plot_csv(&mut buf)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, buf).map_err(|e| Error::io(&csv_path, e))?;
    write_file(&dir.join(format!("{stem}.json")), &(serde_json::to_string_pretty(report)? + "\n"))
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    train_rows: usize,
    observed_rows: usize,
    recommended_share: f64,
    observed_share_r0: f64,
    observed_share_r1: f64,
    eval_rows: usize,
    biased_eval_rows: usize,
    propensity: Option<(f64, f64)>,
    gan_final_discriminator_accuracy: Option<Vec<Option<f64>>>,
    generated_mixture: Option<(usize, usize)>,
}

fn share(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

struct SeedContext<'a> {
    cfg: &'a ExperimentConfig,
    task: TaskSpec,
    seed: u64,
    dir: PathBuf,
}

impl SeedContext<'_> {
    fn evaluate_both(
        &self,
        method: Method,
        m: &TaskModel,
        eval: &Dataset,
        eval_biased: &Dataset,
    ) -> Result<Vec<RunReport>> {
        [(EvalSplit::Unbiased, eval), (EvalSplit::Biased, eval_biased)]
            .into_iter()
            .map(|(split, d)| {
                Ok(RunReport {
                    seed: self.seed,
                    method,
                    split,
                    report: task::evaluate(m, d, self.task)?,
                })
            })
            .collect()
    }
}

fn run_seed(cfg: &ExperimentConfig, base: Option<&Dataset>, run_seed: u64, root: &Path) -> SeedArtifacts {
    let mut art = SeedArtifacts {
        runs: Vec::new(),
        failures: Vec::new(),
    };
    if let Err(e) = run_seed_inner(cfg, base, run_seed, root, &mut art) {
        art.failures.push(Failure {
            seed: run_seed,
            method: None,
            message: e.to_string(),
        });
    }
    art
}

fn run_seed_inner(
    cfg: &ExperimentConfig,
    base: Option<&Dataset>,
    run_seed: u64,
    root: &Path,
    art: &mut SeedArtifacts,
) -> Result<()> {
    let dir = root.join(format!("seed-{run_seed}"));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let d = seed_dataset(cfg, base, run_seed)?;
    let task = d.task();
    let stage = |name: &str| seed::derive(run_seed, name);

    let splits = data::split_dataset(&d, cfg.splits, stage("split"))?;
    let recommender = bias::fit_tab_model(&splits.original, task, stage("recommender"))?;
    let r = bias::predict_recs(&recommender, &splits.train_pool)?;
    let b = bias::induce_train_bias(
        &splits.train_pool,
        &r,
        cfg.bias.label_drop,
        cfg.bias.row_drop,
        stage("mask"),
    )?;
    let eval = splits.eval;
    let eval_biased = bias::make_biased_eval(&eval, &recommender, cfg.bias.sample_drop, stage("biased-eval"))?;
    let ctx = SeedContext {
        cfg,
        task,
        seed: run_seed,
        dir,
    };
    if cfg.write_datasets {
        b.write_csv(&ctx.dir.join("biased_train.csv"))?;
    }

    let model_seed = stage("task-model");
    let mut summary = SeedSummary {
        seed: run_seed,
        train_rows: b.len(),
        observed_rows: b.n_observed(),
        recommended_share: bias::recommendation_rate(&b.recs()),
        observed_share_r0: {
            let c = b.condition_counts(false);
            share(c.observed, c.rows)
        },
        observed_share_r1: {
            let c = b.condition_counts(true);
            share(c.observed, c.rows)
        },
        eval_rows: eval.len(),
        biased_eval_rows: eval_biased.len(),
        propensity: None,
        gan_final_discriminator_accuracy: None,
        generated_mixture: None,
    };

    for method in cfg.methods.enabled() {
        let trained: Result<TaskModel> = match method {
            Method::Uncorrected => baselines::train_uncorrected(&b, task, &cfg.model, model_seed),
            Method::Ipw => baselines::estimate_propensities(&b, cfg.propensity_clip).and_then(|p| {
                summary.propensity = Some((p.e_0, p.e_1));
                baselines::train_ipw(&b, &p, task, &cfg.model, model_seed)
            }),
            Method::Dragonnet => baselines::train_dragonnet(&b, task, &cfg.dragonnet, stage("dragonnet")),
            Method::Ca => run_ca(&ctx, &b, model_seed, &mut summary),
            Method::Oracle => task::train_oracle(&b, task, &cfg.model, model_seed, OracleAccess::grant()),
        };
        match trained.and_then(|m| ctx.evaluate_both(method, &m, &eval, &eval_biased)) {
            Ok(reports) => art.runs.extend(reports),
            Err(e) => art.failures.push(Failure {
                seed: run_seed,
                method: Some(method),
                message: e.to_string(),
            }),
        }
    }

    let metrics: Vec<&RunReport> = art.runs.iter().filter(|r| r.seed == run_seed).collect();
    write_file(&ctx.dir.join("metrics.json"), &(serde_json::to_string_pretty(&metrics)? + "\n"))?;
    write_file(&ctx.dir.join("summary.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(())
}

/// Trains the GAN, writes generated labels and analyses, and trains the task
/// network on the corrected data.
fn run_ca(ctx: &SeedContext, b: &BiasedTrainSet, model_seed: u64, summary: &mut SeedSummary) -> Result<TaskModel> {
    let cfg = ctx.cfg;
    let stage = |name: &str| seed::derive(ctx.seed, name);
    let m = gan::train_cgan(b, &cfg.gan, ctx.task, stage("gan"))?;
    summary.gan_final_discriminator_accuracy = Some(
        m.telemetry
            .final_discriminator_accuracy
            .iter()
            .map(|v| (!v.is_nan()).then_some(*v))
            .collect(),
    );
    let cf = gan::generate_counterfactuals(&m, b, stage("generate"), cfg.generation)?;
    cf.write_csv(&ctx.dir.join("cf_labels.csv"))?;
    let c = augment::augment(b, &cf)?;
    summary.generated_mixture = Some(c.mixture());
    if cfg.write_datasets {
        c.write_csv(&ctx.dir.join("corrected.csv"))?;
    }
    let oracle = cfg.methods.oracle.then(OracleAccess::grant);
    let balance = analysis::label_balance_report(b, &c, ctx.task, oracle)?;
    write_report(&ctx.dir, "label_balance", &balance)?;
    if let Some(access) = oracle {
        if let Some(vault) = b.vault(access) {
            let fidelity = analysis::counterfactual_report(&cf, vault, ctx.task)?;
            write_report(&ctx.dir, "counterfactual", &fidelity)?;
        }
    }
    task::train_task_model(&c.to_dataset()?, ctx.task, &cfg.model, model_seed, None)
}

/// Runs every seed, writes per-seed artifacts under seed subdirectories of
/// `out`, and writes `results.json` and the rendered tables to `out`.
pub fn run_experiment_in(cfg: &ExperimentConfig, out: &Path, mut progress: impl FnMut(&str)) -> Result<ExperimentResult> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let base = load_base_dataset(cfg)?;
    let task = match (&base, cfg.data.as_ref().expect("validated")) {
        (Some(d), _) => d.task(),
        (None, DataSource::Synthetic(s)) => cfg.task.unwrap_or(if s.continuous {
            TaskSpec::regression()
        } else {
            TaskSpec::binary(0)
        }),
        (None, _) => unreachable!("file data is loaded up front"),
    };

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &s in &cfg.seeds {
        progress(&format!("seed {s}"));
        let art = run_seed(cfg, base.as_ref(), s, out);
        for f in &art.failures {
            progress(&format!(
                "seed {s}: {} failed: {}",
                f.method.map_or("pipeline", Method::name),
                f.message
            ));
        }
        runs.extend(art.runs);
        failures.extend(art.failures);
    }
    if runs.is_empty() {
        let detail = failures.first().map(|f| f.message.clone()).unwrap_or_default();
        return Err(Error::InvalidInput(format!("every run failed; first failure: {detail}")));
    }
    runs.sort_by(|a, b| (a.seed, a.method, a.split).cmp(&(b.seed, b.method, b.split)));
    let aggregates = aggregate(&runs);
    let result = ExperimentResult {
        name: cfg.name.clone(),
        task,
        seeds: cfg.seeds.clone(),
        methods: cfg.methods.enabled(),
        improvements: improvements(&aggregates),
        aggregates,
        runs,
        failures,
        provenance: Provenance {
            config_hash: cfg.hash(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    write_file(&out.join("results.json"), &result.to_json()?)?;
    write_file(&out.join("tables.txt"), &render_tables(&result, TableFormat::Plain)?)?;
    write_file(&out.join("tables.csv"), &render_tables(&result, TableFormat::Delimited)?)?;
    write_file(&out.join("tables.md"), &render_tables(&result, TableFormat::Markup)?)?;
    write_file(&out.join("config.toml"), &cfg.to_toml()?)?;
    Ok(result)
}

/// [`run_experiment_in`] at the configured output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_in(cfg, &cfg.resolved_output_dir(), |_| {})
}

/// Files under `dir` that carry withheld-label content: a vault column, a
/// distribution over withheld labels, oracle model scores, or a label on a
/// row marked unobserved.
pub fn vault_hygiene_scan(dir: &Path) -> Result<Vec<(PathBuf, String)>> {
    let mut findings = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(p) = stack.pop() {
        let entries = fs::read_dir(&p).map_err(|e| Error::io(&p, e))?;
        let mut paths: Vec<PathBuf> = entries
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(&p, e)))
            .collect::<Result<_>>()?;
        paths.sort();
        for path in paths {
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let Ok(text) = fs::read_to_string(&path) else {
                continue;
            };
            let markers = [
                Vault::ORACLE_COLUMN,
                DistSource::TrueCounterfactual.as_str(),
                "\"Oracle\"",
                ",Oracle,",
                "| Oracle |",
            ];
            for m in markers {
                if text.contains(m) {
                    findings.push((path.clone(), format!("contains '{m}'")));
                }
            }
            if text.contains(",full,") || text.contains("\"full\"") {
                findings.push((path.clone(), "contains the restored label distribution".into()));
            }
            if path.extension().is_some_and(|e| e == "csv") {
                if let Some(row) = labeled_unobserved_row(&text) {
                    findings.push((path.clone(), format!("row {row} is unobserved but labeled")));
                }
            }
        }
    }
    Ok(findings)
}

fn labeled_unobserved_row(text: &str) -> Option<usize> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().ok()?.clone();
    let a = headers.iter().position(|h| h == "a")?;
    let y = headers.iter().position(|h| h == "y")?;
    rdr.records().enumerate().find_map(|(i, rec)| {
        let rec = rec.ok()?;
        (rec.get(a) == Some("0") && rec.get(y).is_some_and(|v| !v.trim().is_empty())).then_some(i + 1)
    })
}

/// Withheld labels of a run's training set, for analyses run outside
/// `bench`.
pub fn vault_for_analysis(b: &BiasedTrainSet, access: OracleAccess) -> Result<&Vault> {
    b.vault(access)
        .ok_or_else(|| Error::InvalidInput("training set carries no withheld labels".into()))
}

/// Fidelity of generated labels against the withheld ones.
pub fn fidelity(cf: &CfLabels, b: &BiasedTrainSet, access: OracleAccess) -> Result<DistReport> {
    analysis::counterfactual_report(cf, vault_for_analysis(b, access)?, b.task())
}
