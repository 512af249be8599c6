use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfaug::augment;
use cfaug::bias::{self, BiasParams, BiasedTrainSet, OracleAccess};
use cfaug::data::{self, ColumnRoles, FeatureView, SplitFractions, TaskSpec};
use cfaug::experiment::{self, ExperimentConfig, Method, TableFormat, OUTPUT_ROOT_ENV};
use cfaug::gan::{self, CfLabels, CganModel, GanConfig, GenerationMode};
use cfaug::seed;
use cfaug::synth::{self, SynthConfig};
use cfaug::{Error, Result};

#[derive(Parser)]
#[command(name = "cfaug", version, about = "Presentation-bias simulation and counterfactual label augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Split a dataset and induce presentation bias on its training part.
    Bias(BiasArgs),
    /// Train the counterfactual GAN on a biased training set.
    TrainCgan(TrainArgs),
    /// Fill unobserved labels with generated counterfactuals.
    Augment(AugmentArgs),
    /// Run a configured benchmark over all methods and seeds.
    Bench(BenchArgs),
    /// Render result tables from a results file.
    Report(ReportArgs),
}

#[derive(Args)]
struct TaskArgs {
    /// binary, regression or multiclass:K
    #[arg(long, default_value = "binary")]
    task: String,
    #[arg(long, default_value_t = 0)]
    minority_class: usize,
}

impl TaskArgs {
    fn spec(&self) -> Result<TaskSpec> {
        let t = match self.task.as_str() {
            "binary" => TaskSpec::binary(self.minority_class),
            "regression" => TaskSpec::regression(),
            other => match other.strip_prefix("multiclass:").map(str::parse) {
                Some(Ok(k)) => TaskSpec::multiclass(k, self.minority_class),
                _ => return Err(Error::InvalidConfig(format!("unknown task '{other}'"))),
            },
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with synthetic-data settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d_tab: Option<usize>,
    #[arg(long)]
    d_rich: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    positive_share: Option<f64>,
    /// Keep the continuous score as a regression label.
    #[arg(long)]
    continuous: bool,
    #[arg(long)]
    weight_seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generating weights and latent scores.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
}

#[derive(Args)]
struct BiasArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    /// Binarize labels at this positive share first.
    #[arg(long)]
    positive_share: Option<f64>,
    #[arg(long, default_value_t = BiasParams::default().label_drop)]
    label_drop: f64,
    #[arg(long, default_value_t = BiasParams::default().row_drop)]
    row_drop: f64,
    #[arg(long, default_value_t = BiasParams::default().sample_drop)]
    sample_drop: f64,
    #[arg(long, default_value_t = SplitFractions::default().original)]
    original_fraction: f64,
    #[arg(long, default_value_t = SplitFractions::default().train)]
    train_fraction: f64,
    #[arg(long, default_value_t = SplitFractions::default().eval)]
    eval_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Oracle mode: also write the withheld labels to this file.
    #[arg(long)]
    write_vault: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    biased: PathBuf,
    #[command(flatten)]
    task: TaskArgs,
    /// TOML file with GAN settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    g_iters: Option<usize>,
    #[arg(long)]
    d_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    hidden_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    single_discriminator: bool,
    #[arg(long)]
    scale_features: bool,
    /// all, tabular or rich
    #[arg(long)]
    view: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    biased: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// expected or sampled
    #[arg(long, default_value = "expected")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generated labels as `id,label`.
    #[arg(long)]
    cf_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated subset of Uncorrected, IPW, Dragonnet, CA, Oracle.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    g_iters: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    write_datasets: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// A results.json file or the run directory containing it.
    #[arg(long)]
    results: PathBuf,
    /// plain, delimited or markup
    #[arg(long, default_value = "plain")]
    format: String,
}

/// Relative output paths resolve under the output root when it is set.
fn output_path(p: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() && p.is_relative() => PathBuf::from(root).join(p),
        _ => p.to_path_buf(),
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        }
        _ => Ok(()),
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(toml::from_str(&text)?)
}

fn parse_view(s: &str) -> Result<FeatureView> {
    match s {
        "all" => Ok(FeatureView::All),
        "tabular" => Ok(FeatureView::Tabular),
        "rich" => Ok(FeatureView::Rich),
        other => Err(Error::InvalidConfig(format!("unknown feature view '{other}'"))),
    }
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => SynthConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { cfg.$f = v; })* };
    }
    set!(n, d_tab, d_rich, noise_sd, positive_share, weight_seed, data_seed);
    cfg.continuous |= a.continuous;
    let (d, truth) = synth::generate_synthetic(&cfg)?;
    let out = output_path(&a.out);
    ensure_parent(&out)?;
    d.write_csv(&out)?;
    if let Some(p) = &a.ground_truth {
        let p = output_path(p);
        ensure_parent(&p)?;
        truth.write_json(&p)?;
    }
    eprintln!("wrote {} rows to {}", d.len(), out.display());
    Ok(())
}

fn bias_cmd(a: BiasArgs) -> Result<()> {
    let roles = ColumnRoles::standard_from_header(&a.data)?;
    let d = match a.positive_share {
        Some(p) => data::binarize_labels(&data::load_dataset(&a.data, &roles, TaskSpec::regression())?, p)?,
        None => data::load_dataset(&a.data, &roles, a.task.spec()?)?,
    };
    let task = d.task();
    let fractions = SplitFractions {
        original: a.original_fraction,
        train: a.train_fraction,
        eval: a.eval_fraction,
    };
    let splits = data::split_dataset(&d, fractions, seed::derive(a.seed, "split"))?;
    let recommender = bias::fit_tab_model(&splits.original, task, seed::derive(a.seed, "recommender"))?;
    let r = bias::predict_recs(&recommender, &splits.train_pool)?;
    let b = bias::induce_train_bias(&splits.train_pool, &r, a.label_drop, a.row_drop, seed::derive(a.seed, "mask"))?;
    let eval_biased =
        bias::make_biased_eval(&splits.eval, &recommender, a.sample_drop, seed::derive(a.seed, "biased-eval"))?;
    let dir = output_path(&a.out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    splits.original.write_csv(&dir.join("original.csv"))?;
    b.write_csv(&dir.join("biased_train.csv"))?;
    splits.eval.write_csv(&dir.join("eval.csv"))?;
    eval_biased.write_csv(&dir.join("eval_biased.csv"))?;
    if let Some(p) = &a.write_vault {
        let p = output_path(p);
        ensure_parent(&p)?;
        b.vault(OracleAccess::grant())
            .expect("fresh bias induction keeps its vault")
            .write_csv(&p)?;
    }
    let (r0, r1) = (b.condition_counts(false), b.condition_counts(true));
    eprintln!(
        "train rows {} (observed {}), r=0 observed {}/{}, r=1 observed {}/{}, biased eval rows {}",
        b.len(),
        b.n_observed(),
        r0.observed,
        r0.rows,
        r1.observed,
        r1.rows,
        eval_biased.len()
    );
    Ok(())
}

fn load_biased(path: &Path, task: TaskSpec) -> Result<BiasedTrainSet> {
    let roles = ColumnRoles::standard_from_header(path)?;
    BiasedTrainSet::read_csv(path, &roles, task, None)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let task = a.task.spec()?;
    let b = load_biased(&a.biased, task)?;
    let mut cfg: GanConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => GanConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { cfg.$f = v; })* };
    }
    set!(g_iters, d_steps, learning_rate, hidden_size, batch_size);
    if a.single_discriminator {
        cfg.separate_discriminators = false;
    }
    cfg.scale_features |= a.scale_features;
    if let Some(v) = &a.view {
        cfg.view = parse_view(v)?;
    }
    let m = gan::train_cgan(&b, &cfg, task, a.seed)?;
    let out = output_path(&a.out);
    ensure_parent(&out)?;
    m.save(&out)?;
    let last = m.telemetry.iterations.last().expect("trained model has iterations");
    eprintln!(
        "supervised loss {:.4}, final discriminator accuracy {:?}",
        last.supervised_loss, m.telemetry.final_discriminator_accuracy
    );
    Ok(())
}

fn augment_cmd(a: AugmentArgs) -> Result<()> {
    let m = CganModel::load(&a.model)?;
    let b = load_biased(&a.biased, m.task())?;
    let mode = match a.mode.as_str() {
        "expected" => GenerationMode::Expected,
        "sampled" => GenerationMode::Sampled,
        other => return Err(Error::InvalidConfig(format!("unknown generation mode '{other}'"))),
    };
    let cf: CfLabels = gan::generate_counterfactuals(&m, &b, a.seed, mode)?;
    let c = augment::augment(&b, &cf)?;
    let out = output_path(&a.out);
    ensure_parent(&out)?;
    c.write_csv(&out)?;
    if let Some(p) = &a.cf_out {
        let p = output_path(p);
        ensure_parent(&p)?;
        cf.write_csv(&p)?;
    }
    let (obs, generated) = c.mixture();
    eprintln!("{obs} observed and {generated} generated labels");
    Ok(())
}

/// `Ok(true)` when every method succeeded on every seed.
fn bench_cmd(a: BenchArgs) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = a.seeds {
        cfg.seeds = s;
    }
    if let Some(list) = a.methods {
        let chosen: Vec<Method> = list.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        cfg.methods.uncorrected = chosen.contains(&Method::Uncorrected);
        cfg.methods.ipw = chosen.contains(&Method::Ipw);
        cfg.methods.dragonnet = chosen.contains(&Method::Dragonnet);
        cfg.methods.ca = chosen.contains(&Method::Ca);
        cfg.methods.oracle = chosen.contains(&Method::Oracle);
    }
    if let Some(g) = a.g_iters {
        cfg.gan.g_iters = g;
    }
    if let Some(o) = a.output_dir {
        cfg.output_dir = o;
    }
    cfg.write_datasets |= a.write_datasets;
    let out = cfg.resolved_output_dir();
    let result = experiment::run_experiment_in(&cfg, &out, |msg| eprintln!("{msg}"))?;
    print!("{}", experiment::render_tables(&result, TableFormat::Plain)?);
    eprintln!("results in {}", out.display());
    Ok(result.is_complete())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let path = if a.results.is_dir() {
        a.results.join("results.json")
    } else {
        a.results.clone()
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let result = experiment::ExperimentResult::from_json(&text)?;
    let format: TableFormat = a.format.parse()?;
    print!("{}", experiment::render_tables(&result, format)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => synth_cmd(a).map(|_| true),
        Command::Bias(a) => bias_cmd(a).map(|_| true),
        Command::TrainCgan(a) => train_cmd(a).map(|_| true),
        Command::Augment(a) => augment_cmd(a).map(|_| true),
        Command::Bench(a) => bench_cmd(a),
        Command::Report(a) => report_cmd(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some methods failed; see failures in results.json");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
