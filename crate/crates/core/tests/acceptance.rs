//! End-to-end acceptance criteria. Each test writes one `criterion N: PASS|FAIL`
//! line to stderr (uncaptured) and then asserts.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use cfaug::analysis::{DistReport, DistSource};
use cfaug::bias::{self, BiasedRow, BiasedTrainSet, OracleAccess, Vault};
use cfaug::data::{FeatureSchema, FeatureView, TaskSpec};
use cfaug::experiment::{self, DataSource, EvalSplit, ExperimentConfig, ExperimentResult, Method};
use cfaug::gan::{self, GanConfig, GenerationMode};
use cfaug::metrics;
use cfaug::synth::{self, SynthConfig};
use cfaug::task::{self, TaskModel, TaskOptions};
use cfaug::train::TrainConfig;
use cfaug::{baselines, data, seed};
use rand::Rng;

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n}: {verdict} {detail}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

fn tv(a: &[u64], b: &[u64]) -> f64 {
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    a.iter().zip(b).map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs()).sum::<f64>() / 2.0
}

#[test]
fn criterion_1_bias_induction_rates() {
    let start = Instant::now();
    let (d, _) = synth::generate_synthetic(&SynthConfig { n: 20_000, ..Default::default() }).unwrap();
    let tab = bias::fit_tab_model(&d, d.task(), 11).unwrap();
    let r = bias::predict_recs(&tab, &d).unwrap();
    let b = bias::induce_train_bias(&d, &r, 0.9, 0.35, 12).unwrap();
    let elapsed = start.elapsed();
    let c0 = b.condition_counts(false);
    let c1 = b.condition_counts(true);
    let f0 = c0.observed as f64 / c0.rows as f64;
    let f1 = c1.observed as f64 / c1.rows as f64;
    let kept = b.len() as f64 / d.len() as f64;
    let pass = (0.08..=0.12).contains(&f0) && f1 == 1.0 && (0.63..=0.67).contains(&kept) && elapsed < Duration::from_secs(10);
    report(
        1,
        pass,
        &format!("r=0 observed {f0:.4}, r=1 observed {f1}, retention {kept:.4}, {:.2}s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

/// Five-seed tabular-only synthetic benchmark shared by criteria 2 through 5.
struct Bench {
    result: ExperimentResult,
    dir: PathBuf,
    elapsed: Duration,
    _tmp: tempfile::TempDir,
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("bench");
        let cfg = ExperimentConfig {
            name: "acceptance".into(),
            data: Some(DataSource::Synthetic(SynthConfig::default())),
            gan: GanConfig { view: FeatureView::Tabular, ..Default::default() },
            model: TaskOptions { view: FeatureView::Tabular, ..Default::default() },
            dragonnet: baselines::DragonnetConfig { view: FeatureView::Tabular, ..Default::default() },
            seeds: (0..5).collect(),
            ..Default::default()
        };
        let start = Instant::now();
        let result = experiment::run_experiment_in(&cfg, &dir, |_| {}).unwrap();
        Bench {
            result,
            dir,
            elapsed: start.elapsed(),
            _tmp: tmp,
        }
    })
}

fn seed_report(b: &Bench, seed: u64, stem: &str) -> DistReport {
    let path = b.dir.join(format!("seed-{seed}")).join(format!("{stem}.json"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn counts(r: &DistReport, source: DistSource) -> Vec<u64> {
    r.get(source).unwrap().counts.clone()
}

#[test]
fn criterion_2_directional_reproduction() {
    let b = bench();
    assert!(b.result.is_complete(), "{:?}", b.result.failures);
    let mean = |m| b.result.mean(m, EvalSplit::Unbiased, "F1_min").unwrap() * 100.0;
    let (un, ipw, ca) = (mean(Method::Uncorrected), mean(Method::Ipw), mean(Method::Ca));
    let pass = ca - un >= 15.0 && ca >= ipw - 2.0 && b.elapsed < Duration::from_secs(15 * 60);
    report(
        2,
        pass,
        &format!(
            "minority F1 Uncorrected {un:.1}, IPW {ipw:.1}, CA {ca:.1} (CA-Uncorrected {:+.1}, need >= 15; CA-IPW {:+.1}, need >= -2), {:.0}s",
            ca - un,
            ca - ipw,
            b.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_oracle_gap() {
    let b = bench();
    let mean = |m| b.result.mean(m, EvalSplit::Unbiased, "F1_mac").unwrap() * 100.0;
    let (ca, oracle) = (mean(Method::Ca), mean(Method::Oracle));
    let pass = (ca - oracle).abs() <= 12.0;
    report(3, pass, &format!("macro F1 CA {ca:.1}, Oracle {oracle:.1}"));
    assert!(pass);
}

/// Trains the default GAN on one biased synthetic training set and returns
/// (TV distance, per-row agreement) of the generated labels against the vault.
fn fidelity_run(noise_sd: f64, seed: u64) -> (f64, f64) {
    let sc = SynthConfig { noise_sd, ..Default::default() };
    let (d, _) = synth::generate_synthetic(&sc).unwrap();
    let task = d.task();
    let splits = data::split_dataset(&d, Default::default(), seed).unwrap();
    let tab = bias::fit_tab_model(&splits.original, task, seed + 1).unwrap();
    let r = bias::predict_recs(&tab, &splits.train_pool).unwrap();
    let biased = bias::induce_train_bias(&splits.train_pool, &r, 0.9, 0.35, seed + 2).unwrap();
    let m = gan::train_cgan(&biased, &GanConfig::default(), task, seed + 3).unwrap();
    let cf = gan::generate_counterfactuals(&m, &biased, seed + 4, GenerationMode::Expected).unwrap();
    let vault = biased.vault(OracleAccess::grant()).unwrap();
    let agree = vault.iter().filter(|&(id, y)| cf.get(id) == Some(y)).count() as f64 / vault.len() as f64;
    let hist = |labels: &mut dyn Iterator<Item = f64>| {
        let mut h = vec![0u64; 2];
        labels.for_each(|y| h[y as usize] += 1);
        h
    };
    let generated = hist(&mut cf.labels.values().copied());
    let withheld = hist(&mut vault.iter().map(|(_, y)| y));
    (tv(&generated, &withheld), agree)
}

#[test]
fn criterion_4_counterfactual_fidelity() {
    let (distance, _) = fidelity_run(SynthConfig::default().noise_sd, 20);
    let (_, agree) = fidelity_run(0.0, 30);
    let pass = distance <= 0.15 && agree >= 0.90;
    report(4, pass, &format!("TV to withheld labels {distance:.4}, noise-free agreement {agree:.4}"));
    assert!(pass);
}

#[test]
fn criterion_5_label_balance() {
    let b = bench();
    let mut detail = Vec::new();
    let mut pass = true;
    for &s in &b.result.seeds {
        let r = seed_report(b, s, "label_balance");
        let h_ca = entropy(&counts(&r, DistSource::Corrected));
        let h_obs = entropy(&counts(&r, DistSource::Observed));
        pass &= h_ca >= h_obs;
        detail.push(format!("seed {s} {h_ca:.3}>={h_obs:.3}"));
    }
    report(5, pass, &format!("entropy CA vs observed: {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_6_ipw_mean() {
    let (d, _) = synth::generate_synthetic(&SynthConfig::default()).unwrap();
    let task = d.task();
    let splits = data::split_dataset(&d, Default::default(), 31).unwrap();
    let tab = bias::fit_tab_model(&splits.original, task, 32).unwrap();
    let r = bias::predict_recs(&tab, &splits.train_pool).unwrap();
    let b = bias::induce_train_bias(&splits.train_pool, &r, 0.9, 0.35, 33).unwrap();
    let p = baselines::estimate_propensities(&b, 0.01).unwrap();
    let ipw = baselines::ipw_mean(&b, &p).unwrap();
    let full = b.restored(OracleAccess::grant()).unwrap().labels();
    let truth = full.iter().sum::<f64>() / full.len() as f64;
    let naive = b.rows().iter().filter_map(|r| r.label).sum::<f64>() / b.n_observed() as f64;
    let pass = b.len() >= 2000 && (ipw - truth).abs() <= 0.03;
    report(
        6,
        pass,
        &format!("{} rows, IPW mean {ipw:.4}, full mean {truth:.4}, unweighted observed {naive:.4}", b.len()),
    );
    assert!(pass);
}

fn small_biased(n: usize) -> (data::Dataset, BiasedTrainSet) {
    let sc = SynthConfig { n, d_tab: 4, d_rich: 3, ..Default::default() };
    let (d, _) = synth::generate_synthetic(&sc).unwrap();
    let tab = bias::fit_tab_model(&d, d.task(), 41).unwrap();
    let r = bias::predict_recs(&tab, &d).unwrap();
    let b = bias::induce_train_bias(&d, &r, 0.9, 0.35, 42).unwrap();
    (d, b)
}

#[test]
fn criterion_7_gradient_checks() {
    let (d, b) = small_biased(600);
    let task = d.task();
    let mut results = BTreeMap::new();

    let small_gan = GanConfig { hidden_size: 12, g_iters: 10, d_steps: 2, batch_size: 32, ..Default::default() };
    for separate in [true, false] {
        let cfg = GanConfig { separate_discriminators: separate, ..small_gan.clone() };
        let m = gan::train_cgan(&b, &cfg, task, 43).unwrap();
        let name = if separate { "cgan (two discriminators)" } else { "cgan (one discriminator)" };
        results.insert(name, gan::gradient_check(&m, &b, 8, 1e-5, 44).unwrap());
    }

    let opts = TaskOptions {
        train: TrainConfig { hidden: 10, epochs: 1, ..Default::default() },
        view: FeatureView::All,
    };
    let net = match task::train_task_model(&d, task, &opts, 45, None).unwrap() {
        TaskModel::Network(n) => n,
        TaskModel::Dragonnet(_) => unreachable!(),
    };
    results.insert("task network", task::network_gradient_check(&net, &d, None, 8, 1e-5, 46).unwrap());
    let weights: Vec<f64> = (0..d.len()).map(|i| 0.5 + (i % 7) as f64).collect();
    results.insert(
        "task network (weighted)",
        task::network_gradient_check(&net, &d, Some(&weights), 8, 1e-5, 47).unwrap(),
    );

    let (dr, _) = synth::generate_synthetic(&SynthConfig { n: 400, d_tab: 3, d_rich: 2, continuous: true, ..Default::default() }).unwrap();
    let reg = match task::train_task_model(&dr, dr.task(), &opts, 48, None).unwrap() {
        TaskModel::Network(n) => n,
        TaskModel::Dragonnet(_) => unreachable!(),
    };
    results.insert("task network (regression)", task::network_gradient_check(&reg, &dr, None, 8, 1e-5, 49).unwrap());

    let dcfg = baselines::DragonnetConfig { trunk_width: 10, head_width: 6, epochs: 1, ..Default::default() };
    let dn = match baselines::train_dragonnet(&b, task, &dcfg, 50).unwrap() {
        TaskModel::Dragonnet(m) => m,
        TaskModel::Network(_) => unreachable!(),
    };
    results.insert("dragonnet", baselines::dragonnet_gradient_check(&dn, &b, 8, 1e-5, 51).unwrap());

    let pass = results.values().all(|g| g.max_rel_error < 1e-4 && g.non_finite == 0 && g.checked > 0);
    let detail: Vec<String> = results
        .iter()
        .map(|(k, g)| format!("{k} {:.2e} ({} params)", g.max_rel_error, g.checked))
        .collect();
    report(7, pass, &format!("max relative error: {}", detail.join(", ")));
    assert!(pass, "{results:?}");
}

/// Per-class F1 by direct counting over rows.
fn brute_classification(truth: &[usize], pred: &[usize], classes: usize, minority: usize) -> [f64; 4] {
    let n = truth.len();
    let mut f1 = Vec::new();
    let mut support = Vec::new();
    for c in 0..classes {
        let (mut tp, mut fp, mut fn_) = (0u32, 0u32, 0u32);
        for i in 0..n {
            match (truth[i] == c, pred[i] == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        f1.push(if denom == 0 { 0.0 } else { f64::from(2 * tp) / f64::from(denom) });
        support.push((0..n).filter(|&i| truth[i] == c).count() as f64);
    }
    let correct = (0..n).filter(|&i| truth[i] == pred[i]).count() as f64;
    let weighted = f1.iter().zip(&support).map(|(f, s)| f * s).sum::<f64>() / n as f64;
    [correct / n as f64, weighted, f1.iter().sum::<f64>() / classes as f64, f1[minority]]
}

fn brute_regression(truth: &[f64], pred: &[f64]) -> [f64; 2] {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for (y, p) in truth.iter().zip(pred) {
        ss_tot += (y - mean) * (y - mean);
        ss_res += (y - p) * (y - p);
    }
    [1.0 - ss_res / ss_tot, (ss_res / ss_tot).sqrt()]
}

#[test]
fn criterion_8_metric_oracle() {
    let mut rng = seed::rng(61);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=50);
        let classes = rng.gen_range(2..=5);
        let minority = rng.gen_range(0..classes);
        let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let pf: Vec<f64> = p.iter().map(|&v| v as f64).collect();
        let got = metrics::classification_metrics(&tf, &pf, classes, minority).unwrap();
        if [got.accuracy, got.f1, got.f1_macro, got.f1_minority] != brute_classification(&t, &p, classes, minority) {
            mismatches += 1;
        }

        let n = rng.gen_range(2..=50);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let yhat: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let got = metrics::regression_metrics(&y, &yhat).unwrap();
        if [got.r2, got.nrmse] != brute_regression(&y, &yhat) {
            mismatches += 1;
        }
    }

    let mut mean_ok = true;
    for _ in 0..20 {
        let n = rng.gen_range(2..=50);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let mean = y.iter().sum::<f64>() / n as f64;
        let got = metrics::regression_metrics(&y, &vec![mean; n]).unwrap();
        mean_ok &= got.nrmse == 1.0 && got.r2 == 0.0;
    }
    let pass = mismatches == 0 && mean_ok;
    report(
        8,
        pass,
        &format!("{mismatches} mismatches over 100 classification and 100 regression instances, mean predictor exact: {mean_ok}"),
    );
    assert!(pass);
}

#[test]
fn criterion_9_null_equilibrium() {
    let mut rng = seed::rng(71);
    let mut rows = Vec::new();
    let mut vault = BTreeMap::new();
    for id in 0..4000u64 {
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = if rng.gen::<bool>() { 1.0 } else { 0.0 };
        let r = rng.gen::<bool>();
        let hidden = rng.gen::<f64>() < 0.5;
        if hidden {
            vault.insert(id, y);
        }
        rows.push(BiasedRow { id, x, w: vec![], r, label: (!hidden).then_some(y) });
    }
    let task = TaskSpec::binary(0);
    let b = BiasedTrainSet::from_parts(rows, task, FeatureSchema { d_tab: 8, d_rich: 0 }, Some(Vault::from_map(vault))).unwrap();
    let m = gan::train_cgan(&b, &GanConfig::default(), task, 72).unwrap();
    let acc = &m.telemetry.final_discriminator_accuracy;
    let pass = acc.len() == 2 && acc.iter().all(|a| (0.40..=0.60).contains(a));
    report(9, pass, &format!("final discriminator accuracy per condition {acc:?}"));
    assert!(pass);
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_10_determinism_and_hygiene() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        name: "determinism".into(),
        data: Some(DataSource::Synthetic(SynthConfig { n: 3000, ..Default::default() })),
        gan: GanConfig { g_iters: 60, ..Default::default() },
        seeds: vec![0, 1],
        write_datasets: true,
        ..Default::default()
    };
    cfg.methods.oracle = false;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    experiment::run_experiment_in(&cfg, &a, |_| {}).unwrap();
    experiment::run_experiment_in(&cfg, &b, |_| {}).unwrap();
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let identical = sa == sb;
    let flagged = experiment::vault_hygiene_scan(&a).unwrap();
    let pass = identical && flagged.is_empty() && sa.len() > 5;
    report(
        10,
        pass,
        &format!("{} files byte-identical: {identical}, hygiene findings: {}", sa.len(), flagged.len()),
    );
    assert!(pass, "{flagged:?}");
}
