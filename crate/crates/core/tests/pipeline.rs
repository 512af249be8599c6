use cfaug::experiment::{
    self, parse_delimited, render_tables, DataSource, EvalSplit, ExperimentConfig, ExperimentResult, Method, TableFormat,
};
use cfaug::gan::GanConfig;
use cfaug::synth::SynthConfig;

fn config(continuous: bool) -> ExperimentConfig {
    ExperimentConfig {
        name: "pipeline".into(),
        data: Some(DataSource::Synthetic(SynthConfig { n: 1500, continuous, ..Default::default() })),
        gan: GanConfig { g_iters: 10, hidden_size: 16, ..Default::default() },
        seeds: vec![3, 4],
        ..Default::default()
    }
}

#[test]
fn config_toml_round_trip() {
    let cfg = config(false);
    let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert!(ExperimentConfig::from_toml("nmae = \"typo\"").is_err());
    assert!(ExperimentConfig::default().validate().is_err());
}

#[test]
fn binary_run_with_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let r = experiment::run_experiment_in(&config(false), tmp.path(), |_| {}).unwrap();
    assert!(r.is_complete(), "{:?}", r.failures);
    assert_eq!(r.runs.len(), 2 * Method::ALL.len() * 2);
    for m in Method::ALL {
        for split in [EvalSplit::Unbiased, EvalSplit::Biased] {
            let f1 = r.mean(m, split, "F1_min").unwrap();
            assert!((0.0..=1.0).contains(&f1));
        }
    }

    let back = ExperimentResult::from_json(&std::fs::read_to_string(tmp.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(back, r);
    let entries = parse_delimited(&render_tables(&r, TableFormat::Delimited).unwrap()).unwrap();
    let ca = entries
        .iter()
        .find(|e| e.row == "CA" && e.metric == "F1_min" && e.split == EvalSplit::Unbiased)
        .unwrap();
    let mean = r.mean(Method::Ca, EvalSplit::Unbiased, "F1_min").unwrap();
    assert!((ca.value - mean).abs() < 1e-9);

    assert!(tmp.path().join("seed-3/counterfactual.json").is_file());
    assert!(!experiment::vault_hygiene_scan(tmp.path()).unwrap().is_empty());
}

#[test]
fn regression_run_without_oracle_is_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(true);
    cfg.methods.oracle = false;
    cfg.methods.dragonnet = false;
    let r = experiment::run_experiment_in(&cfg, tmp.path(), |_| {}).unwrap();
    assert!(r.is_complete(), "{:?}", r.failures);
    let nrmse = r.mean(Method::Ca, EvalSplit::Unbiased, "NRMSE").unwrap();
    assert!(nrmse.is_finite() && nrmse > 0.0);
    assert!(r.aggregate(Method::Oracle, EvalSplit::Unbiased).is_none());
    assert!(!tmp.path().join("seed-3/counterfactual.json").exists());
    assert_eq!(experiment::vault_hygiene_scan(tmp.path()).unwrap(), vec![]);
}

#[test]
fn readme_config_parses() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    let cfg = ExperimentConfig::from_toml(block).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
    assert!(!cfg.methods.oracle);
}
