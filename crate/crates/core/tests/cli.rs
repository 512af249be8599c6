use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cfaug(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfaug"))
        .current_dir(dir)
        .env_remove("CFAUG_OUTPUT_ROOT")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_bias_train_augment_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(cfaug(d, &["synth", "--n", "1200", "--d-tab", "4", "--d-rich", "3", "--out", "data.csv"]));
    let text = fs::read_to_string(d.join("data.csv")).unwrap();
    assert_eq!(text.lines().count(), 1201);

    ok(cfaug(d, &["bias", "--data", "data.csv", "--out-dir", "b", "--seed", "3"]));
    for f in ["original.csv", "biased_train.csv", "eval.csv", "eval_biased.csv"] {
        assert!(d.join("b").join(f).is_file(), "{f}");
    }
    assert!(!d.join("b").join("vault.csv").exists());

    ok(cfaug(
        d,
        &["train-cgan", "--biased", "b/biased_train.csv", "--g-iters", "10", "--hidden-size", "8", "--out", "gan.json"],
    ));
    ok(cfaug(
        d,
        &["augment", "--biased", "b/biased_train.csv", "--model", "gan.json", "--out", "corrected.csv", "--cf-out", "cf.csv"],
    ));
    let corrected = fs::read_to_string(d.join("corrected.csv")).unwrap();
    let biased = fs::read_to_string(d.join("b/biased_train.csv")).unwrap();
    assert_eq!(corrected.lines().count(), biased.lines().count());
    let cf = fs::read_to_string(d.join("cf.csv")).unwrap();
    assert!(cf.starts_with("id,label"));
}

#[test]
fn bench_report_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("exp.toml"),
        "name = \"cli\"\nseeds = [0]\n[data]\nsource = \"synthetic\"\nn = 1500\n[methods]\ndragonnet = false\n[gan]\ng_iters = 5\n",
    )
    .unwrap();
    ok(cfaug(d, &["bench", "--config", "exp.toml", "--output-dir", "out", "--methods", "Uncorrected,CA"]));
    assert!(d.join("out/results.json").is_file());
    let table = ok(cfaug(d, &["report", "--results", "out", "--format", "markup"]));
    assert!(table.contains("| CA |") && table.contains("| Uncorrected |"));
    assert!(!table.contains("IPW"));

    let out = cfaug(d, &["report", "--results", "out", "--format", "html"]);
    assert_eq!(out.status.code(), Some(1));
    let out = cfaug(d, &["bench", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn output_root_redirects_bench() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("exp.toml"),
        "name = \"rooted\"\nseeds = [1]\n[data]\nsource = \"synthetic\"\nn = 1000\n[methods]\ndragonnet = false\nca = false\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_cfaug"))
        .current_dir(d)
        .env("CFAUG_OUTPUT_ROOT", d.join("root"))
        .args(["bench", "--config", "exp.toml"])
        .output()
        .unwrap();
    ok(out);
    assert!(d.join("root/rooted/results.json").is_file());
    assert!(!d.join("runs").exists());
}
