use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kinn_core::experiments::read_results;
use kinn_core::expert::{simulate_arma, ExpertModel};
use kinn_core::nn::TrainReport;
use kinn_core::timeseries::write_csv;

const TINY: &str = r#"
[dataset.synthetic]
length = 1200

[network]
widths = [4]
epochs = 3
batch_size = 64
"#;

fn kinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinn")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = kinn(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    out
}

#[test]
fn synth_writes_seeded_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[dataset.synthetic]\nlength = 500\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["synth", "--config", cfg.to_str().unwrap(), "--out-dir", a.to_str().unwrap()]);
    run_ok(&["synth", "--config", cfg.to_str().unwrap(), "--out-dir", b.to_str().unwrap()]);
    let first = fs::read(a.join("synthetic.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("synthetic.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn synth_flat_spec_is_all_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[dataset.synthetic]\nlength = 50\namplitude = 0.0\nnoise_std = 0.0\n",
    );
    let out = tmp.path().join("o");
    run_ok(&["synth", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    let text = fs::read_to_string(out.join("synthetic.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.rsplit(',').next().unwrap(), "0");
    }
}

fn ar1_config(dir: &Path, split: &str) -> PathBuf {
    let ts = simulate_arma(&[0.8], &[], 0.0, 2000, 1.0, 42).unwrap();
    let csv = dir.join("ar1.csv");
    write_csv(&ts, &csv).unwrap();
    write_config(
        dir,
        &format!(
            "[dataset]\nsource = \"csv\"\npath = \"{}\"\nbucket_secs = 1\n\n[split]\n{split}\n\n[expert.orders]\np = 1\nd = 0\nq = 0\nP = 0\nD = 0\nQ = 0\ns = 1\n",
            csv.display()
        ),
    )
}

#[test]
fn fit_expert_recovers_ar1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ar1_config(tmp.path(), "train = 0.8\nval = 0.1\ntest = 0.1");
    let out = tmp.path().join("o");
    run_ok(&["fit-expert", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    let model = ExpertModel::load_json(out.join("expert.json")).unwrap();
    let ExpertModel::Sarima(sarima) = &model else {
        panic!("expected a plain SARIMA expert, got {model:?}");
    };
    assert!((0.75..=0.85).contains(&sarima.ar[0]), "{}", sarima.ar[0]);
    assert!(sarima.fit_metadata.converged);

    // Reloading and saving again reproduces the file.
    let again = tmp.path().join("again.json");
    model.save_json(&again).unwrap();
    assert_eq!(fs::read(out.join("expert.json")).unwrap(), fs::read(again).unwrap());

    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("expert-fit.json")).unwrap()).unwrap();
    assert_eq!(diag["converged"], true);

    let capped = tmp.path().join("capped");
    run_ok(&[
        "fit-expert",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        capped.to_str().unwrap(),
        "--max-iterations",
        "1",
    ]);
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(capped.join("expert-fit.json")).unwrap()).unwrap();
    assert_eq!(diag["converged"], false);
}

#[test]
fn bad_split_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ar1_config(tmp.path(), "train = 1.0\nval = 0.0\ntest = 0.0");
    let out = kinn(&["fit-expert", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn train_kinn_requires_expert() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = kinn(&[
        "train",
        "--model",
        "kinn",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("missing dependency"), "{}", stderr(&out));
}

fn read_report(path: &Path) -> TrainReport {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_both_models_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    run_ok(&["fit-expert", "--config", cfg, "--out-dir", out]);
    for model in ["nn", "kinn"] {
        run_ok(&["train", "--model", model, "--config", cfg, "--out-dir", out]);
        let path = Path::new(out).join(model).join("train-report.json");
        let first = read_report(&path);
        assert_eq!(first.val_loss.len(), 3);
        let min = first.val_loss.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(first.best_val_loss, min);
        assert!(Path::new(out).join(model).join("network.ckpt").is_file());
        run_ok(&["train", "--model", model, "--config", cfg, "--out-dir", out]);
        assert_eq!(read_report(&path), first);
    }
}

#[test]
fn experiment_five_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    run_ok(&["experiment", "--id", "5", "--config", cfg.to_str().unwrap(), "--out-dir", o]);
    let results = read_results(&out).unwrap();
    let labels: Vec<_> = results.results.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["5a", "5b"]);

    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "experiment,description,train_data_percent,mse_nn,mse_expert,mse_kinn");
    assert_eq!(csv.lines().count(), 3);
    assert!(out.join("predictions-5a.csv").is_file());

    for f in ["predictions-5a.svg", "errors-5a.svg", "predictions-5b.svg", "errors-5b.svg"] {
        fs::remove_file(out.join(f)).unwrap();
    }
    let rep = run_ok(&["report", o]);
    let stdout = String::from_utf8(rep.stdout).unwrap();
    let columns: Vec<&str> = stdout.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(columns, header.split(',').collect::<Vec<_>>());
    let svgs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert_eq!(svgs, 4);
}

#[test]
fn experiment_all_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        run_ok(&["experiment", "--all", "--config", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    }
    let ja = fs::read(a.join("results.json")).unwrap();
    assert_eq!(ja, fs::read(b.join("results.json")).unwrap());
    let results = read_results(&a).unwrap();
    assert_eq!(results.results.len(), 7);
    assert!(results.failures.is_empty());
}

#[test]
fn report_without_results_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = kinn(&["report", tmp.path().to_str().unwrap()]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains("results.json"));
}

#[test]
fn config_errors_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[network]\nwidth = [3]\n");
    assert_eq!(code(&kinn(&["synth", "--config", cfg.to_str().unwrap()])), 1);
    assert_eq!(code(&kinn(&["no-such-command"])), 1);
    assert_eq!(code(&kinn(&["experiment"])), 1);
}

#[test]
fn missing_inputs_are_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.toml");
    assert_eq!(code(&kinn(&["synth", "--config", missing.to_str().unwrap()])), 3);
    let cfg = write_config(tmp.path(), "[dataset]\nsource = \"csv\"\npath = \"/nonexistent/flow.csv\"\n");
    assert_eq!(code(&kinn(&["fit-expert", "--config", cfg.to_str().unwrap()])), 3);
}

#[test]
fn unwritable_output_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = kinn(&["synth", "--out-dir", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
