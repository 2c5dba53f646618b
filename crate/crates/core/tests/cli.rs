use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quantile_surrogate::cli::{evaluate_metric, ConcentrationJob, MetricSpec, ModelFile};
use quantile_surrogate::concentration::{estimator_stability, ScoreLaw, StabilitySpec, UniformDeviationSpec};
use quantile_surrogate::data::{load_delimited, DelimitedOptions, SyntheticSpec};
use quantile_surrogate::experiment::DataSource;
use quantile_surrogate::{LinearModel, QuantileEstimatorSpec, SurrogateLossSpec};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quantile-surrogate"))
}

fn run(args: &[&str]) -> Output {
    bin().arg("--quiet").args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

/// Two overlapping Gaussian-ish blobs on a fixed lattice, label last.
fn write_toy_csv(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for i in 0..80 {
        let t = i as f64 / 80.0;
        let label = if i % 4 == 0 { 1 } else { -1 };
        let shift = if label == 1 { 1.0 } else { 0.0 };
        let x1 = (7.0 * t).sin() + shift;
        let x2 = (3.0 * t).cos() + 0.5 * shift;
        text.push_str(&format!("{x1},{x2},{label}\n"));
    }
    let path = dir.join("toy.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn write_train_config(dir: &Path) -> PathBuf {
    let config = r#"{
        "loss": {
            "objective": {"kind": "precision_at_recall"},
            "constraint": {"subset": "positives", "direction": "at_least", "target": 0.8},
            "estimator": {"kind": "kernel", "bandwidth": 0.1}
        },
        "train": {"steps": 200, "restarts": 2, "seed": 3, "init_scale": 0.5}
    }"#;
    let path = dir.join("train.json");
    std::fs::write(&path, config).unwrap();
    path
}

#[test]
fn train_writes_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy_csv(dir.path());
    let config = write_train_config(dir.path());
    let model = dir.path().join("model.json");
    let out = run(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(file["weights"].as_array().unwrap().len(), 2);
    assert!(file["threshold"].as_f64().unwrap().is_finite());
    assert!(file["final_train_loss"].as_f64().unwrap().is_finite());
    assert!(file["restart_index"].as_u64().unwrap() < 2);

    // The stored threshold meets the recall constraint on the training data.
    let parsed: ModelFile = serde_json::from_value(file).unwrap();
    let ds = load_delimited(&data, &DelimitedOptions::default()).unwrap();
    let m = LinearModel::new(parsed.weights).with_threshold(parsed.threshold);
    let report = quantile_surrogate::metrics::evaluate(&m, &ds).unwrap();
    assert!(report.recall >= 0.8 - 1e-12);
}

#[test]
fn train_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy_csv(dir.path());
    let config = write_train_config(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        assert!(run(&["train", "--config", p(&config), "--data", p(&data), "--out", p(out)]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let c = dir.path().join("c.json");
    run(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&c), "--seed", "99"]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn missing_data_reports_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_train_config(dir.path());
    let missing = dir.path().join("nope.csv");
    let out = run(&["train", "--config", p(&config), "--data", p(&missing), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["error"]["kind"], "io");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&["train"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

fn separable_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("sep.csv");
    std::fs::write(&data, "0.1,-1\n0.3,-1\n0.2,-1\n0.4,-1\n0.5,-1\n0.6,-1\n1.1,1\n1.4,1\n1.2,1\n1.3,1\n").unwrap();
    let model = dir.join("sep_model.json");
    let file = serde_json::json!({
        "weights": [1.0],
        "threshold": 0.8,
        "final_train_loss": 0.0,
        "loss_trace": [],
        "restart_index": 0,
        "seed_used": 0,
        "config": {"loss": serde_json::to_value(
            SurrogateLossSpec::precision_at_recall(0.9, QuantileEstimatorSpec::Point).unwrap()).unwrap()}
    });
    std::fs::write(&model, file.to_string()).unwrap();
    (data, model)
}

#[test]
fn eval_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = separable_fixture(dir.path());
    let out = run(&["eval", "--model", p(&model), "--data", p(&data), "--metric", "p_at_recall:0.9"]);
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v["metric"], "p_at_recall");
    assert_eq!(v["value"], 1.0);
    assert_eq!(v["report"]["tp"], 4);
    assert_eq!(v["report"]["fp"], 0);

    let out = run(&["eval", "--model", p(&model), "--data", p(&data), "--metric", "pr_auc:10"]);
    assert_eq!(stdout_json(&out)["value"], 1.0);
}

#[test]
fn eval_rejects_rate_above_one() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = separable_fixture(dir.path());
    let out = run(&["eval", "--model", p(&model), "--data", p(&data), "--metric", "p_at_rate:1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["error"]["kind"], "config");
}

#[test]
fn eval_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_toy_csv(dir.path());
    let model = dir.path().join("model.json");
    let config = write_train_config(dir.path());
    run(&["train", "--config", p(&config), "--data", p(&data), "--out", p(&model)]);
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let ds = load_delimited(&data, &DelimitedOptions::default()).unwrap();
    let m = LinearModel::new(file.weights).with_threshold(file.threshold);
    for (arg, spec) in [
        ("p_at_rate:0.25", MetricSpec::PAtRate { tau: 0.25 }),
        ("p_at_recall:0.75", MetricSpec::PAtRecall { recall: 0.75 }),
        ("pr_auc:20", MetricSpec::PrAuc { cells: 20 }),
    ] {
        let out = run(&["eval", "--model", p(&model), "--data", p(&data), "--metric", arg]);
        let expected = evaluate_metric(&m, &ds, &spec).unwrap().value;
        assert_eq!(stdout_json(&out)["value"].as_f64().unwrap(), expected, "{arg}");
    }
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn concentration_full_subsample_has_zero_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let job = ConcentrationJob::EstimatorStability(StabilitySpec {
        population: 1000,
        batch_sizes: vec![1000],
        trials: 20,
        estimator: QuantileEstimatorSpec::kernel(0.05),
        level: 0.5,
        score_law: ScoreLaw::Uniform,
        seed: 4,
    });
    let config = dir.path().join("job.json");
    std::fs::write(&config, serde_json::to_string(&job).unwrap()).unwrap();
    let out_path = dir.path().join("report.json");
    assert!(run(&["concentration", "--config", p(&config), "--out", p(&out_path)]).status.success());
    let rows = read_csv(&out_path.with_extension("csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "1000");
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn concentration_default_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("default.json");
    assert!(run(&["concentration", "--out", p(&out_path)]).status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let slope = v["fitted_slope"].as_f64().unwrap();
    assert!(slope.is_finite());
    let ConcentrationJob::EstimatorStability(spec) = ConcentrationJob::default() else {
        unreachable!()
    };
    assert_eq!(estimator_stability(&spec).unwrap().fitted_slope, Some(slope));
}

#[test]
fn concentration_accepts_handwritten_loss_job() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("loss.json");
    std::fs::write(
        &config,
        r#"{
            "kind": "loss_uniform_deviation",
            "data": {"kind": "synthetic", "spec": {"n": 2000, "seed": 1}},
            "loss": {
                "objective": {"kind": "precision_at_rate_fp"},
                "constraint": {"subset": "all", "direction": "at_least", "target": 0.1},
                "estimator": {"kind": "lower_mean"}
            },
            "batch_sizes": [100, 400, 1600],
            "trials": 20,
            "w_norm_bound": 5.0,
            "n_models": 10,
            "seed": 2
        }"#,
    )
    .unwrap();
    let parsed: ConcentrationJob = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    let ConcentrationJob::LossUniformDeviation { data, spec } = &parsed else {
        panic!("wrong variant: {parsed:?}")
    };
    assert_eq!(spec.trials, 20);
    assert!(matches!(data, DataSource::Synthetic { spec: SyntheticSpec { n: 2000, .. }, .. }));
    let expected = UniformDeviationSpec { seed: 2, ..spec.clone() };
    assert_eq!(spec, &expected);

    let out_path = dir.path().join("loss_report.json");
    let out = run(&["concentration", "--config", p(&config), "--out", p(&out_path)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(read_csv(&out_path.with_extension("csv")).len(), 3);
}

#[test]
fn synthetic_experiment_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["experiment", "synthetic", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rows = read_csv(&dir.path().join("summary.csv"));
    let methods: Vec<&str> = rows.iter().filter(|r| r[0] == "computed").map(|r| r[1].as_str()).collect();
    assert!(methods.contains(&"logistic+threshold"));
    assert!(methods.contains(&"quantile"));
    assert!(!read_csv(&dir.path().join("pr_points.csv")).is_empty());
    let record: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("record.json")).unwrap()).unwrap();
    assert_eq!(record["rng_algorithm"], "chacha8");
}

#[test]
fn short_ionosphere_experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["experiment", "ionosphere", "--repetitions", "2", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    }
    for file in ["record.json", "summary.csv", "pr_points.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let rows = read_csv(&a.join("summary.csv"));
    let q3 = rows.iter().filter(|r| r[0] == "computed" && r[1] == "Q3" && r[3] == "test_mean").count();
    assert_eq!(q3, 5);
}
