//! End-to-end checks of the command-line pipeline: every command runs
//! against real (small) data, outputs parse back, reruns are bit-for-bit
//! reproducible, and failures map to the documented exit codes.

use std::path::Path;
use std::process::Command;

fn vaca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vaca"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(
        &path,
        r#"
[experiment]
name = "cli-smoke"
seed = 3

[data]
scm = "collider"
sem = "LIN"
n_train = 400
n_valid = 150
n_test = 150

[vaca]
decoder_hidden_layers = 1
parents_dropout = 0.1
max_epochs = 8
patience = 50
iwae_k = 5
batch_size = 200

[metrics]
n_samples = 300
max_cf_rows = 150
"#,
    )
    .unwrap();
    path
}

#[test]
fn generate_train_evaluate_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());

    // generate
    let data_dir = dir.path().join("data");
    let out = vaca()
        .args(["generate", "--scm", "collider", "--sem", "LIN", "--n", "400"])
        .args(["--n-valid", "150", "--n-test", "150", "--seed", "3"])
        .arg("--out")
        .arg(&data_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(data_dir.join("x.csv").exists());
    assert!(data_dir.join("u.csv").exists());
    assert!(data_dir.join("header.json").exists());

    // train, reusing the generated dataset
    let run_dir = dir.path().join("run");
    let out = vaca()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&run_dir)
        .arg("--data")
        .arg(&data_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = run_dir.join("model.ckpt");
    assert!(ckpt.exists());
    assert!(run_dir.join("config.toml").exists());
    assert!(run_dir.join("train_report.json").exists());
    assert!(run_dir.join("run.json").exists());

    // The snapshot config parses back to the resolved configuration.
    let snapshot = vaca::config::ExperimentConfig::from_path(&run_dir.join("config.toml")).unwrap();
    assert_eq!(snapshot.experiment.seed, 3);
    assert_eq!(snapshot.data.scm.as_deref(), Some("collider"));

    // evaluate: finite observational distance in the report
    let metrics_dir = dir.path().join("metrics");
    let out = vaca()
        .arg("evaluate")
        .arg("--model")
        .arg(&ckpt)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&metrics_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: vaca::metrics::MetricReport = serde_json::from_str(
        &std::fs::read_to_string(metrics_dir.join("report.json")).unwrap(),
    )
    .unwrap();
    assert!(report.mmd_obs.is_finite());
    assert!(metrics_dir.join("report.csv").exists());

    // query: observational and counterfactual
    let obs_csv = dir.path().join("obs.csv");
    let out = vaca()
        .arg("query")
        .arg("--model")
        .arg(&ckpt)
        .args(["--kind", "obs", "--scm", "collider", "--sem", "LIN", "--n", "50", "--seed", "1"])
        .arg("--out")
        .arg(&obs_csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let samples = vaca::dataset::read_csv(&obs_csv).unwrap();
    assert_eq!(samples.nrows(), 50);
    assert!(obs_csv.with_extension("csv.json").exists());

    let cf_csv = dir.path().join("cf.csv");
    let out = vaca()
        .arg("query")
        .arg("--model")
        .arg(&ckpt)
        .args(["--kind", "cf", "--scm", "collider", "--sem", "LIN"])
        .args(["--node", "x1", "--alpha", "0.5", "--mode", "mean"])
        .arg("--factuals")
        .arg(&obs_csv)
        .arg("--out")
        .arg(&cf_csv)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(vaca::dataset::read_csv(&cf_csv).unwrap().nrows(), 50);
}

#[test]
fn train_is_deterministic_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut checkpoints = Vec::new();
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let run_dir = dir.path().join(run);
        let out = vaca()
            .arg("train")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&run_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        checkpoints.push(std::fs::read(run_dir.join("model.ckpt")).unwrap());
        // Reports match modulo the wall-time field.
        let mut report: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(run_dir.join("train_report.json")).unwrap(),
        )
        .unwrap();
        report.as_object_mut().unwrap().remove("wall_seconds");
        reports.push(report);
    }
    assert_eq!(checkpoints[0], checkpoints[1], "checkpoints must be identical");
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn invalid_config_key_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        "[data]\nscm = \"collider\"\nsem = \"LIN\"\n[vaca]\nlatent_dmi = 4\n",
    )
    .unwrap();
    let out = vaca().arg("train").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("latent_dmi"), "stderr should name the key: {stderr}");
}

#[test]
fn missing_checkpoint_exits_3() {
    let out = vaca()
        .args(["evaluate", "--model", "/nonexistent/model.ckpt", "--scm", "collider"])
        .args(["--sem", "LIN", "--out", "/tmp/vaca-nope"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn graph_hash_mismatch_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run_dir = dir.path().join("run");
    let out =
        vaca().arg("train").arg("--config").arg(&cfg).arg("--out").arg(&run_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Query the collider model with the chain graph: refused.
    let out = vaca()
        .arg("query")
        .arg("--model")
        .arg(run_dir.join("model.ckpt"))
        .args(["--kind", "obs", "--scm", "chain", "--sem", "LIN", "--n", "5"])
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn audit_command_runs_on_external_csv() {
    let dir = tempfile::tempdir().unwrap();

    // Train a small loan model.
    let cfg_path = dir.path().join("loan.toml");
    std::fs::write(
        &cfg_path,
        r#"
[experiment]
name = "loan-mini"
seed = 5

[data]
scm = "loan"
n_train = 500
n_valid = 150
n_test = 150

[vaca]
decoder_hidden_layers = 2
max_epochs = 6
patience = 50
iwae_k = 5
batch_size = 250
"#,
    )
    .unwrap();
    let run_dir = dir.path().join("run");
    let out = vaca()
        .arg("train")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Export loan rows with labels as an external CSV.
    use vaca::scm::{builtin_scm, Sem};
    let scm = builtin_scm("loan", Sem::Fixed).unwrap();
    let ds = scm.sample_observational(300, 9);
    let labels = {
        let normalized = scm
            .sample_observational(300, 9)
            .normalize()
            .unwrap();
        vaca::fairness::synthetic_loan_labels(&normalized, 9).unwrap()
    };
    let csv_path = dir.path().join("loan.csv");
    let mut text = String::from("g,a,e,l,d,i,s,y\n");
    for r in 0..300 {
        for c in 0..7 {
            text.push_str(&format!("{},", ds.x[[r, c]]));
        }
        text.push_str(&format!("{}\n", labels[r]));
    }
    std::fs::write(&csv_path, text).unwrap();

    // A graph config matching the loan layout.
    let graph_path = dir.path().join("loan-graph.toml");
    std::fs::write(
        &graph_path,
        r#"
[graph]
nodes = ["g:1:binary", "a:1:continuous", "e:1:continuous", "l:1:continuous", "d:1:continuous", "i:1:continuous", "s:1:continuous"]
edges = ["g->e", "g->l", "g->d", "g->i", "a->e", "a->l", "a->d", "a->i", "e->i", "l->d", "i->s"]
"#,
    )
    .unwrap();

    let audit_path = dir.path().join("audit.json");
    let out = vaca()
        .arg("audit")
        .arg("--model")
        .arg(run_dir.join("model.ckpt"))
        .arg("--data")
        .arg(&csv_path)
        .arg("--graph")
        .arg(&graph_path)
        .args(["--sensitive", "g", "--label", "y", "--m", "3", "--seed", "1"])
        .arg("--out")
        .arg(&audit_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: vaca::fairness::AuditReport =
        serde_json::from_str(&std::fs::read_to_string(&audit_path).unwrap()).unwrap();
    assert_eq!(report.entries.len(), 4);
}

#[test]
fn sweep_aggregates_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg_path,
        r#"
[experiment]
name = "sweep-mini"

[data]
scm = "collider"
sem = "LIN"
n_train = 300
n_valid = 100
n_test = 100

[vaca]
decoder_hidden_layers = 0
max_epochs = 4
patience = 50
iwae_k = 5
batch_size = 150

[metrics]
n_samples = 200
max_cf_rows = 100

[sweep]
seeds = [0, 1]
jobs = 1

[sweep.grid]
"vaca.parents_dropout" = [0.0, 0.1]
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("sweep-out");
    let out = vaca()
        .arg("sweep")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .args(["--jobs", "1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3, "header plus one row per configuration: {csv}");
    // Each run directory carries its own exact config snapshot.
    assert!(out_dir.join("run-c0-s0/config.toml").exists());
    assert!(out_dir.join("run-c1-s1/config.toml").exists());
}
