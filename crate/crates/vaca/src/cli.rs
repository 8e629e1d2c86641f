//! Command-line pipeline: generate, train, evaluate, query, audit, sweep.
//!
//! Every command writes a self-describing run directory containing the
//! exact configuration that produced it plus a `run.json` artifact record.
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{
    apply_combo, sweep_combinations, ExperimentConfig, GridCombo, SweepSection,
};
use crate::dataset::{read_csv_named, Dataset, SplitSizes};
use crate::error::{Error, Result};
use crate::fairness::{audit, AuditConfig};
use crate::graph::CausalGraph;
use crate::metrics::{evaluate_model, MetricReport, SuiteConfig};
use crate::model::{TrainReport, VacaModel};
use crate::queries::{
    counterfactual_vaca, sample_interventional_vaca, sample_observational_vaca, CfMode, CfOptions,
    InterventionSpec, QueryResult,
};
use crate::scm::ScmSpec;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "vaca", version, about = "Causal queries from observational data plus a DAG")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a dataset from a built-in ground-truth model.
    Generate(GenerateArgs),
    /// Train a model according to an experiment config.
    Train(TrainArgs),
    /// Score a trained model against the ground-truth oracle.
    Evaluate(EvaluateArgs),
    /// Draw observational / interventional / counterfactual samples.
    Query(QueryArgs),
    /// Counterfactual-fairness audit of classifiers on external data.
    Audit(AuditArgs),
    /// Run a hyperparameter grid times a seed list and aggregate.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Built-in SCM: collider, triangle, chain, mgraph, loan, adult.
    #[arg(long)]
    pub scm: String,
    /// Equation family for the synthetic graphs (LIN, NLIN, NADD).
    #[arg(long, default_value = "fixed")]
    pub sem: String,
    /// Training rows.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2500)]
    pub n_valid: usize,
    #[arg(long, default_value_t = 2500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reuse a dataset directory written by `generate` instead of sampling.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint path written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scm: Option<String>,
    #[arg(long, default_value = "fixed")]
    pub sem: String,
    /// Experiment config (metric options and data sizes); optional when
    /// --scm is given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Data seed used at training time.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// obs, int or cf.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub scm: Option<String>,
    #[arg(long, default_value = "fixed")]
    pub sem: String,
    /// Config file with a [graph] section, for models on custom graphs.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Intervened node name (int and cf).
    #[arg(long)]
    pub node: Option<String>,
    /// Intervention value, normalized units unless --raw.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Factual rows CSV (cf only).
    #[arg(long)]
    pub factuals: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// mean or sample (cf only).
    #[arg(long, default_value = "mean")]
    pub mode: String,
    /// Interpret --alpha, the factuals and the output in raw units.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with a header row: feature columns per the graph, plus a label.
    #[arg(long)]
    pub data: PathBuf,
    /// Config file with a [graph] section describing the feature columns.
    #[arg(long)]
    pub graph: PathBuf,
    /// Sensitive node name (must be binary).
    #[arg(long)]
    pub sensitive: String,
    /// Label column name in the CSV.
    #[arg(long)]
    pub label: String,
    /// Counterfactual draws per branch.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of rows used to train the classifiers; the rest is scored.
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker pool bound; each job owns its seed and run directory.
    #[arg(long)]
    pub jobs: Option<usize>,
}

// ── Run artifacts ─────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
pub struct RunArtifact {
    pub command: String,
    pub name: String,
    pub seed: u64,
    pub config_file: Option<String>,
    pub checkpoint: Option<String>,
    pub train_report: Option<String>,
    pub metric_report: Option<String>,
    pub audit_report: Option<String>,
    pub tool_version: String,
    pub wall_seconds: f64,
}

fn write_artifact(dir: &Path, artifact: &RunArtifact) -> Result<()> {
    let json = serde_json::to_string_pretty(artifact)
        .map_err(|e| Error::data(format!("run artifact: {e}")))?;
    std::fs::write(dir.join("run.json"), json)?;
    Ok(())
}

fn resolve_node(graph: &CausalGraph, name: &str) -> Result<usize> {
    graph
        .node_index(name)
        .or_else(|| graph.node_index(&name.to_ascii_lowercase()))
        .ok_or_else(|| Error::config(format!("unknown node {name:?}")))
}

// ── Pipeline pieces shared by commands, tests and examples ────────────

/// Samples and normalizes the dataset named by the config.
pub fn dataset_from_config(cfg: &ExperimentConfig, seed: u64) -> Result<(ScmSpec, Dataset)> {
    let scm = cfg.build_scm()?;
    let ds = scm.sample_splits(cfg.splits(), seed).normalize()?;
    Ok((scm, ds))
}

pub struct TrainOutcome {
    pub model: VacaModel,
    pub report: TrainReport,
    pub dataset: Dataset,
    pub scm: Option<ScmSpec>,
    pub checkpoint: PathBuf,
}

/// Trains per config and writes the run directory: config snapshot,
/// checkpoint + sidecar, training report, artifact record.
pub fn run_train(
    cfg: &ExperimentConfig,
    seed: u64,
    out: &Path,
    data: Option<&Path>,
) -> Result<TrainOutcome> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let (scm, ds) = match data {
        Some(dir) => {
            let ds = Dataset::load(dir)?;
            let graph = cfg.build_graph()?;
            if ds.layout.total_dim() != graph.total_dim() {
                return Err(Error::data("dataset layout does not match the config graph"));
            }
            let scm = if cfg.data.scm.is_some() { Some(cfg.build_scm()?) } else { None };
            (scm, ds)
        }
        None => {
            if cfg.data.scm.is_some() {
                let (scm, ds) = dataset_from_config(cfg, seed)?;
                (Some(scm), ds)
            } else {
                return Err(Error::config(
                    "training on a custom graph needs --data or data.csv",
                ));
            }
        }
    };
    let graph = cfg.build_graph()?;
    let mut model = VacaModel::new(graph, cfg.vaca.clone(), seed)?;
    let report = model.train(&ds, seed)?;

    // Snapshot the exact configuration that produced this run.
    let mut snapshot = cfg.clone();
    snapshot.experiment.seed = seed;
    std::fs::write(out.join("config.toml"), snapshot.to_toml_string()?)?;

    let checkpoint = out.join("model.ckpt");
    model.save(&checkpoint)?;
    let report_json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::data(format!("train report: {e}")))?;
    std::fs::write(out.join("train_report.json"), report_json)?;
    write_artifact(
        out,
        &RunArtifact {
            command: "train".into(),
            name: cfg.experiment.name.clone(),
            seed,
            config_file: Some("config.toml".into()),
            checkpoint: Some("model.ckpt".into()),
            train_report: Some("train_report.json".into()),
            metric_report: None,
            audit_report: None,
            tool_version: TOOL_VERSION.into(),
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(TrainOutcome { model, report, dataset: ds, scm, checkpoint })
}

/// Scores a trained model against the oracle and writes report files.
pub fn run_evaluate(
    model: &VacaModel,
    scm: &ScmSpec,
    ds: &Dataset,
    suite: &SuiteConfig,
    out: &Path,
) -> Result<MetricReport> {
    let start = std::time::Instant::now();
    std::fs::create_dir_all(out)?;
    let report = evaluate_model(model, scm, ds, suite)?;
    report.save(out)?;
    write_artifact(
        out,
        &RunArtifact {
            command: "evaluate".into(),
            name: scm.name.clone(),
            seed: suite.seed,
            config_file: None,
            checkpoint: None,
            train_report: None,
            metric_report: Some("report.json".into()),
            audit_report: None,
            tool_version: TOOL_VERSION.into(),
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(report)
}

/// Loads an external CSV into a dataset laid out like `graph`, with the
/// label column split off. Columns are matched by name: `<node>` for
/// one-dimensional nodes, `<node>_<k>` otherwise.
pub fn ingest_csv(
    path: &Path,
    graph: &CausalGraph,
    label: &str,
    train_frac: f64,
) -> Result<(Dataset, Vec<f64>)> {
    let (names, m) = read_csv_named(path)?;
    let layout = crate::dataset::DataLayout {
        node_names: graph.nodes().iter().map(|n| n.name.clone()).collect(),
        kinds: graph.nodes().iter().map(|n| n.kinds.clone()).collect(),
    };
    let wanted = layout.column_names();
    let col_of = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::data(format!("{}: missing column {name:?}", path.display())))
    };
    let n = m.nrows();
    if n < 4 {
        return Err(Error::data("need at least 4 data rows"));
    }
    let mut x = crate::diff::Matrix::zeros((n, wanted.len()));
    for (k, w) in wanted.iter().enumerate() {
        let c = col_of(w)?;
        x.column_mut(k).assign(&m.column(c));
    }
    let label_col = col_of(label)?;
    let labels: Vec<f64> = m.column(label_col).to_vec();
    if !(0.0..1.0).contains(&train_frac) && train_frac != 0.0 {
        if train_frac >= 1.0 {
            return Err(Error::config("train_frac must be below 1"));
        }
    }
    let train = ((n as f64) * train_frac).floor() as usize;
    let train = train.clamp(1, n - 1);
    let ds = Dataset {
        x,
        u: None,
        layout,
        splits: SplitSizes { train, valid: 0, test: n - train },
        normalization: None,
        seed: 0,
        pre_scale: vec![1.0; wanted.len()],
    }
    .normalize()?;
    Ok((ds, labels))
}

// ── Command handlers ──────────────────────────────────────────────────

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let scm = crate::scm::builtin_scm(&a.scm, a.sem.parse()?)?;
    let ds = scm
        .sample_splits(SplitSizes { train: a.n, valid: a.n_valid, test: a.n_test }, a.seed)
        .normalize()?;
    std::fs::create_dir_all(&a.out)?;
    ds.save(&a.out)?;
    write_artifact(
        &a.out,
        &RunArtifact {
            command: "generate".into(),
            name: format!("{}-{}", a.scm, a.sem),
            seed: a.seed,
            config_file: None,
            checkpoint: None,
            train_report: None,
            metric_report: None,
            audit_report: None,
            tool_version: TOOL_VERSION.into(),
            wall_seconds: 0.0,
        },
    )?;
    println!("wrote {} rows to {}", ds.total_rows(), a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.experiment.seed);
    let out = a.out.unwrap_or_else(|| cfg.out_dir(seed));
    let outcome = run_train(&cfg, seed, &out, a.data.as_deref())?;
    println!(
        "trained {}: best validation bound {:.4} at epoch {} ({} epochs, {:?}); checkpoint {}",
        cfg.experiment.name,
        outcome.report.best_val(),
        outcome.report.best_epoch,
        outcome.report.val_iwae.len(),
        outcome.report.stop_reason,
        outcome.checkpoint.display()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = match (&a.config, &a.scm) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(scm)) => {
            let mut c = ExperimentConfig::default();
            c.data.scm = Some(scm.clone());
            c.data.sem = Some(a.sem.clone());
            c
        }
        (None, None) => {
            return Err(Error::config("evaluate needs --config or --scm"));
        }
    };
    let seed = a.seed.unwrap_or(cfg.experiment.seed);
    let (scm, ds) = dataset_from_config(&cfg, seed)?;
    let model = VacaModel::load(&a.model, scm.graph.clone())?;
    if let Some(n) = &model.normalization {
        if ds.normalization.as_ref() != Some(n) {
            return Err(Error::data(
                "regenerated dataset does not match the model's training normalization; \
                 pass the training --seed and data sizes",
            ));
        }
    }
    let report = run_evaluate(&model, &scm, &ds, &cfg.suite_config(seed), &a.out)?;
    println!(
        "obs mmd {:.5}  int mmd {:.5}  mean_e {:.5}  std_e {:.5}  cf mse {:.5}  cf sdse {:.5}",
        report.mmd_obs, report.mmd_int, report.mean_e, report.std_e, report.mse_cf,
        report.sdse_cf
    );
    Ok(())
}

fn cmd_query(a: QueryArgs) -> Result<()> {
    let graph = match (&a.scm, &a.graph) {
        (Some(name), None) => crate::scm::builtin_scm(name, a.sem.parse()?)?.graph,
        (None, Some(path)) => ExperimentConfig::from_path(path)?.build_graph()?,
        _ => return Err(Error::config("query needs exactly one of --scm or --graph")),
    };
    let model = VacaModel::load(&a.model, graph)?;
    let columns = crate::dataset::DataLayout {
        node_names: model.graph.nodes().iter().map(|n| n.name.clone()).collect(),
        kinds: model.graph.nodes().iter().map(|n| n.kinds.clone()).collect(),
    }
    .column_names();

    let spec = |model: &VacaModel| -> Result<InterventionSpec> {
        let name = a.node.as_deref().ok_or_else(|| Error::config("--node required"))?;
        let node = resolve_node(&model.graph, name)?;
        let alpha = a.alpha.ok_or_else(|| Error::config("--alpha required"))?;
        let alpha = if a.raw {
            let col = model.graph.node_slices()[node].start;
            match &model.normalization {
                Some(n) => n.columns[col].apply(alpha),
                None => alpha,
            }
        } else {
            alpha
        };
        Ok(InterventionSpec { node, alpha })
    };

    let mut result: QueryResult = match a.kind.as_str() {
        "obs" | "observational" => sample_observational_vaca(&model, a.n, a.seed)?,
        "int" | "interventional" => sample_interventional_vaca(&model, spec(&model)?, a.n, a.seed)?,
        "cf" | "counterfactual" => {
            let path =
                a.factuals.as_ref().ok_or_else(|| Error::config("--factuals required for cf"))?;
            let (names, mut rows) = read_csv_named(path)?;
            if names != columns {
                return Err(Error::data(format!(
                    "{}: columns {names:?} do not match the graph layout {columns:?}",
                    path.display()
                )));
            }
            if a.raw {
                if let Some(n) = &model.normalization {
                    rows = n.apply_matrix(&rows);
                }
            }
            let mode = match a.mode.as_str() {
                "mean" => CfMode::Mean,
                "sample" => CfMode::Sample,
                other => return Err(Error::config(format!("unknown cf mode {other:?}"))),
            };
            counterfactual_vaca(
                &model,
                &rows,
                spec(&model)?,
                CfOptions { mode, clamp_intervened: false },
                a.seed,
            )?
        }
        other => return Err(Error::config(format!("unknown query kind {other:?}"))),
    };
    if a.raw {
        if let Some(n) = &model.normalization {
            result.samples = n.invert_matrix(&result.samples);
        }
    }
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    result.save(&a.out, &columns, !a.raw)?;
    println!("wrote {} rows to {}", result.samples.nrows(), a.out.display());
    Ok(())
}

fn cmd_audit(a: AuditArgs) -> Result<()> {
    let graph = ExperimentConfig::from_path(&a.graph)?.build_graph()?;
    let model = VacaModel::load(&a.model, graph)?;
    let (ds, labels) = ingest_csv(&a.data, &model.graph, &a.label, a.train_frac)?;
    let sensitive = resolve_node(&model.graph, &a.sensitive)?;
    let report = audit(&model, &ds, &labels, sensitive, AuditConfig { m: a.m, seed: a.seed })?;
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    report.save(&a.out)?;
    for e in &report.entries {
        println!("{:<8} uf {:.4}  f1 {:.4}  acc {:.4}", e.selector.to_string(), e.uf, e.f1, e.acc);
    }
    Ok(())
}

// ── Sweep ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub combo: BTreeMap<String, String>,
    pub seeds: usize,
    pub mmd_obs_mean: f64,
    pub mmd_obs_std: f64,
    pub mmd_int_mean: f64,
    pub mmd_int_std: f64,
    pub mean_e_mean: f64,
    pub mean_e_std: f64,
    pub std_e_mean: f64,
    pub std_e_std: f64,
    pub mse_cf_mean: f64,
    pub mse_cf_std: f64,
    pub sdse_cf_mean: f64,
    pub sdse_cf_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One training + evaluation run of a sweep cell.
fn sweep_cell(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<MetricReport> {
    let outcome = run_train(cfg, seed, dir, None)?;
    let scm = outcome.scm.as_ref().ok_or_else(|| {
        Error::config("sweeps need a built-in SCM (metrics require the oracle)")
    })?;
    run_evaluate(
        &outcome.model,
        scm,
        &outcome.dataset,
        &cfg.suite_config(seed),
        &dir.join("metrics"),
    )
}

/// Runs the cartesian grid times the seed list with a bounded worker pool,
/// writes per-run directories plus an aggregate `sweep.csv`, and prints the
/// conventional "x100" summary table.
pub fn run_sweep(base: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<SweepRow>> {
    let sweep: &SweepSection = base
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("config has no [sweep] section"))?;
    if sweep.seeds.is_empty() {
        return Err(Error::config("sweep.seeds must not be empty"));
    }
    let combos = sweep_combinations(sweep);
    std::fs::create_dir_all(out)?;

    // One task per (combo, seed); results indexed by task id.
    struct Task {
        combo_idx: usize,
        seed: u64,
        cfg: ExperimentConfig,
        dir: PathBuf,
    }
    let mut tasks = Vec::new();
    for (ci, combo) in combos.iter().enumerate() {
        let cfg = apply_combo(base, combo)?;
        for &seed in &sweep.seeds {
            tasks.push(Task {
                combo_idx: ci,
                seed,
                cfg: cfg.clone(),
                dir: out.join(format!("run-c{ci}-s{seed}")),
            });
        }
    }
    let n_tasks = tasks.len();
    let results: Mutex<Vec<Option<Result<MetricReport>>>> =
        Mutex::new((0..n_tasks).map(|_| None).collect());
    let next: Mutex<usize> = Mutex::new(0);
    let workers = jobs.max(1).min(n_tasks);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = {
                    let mut guard = next.lock().unwrap();
                    if *guard >= n_tasks {
                        break;
                    }
                    let i = *guard;
                    *guard += 1;
                    i
                };
                let t = &tasks[idx];
                let r = sweep_cell(&t.cfg, t.seed, &t.dir);
                results.lock().unwrap()[idx] = Some(r);
            });
        }
    });
    let results = results.into_inner().unwrap();
    let mut reports: Vec<Vec<MetricReport>> = vec![Vec::new(); combos.len()];
    for (task, res) in tasks.iter().zip(results) {
        let report = res.expect("worker finished")?;
        reports[task.combo_idx].push(report);
    }

    let describe = |c: &GridCombo| -> BTreeMap<String, String> {
        c.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
    };
    let mut rows = Vec::with_capacity(combos.len());
    for (ci, combo) in combos.iter().enumerate() {
        let rs = &reports[ci];
        let pick = |f: fn(&MetricReport) -> f64| -> Vec<f64> { rs.iter().map(f).collect() };
        let (mo, so) = mean_std(&pick(|r| r.mmd_obs));
        let (mi, si) = mean_std(&pick(|r| r.mmd_int));
        let (me, se) = mean_std(&pick(|r| r.mean_e));
        let (sd, ss) = mean_std(&pick(|r| r.std_e));
        let (mc, sc) = mean_std(&pick(|r| r.mse_cf));
        let (dc, ds_) = mean_std(&pick(|r| r.sdse_cf));
        rows.push(SweepRow {
            combo: describe(combo),
            seeds: rs.len(),
            mmd_obs_mean: mo,
            mmd_obs_std: so,
            mmd_int_mean: mi,
            mmd_int_std: si,
            mean_e_mean: me,
            mean_e_std: se,
            std_e_mean: sd,
            std_e_std: ss,
            mse_cf_mean: mc,
            mse_cf_std: sc,
            sdse_cf_mean: dc,
            sdse_cf_std: ds_,
        });
    }

    // Raw values in the CSV; the printed table uses the x100 convention.
    let grid_keys: Vec<String> = sweep.grid.keys().cloned().collect();
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))
        .map_err(|e| Error::data(format!("sweep.csv: {e}")))?;
    let mut header: Vec<String> = grid_keys.clone();
    header.push("seeds".into());
    for m in ["mmd_obs", "mmd_int", "mean_e", "std_e", "mse_cf", "sdse_cf"] {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    w.write_record(&header).map_err(|e| Error::data(format!("csv: {e}")))?;
    for row in &rows {
        let mut rec: Vec<String> =
            grid_keys.iter().map(|k| row.combo.get(k).cloned().unwrap_or_default()).collect();
        rec.push(row.seeds.to_string());
        for v in [
            row.mmd_obs_mean,
            row.mmd_obs_std,
            row.mmd_int_mean,
            row.mmd_int_std,
            row.mean_e_mean,
            row.mean_e_std,
            row.std_e_mean,
            row.std_e_std,
            row.mse_cf_mean,
            row.mse_cf_std,
            row.sdse_cf_mean,
            row.sdse_cf_std,
        ] {
            rec.push(format!("{v}"));
        }
        w.write_record(&rec).map_err(|e| Error::data(format!("csv: {e}")))?;
    }
    w.flush()?;

    println!("combo | obs mmd | int mmd | mean_e | cf mse   (x100, mean +- std)");
    for row in &rows {
        let combo: Vec<String> = row.combo.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{} | {:.2}+-{:.2} | {:.2}+-{:.2} | {:.2}+-{:.2} | {:.2}+-{:.2}",
            combo.join(","),
            100.0 * row.mmd_obs_mean,
            100.0 * row.mmd_obs_std,
            100.0 * row.mmd_int_mean,
            100.0 * row.mmd_int_std,
            100.0 * row.mean_e_mean,
            100.0 * row.mean_e_std,
            100.0 * row.mse_cf_mean,
            100.0 * row.mse_cf_std,
        );
    }
    Ok(rows)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&a.config)?;
    let jobs = a
        .jobs
        .or_else(|| cfg.sweep.as_ref().map(|s| s.jobs))
        .filter(|j| *j > 0)
        .unwrap_or(1);
    run_sweep(&cfg, &a.out, jobs)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Query(a) => cmd_query(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ingest_matches_columns_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        std::fs::write(&csv, "y,b,a\n1,0.5,1.0\n0,0.25,2.0\n1,0.75,3.0\n0,0.5,4.0\n1,1.5,5.0\n")
            .unwrap();
        let graph = CausalGraph::continuous(&["a", "b"], vec![(0, 1)]).unwrap();
        let (ds, labels) = ingest_csv(&csv, &graph, "y", 0.8).unwrap();
        assert_eq!(ds.splits.train, 4);
        assert_eq!(ds.splits.test, 1);
        assert_eq!(labels, vec![1.0, 0.0, 1.0, 0.0, 1.0]);
        // Column "a" leads the layout even though it is last in the file.
        let raw = ds.denormalize_matrix(&ds.x);
        assert!((raw[[0, 0]] - 1.0).abs() < 1e-9);
        assert!((raw[[0, 1]] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn ingest_reports_missing_columns() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        std::fs::write(&csv, "a,y\n1,0\n2,1\n3,0\n4,1\n").unwrap();
        let graph = CausalGraph::continuous(&["a", "b"], vec![(0, 1)]).unwrap();
        let err = ingest_csv(&csv, &graph, "y", 0.5).unwrap_err();
        assert!(err.to_string().contains("\"b\""), "{err}");
    }
}
