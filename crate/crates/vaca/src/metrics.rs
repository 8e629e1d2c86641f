//! Evaluation suite: kernel two-sample distance and the standardized
//! intervention-grid protocol.
//!
//! All computations run in normalized data space (the space the model was
//! trained in). The intervention grid visits every non-leaf node with
//! `alpha` in `{-1, -0.5, 0, 0.5, 1}` times the empirical standard
//! deviation of the intervened column in the normalized training split,
//! and every metric is computed over the descendants of the intervened
//! node only.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diff::{mix_seed, Matrix};
use crate::error::{Error, Result};
use crate::model::VacaModel;
use crate::queries::{
    counterfactual_vaca, sample_interventional_vaca, sample_observational_vaca, CfOptions,
    InterventionSpec,
};
use crate::scm::ScmSpec;

// ── Kernel ────────────────────────────────────────────────────────────

/// Mixture of RBF kernels: `k(x, y) = sum_b exp(-gamma_b ||x - y||^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidths: Vec<f64>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { bandwidths: vec![0.01, 0.1, 1.0, 10.0, 100.0] }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() || self.bandwidths.iter().any(|g| *g <= 0.0) {
            return Err(Error::config("kernel bandwidths must be positive"));
        }
        Ok(())
    }

    /// Single bandwidth from the median pairwise squared distance of the
    /// pooled samples: `gamma = 1 / median(||x - y||^2)`.
    pub fn median_heuristic(xs: &Matrix, ys: &Matrix) -> Result<Self> {
        let mut pooled: Vec<ndarray::ArrayView1<f64>> = Vec::new();
        pooled.extend(xs.outer_iter());
        pooled.extend(ys.outer_iter());
        let n = pooled.len();
        if n < 2 {
            return Err(Error::numeric("median heuristic needs at least 2 rows"));
        }
        let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let dist: f64 =
                    pooled[i].iter().zip(pooled[j].iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.push(dist);
            }
        }
        d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = d2[d2.len() / 2];
        if med <= 0.0 {
            return Err(Error::numeric("median pairwise distance is zero"));
        }
        Ok(KernelSpec { bandwidths: vec![1.0 / med] })
    }
}

fn kernel_sum_grid(a: &Matrix, b: &Matrix, gammas: &[f64], skip_diagonal: bool) -> f64 {
    let mut total = 0.0;
    for (i, ra) in a.outer_iter().enumerate() {
        for (j, rb) in b.outer_iter().enumerate() {
            if skip_diagonal && i == j {
                continue;
            }
            let d2: f64 = ra.iter().zip(rb.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            for &g in gammas {
                total += (-g * d2).exp();
            }
        }
    }
    total
}

/// Squared kernel two-sample distance between equal-size sample sets.
///
/// With `include_diagonal` (the default used throughout), the estimator is
/// `(1/(n(n-1))) * (sum k(x,x') + sum k(y,y') - 2 sum k(x,y))` with every
/// double sum over the full n-by-n grid, which cancels exactly on
/// identical sets. With `include_diagonal = false` the textbook unbiased
/// form is used instead (diagonals dropped from the two self terms, cross
/// term scaled by `1/n^2`).
pub fn mmd2(xs: &Matrix, ys: &Matrix, kernel: &KernelSpec, include_diagonal: bool) -> Result<f64> {
    kernel.validate()?;
    let n = xs.nrows();
    if n < 2 || ys.nrows() < 2 {
        return Err(Error::numeric("mmd2 needs at least 2 rows per set"));
    }
    if ys.nrows() != n {
        return Err(Error::numeric(format!(
            "mmd2 expects equal sample counts, got {n} vs {}",
            ys.nrows()
        )));
    }
    if ys.ncols() != xs.ncols() {
        return Err(Error::numeric("mmd2 column mismatch"));
    }
    let g = &kernel.bandwidths;
    let nf = n as f64;
    let value = if include_diagonal {
        let kxx = kernel_sum_grid(xs, xs, g, false);
        let kyy = kernel_sum_grid(ys, ys, g, false);
        let kxy = kernel_sum_grid(xs, ys, g, false);
        (kxx + kyy - 2.0 * kxy) / (nf * (nf - 1.0))
    } else {
        let kxx = kernel_sum_grid(xs, xs, g, true);
        let kyy = kernel_sum_grid(ys, ys, g, true);
        let kxy = kernel_sum_grid(xs, ys, g, false);
        (kxx + kyy) / (nf * (nf - 1.0)) - 2.0 * kxy / (nf * nf)
    };
    Ok(value)
}

// ── Estimators under evaluation ───────────────────────────────────────

/// Anything that can produce observational / interventional samples and
/// counterfactual point estimates in normalized space. The trained model
/// implements this; so does the oracle itself, which is how the suite is
/// validated against a perfect estimator.
pub trait CausalEstimator {
    fn observational(&self, n: usize, seed: u64) -> Result<Matrix>;
    fn interventional(&self, node: usize, alpha_norm: f64, n: usize, seed: u64) -> Result<Matrix>;
    /// Counterfactual point estimates for dataset rows `rows`.
    fn counterfactual_mean(
        &self,
        ds: &Dataset,
        rows: std::ops::Range<usize>,
        node: usize,
        alpha_norm: f64,
    ) -> Result<Matrix>;
}

impl CausalEstimator for VacaModel {
    fn observational(&self, n: usize, seed: u64) -> Result<Matrix> {
        Ok(sample_observational_vaca(self, n, seed)?.samples)
    }

    fn interventional(&self, node: usize, alpha_norm: f64, n: usize, seed: u64) -> Result<Matrix> {
        Ok(sample_interventional_vaca(self, InterventionSpec { node, alpha: alpha_norm }, n, seed)?
            .samples)
    }

    fn counterfactual_mean(
        &self,
        ds: &Dataset,
        rows: std::ops::Range<usize>,
        node: usize,
        alpha_norm: f64,
    ) -> Result<Matrix> {
        let x = ds.x.slice(ndarray::s![rows.start..rows.end, ..]).to_owned();
        Ok(counterfactual_vaca(
            self,
            &x,
            InterventionSpec { node, alpha: alpha_norm },
            CfOptions::default(),
            0,
        )?
        .samples)
    }
}

/// The ground-truth model viewed as an estimator (normalized outputs).
pub struct OracleEstimator<'a> {
    pub scm: &'a ScmSpec,
    pub ds: &'a Dataset,
}

impl OracleEstimator<'_> {
    fn alpha_raw(&self, node: usize, alpha_norm: f64) -> f64 {
        let col = self.ds.layout.node_slices()[node].start;
        match &self.ds.normalization {
            Some(n) => n.columns[col].invert(alpha_norm),
            None => alpha_norm,
        }
    }
}

impl CausalEstimator for OracleEstimator<'_> {
    fn observational(&self, n: usize, seed: u64) -> Result<Matrix> {
        Ok(self.ds.normalize_matrix(&self.scm.sample_observational(n, seed).x))
    }

    fn interventional(&self, node: usize, alpha_norm: f64, n: usize, seed: u64) -> Result<Matrix> {
        let raw = self.scm.sample_interventional(node, self.alpha_raw(node, alpha_norm), n, seed);
        Ok(self.ds.normalize_matrix(&raw.x))
    }

    fn counterfactual_mean(
        &self,
        ds: &Dataset,
        rows: std::ops::Range<usize>,
        node: usize,
        alpha_norm: f64,
    ) -> Result<Matrix> {
        let alpha_raw = self.alpha_raw(node, alpha_norm);
        let mut out = Matrix::zeros((rows.len(), ds.layout.total_dim()));
        for (k, r) in rows.enumerate() {
            let cf = self.scm.counterfactual_oracle(ds, r, node, alpha_raw)?;
            for (c, v) in cf.iter().enumerate() {
                out[[k, c]] = *v;
            }
        }
        Ok(ds.normalize_matrix(&out))
    }
}

// ── Suite ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub kernel: KernelSpec,
    /// Use the pooled median-heuristic bandwidth instead of the fixed list.
    pub median_heuristic: bool,
    /// Samples per side for each two-sample comparison.
    pub n_samples: usize,
    /// Grid scales; multiplied by the intervened column's std.
    pub alphas: Vec<f64>,
    pub include_diagonal: bool,
    pub seed: u64,
    /// Cap on factual rows per counterfactual cell; 0 means all test rows.
    pub max_cf_rows: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            kernel: KernelSpec::default(),
            median_heuristic: false,
            n_samples: 1000,
            alphas: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            include_diagonal: true,
            seed: 0,
            max_cf_rows: 0,
        }
    }
}

/// One (intervened node, alpha) grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub node: usize,
    pub node_name: String,
    /// Grid scale in units of the column's standard deviation.
    pub alpha_scale: f64,
    /// Actual intervention value in normalized units.
    pub alpha_norm: f64,
    pub mmd: f64,
    pub mean_e: f64,
    pub std_e: f64,
    pub mse: f64,
    pub sdse: f64,
}

/// The scalar metric bundle plus the per-cell breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mmd_obs: f64,
    pub mmd_int: f64,
    pub mean_e: f64,
    pub std_e: f64,
    pub mse_cf: f64,
    pub sdse_cf: f64,
    pub cells: Vec<CellReport>,
}

fn columns_of(ds: &Dataset, nodes: &std::collections::BTreeSet<usize>) -> Vec<usize> {
    let slices = ds.layout.node_slices();
    nodes.iter().flat_map(|&n| slices[n].clone()).collect()
}

fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    let mut out = Matrix::zeros((m.nrows(), cols.len()));
    for (k, &c) in cols.iter().enumerate() {
        out.column_mut(k).assign(&m.column(c));
    }
    out
}

fn column_mean_std(m: &Matrix, c: usize) -> (f64, f64) {
    let col = m.column(c);
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The intervention grid: every non-leaf node crossed with the alpha
/// scales, each scaled by the column's std in the normalized training
/// split.
pub fn intervention_grid(scm: &ScmSpec, ds: &Dataset, alphas: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut grid = Vec::new();
    let slices = ds.layout.node_slices();
    for node in 0..scm.node_count() {
        if scm.graph.descendants(node).map(|d| d.is_empty()).unwrap_or(true) {
            continue;
        }
        let sigma = ds.train_column_std(slices[node].start);
        for &a in alphas {
            grid.push((node, a, a * sigma));
        }
    }
    grid
}

fn resolve_kernel(
    cfg: &SuiteConfig,
    est: &dyn CausalEstimator,
    oracle: &OracleEstimator,
) -> Result<KernelSpec> {
    if cfg.median_heuristic {
        let a = oracle.observational(cfg.n_samples.min(200), mix_seed(cfg.seed, 77))?;
        let b = est.observational(cfg.n_samples.min(200), mix_seed(cfg.seed, 78))?;
        KernelSpec::median_heuristic(&a, &b)
    } else {
        Ok(cfg.kernel.clone())
    }
}

/// Interventional metrics: observational and per-cell interventional
/// two-sample distances, plus squared errors of descendant means and
/// standard deviations.
pub fn interventional_suite(
    est: &dyn CausalEstimator,
    scm: &ScmSpec,
    ds: &Dataset,
    cfg: &SuiteConfig,
) -> Result<MetricReport> {
    let oracle = OracleEstimator { scm, ds };
    let kernel = resolve_kernel(cfg, est, &oracle)?;
    let n = cfg.n_samples;

    let true_obs = oracle.observational(n, mix_seed(cfg.seed, 1))?;
    let est_obs = est.observational(n, mix_seed(cfg.seed, 1))?;
    let mmd_obs = mmd2(&true_obs, &est_obs, &kernel, cfg.include_diagonal)?;

    let grid = intervention_grid(scm, ds, &cfg.alphas);
    let mut cells = Vec::with_capacity(grid.len());
    for (idx, &(node, scale, alpha_norm)) in grid.iter().enumerate() {
        let seed = mix_seed(cfg.seed, 100 + idx as u64);
        let truth = oracle.interventional(node, alpha_norm, n, seed)?;
        let guess = est.interventional(node, alpha_norm, n, seed)?;
        let desc = scm.graph.descendants(node)?;
        let cols = columns_of(ds, &desc);
        let t = select_columns(&truth, &cols);
        let g = select_columns(&guess, &cols);
        let mmd = mmd2(&t, &g, &kernel, cfg.include_diagonal)?;
        let mut me = 0.0;
        let mut se = 0.0;
        for c in 0..cols.len() {
            let (mt, st) = column_mean_std(&t, c);
            let (mg, sg) = column_mean_std(&g, c);
            me += (mt - mg) * (mt - mg);
            se += (st - sg) * (st - sg);
        }
        let k = cols.len() as f64;
        cells.push(CellReport {
            node,
            node_name: ds.layout.node_names[node].clone(),
            alpha_scale: scale,
            alpha_norm,
            mmd,
            mean_e: me / k,
            std_e: se / k,
            mse: f64::NAN,
            sdse: f64::NAN,
        });
    }
    let nc = cells.len().max(1) as f64;
    Ok(MetricReport {
        mmd_obs,
        mmd_int: cells.iter().map(|c| c.mmd).sum::<f64>() / nc,
        mean_e: cells.iter().map(|c| c.mean_e).sum::<f64>() / nc,
        std_e: cells.iter().map(|c| c.std_e).sum::<f64>() / nc,
        mse_cf: f64::NAN,
        sdse_cf: f64::NAN,
        cells,
    })
}

/// Counterfactual metrics over the test split: per cell and factual row,
/// `T = || x_cf_true - x_cf_est ||^2` over descendant columns; the cell
/// contributes `mean(T) / |descendants|` and `std(T) / |descendants|`.
pub fn counterfactual_suite(
    est: &dyn CausalEstimator,
    scm: &ScmSpec,
    ds: &Dataset,
    cfg: &SuiteConfig,
) -> Result<(f64, f64, Vec<CellReport>)> {
    if ds.u.is_none() {
        return Err(Error::data("counterfactual suite needs stored exogenous draws"));
    }
    let test = ds.test_rows();
    if test.is_empty() {
        return Err(Error::data("counterfactual suite needs a test split"));
    }
    let cap = if cfg.max_cf_rows == 0 { usize::MAX } else { cfg.max_cf_rows };
    let rows = test.start..test.start + test.len().min(cap);
    let oracle = OracleEstimator { scm, ds };
    let grid = intervention_grid(scm, ds, &cfg.alphas);
    let mut cells = Vec::with_capacity(grid.len());
    for &(node, scale, alpha_norm) in &grid {
        let truth = oracle.counterfactual_mean(ds, rows.clone(), node, alpha_norm)?;
        let guess = est.counterfactual_mean(ds, rows.clone(), node, alpha_norm)?;
        let desc = scm.graph.descendants(node)?;
        let cols = columns_of(ds, &desc);
        let t = select_columns(&truth, &cols);
        let g = select_columns(&guess, &cols);
        let n = t.nrows() as f64;
        let tvals: Vec<f64> = (0..t.nrows())
            .map(|r| {
                (0..cols.len()).map(|c| (t[[r, c]] - g[[r, c]]).powi(2)).sum::<f64>()
            })
            .collect();
        let mean_t = tvals.iter().sum::<f64>() / n;
        let var_t = tvals.iter().map(|v| (v - mean_t) * (v - mean_t)).sum::<f64>() / n;
        let k = cols.len() as f64;
        cells.push(CellReport {
            node,
            node_name: ds.layout.node_names[node].clone(),
            alpha_scale: scale,
            alpha_norm,
            mmd: f64::NAN,
            mean_e: f64::NAN,
            std_e: f64::NAN,
            mse: mean_t / k,
            sdse: var_t.sqrt() / k,
        });
    }
    let nc = cells.len().max(1) as f64;
    let mse = cells.iter().map(|c| c.mse).sum::<f64>() / nc;
    let sdse = cells.iter().map(|c| c.sdse).sum::<f64>() / nc;
    Ok((mse, sdse, cells))
}

/// Runs both suites and merges the per-cell tables.
pub fn evaluate_model(
    est: &dyn CausalEstimator,
    scm: &ScmSpec,
    ds: &Dataset,
    cfg: &SuiteConfig,
) -> Result<MetricReport> {
    let mut report = interventional_suite(est, scm, ds, cfg)?;
    let (mse, sdse, cf_cells) = counterfactual_suite(est, scm, ds, cfg)?;
    report.mse_cf = mse;
    report.sdse_cf = sdse;
    for (cell, cf) in report.cells.iter_mut().zip(cf_cells) {
        cell.mse = cf.mse;
        cell.sdse = cf.sdse;
    }
    Ok(report)
}

impl MetricReport {
    /// JSON report plus a flat CSV with one row per intervention cell.
    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("metric report: {e}")))?;
        std::fs::write(dir.join("report.json"), json)?;
        let mut w = csv::Writer::from_path(dir.join("report.csv"))
            .map_err(|e| Error::data(format!("report.csv: {e}")))?;
        w.write_record(["node", "alpha_scale", "alpha_norm", "mmd", "mean_e", "std_e", "mse", "sdse"])
            .map_err(|e| Error::data(format!("csv: {e}")))?;
        for c in &self.cells {
            w.write_record([
                c.node_name.clone(),
                format!("{}", c.alpha_scale),
                format!("{}", c.alpha_norm),
                format!("{}", c.mmd),
                format!("{}", c.mean_e),
                format!("{}", c.std_e),
                format!("{}", c.mse),
                format!("{}", c.sdse),
            ])
            .map_err(|e| Error::data(format!("csv: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}
