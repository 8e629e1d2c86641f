//! Counterfactual-fairness auditing.
//!
//! Four logistic-regression classifiers are audited against model-generated
//! counterfactuals of the sensitive attribute:
//!
//! - `full`: all observed columns;
//! - `unaware`: all columns except the sensitive node;
//! - `fair-x`: only nodes the sensitive attribute cannot reach (neither the
//!   node itself nor any of its descendants);
//! - `fair-z`: posterior-mean latents from the encoder, excluding the
//!   sensitive node's latent block.
//!
//! Unfairness of a classifier is the average absolute gap between its
//! positive probability on counterfactuals under `do(S = 0)` and under
//! `do(S = 1)`. The two branches share the abduction draws per factual row
//! (both condition on the same factual), so for classifiers whose inputs
//! the sensitive attribute cannot reach the gap reduces to likelihood
//! sampling noise, and to exactly zero in mean mode.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diff::{randn, sigmoid, Matrix};
use crate::error::{Error, Result};
use crate::model::VacaModel;
use crate::queries::{model_hash, CfMode};

// ── Logistic regression ───────────────────────────────────────────────

/// A trained logistic-regression classifier with its input selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub selector: Selector,
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Per-class weights (class 0, class 1) used during training.
    pub class_weights: (f64, f64),
}

impl ClassifierSpec {
    pub fn prob_rows(&self, features: &Matrix) -> Vec<f64> {
        features
            .outer_iter()
            .map(|row| {
                let z: f64 =
                    row.iter().zip(&self.weights).map(|(x, w)| x * w).sum::<f64>() + self.bias;
                sigmoid(z)
            })
            .collect()
    }
}

/// Balanced class weights `n / (2 n_c)`, or `(1, 1)` when unweighted.
pub fn balanced_class_weights(labels: &[f64]) -> Result<(f64, f64)> {
    let n = labels.len() as f64;
    let n1 = labels.iter().filter(|&&y| y > 0.5).count() as f64;
    let n0 = n - n1;
    if n0 == 0.0 || n1 == 0.0 {
        return Err(Error::data("labels contain a single class"));
    }
    Ok((n / (2.0 * n0), n / (2.0 * n1)))
}

/// Gradient-descent logistic regression minimizing class-weighted
/// cross-entropy until the gradient norm drops below 1e-6 or 10^4 steps.
pub fn train_logreg(
    selector: Selector,
    features: &Matrix,
    labels: &[f64],
    balanced: bool,
) -> Result<ClassifierSpec> {
    let n = features.nrows();
    if n == 0 || n != labels.len() {
        return Err(Error::data("features and labels must align"));
    }
    let class_weights =
        if balanced { balanced_class_weights(labels)? } else { (1.0, 1.0) };
    let p = features.ncols();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let lr = 0.5;
    let row_weight: Vec<f64> = labels
        .iter()
        .map(|&y| if y > 0.5 { class_weights.1 } else { class_weights.0 })
        .collect();
    let wsum: f64 = row_weight.iter().sum();
    for _step in 0..10_000 {
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for (r, row) in features.outer_iter().enumerate() {
            let z: f64 = row.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>() + b;
            let err = row_weight[r] * (sigmoid(z) - labels[r]);
            for (g, x) in gw.iter_mut().zip(row.iter()) {
                *g += err * x;
            }
            gb += err;
        }
        for g in gw.iter_mut() {
            *g /= wsum;
        }
        gb /= wsum;
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < 1e-6 {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= lr * g;
        }
        b -= lr * gb;
    }
    Ok(ClassifierSpec { selector, weights: w, bias: b, class_weights })
}

// ── Selectors ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    Full,
    Unaware,
    FairX,
    FairZ,
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Selector::Full => "full",
            Selector::Unaware => "unaware",
            Selector::FairX => "fair-x",
            Selector::FairZ => "fair-z",
        };
        write!(f, "{s}")
    }
}

/// Observed-space column set of a selector. `FairZ` has no observed
/// columns; its features are latents.
pub fn selector_columns(
    model: &VacaModel,
    sensitive: usize,
    selector: Selector,
) -> Result<Vec<usize>> {
    let slices = model.graph.node_slices();
    let nodes: Vec<usize> = match selector {
        Selector::Full => (0..model.node_count()).collect(),
        Selector::Unaware => (0..model.node_count()).filter(|&i| i != sensitive).collect(),
        Selector::FairX => {
            let desc = model.graph.descendants(sensitive)?;
            (0..model.node_count())
                .filter(|&i| i != sensitive && !desc.contains(&i))
                .collect()
        }
        Selector::FairZ => {
            return Err(Error::config("fair-z features are latents, not columns"))
        }
    };
    Ok(nodes.into_iter().flat_map(|i| slices[i].clone()).collect())
}

fn select_cols(m: &Matrix, cols: &[usize]) -> Matrix {
    let mut out = Matrix::zeros((m.nrows(), cols.len()));
    for (k, &c) in cols.iter().enumerate() {
        out.column_mut(k).assign(&m.column(c));
    }
    out
}

/// Posterior-mean latents of every node except the sensitive one,
/// concatenated: the fair-z feature map.
pub fn fair_z_features(model: &VacaModel, x: &Matrix, sensitive: usize) -> Result<Matrix> {
    let adj = model.base_adjacency().clone();
    let (mu, _) = model.encode_plain(x, &adj)?;
    let keep: Vec<&Matrix> =
        mu.iter().enumerate().filter(|(i, _)| *i != sensitive).map(|(_, m)| m).collect();
    Ok(crate::gnn::concat_cols_plain(&keep))
}

// ── Unfairness ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
pub struct UfOptions {
    /// Counterfactual draws per branch.
    pub m: usize,
    pub seed: u64,
    /// Clamp the sensitive coordinate of counterfactuals to the
    /// intervention value.
    pub clamp: bool,
    pub mode: CfMode,
}

impl Default for UfOptions {
    fn default() -> Self {
        UfOptions { m: 10, seed: 0, clamp: false, mode: CfMode::Sample }
    }
}

/// Average absolute gap in positive probability between counterfactuals
/// under the two values of the binary sensitive attribute.
pub fn unfairness(
    clf: &ClassifierSpec,
    model: &VacaModel,
    x_factual: &Matrix,
    sensitive: usize,
    opts: UfOptions,
) -> Result<f64> {
    use rand::SeedableRng;
    if model.graph.nodes()[sensitive].kinds != vec![crate::graph::DimKind::Binary] {
        return Err(Error::config("the sensitive attribute must be a binary node"));
    }
    let rows = x_factual.nrows();
    if rows == 0 {
        return Err(Error::data("unfairness needs at least one factual row"));
    }
    let m = if opts.mode == CfMode::Mean { 1 } else { opts.m.max(1) };
    let l = model.config.latent_dim;
    let adj = model.base_adjacency().clone();
    let adj_i = model.graph.vaca_adjacency(&[sensitive])?;
    let (mu_f, logsig_f) = model.encode_plain(x_factual, &adj)?;
    let sig_f: Vec<Matrix> = logsig_f.iter().map(|s| s.mapv(f64::exp)).collect();

    // Intervention-probe posteriors for both branch values.
    let slices = model.graph.node_slices();
    let mut branch_post = Vec::with_capacity(2);
    for a in [0.0, 1.0] {
        let mut probe = Matrix::zeros((rows, model.graph.total_dim()));
        for r in 0..rows {
            probe[[r, slices[sensitive].start]] = a;
        }
        let (mu_i, logsig_i) = model.encode_plain(&probe, &adj_i)?;
        branch_post.push((mu_i[sensitive].clone(), logsig_i[sensitive].mapv(f64::exp)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probs = [vec![0.0f64; rows], vec![0.0f64; rows]];
    for _draw in 0..m {
        // Abduction draw shared by both branches.
        let zf: Vec<Matrix> = match opts.mode {
            CfMode::Mean => mu_f.clone(),
            CfMode::Sample => mu_f
                .iter()
                .zip(&sig_f)
                .map(|(mu, s)| {
                    let eps = randn(&mut rng, rows, l);
                    mu + &(s * &eps)
                })
                .collect(),
        };
        for (b, alpha) in [0.0, 1.0].into_iter().enumerate() {
            let mut z = zf.clone();
            let (mu_i, sig_i) = &branch_post[b];
            z[sensitive] = match opts.mode {
                CfMode::Mean => mu_i.clone(),
                CfMode::Sample => {
                    let eps = randn(&mut rng, rows, l);
                    mu_i + &(sig_i * &eps)
                }
            };
            let features = match clf.selector {
                Selector::FairZ => {
                    let keep: Vec<&Matrix> = z
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != sensitive)
                        .map(|(_, m)| m)
                        .collect();
                    crate::gnn::concat_cols_plain(&keep)
                }
                sel => {
                    let eta = model.decode_plain(&z, &adj_i)?;
                    let mut x_cf = match opts.mode {
                        CfMode::Mean => model.likelihood_means(&eta),
                        CfMode::Sample => model.sample_likelihood(&eta, &mut rng),
                    };
                    if opts.clamp {
                        for r in 0..rows {
                            x_cf[[r, slices[sensitive].start]] = alpha;
                        }
                    }
                    let cols = selector_columns(model, sensitive, sel)?;
                    select_cols(&x_cf, &cols)
                }
            };
            for (acc, p) in probs[b].iter_mut().zip(clf.prob_rows(&features)) {
                *acc += p;
            }
        }
    }
    let mf = m as f64;
    let uf = (0..rows)
        .map(|r| (probs[0][r] / mf - probs[1][r] / mf).abs())
        .sum::<f64>()
        / rows as f64;
    Ok(uf)
}

// ── Classifier quality ────────────────────────────────────────────────

pub fn accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| (**p > 0.5) == (**t > 0.5))
        .count();
    hits as f64 / truth.len() as f64
}

pub fn f1_score(pred: &[f64], truth: &[f64]) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fne = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let (p, t) = (*p > 0.5, *t > 0.5);
        match (p, t) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fne += 1.0,
            (false, false) => {}
        }
    }
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fne);
    2.0 * precision * recall / (precision + recall)
}

// ── Audit ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy)]
pub struct AuditConfig {
    /// Counterfactual draws per branch for the unfairness measure.
    pub m: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { m: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub selector: Selector,
    pub uf: f64,
    pub f1: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub cf_draws: usize,
    pub model_hash: String,
}

impl AuditReport {
    pub fn entry(&self, selector: Selector) -> &AuditEntry {
        self.entries.iter().find(|e| e.selector == selector).expect("all selectors audited")
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("audit report: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

/// Trains the four classifiers on the training split and reports
/// unfairness, f1 and accuracy on the test split.
pub fn audit(
    model: &VacaModel,
    ds: &Dataset,
    labels: &[f64],
    sensitive: usize,
    cfg: AuditConfig,
) -> Result<AuditReport> {
    if labels.len() != ds.total_rows() {
        return Err(Error::data("labels must align with dataset rows"));
    }
    if ds.splits.test == 0 {
        return Err(Error::data("audit needs a test split"));
    }
    let train_rows = 0..ds.splits.train;
    let test_rows = ds.test_rows();
    let train_x = ds.train_x();
    let test_x = ds.test_x();
    let y_train: Vec<f64> = train_rows.map(|r| labels[r]).collect();
    let y_test: Vec<f64> = test_rows.map(|r| labels[r]).collect();

    let mut entries = Vec::new();
    for selector in [Selector::Full, Selector::Unaware, Selector::FairX, Selector::FairZ] {
        let (ftrain, ftest) = match selector {
            Selector::FairZ => (
                fair_z_features(model, &train_x, sensitive)?,
                fair_z_features(model, &test_x, sensitive)?,
            ),
            sel => {
                let cols = selector_columns(model, sensitive, sel)?;
                (select_cols(&train_x, &cols), select_cols(&test_x, &cols))
            }
        };
        let clf = train_logreg(selector, &ftrain, &y_train, true)?;
        let pred = clf.prob_rows(&ftest);
        let uf = unfairness(
            &clf,
            model,
            &test_x,
            sensitive,
            UfOptions { m: cfg.m, seed: cfg.seed, ..UfOptions::default() },
        )?;
        entries.push(AuditEntry {
            selector,
            uf,
            f1: f1_score(&pred, &y_test),
            acc: accuracy(&pred, &y_test),
        });
    }
    Ok(AuditReport { entries, cf_draws: cfg.m, model_hash: model_hash(model) })
}

/// Demonstration label rule for the synthetic loan data (no published label
/// equation exists): `y = 1 { sigmoid(0.3 I + 0.2 S - 0.1 D - 0.1 L + e) > 0.5 }`
/// with `e ~ N(0, 0.25)`, computed on raw (denormalized) units. `S` here is
/// savings, not the sensitive attribute.
pub fn synthetic_loan_labels(ds: &Dataset, seed: u64) -> Result<Vec<f64>> {
    use rand::SeedableRng;
    for name in ["i", "s", "d", "l"] {
        if ds.layout.node_index(name).is_none() {
            return Err(Error::data(format!("loan label rule needs column {name}")));
        }
    }
    let slices = ds.layout.node_slices();
    let col = |n: &str| slices[ds.layout.node_index(n).unwrap()].start;
    let (ci, cs, cd, cl) = (col("i"), col("s"), col("d"), col("l"));
    let raw = ds.denormalize_matrix(&ds.x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = randn(&mut rng, raw.nrows(), 1) * 0.5;
    Ok((0..raw.nrows())
        .map(|r| {
            let z = 0.3 * raw[[r, ci]] + 0.2 * raw[[r, cs]]
                - 0.1 * raw[[r, cd]]
                - 0.1 * raw[[r, cl]]
                + noise[[r, 0]];
            if sigmoid(z) > 0.5 {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}
