//! Ground-truth structural causal models: exogenous priors plus
//! deterministic structural equations.
//!
//! An [`ScmSpec`] generates observational datasets, answers exact
//! interventional queries by overriding a node's equation, and answers exact
//! counterfactual queries by re-evaluating the equations with the stored
//! exogenous draws of a factual row (abduction is exact by storage, which
//! sidesteps non-invertible non-additive equations). It is the verification
//! oracle the learned model is scored against.
//!
//! `ScmSpec` is immutable; sampling takes an explicit seed and is
//! re-entrant, so independent workers can sample in parallel with distinct
//! seeds.

mod builtins;

pub use builtins::{builtin_scm, BUILTIN_NAMES};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Normal as NormalDist};

use crate::dataset::{DataLayout, Dataset, SplitSizes};
use crate::diff::Matrix;
use crate::error::{Error, Result};
use crate::graph::CausalGraph;

// ── Exogenous priors ──────────────────────────────────────────────────

/// Prior of one exogenous variable. Normal-family entries are parameterized
/// by variance, Gamma by shape and scale.
#[derive(Debug, Clone, PartialEq)]
pub enum ExogenousPrior {
    Normal { mean: f64, variance: f64 },
    MixtureOfGaussians { weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64> },
    Bernoulli { p: f64 },
    Gamma { shape: f64, scale: f64 },
    ShiftedGamma { shape: f64, scale: f64, shift: f64 },
    /// Uniform over codes `0..weights.len()` with the given probabilities.
    Categorical { weights: Vec<f64> },
}

impl ExogenousPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ExogenousPrior::Normal { variance, .. } => *variance > 0.0,
            ExogenousPrior::MixtureOfGaussians { weights, means, variances } => {
                weights.len() == means.len()
                    && means.len() == variances.len()
                    && !weights.is_empty()
                    && weights.iter().all(|w| *w >= 0.0)
                    && (weights.iter().sum::<f64>() - 1.0).abs() < 1e-9
                    && variances.iter().all(|v| *v > 0.0)
            }
            ExogenousPrior::Bernoulli { p } => (0.0..=1.0).contains(p),
            ExogenousPrior::Gamma { shape, scale }
            | ExogenousPrior::ShiftedGamma { shape, scale, .. } => *shape > 0.0 && *scale > 0.0,
            ExogenousPrior::Categorical { weights } => {
                !weights.is_empty()
                    && weights.iter().all(|w| *w >= 0.0)
                    && (weights.iter().sum::<f64>() - 1.0).abs() < 1e-9
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid exogenous prior {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            ExogenousPrior::Normal { mean, variance } => {
                NormalDist::new(*mean, variance.sqrt()).unwrap().sample(rng)
            }
            ExogenousPrior::MixtureOfGaussians { weights, means, variances } => {
                let k = pick_weighted(weights, rng);
                NormalDist::new(means[k], variances[k].sqrt()).unwrap().sample(rng)
            }
            ExogenousPrior::Bernoulli { p } => {
                if rng.gen::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            ExogenousPrior::Gamma { shape, scale } => {
                GammaDist::new(*shape, *scale).unwrap().sample(rng)
            }
            ExogenousPrior::ShiftedGamma { shape, scale, shift } => {
                GammaDist::new(*shape, *scale).unwrap().sample(rng) + shift
            }
            ExogenousPrior::Categorical { weights } => pick_weighted(weights, rng) as f64,
        }
    }
}

fn pick_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.gen::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if r < acc {
            return k;
        }
    }
    weights.len() - 1
}

// ── Structural equations ──────────────────────────────────────────────

/// Read-only view of a node's parent values: equations can touch only the
/// values of `pa(node)` and their own exogenous draw, because nothing else
/// is passed in.
pub struct ParentView<'a> {
    pairs: &'a [(usize, f64)],
}

impl ParentView<'_> {
    /// Value of parent node `i`. Panics if `i` is not a parent: that is a
    /// bug in an equation definition, not a runtime condition.
    pub fn get(&self, i: usize) -> f64 {
        match self.pairs.iter().find(|(j, _)| *j == i) {
            Some((_, v)) => *v,
            None => panic!("structural equation read node {i} which is not a parent"),
        }
    }
}

pub type EquationFn = fn(&ParentView, f64) -> f64;

/// Deterministic map from (parent values, exogenous draw) to a node value.
#[derive(Clone)]
pub struct StructuralEquation {
    pub node: usize,
    pub eval: EquationFn,
}

impl std::fmt::Debug for StructuralEquation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "StructuralEquation(node {})", self.node)
    }
}

// ── The SCM ───────────────────────────────────────────────────────────

/// Which structural-equation family a built-in synthetic SCM uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sem {
    Lin,
    Nlin,
    Nadd,
    /// For SCMs with a single fixed equation set (loan, adult).
    Fixed,
}

impl std::str::FromStr for Sem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LIN" => Ok(Sem::Lin),
            "NLIN" => Ok(Sem::Nlin),
            "NADD" => Ok(Sem::Nadd),
            "FIXED" | "-" | "" => Ok(Sem::Fixed),
            other => Err(Error::config(format!("unknown SEM family {other:?}"))),
        }
    }
}

impl std::fmt::Display for Sem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Sem::Lin => "LIN",
            Sem::Nlin => "NLIN",
            Sem::Nadd => "NADD",
            Sem::Fixed => "fixed",
        };
        write!(f, "{s}")
    }
}

/// A complete ground-truth model: graph, one prior and one equation per
/// node. All built-in nodes are one-dimensional.
#[derive(Debug, Clone)]
pub struct ScmSpec {
    pub name: String,
    pub sem: Sem,
    pub graph: CausalGraph,
    pub priors: Vec<ExogenousPrior>,
    pub equations: Vec<StructuralEquation>,
    /// Per-column pre-scale handed to dataset normalization.
    pub pre_scale: Vec<f64>,
}

impl ScmSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.graph.node_count();
        if self.priors.len() != d || self.equations.len() != d {
            return Err(Error::config("priors/equations count must equal node count"));
        }
        for p in &self.priors {
            p.validate()?;
        }
        for (i, eq) in self.equations.iter().enumerate() {
            if eq.node != i {
                return Err(Error::config("equations must be listed in node order"));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    fn eval_inner(&self, u: &[f64], intervention: Option<(usize, f64)>) -> Vec<f64> {
        let order = self.graph.topological_order().expect("graph validated");
        let mut x = vec![0.0; self.node_count()];
        for &i in &order {
            if let Some((node, alpha)) = intervention {
                if node == i {
                    x[i] = alpha;
                    continue;
                }
            }
            let pairs: Vec<(usize, f64)> =
                self.graph.parents(i).into_iter().map(|p| (p, x[p])).collect();
            let view = ParentView { pairs: &pairs };
            x[i] = (self.equations[i].eval)(&view, u[i]);
        }
        x
    }

    /// Pushes one exogenous draw through the structural equations.
    pub fn evaluate(&self, u: &[f64]) -> Vec<f64> {
        self.eval_inner(u, None)
    }

    /// Same, with `do(node = alpha)`: the node's equation is replaced by the
    /// constant and its incoming influence is ignored.
    pub fn evaluate_do(&self, u: &[f64], node: usize, alpha: f64) -> Vec<f64> {
        self.eval_inner(u, Some((node, alpha)))
    }

    pub fn sample_u(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.priors.iter().map(|p| p.sample(rng)).collect()
    }

    fn layout(&self) -> DataLayout {
        DataLayout {
            node_names: self.graph.nodes().iter().map(|n| n.name.clone()).collect(),
            kinds: self.graph.nodes().iter().map(|n| n.kinds.clone()).collect(),
        }
    }

    fn sample_matrix(
        &self,
        n: usize,
        seed: u64,
        intervention: Option<(usize, f64)>,
    ) -> (Matrix, Matrix) {
        use rand::SeedableRng;
        let d = self.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Matrix::zeros((n, d));
        let mut u = Matrix::zeros((n, d));
        for r in 0..n {
            let draw = self.sample_u(&mut rng);
            let row = self.eval_inner(&draw, intervention);
            for c in 0..d {
                u[[r, c]] = draw[c];
                x[[r, c]] = row[c];
            }
        }
        (x, u)
    }

    /// Draws `n` observational rows; deterministic given the seed. Rows all
    /// land in the training split; use [`ScmSpec::sample_splits`] when
    /// train/valid/test structure is needed.
    pub fn sample_observational(&self, n: usize, seed: u64) -> Dataset {
        let (x, u) = self.sample_matrix(n, seed, None);
        Dataset {
            x,
            u: Some(u),
            layout: self.layout(),
            splits: SplitSizes { train: n, valid: 0, test: 0 },
            normalization: None,
            seed,
            pre_scale: self.pre_scale.clone(),
        }
    }

    /// Observational rows with split structure `[train | valid | test]`.
    pub fn sample_splits(&self, splits: SplitSizes, seed: u64) -> Dataset {
        let (x, u) = self.sample_matrix(splits.total(), seed, None);
        Dataset {
            x,
            u: Some(u),
            layout: self.layout(),
            splits,
            normalization: None,
            seed,
            pre_scale: self.pre_scale.clone(),
        }
    }

    /// Draws `n` rows under `do(node = alpha)`. Same seed means the same
    /// exogenous draws as the observational sampler.
    pub fn sample_interventional(&self, node: usize, alpha: f64, n: usize, seed: u64) -> Dataset {
        let (x, u) = self.sample_matrix(n, seed, Some((node, alpha)));
        Dataset {
            x,
            u: Some(u),
            layout: self.layout(),
            splits: SplitSizes { train: n, valid: 0, test: 0 },
            normalization: None,
            seed,
            pre_scale: self.pre_scale.clone(),
        }
    }

    /// Exact counterfactual for a stored factual row: re-evaluates the
    /// equations with the row's stored exogenous draws under
    /// `do(node = alpha)`. Raw (unnormalized) units.
    pub fn counterfactual_oracle(
        &self,
        ds: &Dataset,
        row: usize,
        node: usize,
        alpha: f64,
    ) -> Result<Vec<f64>> {
        let u = ds
            .u
            .as_ref()
            .ok_or_else(|| Error::data("abduction unavailable: dataset has no stored exogenous draws"))?;
        if row >= u.nrows() {
            return Err(Error::data(format!("row {row} out of range ({} rows)", u.nrows())));
        }
        if node >= self.node_count() {
            return Err(Error::graph(format!("node {node} out of range")));
        }
        let draw: Vec<f64> = u.row(row).to_vec();
        Ok(self.evaluate_do(&draw, node, alpha))
    }
}

// Helper shared by the built-in equations.
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}
