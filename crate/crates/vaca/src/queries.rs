//! Observational, interventional and counterfactual queries against a
//! trained model.
//!
//! All three queries are pure functions of a frozen model plus a seed, in
//! the model's normalized data space:
//!
//! - observational: latents from the prior, decode under the base
//!   adjacency, sample the likelihood;
//! - interventional: sever the intervened node's row in the adjacency,
//!   encode a probe vector that carries only the intervention value (the
//!   other coordinates are provably irrelevant), take that node's posterior
//!   latent, prior latents elsewhere, decode, sample;
//! - counterfactual: abduct latents for the factual rows under the base
//!   adjacency, swap in the intervened node's latent from the intervention
//!   probe, decode under the severed adjacency.
//!
//! Message aggregation visits edges in a fixed order, so coordinates of
//! nodes that are not descendants of the intervened node come out bitwise
//! identical to the factual reconstruction.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diff::{randn, Matrix};
use crate::error::{Error, Result};
use crate::model::VacaModel;

/// A single-node intervention `do(node = alpha)`, with `alpha` in
/// normalized units (the model's training space) unless converted by the
/// caller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub node: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Observational,
    Interventional,
    Counterfactual,
}

/// Point-estimate vs distribution mode for counterfactuals: `Mean` uses
/// posterior means and likelihood means (deterministic), `Sample` draws
/// both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfMode {
    Mean,
    Sample,
}

/// Sampled matrix plus provenance.
#[derive(Debug, Clone)]
pub struct QueryResult {
    pub samples: Matrix,
    pub kind: QueryKind,
    pub model_hash: String,
    pub seed: u64,
    pub intervention: Option<InterventionSpec>,
}

/// Hash of the model's parameter values, used as query provenance.
pub fn model_hash(model: &VacaModel) -> String {
    let mut h = Sha256::new();
    h.update(model.graph.hash().as_bytes());
    for p in model.params.params() {
        for v in p.value.iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn check_node(model: &VacaModel, node: usize) -> Result<()> {
    if node >= model.node_count() {
        return Err(Error::graph(format!("node {node} out of range")));
    }
    if model.graph.nodes()[node].dim() != 1 {
        return Err(Error::config(format!(
            "interventions target one-dimensional nodes; {} has dimension {}",
            model.graph.nodes()[node].name,
            model.graph.nodes()[node].dim()
        )));
    }
    Ok(())
}

/// Draws `n` observational samples from the fitted joint distribution.
pub fn sample_observational_vaca(model: &VacaModel, n: usize, seed: u64) -> Result<QueryResult> {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.node_count();
    let l = model.config.latent_dim;
    let adj = model.base_adjacency().clone();
    let samples = if n == 0 {
        Matrix::zeros((0, model.graph.total_dim()))
    } else {
        let z: Vec<Matrix> = (0..d).map(|_| randn(&mut rng, n, l)).collect();
        let eta = model.decode_plain(&z, &adj)?;
        model.sample_likelihood(&eta, &mut rng)
    };
    Ok(QueryResult {
        samples,
        kind: QueryKind::Observational,
        model_hash: model_hash(model),
        seed,
        intervention: None,
    })
}

/// Builds the intervention probe: zeros everywhere except the intervened
/// coordinate. Only that coordinate can reach the intervened node's
/// posterior under the severed adjacency.
fn intervention_probe(model: &VacaModel, spec: InterventionSpec, rows: usize) -> Matrix {
    let slices = model.graph.node_slices();
    let mut x = Matrix::zeros((rows, model.graph.total_dim()));
    for r in 0..rows {
        x[[r, slices[spec.node].start]] = spec.alpha;
    }
    x
}

/// Draws `n` samples from the estimated interventional distribution under
/// `do(node = alpha)`.
pub fn sample_interventional_vaca(
    model: &VacaModel,
    spec: InterventionSpec,
    n: usize,
    seed: u64,
) -> Result<QueryResult> {
    use rand::SeedableRng;
    check_node(model, spec.node)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.node_count();
    let l = model.config.latent_dim;
    let adj_i = model.graph.vaca_adjacency(&[spec.node])?;
    let samples = if n == 0 {
        Matrix::zeros((0, model.graph.total_dim()))
    } else {
        let probe = intervention_probe(model, spec, n);
        let (mu, logsig) = model.encode_plain(&probe, &adj_i)?;
        let mut z: Vec<Matrix> = (0..d).map(|_| randn(&mut rng, n, l)).collect();
        // The intervened node's latent comes from its posterior under the
        // severed adjacency; everything else stays on the prior.
        let eps = randn(&mut rng, n, l);
        z[spec.node] = &mu[spec.node] + &(&logsig[spec.node].mapv(f64::exp) * &eps);
        let eta = model.decode_plain(&z, &adj_i)?;
        model.sample_likelihood(&eta, &mut rng)
    };
    Ok(QueryResult {
        samples,
        kind: QueryKind::Interventional,
        model_hash: model_hash(model),
        seed,
        intervention: Some(spec),
    })
}

/// Abduction latents for factual rows: posterior means (`Mean`) or a
/// reparameterized draw (`Sample`) for every node, under the base
/// adjacency.
pub fn abduction_latents(
    model: &VacaModel,
    x_factual: &Matrix,
    mode: CfMode,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Matrix>> {
    let adj = model.base_adjacency().clone();
    let (mu, logsig) = model.encode_plain(x_factual, &adj)?;
    Ok(match mode {
        CfMode::Mean => mu,
        CfMode::Sample => mu
            .iter()
            .zip(&logsig)
            .map(|(m, ls)| {
                let eps = randn(rng, m.nrows(), m.ncols());
                m + &(&ls.mapv(f64::exp) * &eps)
            })
            .collect(),
    })
}

/// Options for counterfactual generation.
#[derive(Debug, Clone, Copy)]
pub struct CfOptions {
    pub mode: CfMode,
    /// Overwrite the intervened node's output coordinate with alpha instead
    /// of reporting its decoded value.
    pub clamp_intervened: bool,
}

impl Default for CfOptions {
    fn default() -> Self {
        CfOptions { mode: CfMode::Mean, clamp_intervened: false }
    }
}

/// Prediction step given pre-computed abduction latents: replaces the
/// intervened node's latent by the intervention-probe posterior, decodes
/// under the severed adjacency.
pub fn counterfactual_from_latents(
    model: &VacaModel,
    abducted: &[Matrix],
    spec: InterventionSpec,
    opts: CfOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    check_node(model, spec.node)?;
    let rows = abducted[0].nrows();
    let adj_i = model.graph.vaca_adjacency(&[spec.node])?;
    let probe = intervention_probe(model, spec, rows);
    let (mu_i, logsig_i) = model.encode_plain(&probe, &adj_i)?;
    let mut z = abducted.to_vec();
    z[spec.node] = match opts.mode {
        CfMode::Mean => mu_i[spec.node].clone(),
        CfMode::Sample => {
            let eps = randn(rng, rows, model.config.latent_dim);
            &mu_i[spec.node] + &(&logsig_i[spec.node].mapv(f64::exp) * &eps)
        }
    };
    let eta = model.decode_plain(&z, &adj_i)?;
    let mut out = match opts.mode {
        CfMode::Mean => model.likelihood_means(&eta),
        CfMode::Sample => model.sample_likelihood(&eta, rng),
    };
    if opts.clamp_intervened {
        let col = model.graph.node_slices()[spec.node].start;
        for r in 0..rows {
            out[[r, col]] = spec.alpha;
        }
    }
    Ok(out)
}

/// Full abduction-action-prediction counterfactual for a batch of factual
/// rows. Deterministic in `Mean` mode.
pub fn counterfactual_vaca(
    model: &VacaModel,
    x_factual: &Matrix,
    spec: InterventionSpec,
    opts: CfOptions,
    seed: u64,
) -> Result<QueryResult> {
    use rand::SeedableRng;
    if x_factual.ncols() != model.graph.total_dim() {
        return Err(Error::data(format!(
            "factual rows have {} columns, the graph wants {}",
            x_factual.ncols(),
            model.graph.total_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let abducted = abduction_latents(model, x_factual, opts.mode, &mut rng)?;
    let samples = counterfactual_from_latents(model, &abducted, spec, opts, &mut rng)?;
    Ok(QueryResult {
        samples,
        kind: QueryKind::Counterfactual,
        model_hash: model_hash(model),
        seed,
        intervention: Some(spec),
    })
}

/// The factual reconstruction: decoded likelihood means of the abduction
/// latents under the base adjacency. Counterfactual coordinates of
/// non-descendants equal these bitwise.
pub fn factual_reconstruction(model: &VacaModel, x_factual: &Matrix) -> Result<Matrix> {
    let adj = model.base_adjacency().clone();
    let (mu, _) = model.encode_plain(x_factual, &adj)?;
    let eta = model.decode_plain(&mu, &adj)?;
    Ok(model.likelihood_means(&eta))
}

// ── Persistence ───────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
pub struct QueryProvenance {
    pub kind: QueryKind,
    pub model_hash: String,
    pub seed: u64,
    pub intervention: Option<InterventionSpec>,
    pub columns: Vec<String>,
    pub normalized_units: bool,
}

impl QueryResult {
    /// Writes the samples as CSV plus a JSON provenance header next to it.
    pub fn save(
        &self,
        csv_path: &std::path::Path,
        columns: &[String],
        normalized_units: bool,
    ) -> Result<()> {
        crate::dataset::write_csv(csv_path, &self.samples, columns)?;
        let prov = QueryProvenance {
            kind: self.kind,
            model_hash: self.model_hash.clone(),
            seed: self.seed,
            intervention: self.intervention,
            columns: columns.to_vec(),
            normalized_units,
        };
        let json = serde_json::to_string_pretty(&prov)
            .map_err(|e| Error::data(format!("provenance: {e}")))?;
        let mut p = csv_path.as_os_str().to_os_string();
        p.push(".json");
        std::fs::write(std::path::PathBuf::from(p), json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Activation;
    use crate::metrics::{mmd2, KernelSpec};
    use crate::model::VacaConfig;
    use crate::scm::{builtin_scm, Sem};
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn model(name: &str, n_h: usize, seed: u64) -> VacaModel {
        let g = builtin_scm(name, Sem::Lin).unwrap().graph;
        let cfg = VacaConfig {
            latent_dim: 2,
            encoder_feature_dim: 4,
            encoder_message_hidden: vec![6],
            encoder_message_dim: 4,
            decoder_hidden_layers: n_h,
            decoder_hidden_width: 6,
            decoder_message_hidden: vec![6],
            decoder_feature_dim: 6,
            activation: Activation::Tanh,
            allow_shallow_decoder: true,
            ..VacaConfig::default()
        };
        VacaModel::new(g, cfg, seed).unwrap()
    }

    #[test]
    fn observational_sampling_contracts() {
        let m = model("collider", 1, 1);
        let empty = sample_observational_vaca(&m, 0, 3).unwrap();
        assert_eq!(empty.samples.nrows(), 0);
        let a = sample_observational_vaca(&m, 20, 3).unwrap();
        let b = sample_observational_vaca(&m, 20, 3).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = sample_observational_vaca(&m, 20, 4).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn interventional_filler_independence() {
        // Changing the probe's non-intervened coordinates cannot reach any
        // output: rerun the pipeline with randomized fillers and compare
        // bitwise.
        let m = model("triangle", 1, 2);
        let spec = InterventionSpec { node: 1, alpha: 0.5 };
        let a = sample_interventional_vaca(&m, spec, 30, 7).unwrap();

        let adj_i = m.graph.vaca_adjacency(&[1]).unwrap();
        let mut r = rng(7);
        let d = m.node_count();
        let l = m.config.latent_dim;
        let mut probe = Matrix::from_elem((30, 3), 123.456);
        for row in 0..30 {
            probe[[row, 1]] = 0.5;
        }
        let (mu, logsig) = m.encode_plain(&probe, &adj_i).unwrap();
        let mut z: Vec<Matrix> = (0..d).map(|_| randn(&mut r, 30, l)).collect();
        let eps = randn(&mut r, 30, l);
        z[1] = &mu[1] + &(&logsig[1].mapv(f64::exp) * &eps);
        let eta = m.decode_plain(&z, &adj_i).unwrap();
        let b = m.sample_likelihood(&eta, &mut r);
        for (x, y) in a.samples.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn counterfactual_mean_mode_is_deterministic() {
        let m = model("chain", 1, 3);
        let mut r = rng(1);
        let x = randn(&mut r, 6, 3);
        let spec = InterventionSpec { node: 0, alpha: 0.7 };
        let a = counterfactual_vaca(&m, &x, spec, CfOptions::default(), 11).unwrap();
        let b = counterfactual_vaca(&m, &x, spec, CfOptions::default(), 999).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn counterfactual_non_descendants_match_reconstruction_bitwise() {
        let m = model("mgraph", 1, 4);
        let mut r = rng(2);
        let x = randn(&mut r, 5, 5);
        let recon = factual_reconstruction(&m, &x).unwrap();
        // Intervene on x2 (index 1): descendants are x4, x5 (indexes 3, 4).
        let spec = InterventionSpec { node: 1, alpha: -0.3 };
        let cf = counterfactual_vaca(&m, &x, spec, CfOptions::default(), 0).unwrap();
        for row in 0..5 {
            for col in [0usize, 2] {
                assert_eq!(cf.samples[[row, col]].to_bits(), recon[[row, col]].to_bits());
            }
        }
        let mut any_diff = false;
        for row in 0..5 {
            for col in [3usize, 4] {
                any_diff |= cf.samples[[row, col]] != recon[[row, col]];
            }
        }
        assert!(any_diff, "descendant columns should respond to the intervention");
    }

    #[test]
    fn null_intervention_keeps_non_descendants_at_reconstruction() {
        let m = model("chain", 1, 5);
        let mut r = rng(3);
        let x = randn(&mut r, 1, 3);
        let spec = InterventionSpec { node: 1, alpha: x[[0, 1]] };
        let cf = counterfactual_vaca(&m, &x, spec, CfOptions::default(), 0).unwrap();
        let recon = factual_reconstruction(&m, &x).unwrap();
        // x1 is not a descendant of x2.
        assert_eq!(cf.samples[[0, 0]].to_bits(), recon[[0, 0]].to_bits());
    }

    #[test]
    fn leaf_intervention_preserves_non_descendant_marginals() {
        // do on a leaf: marginals of everything else match observational
        // sampling in distribution, even for an untrained model.
        let m = model("collider", 1, 6);
        let n = 2000;
        let obs = sample_observational_vaca(&m, n, 41).unwrap();
        let spec = InterventionSpec { node: 2, alpha: 0.3 };
        let int = sample_interventional_vaca(&m, spec, n, 42).unwrap();
        let pick = |m: &Matrix| {
            let mut out = Matrix::zeros((n, 2));
            for r in 0..n {
                out[[r, 0]] = m[[r, 0]];
                out[[r, 1]] = m[[r, 1]];
            }
            out
        };
        let d2 = mmd2(&pick(&obs.samples), &pick(&int.samples), &KernelSpec::default(), true)
            .unwrap();
        assert!(d2 <= 0.01, "non-descendant marginals drifted: mmd^2 = {d2}");
    }

    #[test]
    fn prior_permutation_leaves_marginals_unchanged() {
        // Interventional runs with different seeds (hence permuted prior
        // draws) stay distributionally identical.
        let m = model("triangle", 1, 8);
        let spec = InterventionSpec { node: 0, alpha: 1.0 };
        let n = 2000;
        let a = sample_interventional_vaca(&m, spec, n, 1).unwrap();
        let b = sample_interventional_vaca(&m, spec, n, 2).unwrap();
        let d2 = mmd2(&a.samples, &b.samples, &KernelSpec::default(), true).unwrap();
        assert!(d2 <= 0.01, "permuted runs drifted: mmd^2 = {d2}");
    }

    #[test]
    fn clamp_flag_pins_intervened_coordinate() {
        let m = model("chain", 1, 9);
        let mut r = rng(4);
        let x = randn(&mut r, 3, 3);
        let spec = InterventionSpec { node: 0, alpha: 2.5 };
        let opts = CfOptions { mode: CfMode::Sample, clamp_intervened: true };
        let cf = counterfactual_vaca(&m, &x, spec, opts, 5).unwrap();
        for row in 0..3 {
            assert_eq!(cf.samples[[row, 0]], 2.5);
        }
    }

    #[test]
    fn multidim_node_rejects_intervention() {
        use crate::graph::{CausalGraph, NodeSpec};
        let g = CausalGraph::new(
            vec![
                NodeSpec { name: "a".into(), kinds: vec![crate::graph::DimKind::Continuous; 2] },
                NodeSpec::continuous("b"),
            ],
            vec![(0, 1)],
        )
        .unwrap();
        let cfg = VacaConfig {
            latent_dim: 2,
            encoder_feature_dim: 4,
            encoder_message_hidden: vec![4],
            encoder_message_dim: 4,
            decoder_hidden_layers: 0,
            decoder_feature_dim: 4,
            decoder_message_hidden: vec![4],
            allow_shallow_decoder: true,
            ..VacaConfig::default()
        };
        let m = VacaModel::new(g, cfg, 0).unwrap();
        assert!(sample_interventional_vaca(&m, InterventionSpec { node: 0, alpha: 0.0 }, 4, 0)
            .is_err());
    }

    #[test]
    fn query_save_round_trip() {
        let m = model("collider", 1, 10);
        let q = sample_observational_vaca(&m, 8, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let cols: Vec<String> = vec!["x1".into(), "x2".into(), "x3".into()];
        q.save(&path, &cols, true).unwrap();
        let back = crate::dataset::read_csv(&path).unwrap();
        for (a, b) in back.iter().zip(q.samples.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let prov: QueryProvenance = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("obs.csv.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(prov.model_hash, q.model_hash);
    }
}
