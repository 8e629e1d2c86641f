//! The variational causal graph autoencoder.
//!
//! Architecture, driven by the causal graph:
//!
//! - per-node input adapters map raw (possibly heterogeneous) columns to a
//!   shared feature width;
//! - the encoder is a single message-passing layer (no hidden layers), so
//!   each node's posterior sees exactly itself and its parents;
//! - the decoder is a message-passing stack with at least
//!   `longest_path - 1` hidden layers, so every surviving causal path fits
//!   inside its receptive field and adjacency surgery severs exactly the
//!   mediated paths;
//! - per-node output heads map decoder features to likelihood parameters:
//!   fixed-variance Gaussian means for continuous dimensions, Bernoulli
//!   logits for binary, softmax logits for categorical.
//!
//! Continuous likelihoods use variance `lambda_kld / 2`; the evidence bound
//! keeps the KL term unweighted by default (`kl_weight = 1`), which trades
//! off reconstruction and regularization through the likelihood variance.

mod train;

pub use train::{StopReason, TrainReport};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Normalization;
use crate::diff::{
    log_sum_exp_cols, randn, sigmoid, softmax_cols, softplus, Matrix, ParamSet, Tape, TensorId,
};
use crate::error::{Error, Result};
use crate::gnn::{Activation, GnnLayer, GnnStack, LayerMode, Mlp};
use crate::graph::{CausalGraph, DimKind, VacaAdjacency};

// ── Configuration ─────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VacaConfig {
    /// Latent dimension per node.
    pub latent_dim: usize,
    /// Width of the per-node input adapters feeding the encoder layer.
    pub encoder_feature_dim: usize,
    /// Hidden widths of the encoder message nets.
    pub encoder_message_hidden: Vec<usize>,
    /// Output width of the encoder message nets.
    pub encoder_message_dim: usize,
    /// Number of hidden decoder layers (the stack has one more layer).
    pub decoder_hidden_layers: usize,
    pub decoder_hidden_width: usize,
    /// Hidden widths of the decoder message nets.
    pub decoder_message_hidden: Vec<usize>,
    /// Width of the decoder output features consumed by the heads.
    pub decoder_feature_dim: usize,
    /// Disjoint (per-edge/per-node nets) or shared parameters.
    pub layer_mode: LayerMode,
    pub activation: Activation,
    /// Probability of removing all incoming non-self messages of a node
    /// during training, resampled each forward pass.
    pub parents_dropout: f64,
    /// Sets the continuous likelihood variance to `lambda_kld / 2`.
    pub lambda_kld: f64,
    /// Weight on the KL term of the evidence bound.
    pub kl_weight: f64,
    /// Additive skip connections inside hidden decoder layers when widths
    /// match.
    pub residual: bool,
    /// Apply the activation to the last decoder layer's output as well
    /// (heads then read nonlinear features).
    pub decoder_final_activation: bool,
    /// Permits a decoder shallower than `longest_path - 1` (for depth
    /// ablations only).
    pub allow_shallow_decoder: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early stopping: give up after this many epochs without validation
    /// improvement.
    pub patience: usize,
    /// Importance samples for the validation bound.
    pub iwae_k: usize,
}

impl Default for VacaConfig {
    fn default() -> Self {
        VacaConfig {
            latent_dim: 4,
            encoder_feature_dim: 16,
            encoder_message_hidden: vec![16],
            encoder_message_dim: 8,
            decoder_hidden_layers: 1,
            decoder_hidden_width: 16,
            // Decoder expressiveness comes from stacking layers; messages
            // inside a layer are linear maps between the layer widths.
            decoder_message_hidden: vec![],
            decoder_feature_dim: 16,
            layer_mode: LayerMode::Disjoint,
            activation: Activation::Relu,
            parents_dropout: 0.1,
            lambda_kld: 0.05,
            kl_weight: 1.0,
            residual: false,
            decoder_final_activation: true,
            allow_shallow_decoder: false,
            learning_rate: 0.005,
            batch_size: 1000,
            max_epochs: 500,
            patience: 50,
            iwae_k: 100,
        }
    }
}

impl VacaConfig {
    pub fn likelihood_variance(&self) -> f64 {
        self.lambda_kld / 2.0
    }

    pub fn validate(&self, graph: &CausalGraph) -> Result<()> {
        if self.lambda_kld <= 0.0 {
            return Err(Error::config("lambda_kld must be positive"));
        }
        if !(0.0..1.0).contains(&self.parents_dropout) {
            return Err(Error::config("parents_dropout must be in [0, 1)"));
        }
        if self.latent_dim == 0 || self.batch_size == 0 || self.iwae_k == 0 {
            return Err(Error::config("latent_dim, batch_size and iwae_k must be positive"));
        }
        let gamma = graph.longest_path();
        let need = gamma.saturating_sub(1);
        if self.decoder_hidden_layers < need && !self.allow_shallow_decoder {
            return Err(Error::config(format!(
                "decoder needs at least {need} hidden layers for this graph \
                 (longest path {gamma}); set allow_shallow_decoder to override"
            )));
        }
        Ok(())
    }
}

// ── Model ─────────────────────────────────────────────────────────────

/// A trained or trainable model: the graph, its base adjacency, the
/// parameter set and the component networks. Frozen models are pure
/// functions and safe to share across query workers.
#[derive(Debug, Clone)]
pub struct VacaModel {
    pub graph: CausalGraph,
    pub config: VacaConfig,
    pub params: ParamSet,
    /// Normalization of the training data, carried for query/metric
    /// consumers; filled in by the trainer.
    pub normalization: Option<Normalization>,
    adapters: Vec<Mlp>,
    encoder: GnnStack,
    decoder: GnnStack,
    heads: Vec<Mlp>,
    base_adj: VacaAdjacency,
}

impl VacaModel {
    pub fn new(graph: CausalGraph, config: VacaConfig, init_seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        config.validate(&graph)?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut params = ParamSet::new();
        let base_adj = graph.vaca_adjacency(&[])?;
        let d = graph.node_count();

        let adapters: Vec<Mlp> = (0..d)
            .map(|i| {
                let in_w: usize =
                    graph.nodes()[i].kinds.iter().map(|k| k.input_width()).sum();
                Mlp::new(
                    &mut params,
                    &mut rng,
                    &format!("adapter.{i}"),
                    &[in_w, config.encoder_feature_dim],
                    config.activation,
                )
            })
            .collect();

        // Encoder: exactly one message-passing layer emitting (mu, log sigma).
        let enc_layer = GnnLayer::new(
            &mut params,
            &mut rng,
            "enc.l0",
            &base_adj,
            config.layer_mode,
            config.encoder_feature_dim,
            &config.encoder_message_hidden,
            config.encoder_message_dim,
            2 * config.latent_dim,
            config.activation,
            None,
            false,
        );
        let encoder = GnnStack::new(vec![enc_layer])?;

        // Decoder: N_h hidden layers plus the output layer.
        let n_h = config.decoder_hidden_layers;
        let mut widths = Vec::with_capacity(n_h + 2);
        widths.push(config.latent_dim);
        for _ in 0..n_h {
            widths.push(config.decoder_hidden_width);
        }
        widths.push(config.decoder_feature_dim);
        let mut dec_layers = Vec::with_capacity(n_h + 1);
        for l in 0..widths.len() - 1 {
            let is_last = l == widths.len() - 2;
            let out_act = if is_last && !config.decoder_final_activation {
                None
            } else {
                Some(config.activation)
            };
            dec_layers.push(GnnLayer::new(
                &mut params,
                &mut rng,
                &format!("dec.l{l}"),
                &base_adj,
                config.layer_mode,
                widths[l],
                &config.decoder_message_hidden,
                widths[l + 1],
                widths[l + 1],
                config.activation,
                out_act,
                config.residual,
            ));
        }
        let decoder = GnnStack::new(dec_layers)?;

        let heads: Vec<Mlp> = (0..d)
            .map(|i| {
                let out_w: usize =
                    graph.nodes()[i].kinds.iter().map(|k| k.param_width()).sum();
                Mlp::new(
                    &mut params,
                    &mut rng,
                    &format!("head.{i}"),
                    &[config.decoder_feature_dim, out_w],
                    config.activation,
                )
            })
            .collect();

        Ok(VacaModel {
            graph,
            config,
            params,
            normalization: None,
            adapters,
            encoder,
            decoder,
            heads,
            base_adj,
        })
    }

    pub fn base_adjacency(&self) -> &VacaAdjacency {
        &self.base_adj
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// Likelihood-parameter width of node `i`.
    pub fn eta_width(&self, i: usize) -> usize {
        self.graph.nodes()[i].kinds.iter().map(|k| k.param_width()).sum()
    }

    /// One-hot expands each node's raw columns into model inputs.
    pub fn expand_inputs(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let slices = self.graph.node_slices();
        if x.ncols() != self.graph.total_dim() {
            return Err(Error::numeric(format!(
                "input has {} columns, graph wants {}",
                x.ncols(),
                self.graph.total_dim()
            )));
        }
        let b = x.nrows();
        let mut out = Vec::with_capacity(self.node_count());
        for (i, node) in self.graph.nodes().iter().enumerate() {
            let width: usize = node.kinds.iter().map(|k| k.input_width()).sum();
            let mut m = Matrix::zeros((b, width));
            for r in 0..b {
                let mut off = 0;
                for (k, kind) in node.kinds.iter().enumerate() {
                    let v = x[[r, slices[i].start + k]];
                    match kind {
                        DimKind::Continuous | DimKind::Binary => {
                            m[[r, off]] = v;
                            off += 1;
                        }
                        DimKind::Categorical(c) => {
                            let code = (v.round().max(0.0) as usize).min(c - 1);
                            m[[r, off + code]] = 1.0;
                            off += c;
                        }
                    }
                }
            }
            out.push(m);
        }
        Ok(out)
    }

    // ── Inference (no gradients) ──────────────────────────────────────

    /// Posterior parameters per node: (means, log scales).
    pub fn encode_plain(
        &self,
        x: &Matrix,
        adj: &VacaAdjacency,
    ) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        let inputs = self.expand_inputs(x)?;
        let h0: Vec<Matrix> = inputs
            .iter()
            .zip(&self.adapters)
            .map(|(m, a)| a.forward_plain(&self.params, m))
            .collect();
        let none = vec![false; self.node_count()];
        let out = self.encoder.forward_plain(&self.params, &h0, adj, &none)?;
        let l = self.config.latent_dim;
        let mut mu = Vec::with_capacity(out.len());
        let mut logsig = Vec::with_capacity(out.len());
        for o in out {
            mu.push(o.slice(ndarray::s![.., ..l]).to_owned());
            logsig.push(o.slice(ndarray::s![.., l..]).to_owned());
        }
        Ok((mu, logsig))
    }

    /// Likelihood parameters per node from per-node latents.
    pub fn decode_plain(&self, z: &[Matrix], adj: &VacaAdjacency) -> Result<Vec<Matrix>> {
        if z.len() != self.node_count() {
            return Err(Error::numeric("latent count does not match node count"));
        }
        let none = vec![false; self.node_count()];
        let feats = self.decoder.forward_plain(&self.params, z, adj, &none)?;
        Ok(feats
            .iter()
            .zip(&self.heads)
            .map(|(f, h)| h.forward_plain(&self.params, f))
            .collect())
    }

    /// Deterministic data-space values from likelihood parameters: means
    /// for continuous dimensions, thresholded probability for binary,
    /// argmax for categorical.
    pub fn likelihood_means(&self, eta: &[Matrix]) -> Matrix {
        let b = eta[0].nrows();
        let mut out = Matrix::zeros((b, self.graph.total_dim()));
        let slices = self.graph.node_slices();
        for (i, node) in self.graph.nodes().iter().enumerate() {
            let mut eoff = 0;
            for (k, kind) in node.kinds.iter().enumerate() {
                let col = slices[i].start + k;
                match kind {
                    DimKind::Continuous => {
                        for r in 0..b {
                            out[[r, col]] = eta[i][[r, eoff]];
                        }
                        eoff += 1;
                    }
                    DimKind::Binary => {
                        for r in 0..b {
                            out[[r, col]] = if sigmoid(eta[i][[r, eoff]]) > 0.5 { 1.0 } else { 0.0 };
                        }
                        eoff += 1;
                    }
                    DimKind::Categorical(c) => {
                        for r in 0..b {
                            let mut best = 0usize;
                            for q in 1..*c {
                                if eta[i][[r, eoff + q]] > eta[i][[r, eoff + best]] {
                                    best = q;
                                }
                            }
                            out[[r, col]] = best as f64;
                        }
                        eoff += c;
                    }
                }
            }
        }
        out
    }

    /// Samples data-space values from likelihood parameters.
    pub fn sample_likelihood(&self, eta: &[Matrix], rng: &mut ChaCha8Rng) -> Matrix {
        use rand::Rng;
        let b = eta[0].nrows();
        let sigma = self.config.likelihood_variance().sqrt();
        let mut out = Matrix::zeros((b, self.graph.total_dim()));
        let slices = self.graph.node_slices();
        for (i, node) in self.graph.nodes().iter().enumerate() {
            let mut eoff = 0;
            for (k, kind) in node.kinds.iter().enumerate() {
                let col = slices[i].start + k;
                match kind {
                    DimKind::Continuous => {
                        let noise = randn(rng, b, 1);
                        for r in 0..b {
                            out[[r, col]] = eta[i][[r, eoff]] + sigma * noise[[r, 0]];
                        }
                        eoff += 1;
                    }
                    DimKind::Binary => {
                        for r in 0..b {
                            let p = sigmoid(eta[i][[r, eoff]]);
                            out[[r, col]] = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
                        }
                        eoff += 1;
                    }
                    DimKind::Categorical(c) => {
                        let logits = eta[i].slice(ndarray::s![.., eoff..eoff + c]).to_owned();
                        let probs = softmax_cols(&logits);
                        for r in 0..b {
                            let t: f64 = rng.gen();
                            let mut acc = 0.0;
                            let mut code = c - 1;
                            for q in 0..*c {
                                acc += probs[[r, q]];
                                if t < acc {
                                    code = q;
                                    break;
                                }
                            }
                            out[[r, col]] = code as f64;
                        }
                        eoff += c;
                    }
                }
            }
        }
        out
    }

    /// Per-sample log likelihood log p(x | eta), summed over nodes.
    pub fn loglik_rows(&self, eta: &[Matrix], x: &Matrix) -> Vec<f64> {
        let b = x.nrows();
        let var = self.config.likelihood_variance();
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let slices = self.graph.node_slices();
        let mut ll = vec![0.0; b];
        for (i, node) in self.graph.nodes().iter().enumerate() {
            let mut eoff = 0;
            for (k, kind) in node.kinds.iter().enumerate() {
                let col = slices[i].start + k;
                match kind {
                    DimKind::Continuous => {
                        for (r, acc) in ll.iter_mut().enumerate() {
                            let d = x[[r, col]] - eta[i][[r, eoff]];
                            *acc += log_norm - d * d / (2.0 * var);
                        }
                        eoff += 1;
                    }
                    DimKind::Binary => {
                        for (r, acc) in ll.iter_mut().enumerate() {
                            let logit = eta[i][[r, eoff]];
                            *acc += x[[r, col]] * logit - softplus(logit);
                        }
                        eoff += 1;
                    }
                    DimKind::Categorical(c) => {
                        let logits = eta[i].slice(ndarray::s![.., eoff..eoff + c]).to_owned();
                        let lse = log_sum_exp_cols(&logits);
                        for (r, acc) in ll.iter_mut().enumerate() {
                            let code = (x[[r, col]].round().max(0.0) as usize).min(c - 1);
                            *acc += logits[[r, code]] - lse[[r, 0]];
                        }
                        eoff += c;
                    }
                }
            }
        }
        ll
    }

    // ── Evidence bounds ───────────────────────────────────────────────

    /// Builds the single-draw evidence bound on a tape, returning the bound
    /// (to maximize). Parents dropout is sampled per stack call.
    pub fn elbo_tape(
        &self,
        x: &Matrix,
        adj: &VacaAdjacency,
        dropout_p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tape, TensorId)> {
        let d = self.node_count();
        let b = x.nrows();
        let l = self.config.latent_dim;
        let mut t = Tape::new();

        // Encoder with its own dropout mask.
        let inputs = self.expand_inputs(x)?;
        let mut h0 = Vec::with_capacity(d);
        for (m, a) in inputs.iter().zip(&self.adapters) {
            let id = t.input(m.clone())?;
            h0.push(a.forward_tape(&mut t, &self.params, id)?);
        }
        let enc_mask = GnnStack::sample_dropout(d, dropout_p, rng);
        let enc_out = self.encoder.forward_tape(&mut t, &self.params, h0, adj, &enc_mask)?;

        // Reparameterized z and closed-form KL against the standard normal.
        let mut z = Vec::with_capacity(d);
        let mut kl_sum: Option<TensorId> = None;
        for &o in &enc_out {
            let mu = t.slice_cols(o, 0, l)?;
            let logsig = t.slice_cols(o, l, 2 * l)?;
            let sig = t.exp(logsig)?;
            let eps = t.input(randn(rng, b, l))?;
            let noise = t.mul(sig, eps)?;
            z.push(t.add(mu, noise)?);

            // KL = 1/2 sum(mu^2 + sigma^2 - 1 - 2 log sigma)
            let mu2 = t.mul(mu, mu)?;
            let sig2 = t.mul(sig, sig)?;
            let s = t.add(mu2, sig2)?;
            let s = t.add_const(s, -1.0)?;
            let two_logsig = t.scale(logsig, 2.0)?;
            let s = t.sub(s, two_logsig)?;
            let s = t.sum_all(s)?;
            let s = t.scale(s, 0.5)?;
            kl_sum = Some(match kl_sum {
                Some(acc) => t.add(acc, s)?,
                None => s,
            });
        }

        // Decoder with its own dropout mask.
        let dec_mask = GnnStack::sample_dropout(d, dropout_p, rng);
        let feats = self.decoder.forward_tape(&mut t, &self.params, z, adj, &dec_mask)?;
        let mut eta = Vec::with_capacity(d);
        for (f, h) in feats.iter().zip(&self.heads) {
            eta.push(h.forward_tape(&mut t, &self.params, *f)?);
        }

        // Reconstruction log likelihood, summed over batch.
        let ll = self.loglik_tape(&mut t, &eta, x)?;

        let kl = kl_sum.expect("at least one node");
        let kl_w = t.scale(kl, self.config.kl_weight)?;
        let bound = t.sub(ll, kl_w)?;
        let bound = t.scale(bound, 1.0 / b as f64)?;
        Ok((t, bound))
    }

    fn loglik_tape(&self, t: &mut Tape, eta: &[TensorId], x: &Matrix) -> Result<TensorId> {
        let b = x.nrows();
        let var = self.config.likelihood_variance();
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI * var).ln();
        let slices = self.graph.node_slices();
        let mut total: Option<TensorId> = None;
        let add = |t: &mut Tape, total: &mut Option<TensorId>, v: TensorId| -> Result<()> {
            *total = Some(match *total {
                Some(acc) => t.add(acc, v)?,
                None => v,
            });
            Ok(())
        };
        for (i, node) in self.graph.nodes().iter().enumerate() {
            let mut eoff = 0;
            for (k, kind) in node.kinds.iter().enumerate() {
                let col = slices[i].start + k;
                let target = x.slice(ndarray::s![.., col..col + 1]).to_owned();
                match kind {
                    DimKind::Continuous => {
                        let mu = t.slice_cols(eta[i], eoff, eoff + 1)?;
                        let xt = t.input(target)?;
                        let diff = t.sub(xt, mu)?;
                        let sq = t.mul(diff, diff)?;
                        let s = t.sum_all(sq)?;
                        let s = t.scale(s, -1.0 / (2.0 * var))?;
                        let s = t.add_const(s, log_norm * b as f64)?;
                        add(t, &mut total, s)?;
                        eoff += 1;
                    }
                    DimKind::Binary => {
                        let logit = t.slice_cols(eta[i], eoff, eoff + 1)?;
                        let xt = t.input(target)?;
                        let xl = t.mul(xt, logit)?;
                        let sp = t.softplus(logit)?;
                        let d = t.sub(xl, sp)?;
                        let s = t.sum_all(d)?;
                        add(t, &mut total, s)?;
                        eoff += 1;
                    }
                    DimKind::Categorical(c) => {
                        let logits = t.slice_cols(eta[i], eoff, eoff + c)?;
                        let mut onehot = Matrix::zeros((b, *c));
                        for r in 0..b {
                            let code = (target[[r, 0]].round().max(0.0) as usize).min(c - 1);
                            onehot[[r, code]] = 1.0;
                        }
                        let oh = t.input(onehot)?;
                        let picked = t.mul(oh, logits)?;
                        let s1 = t.sum_all(picked)?;
                        let lse = t.log_sum_exp_cols(logits)?;
                        let s2 = t.sum_all(lse)?;
                        let s = t.sub(s1, s2)?;
                        add(t, &mut total, s)?;
                        eoff += c;
                    }
                }
            }
        }
        Ok(total.expect("at least one dimension"))
    }

    /// Single-draw evidence bound value (no gradients kept).
    pub fn elbo(
        &self,
        x: &Matrix,
        adj: &VacaAdjacency,
        dropout_p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let (t, id) = self.elbo_tape(x, adj, dropout_p, rng)?;
        Ok(t.scalar(id))
    }

    /// Importance-weighted bound with `K` samples, averaged over the batch.
    /// Evaluated without parents dropout, on the gradient-free path.
    pub fn iwae(
        &self,
        x: &Matrix,
        adj: &VacaAdjacency,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if k == 0 {
            return Err(Error::config("iwae needs k >= 1"));
        }
        let b = x.nrows();
        let l = self.config.latent_dim;
        let d = self.node_count();
        let (mu, logsig) = self.encode_plain(x, adj)?;
        let sig: Vec<Matrix> = logsig.iter().map(|m| m.mapv(f64::exp)).collect();
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();

        // Log importance weights, batch x k.
        let mut w = Matrix::zeros((b, k));
        for kk in 0..k {
            let mut z = Vec::with_capacity(d);
            let mut log_p_z = vec![0.0; b];
            let mut log_q_z = vec![0.0; b];
            for i in 0..d {
                let eps = randn(rng, b, l);
                let zi = &mu[i] + &(&sig[i] * &eps);
                for r in 0..b {
                    for c in 0..l {
                        let zv = zi[[r, c]];
                        log_p_z[r] += -0.5 * zv * zv - half_log_2pi;
                        // log q = -(z-mu)^2/(2 sigma^2) - log sigma - log sqrt(2 pi)
                        // with z - mu = sigma * eps.
                        let e = eps[[r, c]];
                        log_q_z[r] += -0.5 * e * e - logsig[i][[r, c]] - half_log_2pi;
                    }
                }
                z.push(zi);
            }
            let eta = self.decode_plain(&z, adj)?;
            let ll = self.loglik_rows(&eta, x);
            for r in 0..b {
                w[[r, kk]] = ll[r] + log_p_z[r] - log_q_z[r];
            }
        }
        let lse = log_sum_exp_cols(&w);
        let ln_k = (k as f64).ln();
        let total: f64 = lse.iter().map(|v| v - ln_k).sum();
        let out = total / b as f64;
        if !out.is_finite() {
            return Err(Error::numeric("non-finite importance-weighted bound"));
        }
        Ok(out)
    }

    // ── Persistence ───────────────────────────────────────────────────

    /// Writes the checkpoint plus a JSON sidecar (`<path>.json`) holding
    /// the configuration, the graph hash and the training normalization.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.params.save(path)?;
        let sidecar = ModelSidecar {
            config: self.config.clone(),
            graph_hash: self.graph.hash(),
            normalization: self.normalization.clone(),
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::data(format!("sidecar: {e}")))?;
        std::fs::write(sidecar_path(path), json)?;
        Ok(())
    }

    /// Rebuilds a model from a checkpoint, verifying that the sidecar's
    /// graph hash matches the provided graph.
    pub fn load(path: &std::path::Path, graph: CausalGraph) -> Result<Self> {
        let json = std::fs::read_to_string(sidecar_path(path))?;
        let sidecar: ModelSidecar =
            serde_json::from_str(&json).map_err(|e| Error::data(format!("sidecar: {e}")))?;
        if sidecar.graph_hash != graph.hash() {
            return Err(Error::data(format!(
                "checkpoint was trained on a different graph (hash {} vs {})",
                sidecar.graph_hash,
                graph.hash()
            )));
        }
        let mut model = VacaModel::new(graph, sidecar.config, 0)?;
        model.params.load(path)?;
        model.normalization = sidecar.normalization;
        Ok(model)
    }
}

fn sidecar_path(ckpt: &std::path::Path) -> std::path::PathBuf {
    let mut s = ckpt.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct ModelSidecar {
    config: VacaConfig,
    graph_hash: String,
    normalization: Option<Normalization>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdcheck::{fd_block_sensitivity, rel_err};
    use crate::scm::{builtin_scm, Sem};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_config(n_h: usize) -> VacaConfig {
        VacaConfig {
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
        }
    }

    fn chain_model(n_h: usize, seed: u64) -> VacaModel {
        let g = builtin_scm("chain", Sem::Lin).unwrap().graph;
        VacaModel::new(g, small_config(n_h), seed).unwrap()
    }

    #[test]
    fn depth_rule_is_enforced() {
        let g = builtin_scm("chain", Sem::Lin).unwrap().graph; // longest path 2
        let mut cfg = small_config(0);
        cfg.allow_shallow_decoder = false;
        assert!(VacaModel::new(g.clone(), cfg.clone(), 0).is_err());
        cfg.decoder_hidden_layers = 1;
        assert!(VacaModel::new(g, cfg, 0).is_ok());
    }

    #[test]
    fn encoder_posterior_depends_only_on_parents_and_self() {
        // Proposition-style locality at the implementation level: perturb
        // column x1, check node 3's posterior is bitwise unchanged (chain).
        let m = chain_model(1, 3);
        let adj = m.base_adjacency().clone();
        let mut x = Matrix::from_shape_vec((2, 3), vec![0.3, -0.5, 0.9, -1.0, 0.2, 0.4]).unwrap();
        let (mu_a, ls_a) = m.encode_plain(&x, &adj).unwrap();
        x[[0, 0]] += 0.7;
        x[[1, 0] ] -= 0.2;
        let (mu_b, ls_b) = m.encode_plain(&x, &adj).unwrap();
        assert_eq!(mu_a[2], mu_b[2]);
        assert_eq!(ls_a[2], ls_b[2]);
        assert_ne!(mu_a[0], mu_b[0]);
        assert_ne!(mu_a[1], mu_b[1]); // x1 is a parent of x2
    }

    #[test]
    fn posterior_scales_are_positive() {
        let m = chain_model(1, 5);
        let adj = m.base_adjacency().clone();
        let mut r = rng(0);
        let x = randn(&mut r, 16, 3) * 3.0;
        let (_, logsig) = m.encode_plain(&x, &adj).unwrap();
        for ls in logsig {
            assert!(ls.mapv(f64::exp).iter().all(|s| *s > 0.0));
        }
    }

    #[test]
    fn intervened_posterior_sees_only_own_block() {
        let m = chain_model(1, 7);
        let adj = m.graph.vaca_adjacency(&[1]).unwrap();
        let mut x = Matrix::from_shape_vec((1, 3), vec![0.1, 0.2, 0.3]).unwrap();
        let (mu_a, _) = m.encode_plain(&x, &adj).unwrap();
        x[[0, 0]] = 5.0;
        x[[0, 2]] = -5.0;
        let (mu_b, _) = m.encode_plain(&x, &adj).unwrap();
        assert_eq!(mu_a[1], mu_b[1]);
    }

    #[test]
    fn decoder_reachability_matches_ancestors_at_min_depth() {
        // Chain with N_h = delta - 1 = 1: eta_3 must depend on z1.
        // With N_h = 0 it must not (the failure mode the depth rule forbids).
        for (n_h, expect_reach) in [(1usize, true), (0usize, false)] {
            let m = chain_model(n_h, 11);
            let adj = m.base_adjacency().clone();
            let mut r = rng(42);
            let z0: Vec<Matrix> = (0..3).map(|_| randn(&mut r, 1, 2)).collect();
            let blocks = fd_block_sensitivity(
                |z| {
                    m.decode_plain(z, &adj)
                        .unwrap()
                },
                &z0,
                1e-4,
            );
            if expect_reach {
                assert!(blocks[2][0] > 1e-8, "eta3/z1 block should be reachable");
            } else {
                assert_eq!(blocks[2][0], 0.0, "eta3/z1 block should be zero at N_h=0");
            }
            // Non-ancestor blocks are always zero.
            assert_eq!(blocks[0][1], 0.0);
            assert_eq!(blocks[0][2], 0.0);
            assert_eq!(blocks[1][2], 0.0);
        }
    }

    #[test]
    fn kl_is_zero_exactly_at_the_prior() {
        // Zeroing the encoder output layer pins (mu, log sigma) = (0, 0).
        let mut m = chain_model(1, 13);
        let ids: Vec<_> = m
            .params
            .params()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.path.starts_with("enc.l0.upd"))
            .map(|(i, _)| crate::diff::ParamId(i))
            .collect();
        for id in ids {
            m.params.value_mut(id).fill(0.0);
        }
        let adj = m.base_adjacency().clone();
        let x = Matrix::zeros((4, 3));
        let (mu, logsig) = m.encode_plain(&x, &adj).unwrap();
        for i in 0..3 {
            assert!(mu[i].iter().all(|v| *v == 0.0));
            assert!(logsig[i].iter().all(|v| *v == 0.0));
        }
        // ELBO with q = prior: the bound reduces to pure reconstruction,
        // i.e. the KL term contributes exactly zero. Check by comparing
        // kl_weight = 1 against kl_weight = 0 on identical draws.
        let mut r1 = rng(1);
        let mut r2 = rng(1);
        let e1 = m.elbo(&x, &adj, 0.0, &mut r1).unwrap();
        let mut m2 = m.clone();
        m2.config.kl_weight = 0.0;
        let e2 = m2.elbo(&x, &adj, 0.0, &mut r2).unwrap();
        assert_relative_eq!(e1, e2, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_loglik_at_mean_matches_closed_form() {
        // One continuous dim reconstructed exactly at its mean with
        // variance 0.025 contributes -0.5 ln(2 pi 0.025) = 0.92545...
        let m = chain_model(1, 17);
        let eta: Vec<Matrix> = (0..3).map(|_| Matrix::zeros((1, 1))).collect();
        let x = Matrix::zeros((1, 3));
        let ll = m.loglik_rows(&eta, &x);
        let per_dim = -0.5 * (2.0 * std::f64::consts::PI * 0.025).ln();
        assert_relative_eq!(ll[0], 3.0 * per_dim, max_relative = 1e-12);
        assert_relative_eq!(per_dim, 0.9255011938522954, max_relative = 1e-12);
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        // Small model, every parameter, against central differences.
        let g = builtin_scm("collider", Sem::Lin).unwrap().graph;
        let mut cfg = small_config(0);
        cfg.latent_dim = 2;
        cfg.encoder_feature_dim = 2;
        cfg.encoder_message_hidden = vec![3];
        cfg.encoder_message_dim = 3;
        cfg.decoder_message_hidden = vec![3];
        cfg.decoder_feature_dim = 3;
        let mut m = VacaModel::new(g, cfg, 23).unwrap();
        assert!(m.params.value_count() <= 500, "test wants a <=500 parameter model");
        let adj = m.base_adjacency().clone();
        let mut r = rng(5);
        let x = randn(&mut r, 6, 3);

        // Analytic gradient with frozen noise (same rng seed every pass).
        let elbo_at = |m: &VacaModel| -> f64 {
            let mut rr = rng(99);
            m.elbo(&x, &adj, 0.0, &mut rr).unwrap()
        };
        let mut rr = rng(99);
        let (mut tape, bound) = m.elbo_tape(&x, &adj, 0.0, &mut rr).unwrap();
        m.params.zero_grads();
        tape.backward(bound, &mut m.params).unwrap();

        let eps = 1e-4;
        let n = m.params.len();
        for pi in 0..n {
            let id = crate::diff::ParamId(pi);
            let (rows, cols) = m.params.value(id).dim();
            for i in 0..rows {
                for c in 0..cols {
                    let orig = m.params.value(id)[[i, c]];
                    m.params.value_mut(id)[[i, c]] = orig + eps;
                    let up = elbo_at(&m);
                    m.params.value_mut(id)[[i, c]] = orig - eps;
                    let dn = elbo_at(&m);
                    m.params.value_mut(id)[[i, c]] = orig;
                    let fd = (up - dn) / (2.0 * eps);
                    let an = m.params.grad(id)[[i, c]];
                    assert!(
                        rel_err(fd, an, 1e-6) < 1e-3,
                        "grad mismatch at {} [{i},{c}]: fd={fd} analytic={an}",
                        m.params.param(id).path
                    );
                }
            }
        }
    }

    #[test]
    fn iwae_k1_matches_single_sample_bound_in_expectation() {
        // With the same seed both paths draw the same z, so the
        // reconstruction terms cancel and the difference reduces to
        // (log p(z) - log q(z|x)) + KL, which has mean zero under q.
        let m = chain_model(1, 29);
        let adj = m.base_adjacency().clone();
        let mut r = rng(2);
        let x = randn(&mut r, 8, 3);
        let n = 400;
        let mut diff_sum = 0.0;
        for k in 0..n {
            let mut ra = rng(1000 + k);
            let mut rb = rng(1000 + k);
            diff_sum += m.iwae(&x, &adj, 1, &mut ra).unwrap()
                - m.elbo(&x, &adj, 0.0, &mut rb).unwrap();
        }
        let diff = diff_sum / n as f64;
        assert!(diff.abs() < 0.05, "IWAE(1) - ELBO should average to zero, got {diff}");
    }

    #[test]
    fn iwae_is_monotone_in_k_on_average() {
        let m = chain_model(1, 31);
        let adj = m.base_adjacency().clone();
        let mut r = rng(3);
        let mut gain = 0.0;
        for k in 0..50 {
            let x = randn(&mut r, 4, 3);
            let mut ra = rng(500 + k);
            let mut rb = rng(700 + k);
            gain += m.iwae(&x, &adj, 100, &mut ra).unwrap() - m.iwae(&x, &adj, 1, &mut rb).unwrap();
        }
        assert!(gain / 50.0 > -0.02, "IWAE(100) should not be below IWAE(1): {gain}");
    }

    #[test]
    fn iwae_survives_collapsed_posterior() {
        // Shove the posterior far from the prior; the stabilized
        // log-sum-exp must stay finite.
        let mut m = chain_model(1, 37);
        let ids: Vec<_> = m
            .params
            .params()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.path.starts_with("enc.l0.upd") && p.path.ends_with(".b0"))
            .map(|(i, _)| crate::diff::ParamId(i))
            .collect();
        for id in ids {
            m.params.value_mut(id).fill(40.0);
        }
        let adj = m.base_adjacency().clone();
        let x = Matrix::zeros((2, 3));
        let mut r = rng(0);
        let v = m.iwae(&x, &adj, 5, &mut r).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn checkpoint_round_trip_reproduces_outputs_bitwise() {
        let mut m = chain_model(1, 41);
        m.normalization = None;
        let adj = m.base_adjacency().clone();
        let mut r = rng(4);
        let x = randn(&mut r, 5, 3);
        let (mu_a, _) = m.encode_plain(&x, &adj).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        m.save(&path).unwrap();

        let loaded = VacaModel::load(&path, m.graph.clone()).unwrap();
        let (mu_b, _) = loaded.encode_plain(&x, &adj).unwrap();
        for (a, b) in mu_a.iter().zip(mu_b.iter()) {
            for (p, q) in a.iter().zip(b.iter()) {
                assert_eq!(p.to_bits(), q.to_bits());
            }
        }

        // Wrong graph: hash check refuses to load.
        let other = builtin_scm("collider", Sem::Lin).unwrap().graph;
        assert!(VacaModel::load(&path, other).is_err());
    }
}
