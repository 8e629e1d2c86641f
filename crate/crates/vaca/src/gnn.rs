//! Message-passing layers over the model adjacency.
//!
//! Each layer computes, for node `i`, messages `m_ij = f_m(h_i, h_j)` from
//! every source `j` with `adj[i][j] = 1` (the self-loop included), sums
//! them, and updates `h'_i = f_u(h_i, M_i)`. A stack with `N_h` hidden
//! layers propagates information along paths of length at most `N_h + 1`,
//! which is exactly the property the encoder/decoder depth rules are built
//! on.
//!
//! In `Disjoint` mode every nonzero adjacency entry owns its message net
//! and every node owns its update net, mimicking per-equation parameters;
//! `Shared` mode reuses one of each. Parents dropout removes all incoming
//! non-self messages of a node with probability `p`, resampled each call;
//! the self message is exempt so a node never loses its own information.

use ndarray::Axis;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Init, Matrix, ParamId, ParamSet, Tape, TensorId};
use crate::error::{Error, Result};
use crate::graph::VacaAdjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn tape(&self, t: &mut Tape, x: TensorId) -> Result<TensorId> {
        match self {
            Activation::Relu => t.relu(x),
            Activation::Tanh => t.tanh(x),
        }
    }

    fn plain(&self, x: &Matrix) -> Matrix {
        match self {
            Activation::Relu => x.mapv(|v| v.max(0.0)),
            Activation::Tanh => x.mapv(f64::tanh),
        }
    }
}

// ── Multi-layer perceptron ────────────────────────────────────────────

/// Dense MLP: activation after every layer except the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
    pub act: Activation,
    widths: Vec<usize>,
}

impl Mlp {
    /// `widths` is `[input, hidden..., output]`.
    pub fn new(
        pset: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        widths: &[usize],
        act: Activation,
    ) -> Self {
        assert!(widths.len() >= 2, "mlp needs input and output widths");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            weights.push(pset.alloc(
                format!("{prefix}.w{l}"),
                widths[l],
                widths[l + 1],
                Init::Glorot,
                rng,
            ));
            biases.push(pset.alloc(format!("{prefix}.b{l}"), 1, widths[l + 1], Init::Zero, rng));
        }
        Mlp { weights, biases, act, widths: widths.to_vec() }
    }

    pub fn in_width(&self) -> usize {
        self.widths[0]
    }

    pub fn out_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn forward_tape(&self, t: &mut Tape, pset: &ParamSet, x: TensorId) -> Result<TensorId> {
        let mut h = x;
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let w = t.param(pset, self.weights[l])?;
            let b = t.param(pset, self.biases[l])?;
            h = t.matmul(h, w)?;
            h = t.add_row(h, b)?;
            if l < last {
                h = self.act.tape(t, h)?;
            }
        }
        Ok(h)
    }

    pub fn forward_plain(&self, pset: &ParamSet, x: &Matrix) -> Matrix {
        let mut h = x.clone();
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let mut z = h.dot(pset.value(self.weights[l]));
            z += &pset.value(self.biases[l]).row(0);
            h = if l < last { self.act.plain(&z) } else { z };
        }
        h
    }
}

// ── Message-passing layer ─────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerMode {
    Shared,
    Disjoint,
}

/// One message-passing layer. Node features are per-node matrices of shape
/// (batch, width); the layer maps width `in_width` to `out_width`.
#[derive(Debug, Clone)]
pub struct GnnLayer {
    pub mode: LayerMode,
    d: usize,
    in_width: usize,
    out_width: usize,
    /// All (dst, src) pairs of the base adjacency, self-loops included,
    /// ordered by (dst, src): summation order is fixed so that forward
    /// passes are bitwise reproducible and unaffected by severed edges.
    edges: Vec<(usize, usize)>,
    /// One per edge in disjoint mode, exactly one in shared mode.
    message_nets: Vec<Mlp>,
    /// One per node in disjoint mode, exactly one in shared mode.
    update_nets: Vec<Mlp>,
    out_activation: Option<Activation>,
    residual: bool,
}

impl GnnLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pset: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        base: &VacaAdjacency,
        mode: LayerMode,
        in_width: usize,
        msg_hidden: &[usize],
        msg_width: usize,
        out_width: usize,
        act: Activation,
        out_activation: Option<Activation>,
        residual: bool,
    ) -> Self {
        let d = base.dim();
        let mut edges = Vec::new();
        for i in 0..d {
            for j in base.in_sources(i) {
                edges.push((i, j));
            }
        }
        let msg_widths: Vec<usize> =
            std::iter::once(2 * in_width).chain(msg_hidden.iter().copied()).chain([msg_width]).collect();
        let upd_widths = vec![in_width + msg_width, out_width];
        let (message_nets, update_nets) = match mode {
            LayerMode::Shared => (
                vec![Mlp::new(pset, rng, &format!("{prefix}.msg"), &msg_widths, act)],
                vec![Mlp::new(pset, rng, &format!("{prefix}.upd"), &upd_widths, act)],
            ),
            LayerMode::Disjoint => (
                edges
                    .iter()
                    .map(|(i, j)| {
                        Mlp::new(pset, rng, &format!("{prefix}.msg.{i}_{j}"), &msg_widths, act)
                    })
                    .collect(),
                (0..d)
                    .map(|i| Mlp::new(pset, rng, &format!("{prefix}.upd.{i}"), &upd_widths, act))
                    .collect(),
            ),
        };
        GnnLayer {
            mode,
            d,
            in_width,
            out_width,
            edges,
            message_nets,
            update_nets,
            out_activation,
            residual,
        }
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    fn message_net(&self, edge_idx: usize) -> &Mlp {
        match self.mode {
            LayerMode::Shared => &self.message_nets[0],
            LayerMode::Disjoint => &self.message_nets[edge_idx],
        }
    }

    fn update_net(&self, node: usize) -> &Mlp {
        match self.mode {
            LayerMode::Shared => &self.update_nets[0],
            LayerMode::Disjoint => &self.update_nets[node],
        }
    }

    pub fn message_nets(&self) -> &[Mlp] {
        &self.message_nets
    }

    pub fn update_nets(&self) -> &[Mlp] {
        &self.update_nets
    }

    fn check(&self, h: &[impl Sized], adj: &VacaAdjacency) -> Result<()> {
        if h.len() != self.d || adj.dim() != self.d {
            return Err(Error::numeric(format!(
                "layer expects {} node features, got {} (adj {})",
                self.d,
                h.len(),
                adj.dim()
            )));
        }
        Ok(())
    }

    /// Is edge (i, j) active: present in `adj` and not removed by dropout.
    /// Self-loops are exempt from dropout.
    fn edge_active(adj: &VacaAdjacency, dropped: &[bool], i: usize, j: usize) -> bool {
        adj.get(i, j) && (i == j || !dropped[i])
    }

    pub fn forward_tape(
        &self,
        t: &mut Tape,
        pset: &ParamSet,
        h: &[TensorId],
        adj: &VacaAdjacency,
        dropped: &[bool],
    ) -> Result<Vec<TensorId>> {
        self.check(h, adj)?;
        let batch = t.value(h[0]).nrows();
        let mut out = Vec::with_capacity(self.d);
        for i in 0..self.d {
            let mut agg: Option<TensorId> = None;
            for (e, &(dst, src)) in self.edges.iter().enumerate() {
                if dst != i || !Self::edge_active(adj, dropped, dst, src) {
                    continue;
                }
                let input = t.concat_cols(&[h[i], h[src]])?;
                let m = self.message_net(e).forward_tape(t, pset, input)?;
                agg = Some(match agg {
                    Some(a) => t.add(a, m)?,
                    None => m,
                });
            }
            let msg_width = self.message_net(0).out_width();
            let agg = match agg {
                Some(a) => a,
                None => t.input(Matrix::zeros((batch, msg_width)))?,
            };
            let upd_in = t.concat_cols(&[h[i], agg])?;
            let mut hi = self.update_net(i).forward_tape(t, pset, upd_in)?;
            if self.residual && self.in_width == self.out_width {
                hi = t.add(hi, h[i])?;
            }
            if let Some(act) = self.out_activation {
                hi = act.tape(t, hi)?;
            }
            out.push(hi);
        }
        Ok(out)
    }

    pub fn forward_plain(
        &self,
        pset: &ParamSet,
        h: &[Matrix],
        adj: &VacaAdjacency,
        dropped: &[bool],
    ) -> Result<Vec<Matrix>> {
        self.check(h, adj)?;
        let batch = h[0].nrows();
        let mut out = Vec::with_capacity(self.d);
        for i in 0..self.d {
            let msg_width = self.message_net(0).out_width();
            let mut agg = Matrix::zeros((batch, msg_width));
            for (e, &(dst, src)) in self.edges.iter().enumerate() {
                if dst != i || !Self::edge_active(adj, dropped, dst, src) {
                    continue;
                }
                let input = concat_cols_plain(&[&h[i], &h[src]]);
                agg += &self.message_net(e).forward_plain(pset, &input);
            }
            let upd_in = concat_cols_plain(&[&h[i], &agg]);
            let mut hi = self.update_net(i).forward_plain(pset, &upd_in);
            if self.residual && self.in_width == self.out_width {
                hi += &h[i];
            }
            if let Some(act) = self.out_activation {
                hi = act.plain(&hi);
            }
            out.push(hi);
        }
        Ok(out)
    }
}

pub fn concat_cols_plain(parts: &[&Matrix]) -> Matrix {
    let rows = parts[0].nrows();
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Matrix::zeros((rows, total));
    let mut off = 0;
    for p in parts {
        out.slice_mut(ndarray::s![.., off..off + p.ncols()]).assign(p);
        off += p.ncols();
    }
    out
}

pub fn split_cols_plain(m: &Matrix, widths: &[usize]) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(widths.len());
    let mut off = 0;
    for &w in widths {
        out.push(m.slice(ndarray::s![.., off..off + w]).to_owned());
        off += w;
    }
    out
}

// ── Stack ─────────────────────────────────────────────────────────────

/// Ordered message-passing layers; the hidden-layer count is the total
/// layer count minus one.
#[derive(Debug, Clone)]
pub struct GnnStack {
    pub layers: Vec<GnnLayer>,
}

impl GnnStack {
    pub fn new(layers: Vec<GnnLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("stack needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(Error::config(format!(
                    "adjacent layer widths incompatible: {} vs {}",
                    pair[0].out_width(),
                    pair[1].in_width()
                )));
            }
        }
        Ok(GnnStack { layers })
    }

    pub fn hidden_layer_count(&self) -> usize {
        self.layers.len() - 1
    }

    /// Samples the parents-dropout mask for one forward pass.
    pub fn sample_dropout(d: usize, prob: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
        if prob <= 0.0 {
            return vec![false; d];
        }
        (0..d).map(|_| rng.gen::<f64>() < prob).collect()
    }

    pub fn forward_tape(
        &self,
        t: &mut Tape,
        pset: &ParamSet,
        h0: Vec<TensorId>,
        adj: &VacaAdjacency,
        dropped: &[bool],
    ) -> Result<Vec<TensorId>> {
        let mut h = h0;
        for layer in &self.layers {
            h = layer.forward_tape(t, pset, &h, adj, dropped)?;
        }
        Ok(h)
    }

    pub fn forward_plain(
        &self,
        pset: &ParamSet,
        h0: &[Matrix],
        adj: &VacaAdjacency,
        dropped: &[bool],
    ) -> Result<Vec<Matrix>> {
        let mut h = h0.to_vec();
        for layer in &self.layers {
            h = layer.forward_plain(pset, &h, adj, dropped)?;
        }
        Ok(h)
    }
}

/// Splits a (batch, d*width) matrix into d per-node matrices.
pub fn per_node(m: &Matrix, d: usize) -> Vec<Matrix> {
    let w = m.ncols() / d;
    (0..d).map(|i| m.slice(ndarray::s![.., i * w..(i + 1) * w]).to_owned()).collect()
}

/// Concatenates per-node matrices along columns.
pub fn stack_nodes(h: &[Matrix]) -> Matrix {
    let refs: Vec<&Matrix> = h.iter().collect();
    concat_cols_plain(&refs)
}

/// Mean over rows as a 1 x w matrix.
pub fn row_mean(m: &Matrix) -> Matrix {
    m.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CausalGraph;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn chain_adj() -> VacaAdjacency {
        CausalGraph::continuous(&["a", "b", "c"], vec![(0, 1), (1, 2)])
            .unwrap()
            .vaca_adjacency(&[])
            .unwrap()
    }

    fn layer(
        pset: &mut ParamSet,
        r: &mut ChaCha8Rng,
        base: &VacaAdjacency,
        mode: LayerMode,
        w_in: usize,
        w_out: usize,
    ) -> GnnLayer {
        GnnLayer::new(
            pset,
            r,
            "l0",
            base,
            mode,
            w_in,
            &[8],
            8,
            w_out,
            Activation::Tanh,
            None,
            false,
        )
    }

    fn rand_features(r: &mut ChaCha8Rng, d: usize, w: usize) -> Vec<Matrix> {
        (0..d).map(|_| Matrix::from_shape_fn((1, w), |_| r.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn intervened_node_ignores_other_inputs() {
        let g = CausalGraph::continuous(&["a", "b", "c"], vec![(0, 1), (1, 2)]).unwrap();
        let base = g.vaca_adjacency(&[]).unwrap();
        let adj = g.vaca_adjacency(&[1]).unwrap();
        let mut pset = ParamSet::new();
        let mut r = rng(1);
        let l = layer(&mut pset, &mut r, &base, LayerMode::Disjoint, 3, 4);
        let h = rand_features(&mut r, 3, 3);
        let none = vec![false; 3];
        let out = l.forward_plain(&pset, &h, &adj, &none).unwrap();
        // Perturb every other node's input: node 1's output must not move.
        let mut h2 = h.clone();
        h2[0] += 0.5;
        h2[2] -= 0.25;
        let out2 = l.forward_plain(&pset, &h2, &adj, &none).unwrap();
        assert_eq!(out[1], out2[1]);
        assert_ne!(out[0], out2[0]);
    }

    #[test]
    fn identity_adjacency_reduces_to_per_node_map() {
        let g = CausalGraph::continuous(&["a", "b", "c"], vec![(0, 1), (1, 2)]).unwrap();
        let base = g.vaca_adjacency(&[]).unwrap();
        let identity = g.vaca_adjacency(&[0, 1, 2]).unwrap();
        let mut pset = ParamSet::new();
        let mut r = rng(2);
        let l = layer(&mut pset, &mut r, &base, LayerMode::Disjoint, 2, 2);
        let h = rand_features(&mut r, 3, 2);
        let none = vec![false; 3];
        let out = l.forward_plain(&pset, &h, &identity, &none).unwrap();
        for i in 0..3 {
            let mut h2 = h.clone();
            for (j, f) in h2.iter_mut().enumerate() {
                if j != i {
                    *f += 1.0;
                }
            }
            let out2 = l.forward_plain(&pset, &h2, &identity, &none).unwrap();
            assert_eq!(out[i], out2[i]);
        }
    }

    #[test]
    fn chain_single_layer_reachability() {
        // One layer: perturbing x1 moves x1 and x2 but not x3.
        let adj = chain_adj();
        let mut pset = ParamSet::new();
        let mut r = rng(3);
        let l = layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 2, 2);
        let h = rand_features(&mut r, 3, 2);
        let none = vec![false; 3];
        let out = l.forward_plain(&pset, &h, &adj, &none).unwrap();
        let mut h2 = h.clone();
        h2[0] += 0.3;
        let out2 = l.forward_plain(&pset, &h2, &adj, &none).unwrap();
        assert_ne!(out[0], out2[0]);
        assert_ne!(out[1], out2[1]);
        assert_eq!(out[2], out2[2]);
    }

    #[test]
    fn stack_depth_governs_reach() {
        let adj = chain_adj();
        let mut pset = ParamSet::new();
        let mut r = rng(4);
        let one = GnnStack::new(vec![layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 2, 2)])
            .unwrap();
        let two = GnnStack::new(vec![
            layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 2, 2),
            layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 2, 2),
        ])
        .unwrap();
        let h = rand_features(&mut r, 3, 2);
        let none = vec![false; 3];
        let mut h2 = h.clone();
        h2[0] += 0.4;

        // N_h = 0: x3 sees only {x2, x3}.
        let a = one.forward_plain(&pset, &h, &adj, &none).unwrap();
        let b = one.forward_plain(&pset, &h2, &adj, &none).unwrap();
        assert_eq!(a[2], b[2]);

        // N_h = 1: x3 sees x1 too.
        let a = two.forward_plain(&pset, &h, &adj, &none).unwrap();
        let b = two.forward_plain(&pset, &h2, &adj, &none).unwrap();
        assert_ne!(a[2], b[2]);
    }

    #[test]
    fn zero_dropout_is_deterministic() {
        let adj = chain_adj();
        let mut pset = ParamSet::new();
        let mut r = rng(5);
        let stack =
            GnnStack::new(vec![layer(&mut pset, &mut r, &adj, LayerMode::Shared, 2, 2)]).unwrap();
        let h = rand_features(&mut r, 3, 2);
        let mut r1 = rng(100);
        let mut r2 = rng(200);
        let m1 = GnnStack::sample_dropout(3, 0.0, &mut r1);
        let m2 = GnnStack::sample_dropout(3, 0.0, &mut r2);
        let a = stack.forward_plain(&pset, &h, &adj, &m1).unwrap();
        let b = stack.forward_plain(&pset, &h, &adj, &m2).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn dropout_severs_incoming_but_not_self() {
        let adj = chain_adj();
        let mut pset = ParamSet::new();
        let mut r = rng(6);
        let l = layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 2, 2);
        let h = rand_features(&mut r, 3, 2);
        let dropped = vec![false, true, false];
        let out = l.forward_plain(&pset, &h, &adj, &dropped).unwrap();
        // Node 1 dropped its parent: x1 no longer reaches it.
        let mut h2 = h.clone();
        h2[0] += 1.0;
        let out2 = l.forward_plain(&pset, &h2, &adj, &dropped).unwrap();
        assert_eq!(out[1], out2[1]);
        // But its own input still matters (self message kept).
        let mut h3 = h.clone();
        h3[1] += 1.0;
        let out3 = l.forward_plain(&pset, &h3, &adj, &dropped).unwrap();
        assert_ne!(out[1], out3[1]);
    }

    #[test]
    fn disjoint_with_tied_weights_equals_shared() {
        let adj = chain_adj();
        let mut r = rng(7);
        let mut pset = ParamSet::new();
        let shared = layer(&mut pset, &mut r, &adj, LayerMode::Shared, 2, 2);
        let disjoint = layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 2, 2);
        // Copy the shared nets into every disjoint net.
        for net in disjoint.message_nets() {
            for (dst, src) in net.weights.iter().zip(shared.message_nets()[0].weights.iter()) {
                let v = pset.value(*src).clone();
                pset.value_mut(*dst).assign(&v);
            }
            for (dst, src) in net.biases.iter().zip(shared.message_nets()[0].biases.iter()) {
                let v = pset.value(*src).clone();
                pset.value_mut(*dst).assign(&v);
            }
        }
        for net in disjoint.update_nets() {
            for (dst, src) in net.weights.iter().zip(shared.update_nets()[0].weights.iter()) {
                let v = pset.value(*src).clone();
                pset.value_mut(*dst).assign(&v);
            }
            for (dst, src) in net.biases.iter().zip(shared.update_nets()[0].biases.iter()) {
                let v = pset.value(*src).clone();
                pset.value_mut(*dst).assign(&v);
            }
        }
        let h = rand_features(&mut r, 3, 2);
        let none = vec![false; 3];
        let a = shared.forward_plain(&pset, &h, &adj, &none).unwrap();
        let b = disjoint.forward_plain(&pset, &h, &adj, &none).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn tape_and_plain_paths_agree() {
        let adj = chain_adj();
        let mut pset = ParamSet::new();
        let mut r = rng(8);
        let stack = GnnStack::new(vec![
            layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 3, 5),
            layer(&mut pset, &mut r, &adj, LayerMode::Disjoint, 5, 2),
        ])
        .unwrap();
        let h: Vec<Matrix> =
            (0..3).map(|_| Matrix::from_shape_fn((4, 3), |_| r.gen_range(-1.0..1.0))).collect();
        let none = vec![false; 3];
        let plain = stack.forward_plain(&pset, &h, &adj, &none).unwrap();
        let mut t = Tape::new();
        let ids: Vec<TensorId> = h.iter().map(|m| t.input(m.clone()).unwrap()).collect();
        let tape_out = stack.forward_tape(&mut t, &pset, ids, &adj, &none).unwrap();
        for (p, id) in plain.iter().zip(tape_out) {
            for (a, b) in p.iter().zip(t.value(id).iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
