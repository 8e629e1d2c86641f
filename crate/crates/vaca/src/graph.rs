//! Causal DAGs and the structural quantities derived from them.
//!
//! The graph drives every architectural decision downstream: the diameter
//! bounds the decoder depth needed for causal factorization, the longest
//! path bounds the depth needed to capture interventions, and ancestor /
//! descendant sets define which latent variables may influence which
//! likelihood heads. Intervention surgery happens on the derived adjacency
//! (`VacaAdjacency`), never on the graph itself.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of a single observed dimension inside a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimKind {
    Continuous,
    Binary,
    /// Categorical with the given cardinality; stored as a numeric code.
    Categorical(usize),
}

impl DimKind {
    pub fn is_continuous(&self) -> bool {
        matches!(self, DimKind::Continuous)
    }

    /// Width of the one-hot expansion used as model input.
    pub fn input_width(&self) -> usize {
        match self {
            DimKind::Continuous | DimKind::Binary => 1,
            DimKind::Categorical(c) => *c,
        }
    }

    /// Number of likelihood parameters emitted for this dimension.
    pub fn param_width(&self) -> usize {
        match self {
            DimKind::Continuous | DimKind::Binary => 1,
            DimKind::Categorical(c) => *c,
        }
    }
}

/// A node of the causal graph: a named, possibly multi-dimensional,
/// possibly heterogeneous observed variable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kinds: Vec<DimKind>,
}

impl NodeSpec {
    pub fn continuous(name: &str) -> Self {
        NodeSpec { name: name.into(), kinds: vec![DimKind::Continuous] }
    }
    pub fn binary(name: &str) -> Self {
        NodeSpec { name: name.into(), kinds: vec![DimKind::Binary] }
    }
    pub fn categorical(name: &str, cardinality: usize) -> Self {
        NodeSpec { name: name.into(), kinds: vec![DimKind::Categorical(cardinality)] }
    }
    pub fn dim(&self) -> usize {
        self.kinds.len()
    }
}

/// Directed acyclic causal graph. Edge `(j, i)` means `j` is a causal parent
/// of `i`. Immutable after construction and safe to share across workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalGraph {
    nodes: Vec<NodeSpec>,
    /// Sorted, deduplicated list of (parent, child) pairs.
    edges: Vec<(usize, usize)>,
}

impl CausalGraph {
    /// Builds a graph and validates it: indices in range, no self-edges,
    /// no duplicate edges, acyclic.
    pub fn new(nodes: Vec<NodeSpec>, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        let d = nodes.len();
        if d == 0 {
            return Err(Error::graph("graph needs at least one node"));
        }
        for &(j, i) in &edges {
            if j >= d || i >= d {
                return Err(Error::graph(format!("edge ({j}->{i}) out of range for {d} nodes")));
            }
            if j == i {
                return Err(Error::graph(format!("self-edge on node {i}")));
            }
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        if edges.len() != before {
            return Err(Error::graph("duplicate edge"));
        }
        let g = CausalGraph { nodes, edges };
        g.topological_order()?; // rejects cycles
        Ok(g)
    }

    /// Convenience constructor for graphs of one-dimensional continuous nodes.
    pub fn continuous(names: &[&str], edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(names.iter().map(|n| NodeSpec::continuous(n)).collect(), edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Parents of `i` in ascending order.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, c)| c == i).map(|&(p, _)| p).collect()
    }

    /// Children of `i` in ascending order.
    pub fn children(&self, i: usize) -> Vec<usize> {
        let mut c: Vec<usize> =
            self.edges.iter().filter(|&&(p, _)| p == i).map(|&(_, c)| c).collect();
        c.sort_unstable();
        c
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.node_count() {
            return Err(Error::graph(format!(
                "node index {i} out of range for {} nodes",
                self.node_count()
            )));
        }
        Ok(())
    }

    /// All nodes with a directed path into `i`, excluding `i` itself.
    pub fn ancestors(&self, i: usize) -> Result<BTreeSet<usize>> {
        self.check_index(i)?;
        let mut out = BTreeSet::new();
        let mut stack = self.parents(i);
        while let Some(j) = stack.pop() {
            if out.insert(j) {
                stack.extend(self.parents(j));
            }
        }
        Ok(out)
    }

    /// Ancestors of `i` including `i` itself (`an*(i)`).
    pub fn ancestors_star(&self, i: usize) -> Result<BTreeSet<usize>> {
        let mut s = self.ancestors(i)?;
        s.insert(i);
        Ok(s)
    }

    /// All nodes reachable from `i`, excluding `i` itself.
    pub fn descendants(&self, i: usize) -> Result<BTreeSet<usize>> {
        self.check_index(i)?;
        let mut out = BTreeSet::new();
        let mut stack = self.children(i);
        while let Some(j) = stack.pop() {
            if out.insert(j) {
                stack.extend(self.children(j));
            }
        }
        Ok(out)
    }

    /// Parents of `i` including `i` itself (`pa*(i)`).
    pub fn parents_star(&self, i: usize) -> Result<BTreeSet<usize>> {
        self.check_index(i)?;
        let mut s: BTreeSet<usize> = self.parents(i).into_iter().collect();
        s.insert(i);
        Ok(s)
    }

    /// Deterministic topological order: Kahn's algorithm with ties broken by
    /// ascending node index. Fails on cycles.
    pub fn topological_order(&self) -> Result<Vec<usize>> {
        let d = self.node_count();
        let mut indeg = vec![0usize; d];
        for &(_, i) in &self.edges {
            indeg[i] += 1;
        }
        // BTreeSet keeps the frontier sorted, so ties resolve by index.
        let mut ready: BTreeSet<usize> = (0..d).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(&n) = ready.iter().next() {
            ready.remove(&n);
            order.push(n);
            for c in self.children(n) {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != d {
            return Err(Error::graph("cycle detected"));
        }
        Ok(order)
    }

    /// Matrix of shortest directed path lengths; `None` when no path exists.
    /// `dist[j][i]` is the minimum number of edges on a path `j -> i`.
    pub fn shortest_paths(&self) -> Vec<Vec<Option<usize>>> {
        let d = self.node_count();
        let mut dist = vec![vec![None; d]; d];
        for s in 0..d {
            let mut frontier = vec![s];
            let mut depth = 0usize;
            let mut seen = vec![false; d];
            seen[s] = true;
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for &u in &frontier {
                    if depth > 0 {
                        dist[s][u] = Some(depth);
                    }
                    for c in self.children(u) {
                        if !seen[c] {
                            seen[c] = true;
                            next.push(c);
                        }
                    }
                }
                frontier = next;
                depth += 1;
            }
        }
        dist
    }

    /// Diameter: the longest shortest directed path over ordered pairs that
    /// are connected by at least one directed path. Zero for edgeless graphs.
    pub fn diameter(&self) -> usize {
        self.shortest_paths().iter().flatten().filter_map(|d| *d).max().unwrap_or(0)
    }

    /// Longest directed path length, computed by dynamic programming over a
    /// topological order. Zero for edgeless graphs.
    pub fn longest_path(&self) -> usize {
        let order = self.topological_order().expect("validated at construction");
        let d = self.node_count();
        // longest[i]: longest path ending at i.
        let mut longest = vec![0usize; d];
        for &i in &order {
            for c in self.children(i) {
                longest[c] = longest[c].max(longest[i] + 1);
            }
        }
        longest.into_iter().max().unwrap_or(0)
    }

    /// Builds the model adjacency with self-loops, then severs the incoming
    /// edges of every intervened node (the self-loop stays).
    pub fn vaca_adjacency(&self, intervened: &[usize]) -> Result<VacaAdjacency> {
        for &i in intervened {
            self.check_index(i)?;
        }
        let d = self.node_count();
        let mut m = vec![vec![false; d]; d];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = true;
        }
        for &(j, i) in &self.edges {
            m[i][j] = true;
        }
        let intervened_set: BTreeSet<usize> = intervened.iter().copied().collect();
        for &i in &intervened_set {
            for j in 0..d {
                if j != i {
                    m[i][j] = false;
                }
            }
        }
        Ok(VacaAdjacency { matrix: m, intervened: intervened_set })
    }

    /// Total observed dimensions across nodes.
    pub fn total_dim(&self) -> usize {
        self.nodes.iter().map(|n| n.dim()).sum()
    }

    /// Column range of each node in a flattened data matrix.
    pub fn node_slices(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.node_count());
        let mut off = 0;
        for n in &self.nodes {
            out.push(off..off + n.dim());
            off += n.dim();
        }
        out
    }

    /// Hash of the canonical serialization, used to pair checkpoints with
    /// the graph they were trained on.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for n in &self.nodes {
            h.update(n.name.as_bytes());
            h.update(b":");
            for k in &n.kinds {
                match k {
                    DimKind::Continuous => h.update(b"c"),
                    DimKind::Binary => h.update(b"b"),
                    DimKind::Categorical(c) => h.update(format!("k{c}").as_bytes()),
                }
            }
            h.update(b";");
        }
        for &(j, i) in &self.edges {
            h.update(format!("{j}>{i};").as_bytes());
        }
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The d-by-d binary adjacency the model consumes: self-loops on the
/// diagonal, `matrix[i][j] = true` iff `j` is `i` itself or a parent of `i`
/// in the (possibly intervened) graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VacaAdjacency {
    matrix: Vec<Vec<bool>>,
    intervened: BTreeSet<usize>,
}

impl VacaAdjacency {
    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.matrix[i][j]
    }

    pub fn intervened(&self) -> &BTreeSet<usize> {
        &self.intervened
    }

    /// Incoming sources of node `i` (self included), ascending.
    pub fn in_sources(&self, i: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&j| self.matrix[i][j]).collect()
    }

    /// Directed edges `(dst, src)` with `src != dst`, in (dst, src) order.
    pub fn cross_edges(&self) -> Vec<(usize, usize)> {
        let d = self.dim();
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if i != j && self.matrix[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }
}
