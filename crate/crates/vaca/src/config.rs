//! Experiment configuration files.
//!
//! TOML with flat key = value sections, strictly validated: unknown keys
//! are rejected with the offending field path. A config names either a
//! built-in ground-truth model (`[data] scm = ...`) or a hand-authored
//! graph (`[graph]` with `nodes = ["name:dim:kind", ...]` and
//! `edges = ["a->b", ...]`), plus model hyperparameters, metric options,
//! seeds and an output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::SplitSizes;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, DimKind, NodeSpec};
use crate::metrics::{KernelSpec, SuiteConfig};
use crate::model::VacaConfig;
use crate::scm::{builtin_scm, ScmSpec, Sem};

/// Environment variable holding the default output root directory.
pub const OUTPUT_ROOT_ENV: &str = "VACA_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { name: "experiment".into(), seed: 0, out_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Built-in SCM name (collider, triangle, chain, mgraph, loan, adult).
    pub scm: Option<String>,
    /// Equation family for the synthetic graphs: LIN, NLIN or NADD.
    pub sem: Option<String>,
    /// External observations (CSV with a header row); requires `[graph]`.
    pub csv: Option<PathBuf>,
    /// Label column name inside `csv`, for auditing flows.
    pub label: Option<String>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            scm: None,
            sem: None,
            csv: None,
            label: None,
            n_train: 5000,
            n_valid: 2500,
            n_test: 2500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    /// `name:dim:kind` entries; kind is `continuous`, `binary` or `cat<k>`,
    /// or a comma list with one kind per dimension.
    pub nodes: Vec<String>,
    /// `parent->child` entries, by node name.
    pub edges: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub bandwidths: Vec<f64>,
    pub median_heuristic: bool,
    pub n_samples: usize,
    pub alphas: Vec<f64>,
    pub include_diagonal: bool,
    pub max_cf_rows: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let s = SuiteConfig::default();
        MetricsSection {
            bandwidths: s.kernel.bandwidths,
            median_heuristic: s.median_heuristic,
            n_samples: s.n_samples,
            alphas: s.alphas,
            include_diagonal: s.include_diagonal,
            max_cf_rows: s.max_cf_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Random seeds; each grid combination runs once per seed.
    pub seeds: Vec<u64>,
    /// Worker pool bound (overridable by `--jobs`).
    pub jobs: usize,
    /// Dotted config paths mapped to candidate values, e.g.
    /// `"vaca.decoder_hidden_layers" = [0, 1, 2]`.
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub graph: Option<GraphSection>,
    pub vaca: VacaConfig,
    pub metrics: MetricsSection,
    pub sweep: Option<SweepSection>,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(format!("serialize: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.scm, &self.graph) {
            (Some(_), Some(_)) => {
                return Err(Error::config("give either data.scm or [graph], not both"))
            }
            (None, None) => {
                return Err(Error::config("config needs data.scm or a [graph] section"))
            }
            _ => {}
        }
        if self.graph.is_some() {
            self.build_graph()?; // validates node/edge syntax
        } else {
            self.build_scm()?; // validates the scm/sem combination
        }
        if self.metrics.bandwidths.is_empty() && !self.metrics.median_heuristic {
            return Err(Error::config("metrics.bandwidths must not be empty"));
        }
        Ok(())
    }

    pub fn splits(&self) -> SplitSizes {
        SplitSizes { train: self.data.n_train, valid: self.data.n_valid, test: self.data.n_test }
    }

    pub fn build_scm(&self) -> Result<ScmSpec> {
        let name = self
            .data
            .scm
            .as_deref()
            .ok_or_else(|| Error::config("no built-in SCM named in [data]"))?;
        let sem: Sem = self.data.sem.as_deref().unwrap_or("fixed").parse()?;
        builtin_scm(name, sem)
    }

    pub fn build_graph(&self) -> Result<CausalGraph> {
        match &self.graph {
            Some(g) => parse_graph(g),
            None => Ok(self.build_scm()?.graph),
        }
    }

    pub fn suite_config(&self, seed: u64) -> SuiteConfig {
        SuiteConfig {
            kernel: KernelSpec { bandwidths: self.metrics.bandwidths.clone() },
            median_heuristic: self.metrics.median_heuristic,
            n_samples: self.metrics.n_samples,
            alphas: self.metrics.alphas.clone(),
            include_diagonal: self.metrics.include_diagonal,
            seed,
            max_cf_rows: self.metrics.max_cf_rows,
        }
    }

    /// Output directory: explicit setting, else
    /// `$VACA_OUTPUT_ROOT/<name>-s<seed>`, else `./<name>-s<seed>`.
    pub fn out_dir(&self, seed: u64) -> PathBuf {
        if let Some(d) = &self.experiment.out_dir {
            return d.clone();
        }
        let root = std::env::var(OUTPUT_ROOT_ENV).unwrap_or_else(|_| ".".into());
        PathBuf::from(root).join(format!("{}-s{}", self.experiment.name, seed))
    }
}

// ── Graph block parsing ───────────────────────────────────────────────

fn parse_kind(s: &str) -> Result<DimKind> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "continuous" | "cont" | "c" => Ok(DimKind::Continuous),
        "binary" | "bin" | "b" => Ok(DimKind::Binary),
        _ => {
            if let Some(card) = t.strip_prefix("cat").or_else(|| t.strip_prefix("categorical")) {
                let card: usize = card
                    .parse()
                    .map_err(|_| Error::config(format!("bad categorical cardinality {s:?}")))?;
                if card < 2 {
                    return Err(Error::config("categorical cardinality must be >= 2"));
                }
                Ok(DimKind::Categorical(card))
            } else {
                Err(Error::config(format!("unknown dimension kind {s:?}")))
            }
        }
    }
}

fn parse_node(s: &str) -> Result<NodeSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!("node {s:?} is not name:dim:kind")));
    }
    let name = parts[0].trim();
    if name.is_empty() {
        return Err(Error::config("empty node name"));
    }
    let dim: usize =
        parts[1].trim().parse().map_err(|_| Error::config(format!("bad dim in {s:?}")))?;
    if dim == 0 {
        return Err(Error::config(format!("node {name} has zero dimensions")));
    }
    let kind_list: Vec<&str> = parts[2].split(',').collect();
    let kinds: Vec<DimKind> = if kind_list.len() == 1 {
        vec![parse_kind(kind_list[0])?; dim]
    } else {
        if kind_list.len() != dim {
            return Err(Error::config(format!(
                "node {name}: {} kinds for {dim} dimensions",
                kind_list.len()
            )));
        }
        kind_list.iter().map(|k| parse_kind(k)).collect::<Result<_>>()?
    };
    Ok(NodeSpec { name: name.to_string(), kinds })
}

pub fn parse_graph(section: &GraphSection) -> Result<CausalGraph> {
    let nodes: Vec<NodeSpec> =
        section.nodes.iter().map(|s| parse_node(s)).collect::<Result<_>>()?;
    let index = |name: &str| -> Result<usize> {
        nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| Error::config(format!("edge references unknown node {name:?}")))
    };
    let mut edges = Vec::with_capacity(section.edges.len());
    for e in &section.edges {
        let (a, b) = e
            .split_once("->")
            .ok_or_else(|| Error::config(format!("edge {e:?} is not parent->child")))?;
        edges.push((index(a.trim())?, index(b.trim())?));
    }
    CausalGraph::new(nodes, edges)
}

// ── Sweep expansion ───────────────────────────────────────────────────

/// One grid assignment: dotted path -> value, in deterministic order.
pub type GridCombo = BTreeMap<String, toml::Value>;

/// Expands the sweep grid into the cartesian product of its value lists.
pub fn sweep_combinations(sweep: &SweepSection) -> Vec<GridCombo> {
    let mut combos: Vec<GridCombo> = vec![BTreeMap::new()];
    for (key, values) in &sweep.grid {
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for combo in &combos {
            for v in values {
                let mut c = combo.clone();
                c.insert(key.clone(), v.clone());
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

/// Applies a grid assignment to the config's TOML representation and
/// re-parses, so overrides flow through the same validation as hand-written
/// files.
pub fn apply_combo(base: &ExperimentConfig, combo: &GridCombo) -> Result<ExperimentConfig> {
    let mut doc: toml::Value = toml::Value::try_from(base.clone())
        .map_err(|e| Error::config(format!("config to toml: {e}")))?;
    for (path, value) in combo {
        set_path(&mut doc, path, value.clone())?;
    }
    // Sweeps do not nest.
    if let Some(t) = doc.as_table_mut() {
        t.remove("sweep");
    }
    let text =
        toml::to_string(&doc).map_err(|e| Error::config(format!("combo to toml: {e}")))?;
    ExperimentConfig::from_str(&text)
}

fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("sweep path {path:?}: not a table at {part}")))?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}
