//! Observed-data container: sample matrix, stored exogenous draws, column
//! layout, normalization and train/valid/test splits.
//!
//! Normalization statistics always come from the training split only, and
//! only continuous columns are standardized; binary and categorical columns
//! keep their raw codes. A per-column pre-scale (applied before computing
//! statistics) keeps large-unit columns numerically comparable; the inverse
//! transform restores original units.

use std::ops::Range;
use std::path::Path;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::diff::Matrix;
use crate::error::{Error, Result};
use crate::graph::DimKind;

/// Column layout: node names and per-dimension kinds, flattened column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataLayout {
    pub node_names: Vec<String>,
    pub kinds: Vec<Vec<DimKind>>,
}

impl DataLayout {
    pub fn node_count(&self) -> usize {
        self.node_names.len()
    }

    pub fn total_dim(&self) -> usize {
        self.kinds.iter().map(|k| k.len()).sum()
    }

    pub fn node_slices(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.kinds.len());
        let mut off = 0;
        for k in &self.kinds {
            out.push(off..off + k.len());
            off += k.len();
        }
        out
    }

    /// Kind of each flattened column.
    pub fn column_kinds(&self) -> Vec<DimKind> {
        self.kinds.iter().flatten().copied().collect()
    }

    /// Flattened column names: the node name, suffixed `_k` for
    /// multi-dimensional nodes.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, kinds) in self.node_names.iter().zip(&self.kinds) {
            if kinds.len() == 1 {
                out.push(name.clone());
            } else {
                for k in 0..kinds.len() {
                    out.push(format!("{name}_{k}"));
                }
            }
        }
        out
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.node_names.iter().position(|n| n == name)
    }
}

/// Per-column affine normalization. `Standard` is applied to continuous
/// columns: `y = (x * pre_scale - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnStats {
    Standard { mean: f64, std: f64, pre_scale: f64 },
    Identity,
}

impl ColumnStats {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            ColumnStats::Standard { mean, std, pre_scale } => (x * pre_scale - mean) / std,
            ColumnStats::Identity => x,
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        match self {
            ColumnStats::Standard { mean, std, pre_scale } => (y * std + mean) / pre_scale,
            ColumnStats::Identity => y,
        }
    }

    /// Standard deviation of the column in normalized units.
    pub fn normalized_std(&self, raw_std: f64) -> f64 {
        match self {
            ColumnStats::Standard { std, pre_scale, .. } => raw_std * pre_scale / std,
            ColumnStats::Identity => raw_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub columns: Vec<ColumnStats>,
}

impl Normalization {
    pub fn apply_matrix(&self, raw: &Matrix) -> Matrix {
        let mut out = raw.clone();
        for (c, stats) in self.columns.iter().enumerate() {
            for v in out.column_mut(c) {
                *v = stats.apply(*v);
            }
        }
        out
    }

    pub fn invert_matrix(&self, norm: &Matrix) -> Matrix {
        let mut out = norm.clone();
        for (c, stats) in self.columns.iter().enumerate() {
            for v in out.column_mut(c) {
                *v = stats.invert(*v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

/// A dataset: rows ordered `[train | valid | test]`. When produced by a
/// built-in structural causal model the exogenous draws are stored too,
/// which is what makes exact counterfactual ground truth possible.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub u: Option<Matrix>,
    pub layout: DataLayout,
    pub splits: SplitSizes,
    pub normalization: Option<Normalization>,
    pub seed: u64,
    /// Per-column pre-scale applied before standardization.
    pub pre_scale: Vec<f64>,
}

impl Dataset {
    pub fn total_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn train_x(&self) -> Matrix {
        self.x.slice(ndarray::s![..self.splits.train, ..]).to_owned()
    }

    pub fn valid_x(&self) -> Matrix {
        let a = self.splits.train;
        self.x.slice(ndarray::s![a..a + self.splits.valid, ..]).to_owned()
    }

    pub fn test_x(&self) -> Matrix {
        let a = self.splits.train + self.splits.valid;
        self.x.slice(ndarray::s![a.., ..]).to_owned()
    }

    pub fn test_rows(&self) -> Range<usize> {
        self.splits.train + self.splits.valid..self.total_rows()
    }

    /// Standardizes continuous columns using training-split statistics.
    /// Fails on a zero-variance continuous column, and on datasets that are
    /// already normalized.
    pub fn normalize(mut self) -> Result<Self> {
        if self.normalization.is_some() {
            return Err(Error::data("dataset is already normalized"));
        }
        if self.splits.train == 0 {
            return Err(Error::data("cannot normalize: empty training split"));
        }
        let kinds = self.layout.column_kinds();
        let train = self.train_x();
        let mut columns = Vec::with_capacity(kinds.len());
        for (c, kind) in kinds.iter().enumerate() {
            if !kind.is_continuous() {
                columns.push(ColumnStats::Identity);
                continue;
            }
            let ps = self.pre_scale.get(c).copied().unwrap_or(1.0);
            let col: Vec<f64> = train.column(c).iter().map(|v| v * ps).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 1e-12 {
                return Err(Error::numeric(format!(
                    "degenerate column {c}: zero variance in training split"
                )));
            }
            columns.push(ColumnStats::Standard { mean, std, pre_scale: ps });
        }
        let norm = Normalization { columns };
        self.x = norm.apply_matrix(&self.x);
        self.normalization = Some(norm);
        Ok(self)
    }

    /// Inverse of [`Dataset::normalize`] applied to an arbitrary matrix in
    /// this dataset's column layout.
    pub fn denormalize_matrix(&self, m: &Matrix) -> Matrix {
        match &self.normalization {
            Some(n) => n.invert_matrix(m),
            None => m.clone(),
        }
    }

    /// Maps a raw-units matrix into this dataset's normalized space.
    pub fn normalize_matrix(&self, m: &Matrix) -> Matrix {
        match &self.normalization {
            Some(n) => n.apply_matrix(m),
            None => m.clone(),
        }
    }

    /// Empirical standard deviation of one column of the training split
    /// (in the dataset's current units).
    pub fn train_column_std(&self, col: usize) -> f64 {
        let train = self.train_x();
        let c = train.column(col);
        let n = c.len() as f64;
        let mean = c.sum() / n;
        (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    // ── Persistence: header JSON + CSV matrices ───────────────────────

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let header = DatasetHeader {
            layout: self.layout.clone(),
            splits: self.splits,
            normalization: self.normalization.clone(),
            seed: self.seed,
            pre_scale: self.pre_scale.clone(),
            has_u: self.u.is_some(),
        };
        let json = serde_json::to_string_pretty(&header)
            .map_err(|e| Error::data(format!("dataset header: {e}")))?;
        std::fs::write(dir.join("header.json"), json)?;
        write_csv(&dir.join("x.csv"), &self.x, &self.layout.column_names())?;
        if let Some(u) = &self.u {
            let names: Vec<String> =
                self.layout.node_names.iter().map(|n| format!("u_{n}")).collect();
            write_csv(&dir.join("u.csv"), u, &names)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(dir.join("header.json"))?;
        let header: DatasetHeader =
            serde_json::from_str(&json).map_err(|e| Error::data(format!("dataset header: {e}")))?;
        let x = read_csv(&dir.join("x.csv"))?;
        let u = if header.has_u { Some(read_csv(&dir.join("u.csv"))?) } else { None };
        if x.nrows() != header.splits.total() {
            return Err(Error::data(format!(
                "x.csv has {} rows, header says {}",
                x.nrows(),
                header.splits.total()
            )));
        }
        if x.ncols() != header.layout.total_dim() {
            return Err(Error::data("x.csv column count does not match layout"));
        }
        Ok(Dataset {
            x,
            u,
            layout: header.layout,
            splits: header.splits,
            normalization: header.normalization,
            seed: header.seed,
            pre_scale: header.pre_scale,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    layout: DataLayout,
    splits: SplitSizes,
    normalization: Option<Normalization>,
    seed: u64,
    pre_scale: Vec<f64>,
    has_u: bool,
}

/// Writes a matrix as CSV with shortest-round-trip float formatting, so a
/// read-back parses to bit-identical values.
pub fn write_csv(path: &Path, m: &Matrix, header: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(|e| Error::data(format!("csv write: {e}")))?;
    for row in m.axis_iter(Axis(0)) {
        let rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        w.write_record(&rec).map_err(|e| Error::data(format!("csv write: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Matrix> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let width = r.headers().map_err(|e| Error::data(format!("csv read: {e}")))?.len();
    let mut values = Vec::new();
    let mut rows = 0usize;
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::data(format!("csv read: {e}")))?;
        if rec.len() != width {
            return Err(Error::data(format!("{}: ragged csv row", path.display())));
        }
        for field in rec.iter() {
            values.push(
                field
                    .parse::<f64>()
                    .map_err(|e| Error::data(format!("{}: bad number {field:?}: {e}", path.display())))?,
            );
        }
        rows += 1;
    }
    Matrix::from_shape_vec((rows, width), values)
        .map_err(|e| Error::data(format!("csv shape: {e}")))
}

/// Reads a CSV with a header row, returning (column names, matrix).
pub fn read_csv_named(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = r
        .headers()
        .map_err(|e| Error::data(format!("csv read: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    drop(r);
    let m = read_csv(path)?;
    Ok((names, m))
}
