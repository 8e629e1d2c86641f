//! Dense tensor arithmetic with reverse-mode differentiation and Adam.
//!
//! Everything is a two-dimensional `f64` matrix (scalars are 1x1). A `Tape`
//! records operations in execution order; `backward` walks the recording in
//! reverse and accumulates analytic gradients into the parameters that were
//! bound to the tape. All arithmetic is double precision: the models here
//! are small, so precision wins over speed.
//!
//! A tape is confined to one worker. Plain matrices and `ParamSet` values
//! are freely shareable once training stops mutating them.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

// ── Parameters ────────────────────────────────────────────────────────

/// A trainable matrix with its gradient accumulator and Adam moments.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub path: String,
    pub value: Matrix,
    pub grad: Matrix,
    moment1: Matrix,
    moment2: Matrix,
}

/// Handle into a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Initialization scheme for newly allocated parameters.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Uniform in +-sqrt(6 / (fan_in + fan_out)).
    Glorot,
    Zero,
    Const(f64),
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Named registry of all parameters of a model, plus the shared Adam step
/// counter.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
    step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(
        &mut self,
        path: impl Into<String>,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let value = match init {
            Init::Glorot => {
                let s = (6.0 / (rows + cols) as f64).sqrt();
                Matrix::from_shape_fn((rows, cols), |_| rng.gen_range(-s..s))
            }
            Init::Zero => Matrix::zeros((rows, cols)),
            Init::Const(c) => Matrix::from_elem((rows, cols), c),
        };
        self.params.push(Parameter {
            path: path.into(),
            value,
            grad: Matrix::zeros((rows, cols)),
            moment1: Matrix::zeros((rows, cols)),
            moment2: Matrix::zeros((rows, cols)),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Copies raw values out (used for best-epoch snapshots).
    pub fn snapshot_values(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore_values(&mut self, values: &[Matrix]) {
        assert_eq!(values.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value.assign(v);
        }
    }

    /// Standard Adam update with bias correction over all parameters.
    /// Gradients are left in place; the trainer clears them via
    /// [`ParamSet::zero_grads`].
    pub fn adam_step(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for p in &mut self.params {
            azip_update(&mut p.moment1, &p.grad, |m, g| beta1 * m + (1.0 - beta1) * g);
            azip_update(&mut p.moment2, &p.grad, |v, g| beta2 * v + (1.0 - beta2) * g * g);
            for ((w, m), v) in
                p.value.iter_mut().zip(p.moment1.iter()).zip(p.moment2.iter())
            {
                let mhat = m / bc1;
                let vhat = v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Direct mutable access, for tests that need to pin specific weights.
    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }
}

fn azip_update(dst: &mut Matrix, src: &Matrix, f: impl Fn(f64, f64) -> f64) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = f(*d, *s);
    }
}

// ── Checkpoints ───────────────────────────────────────────────────────

const CKPT_MAGIC: &[u8; 8] = b"VACACKP1";

#[derive(Serialize, Deserialize)]
struct CkptEntry {
    path: String,
    rows: usize,
    cols: usize,
    /// Offset into the value section, counted in f64 slots.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct CkptIndex {
    params: Vec<CkptEntry>,
}

impl ParamSet {
    /// Serializes parameter values (not optimizer state) as a little-endian
    /// binary container with a JSON index. Round trips bit-exactly.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut entries = Vec::with_capacity(self.params.len());
        let mut offset = 0usize;
        for p in &self.params {
            let (r, c) = p.value.dim();
            entries.push(CkptEntry { path: p.path.clone(), rows: r, cols: c, offset });
            offset += r * c;
        }
        let index = serde_json::to_vec(&CkptIndex { params: entries })
            .map_err(|e| Error::data(format!("checkpoint index: {e}")))?;
        let mut buf = Vec::with_capacity(16 + index.len() + offset * 8);
        buf.extend_from_slice(CKPT_MAGIC);
        buf.extend_from_slice(&(index.len() as u64).to_le_bytes());
        buf.extend_from_slice(&index);
        for p in &self.params {
            for v in p.value.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Loads values saved by [`ParamSet::save`] into this set, matching by
    /// parameter path. Every parameter must be present with the right shape.
    pub fn load(&mut self, path: &std::path::Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != CKPT_MAGIC {
            return Err(Error::data(format!("{}: not a checkpoint file", path.display())));
        }
        let index_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + index_len {
            return Err(Error::data("truncated checkpoint index"));
        }
        let index: CkptIndex = serde_json::from_slice(&bytes[16..16 + index_len])
            .map_err(|e| Error::data(format!("checkpoint index: {e}")))?;
        let data = &bytes[16 + index_len..];
        for p in &mut self.params {
            let entry = index
                .params
                .iter()
                .find(|e| e.path == p.path)
                .ok_or_else(|| Error::data(format!("checkpoint missing parameter {}", p.path)))?;
            let (r, c) = p.value.dim();
            if entry.rows != r || entry.cols != c {
                return Err(Error::data(format!(
                    "checkpoint shape mismatch for {}: file {}x{}, model {r}x{c}",
                    p.path, entry.rows, entry.cols
                )));
            }
            let start = entry.offset * 8;
            let end = start + r * c * 8;
            if end > data.len() {
                return Err(Error::data("truncated checkpoint data"));
            }
            for (k, w) in p.value.iter_mut().enumerate() {
                let s = start + k * 8;
                *w = f64::from_le_bytes(data[s..s + 8].try_into().unwrap());
            }
        }
        Ok(())
    }
}

// ── Tape ──────────────────────────────────────────────────────────────

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug)]
enum Op {
    Leaf { param: Option<ParamId> },
    MatMul(TensorId, TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Neg(TensorId),
    Scale(TensorId, f64),
    // the constant is forward-only; backward passes gradients through
    AddConst(TensorId),
    AddRow(TensorId, TensorId),
    ConcatCols(Vec<TensorId>),
    SliceCols(TensorId, usize, usize),
    Relu(TensorId),
    Tanh(TensorId),
    Sigmoid(TensorId),
    Exp(TensorId),
    Ln(TensorId),
    Softplus(TensorId),
    SumAll(TensorId),
    MeanAll(TensorId),
    LogSumExpCols(TensorId),
}

/// One recorded tensor: its forward value, the operation that produced it,
/// and whether gradients flow through it.
#[derive(Debug)]
pub struct Tensor {
    pub value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Reverse-mode tape. Operations append nodes; `backward` visits them once
/// in reverse execution order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Tensor>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: TensorId) -> f64 {
        self.nodes[id.0].value[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Result<TensorId> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::numeric("non-finite value in forward pass"));
        }
        self.nodes.push(Tensor { value, op, requires_grad });
        Ok(TensorId(self.nodes.len() - 1))
    }

    fn rg(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Records a constant input (no gradient).
    pub fn input(&mut self, value: Matrix) -> Result<TensorId> {
        self.push(value, Op::Leaf { param: None }, false)
    }

    /// Binds a parameter's current value to the tape; gradients reach it.
    pub fn param(&mut self, set: &ParamSet, id: ParamId) -> Result<TensorId> {
        self.push(set.value(id).clone(), Op::Leaf { param: Some(id) }, true)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ar, ac) = self.value(a).dim();
        let (br, bc) = self.value(b).dim();
        if ac != br {
            return Err(Error::numeric(format!("matmul shape mismatch {ar}x{ac} . {br}x{bc}")));
        }
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b), self.rg(a) || self.rg(b))
    }

    fn binary_same_shape(
        &mut self,
        a: TensorId,
        b: TensorId,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        if self.value(a).dim() != self.value(b).dim() {
            return Err(Error::numeric(format!(
                "{name} shape mismatch {:?} vs {:?}",
                self.value(a).dim(),
                self.value(b).dim()
            )));
        }
        let mut v = self.value(a).clone();
        for (x, y) in v.iter_mut().zip(self.value(b).iter()) {
            *x = f(*x, *y);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(v, op, rg)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_same_shape(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: TensorId) -> Result<TensorId> {
        let v = self.value(a).mapv(|x| -x);
        self.push(v, Op::Neg(a), self.rg(a))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let v = self.value(a).mapv(|x| c * x);
        self.push(v, Op::Scale(a, c), self.rg(a))
    }

    pub fn add_const(&mut self, a: TensorId, c: f64) -> Result<TensorId> {
        let v = self.value(a).mapv(|x| x + c);
        self.push(v, Op::AddConst(a), self.rg(a))
    }

    /// Adds a 1xN row to every row of a BxN matrix (bias broadcast).
    pub fn add_row(&mut self, a: TensorId, row: TensorId) -> Result<TensorId> {
        let (_, ac) = self.value(a).dim();
        let (rr, rc) = self.value(row).dim();
        if rr != 1 || rc != ac {
            return Err(Error::numeric(format!(
                "add_row wants 1x{ac}, got {rr}x{rc}"
            )));
        }
        let v = self.value(a) + &self.value(row).row(0);
        let rg = self.rg(a) || self.rg(row);
        self.push(v, Op::AddRow(a, row), rg)
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::numeric("concat of zero tensors"));
        }
        let rows = self.value(parts[0]).nrows();
        let total: usize = parts.iter().map(|&p| self.value(p).ncols()).sum();
        let mut v = Matrix::zeros((rows, total));
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            if m.nrows() != rows {
                return Err(Error::numeric("concat row count mismatch"));
            }
            v.slice_mut(ndarray::s![.., off..off + m.ncols()]).assign(m);
            off += m.ncols();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let (_, c) = self.value(a).dim();
        if start > end || end > c {
            return Err(Error::numeric(format!("slice {start}..{end} out of {c} cols")));
        }
        let v = self.value(a).slice(ndarray::s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end), self.rg(a))
    }

    fn unary(&mut self, a: TensorId, f: impl Fn(f64) -> f64, op: Op) -> Result<TensorId> {
        let v = self.value(a).mapv(f);
        let rg = self.rg(a);
        self.push(v, op, rg)
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn softplus(&mut self, a: TensorId) -> Result<TensorId> {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let s = self.value(a).sum();
        self.push(Matrix::from_elem((1, 1), s), Op::SumAll(a), self.rg(a))
    }

    pub fn mean_all(&mut self, a: TensorId) -> Result<TensorId> {
        let m = self.value(a).mean().unwrap_or(0.0);
        self.push(Matrix::from_elem((1, 1), m), Op::MeanAll(a), self.rg(a))
    }

    /// Row-wise log(sum(exp(x))) with max-subtraction, BxC -> Bx1.
    pub fn log_sum_exp_cols(&mut self, a: TensorId) -> Result<TensorId> {
        let v = log_sum_exp_cols(self.value(a));
        self.push(v, Op::LogSumExpCols(a), self.rg(a))
    }

    /// Populates gradients of `loss` with respect to every bound parameter,
    /// accumulating into `set` (call [`ParamSet::zero_grads`] between steps).
    pub fn backward(&mut self, loss: TensorId, set: &mut ParamSet) -> Result<()> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::numeric("loss tensor not on tape"));
        }
        if self.value(loss).dim() != (1, 1) {
            return Err(Error::numeric("loss must be scalar"));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_elem((1, 1), 1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            // Reuse helper to accumulate into an input slot.
            macro_rules! acc {
                ($dst:expr, $val:expr) => {{
                    let dst: TensorId = $dst;
                    if self.nodes[dst.0].requires_grad {
                        match &mut grads[dst.0] {
                            Some(existing) => *existing += &$val,
                            slot @ None => *slot = Some($val),
                        }
                    }
                }};
            }
            match &self.nodes[idx].op {
                Op::Leaf { param } => {
                    if let Some(pid) = param {
                        set.params[pid.0].grad += &g;
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.dot(&self.nodes[b.0].value.t());
                    let gb = self.nodes[a.0].value.t().dot(&g);
                    acc!(a, ga);
                    acc!(b, gb);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    acc!(a, g.clone());
                    acc!(b, g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    acc!(a, g.clone());
                    acc!(b, -g);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = &g * &self.nodes[b.0].value;
                    let gb = &g * &self.nodes[a.0].value;
                    acc!(a, ga);
                    acc!(b, gb);
                }
                Op::Neg(a) => {
                    let a = *a;
                    acc!(a, -g);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    acc!(a, g.mapv(|x| c * x));
                }
                Op::AddConst(a) => {
                    let a = *a;
                    acc!(a, g);
                }
                Op::AddRow(a, row) => {
                    let (a, row) = (*a, *row);
                    let grow = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc!(a, g);
                    acc!(row, grow);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.ncols();
                        let gp = g.slice(ndarray::s![.., off..off + w]).to_owned();
                        acc!(p, gp);
                        off += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let (a, start, end) = (*a, *start, *end);
                    let mut ga = Matrix::zeros(self.nodes[a.0].value.dim());
                    ga.slice_mut(ndarray::s![.., start..end]).assign(&g);
                    acc!(a, ga);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let mut ga = g;
                    for (gx, &x) in ga.iter_mut().zip(self.nodes[a.0].value.iter()) {
                        if x <= 0.0 {
                            *gx = 0.0;
                        }
                    }
                    acc!(a, ga);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = &self.nodes[idx].value;
                    let ga = &g * &y.mapv(|t| 1.0 - t * t);
                    acc!(a, ga);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = &self.nodes[idx].value;
                    let ga = &g * &y.mapv(|s| s * (1.0 - s));
                    acc!(a, ga);
                }
                Op::Exp(a) => {
                    let a = *a;
                    let ga = &g * &self.nodes[idx].value;
                    acc!(a, ga);
                }
                Op::Ln(a) => {
                    let a = *a;
                    let ga = &g / &self.nodes[a.0].value;
                    acc!(a, ga);
                }
                Op::Softplus(a) => {
                    let a = *a;
                    let ga = &g * &self.nodes[a.0].value.mapv(sigmoid);
                    acc!(a, ga);
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let ga = Matrix::from_elem(self.nodes[a.0].value.dim(), g[[0, 0]]);
                    acc!(a, ga);
                }
                Op::MeanAll(a) => {
                    let a = *a;
                    let n = self.nodes[a.0].value.len() as f64;
                    let ga = Matrix::from_elem(self.nodes[a.0].value.dim(), g[[0, 0]] / n);
                    acc!(a, ga);
                }
                Op::LogSumExpCols(a) => {
                    let a = *a;
                    let soft = softmax_cols(&self.nodes[a.0].value);
                    // g is Bx1; broadcast across columns.
                    let mut ga = soft;
                    for (mut row, gi) in ga.axis_iter_mut(Axis(0)).zip(g.column(0)) {
                        row.mapv_inplace(|s| s * gi);
                    }
                    acc!(a, ga);
                }
            }
        }
        Ok(())
    }
}

// ── Shared scalar/matrix math (used by tape and inference paths) ──────

/// Standard-normal matrix draw.
pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    use rand_distr::StandardNormal;
    Matrix::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Splitmix64-style mixer for deriving independent RNG streams from one
/// seed without overlap.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    // log(1 + e^x), stable for large |x|
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Row-wise stabilized log-sum-exp, BxC -> Bx1.
pub fn log_sum_exp_cols(a: &Matrix) -> Matrix {
    let mut out = Matrix::zeros((a.nrows(), 1));
    for (r, row) in a.axis_iter(Axis(0)).enumerate() {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = row.iter().map(|&x| (x - mx).exp()).sum();
        out[[r, 0]] = mx + s.ln();
    }
    out
}

/// Row-wise softmax.
pub fn softmax_cols(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - mx).exp();
            s += *x;
        }
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    out
}
