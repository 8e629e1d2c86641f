//! Central finite-difference utilities.
//!
//! These are validation tools: they only ever call forward evaluations, so
//! they stay independent of the reverse-mode path they are used to check.

use crate::diff::Matrix;

/// Central finite-difference derivative of a scalar function at `x`,
/// one entry per coordinate of `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + eps;
        let up = f(&probe);
        probe[k] = orig - eps;
        let down = f(&probe);
        probe[k] = orig;
        g.push((up - down) / (2.0 * eps));
    }
    g
}

/// Relative error with an absolute floor, the standard gradient-check
/// comparison: |a - b| / max(|a|, |b|, floor).
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Per-block finite-difference sensitivity for a per-node map.
///
/// `f` maps per-node input matrices (each 1 x w_in) to per-node outputs.
/// Entry `[i][j]` of the result is the largest absolute central-difference
/// derivative of any output coordinate of node `i` with respect to any
/// input coordinate of node `j`. Structurally unreachable blocks come out
/// exactly zero because both probe evaluations are bitwise identical.
pub fn fd_block_sensitivity(
    f: impl Fn(&[Matrix]) -> Vec<Matrix>,
    inputs: &[Matrix],
    eps: f64,
) -> Vec<Vec<f64>> {
    let d_in = inputs.len();
    let base = f(inputs);
    let d_out = base.len();
    let mut blocks = vec![vec![0.0f64; d_in]; d_out];
    for j in 0..d_in {
        for c in 0..inputs[j].ncols() {
            let mut up = inputs.to_vec();
            up[j][[0, c]] += eps;
            let fu = f(&up);
            let mut dn = inputs.to_vec();
            dn[j][[0, c]] -= eps;
            let fd = f(&dn);
            for (i, row) in blocks.iter_mut().enumerate() {
                for k in 0..fu[i].ncols() {
                    let der = (fu[i][[0, k]] - fd[i][[0, k]]) / (2.0 * eps);
                    if der.abs() > row[j] {
                        row[j] = der.abs();
                    }
                }
            }
        }
    }
    blocks
}
