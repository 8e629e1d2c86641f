//! The built-in ground-truth models: collider, triangle, chain and M-graph
//! (each with LIN / NLIN / NADD structural-equation families), plus the
//! fixed loan and adult models.
//!
//! Equations are written verbatim from their published definitions.
//! `int(.)` truncates toward zero and `mode(.)` returns the most frequent
//! value with lowest-value tie-breaking.

use crate::diff::sigmoid;
use crate::error::{Error, Result};
use crate::graph::{CausalGraph, NodeSpec};

use super::{ind, sgn, ExogenousPrior, ParentView, ScmSpec, Sem, StructuralEquation};

pub const BUILTIN_NAMES: [&str; 6] = ["collider", "triangle", "chain", "mgraph", "loan", "adult"];

/// Returns one of the built-in SCMs. `sem` selects the equation family for
/// the four synthetic graphs and must be `Sem::Fixed` for loan and adult.
pub fn builtin_scm(name: &str, sem: Sem) -> Result<ScmSpec> {
    let spec = match (name, sem) {
        ("collider", Sem::Lin | Sem::Nlin | Sem::Nadd) => collider(sem),
        ("triangle", Sem::Lin | Sem::Nlin | Sem::Nadd) => triangle(sem),
        ("chain", Sem::Lin | Sem::Nlin | Sem::Nadd) => chain(sem),
        ("mgraph", Sem::Lin | Sem::Nlin | Sem::Nadd) => mgraph(sem),
        ("loan", Sem::Fixed) => loan(),
        ("adult", Sem::Fixed) => adult(),
        (n, s) => {
            return Err(Error::config(format!("unknown SCM/SEM combination {n:?}/{s}")));
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn eqs(fns: &[EquationEntry]) -> Vec<StructuralEquation> {
    fns.iter()
        .enumerate()
        .map(|(i, f)| StructuralEquation { node: i, eval: *f })
        .collect()
}

type EquationEntry = super::EquationFn;

// ── Priors shared by collider / triangle / chain ──────────────────────

fn synth_priors(sem: Sem) -> Vec<ExogenousPrior> {
    match sem {
        Sem::Lin => vec![
            ExogenousPrior::MixtureOfGaussians {
                weights: vec![0.5, 0.5],
                means: vec![-2.0, 1.5],
                variances: vec![1.5, 1.0],
            },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
        ],
        Sem::Nlin => vec![
            ExogenousPrior::MixtureOfGaussians {
                weights: vec![0.5, 0.5],
                means: vec![-2.0, 1.5],
                variances: vec![1.5, 1.0],
            },
            ExogenousPrior::Normal { mean: 0.0, variance: 0.1 },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
        ],
        Sem::Nadd => vec![
            ExogenousPrior::MixtureOfGaussians {
                weights: vec![0.5, 0.5],
                means: vec![-2.5, 2.5],
                variances: vec![1.0, 1.0],
            },
            ExogenousPrior::Normal { mean: 0.0, variance: 0.25 },
            ExogenousPrior::Normal { mean: 0.0, variance: 0.0625 },
        ],
        Sem::Fixed => unreachable!("synthetic SCMs always take a SEM family"),
    }
}

fn root(_pa: &ParentView, u: f64) -> f64 {
    u
}

// ── Collider: x1 -> x3 <- x2 ──────────────────────────────────────────

fn collider(sem: Sem) -> ScmSpec {
    let graph = CausalGraph::continuous(&["x1", "x2", "x3"], vec![(0, 2), (1, 2)]).unwrap();
    let equations = match sem {
        Sem::Lin => eqs(&[root, root, |pa, u| 0.05 * pa.get(0) + 0.25 * pa.get(1) + u]),
        Sem::Nlin => eqs(&[root, root, |pa, u| 0.05 * pa.get(0) + 0.25 * pa.get(1).powi(2) + u]),
        Sem::Nadd => eqs(&[root, root, |pa, u| {
            -1.0 + 0.1 * sgn(u) * (pa.get(0).powi(2) + pa.get(1).powi(2)) * u
        }]),
        Sem::Fixed => unreachable!(),
    };
    ScmSpec {
        name: "collider".into(),
        sem,
        graph,
        priors: synth_priors(sem),
        equations,
        pre_scale: vec![1.0; 3],
    }
}

// ── Triangle: x1 -> x2, x1 -> x3, x2 -> x3 ────────────────────────────

fn triangle(sem: Sem) -> ScmSpec {
    let graph =
        CausalGraph::continuous(&["x1", "x2", "x3"], vec![(0, 1), (0, 2), (1, 2)]).unwrap();
    let equations = match sem {
        Sem::Lin => eqs(&[
            root,
            |pa, u| -pa.get(0) + u,
            |pa, u| pa.get(0) + 0.25 * pa.get(1) + u,
        ]),
        Sem::Nlin => eqs(&[
            root,
            |pa, u| -1.0 + 3.0 / (1.0 + (-2.0 * pa.get(0)).exp()) + u,
            |pa, u| pa.get(0) + 0.25 * pa.get(1).powi(2) + u,
        ]),
        Sem::Nadd => eqs(&[
            root,
            |pa, u| 0.25 * sgn(u) * pa.get(0).powi(2) * (1.0 + u * u),
            |pa, u| -1.0 + 0.1 * sgn(u) * (pa.get(0).powi(2) + pa.get(1).powi(2)) + u,
        ]),
        Sem::Fixed => unreachable!(),
    };
    ScmSpec {
        name: "triangle".into(),
        sem,
        graph,
        priors: synth_priors(sem),
        equations,
        pre_scale: vec![1.0; 3],
    }
}

// ── Chain: x1 -> x2 -> x3 ─────────────────────────────────────────────

fn chain(sem: Sem) -> ScmSpec {
    let graph = CausalGraph::continuous(&["x1", "x2", "x3"], vec![(0, 1), (1, 2)]).unwrap();
    let equations = match sem {
        Sem::Lin => eqs(&[root, |pa, u| -pa.get(0) + u, |pa, u| 0.25 * pa.get(1) + u]),
        Sem::Nlin => eqs(&[
            root,
            |pa, u| -1.0 + 3.0 / (1.0 + (-2.0 * pa.get(0)).exp()) + u,
            |pa, u| 0.25 * pa.get(1).powi(2) + u,
        ]),
        Sem::Nadd => eqs(&[
            root,
            |pa, u| 0.25 * sgn(u) * pa.get(0).powi(2) * (1.0 + u * u),
            |pa, u| -1.0 + 0.1 * sgn(u) * pa.get(1).powi(2) + u,
        ]),
        Sem::Fixed => unreachable!(),
    };
    ScmSpec {
        name: "chain".into(),
        sem,
        graph,
        priors: synth_priors(sem),
        equations,
        pre_scale: vec![1.0; 3],
    }
}

// ── M-graph: x3 <- x1 -> x4 <- x2 -> x5 ───────────────────────────────

fn mgraph(sem: Sem) -> ScmSpec {
    let graph = CausalGraph::continuous(
        &["x1", "x2", "x3", "x4", "x5"],
        vec![(0, 2), (0, 3), (1, 3), (1, 4)],
    )
    .unwrap();
    let equations = match sem {
        Sem::Lin => eqs(&[
            root,
            root,
            |pa, u| pa.get(0) + u,
            |pa, u| -pa.get(1) + 0.5 * pa.get(0) + u,
            |pa, u| -1.5 * pa.get(1) + u,
        ]),
        Sem::Nlin => eqs(&[
            root,
            root,
            |pa, u| pa.get(0) + 0.5 * pa.get(0).powi(2) + u,
            |pa, u| -pa.get(1) + 0.5 * pa.get(0).powi(2) + u,
            |pa, u| -1.5 * pa.get(1).powi(2) + u,
        ]),
        Sem::Nadd => eqs(&[
            root,
            root,
            |pa, u| pa.get(0) * u,
            |pa, u| (-pa.get(1) + 0.5 * pa.get(0).powi(2)) * u,
            |pa, u| (-1.5 * pa.get(1).powi(2)) * u,
        ]),
        Sem::Fixed => unreachable!(),
    };
    ScmSpec {
        name: "mgraph".into(),
        sem,
        graph,
        priors: vec![ExogenousPrior::Normal { mean: 0.0, variance: 1.0 }; 5],
        equations,
        pre_scale: vec![1.0; 5],
    }
}

// ── Loan: gender, age -> education, amount, duration, income, savings ─

// Node order: g=0, a=1, e=2, l=3, d=4, i=5, s=6.
fn loan() -> ScmSpec {
    let nodes = vec![
        NodeSpec::binary("g"),
        NodeSpec::continuous("a"),
        NodeSpec::continuous("e"),
        NodeSpec::continuous("l"),
        NodeSpec::continuous("d"),
        NodeSpec::continuous("i"),
        NodeSpec::continuous("s"),
    ];
    let edges = vec![
        (0, 2),
        (0, 3),
        (0, 4),
        (0, 5),
        (1, 2),
        (1, 3),
        (1, 4),
        (1, 5),
        (2, 5),
        (3, 4),
        (5, 6),
    ];
    let graph = CausalGraph::new(nodes, edges).unwrap();
    let equations = eqs(&[
        root,
        // Age is modeled as deviation from the mean: Gamma(10, 3.5) has mean 35.
        |_pa, u| -35.0 + u,
        |pa, u| {
            let g = pa.get(0);
            let a = pa.get(1);
            -0.5 + 1.0 / (1.0 + (1.0 - 0.5 * g - 1.0 / (1.0 + (-0.1 * a).exp()) - u).exp())
        },
        |pa, u| {
            let g = pa.get(0);
            let a = pa.get(1);
            1.0 + 0.01 * (a - 5.0) * (5.0 - a) + g + u
        },
        |pa, u| {
            let g = pa.get(0);
            let a = pa.get(1);
            let l = pa.get(3);
            -1.0 + 0.1 * a + 2.0 * g + l + u
        },
        |pa, u| {
            let g = pa.get(0);
            let a = pa.get(1);
            let e = pa.get(2);
            -4.0 + 0.1 * (a + 35.0) + 2.0 * g + g * e + u
        },
        |pa, u| {
            let i = pa.get(5);
            -4.0 + 1.5 * ind(i > 0.0) * i + u
        },
    ]);
    ScmSpec {
        name: "loan".into(),
        sem: Sem::Fixed,
        graph,
        priors: vec![
            ExogenousPrior::Bernoulli { p: 0.5 },
            ExogenousPrior::Gamma { shape: 10.0, scale: 3.5 },
            ExogenousPrior::Normal { mean: 0.0, variance: 0.25 },
            ExogenousPrior::Normal { mean: 0.0, variance: 4.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 9.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 4.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 25.0 },
        ],
        equations,
        pre_scale: vec![1.0; 7],
    }
}

// ── Adult: 11 nodes, heterogeneous ────────────────────────────────────

// Node order: r=0, a=1, n=2, s=3, e=4, h=5, w=6, m=7, o=8, l=9, i=10.

fn trunc(x: f64) -> f64 {
    x.trunc()
}

/// Most frequent value; ties broken by the lowest value.
fn mode(values: &[f64]) -> f64 {
    let mut best = values[0];
    let mut best_count = 0usize;
    for &v in values {
        let count = values.iter().filter(|&&w| w == v).count();
        if count > best_count || (count == best_count && v < best) {
            best = v;
            best_count = count;
        }
    }
    best
}

fn adult() -> ScmSpec {
    let nodes = vec![
        NodeSpec::categorical("r", 3),
        NodeSpec::continuous("a"),
        NodeSpec::categorical("n", 4),
        NodeSpec::binary("s"),
        NodeSpec::continuous("e"),
        NodeSpec::continuous("h"),
        NodeSpec::categorical("w", 4),
        NodeSpec::categorical("m", 3),
        NodeSpec::categorical("o", 3),
        NodeSpec::categorical("l", 3),
        NodeSpec::continuous("i"),
    ];
    let edges = vec![
        // race
        (0, 4),
        (0, 5),
        (0, 7),
        (0, 8),
        (0, 10),
        // age
        (1, 4),
        (1, 5),
        (1, 6),
        (1, 7),
        (1, 8),
        (1, 9),
        (1, 10),
        // native country
        (2, 4),
        (2, 5),
        (2, 6),
        (2, 7),
        (2, 9),
        (2, 10),
        // sex
        (3, 4),
        (3, 5),
        (3, 7),
        (3, 8),
        (3, 9),
        (3, 10),
        // education
        (4, 5),
        (4, 6),
        (4, 8),
        (4, 9),
        (4, 10),
        // hours per week
        (5, 6),
        (5, 7),
        (5, 10),
        // work status
        (6, 7),
        (6, 8),
        (6, 10),
        // marital status
        (7, 8),
        (7, 9),
        (7, 10),
        // occupation, relationship
        (8, 10),
        (9, 10),
    ];
    let graph = CausalGraph::new(nodes, edges).unwrap();
    let equations = eqs(&[
        root, // r
        |_pa, u| u + 17.0, // a
        root, // n
        root, // s
        // e: education
        |pa, u| {
            let r = pa.get(0);
            let a = pa.get(1);
            let n = pa.get(2);
            let s = pa.get(3);
            (2.0 * ind(r == 0.0) + ind(r == 1.0) + sigmoid(a - 30.0)).exp()
                + (0.5 * ind(s == 0.0) + ind(s == 1.0))
                    * (2.0 * ind(n == 1.0) + 5.0 * ind(n == 2.0) + ind(n == 3.0))
                + u
        },
        // h: hours per week
        |pa, u| {
            let r = pa.get(0);
            let a = pa.get(1);
            let n = pa.get(2);
            let s = pa.get(3);
            let e = pa.get(4);
            ((40.0 * ind(n == 0.0)
                + 36.0 * ind(n == 1.0)
                + 50.0 * ind(n == 2.0)
                + 30.0 * ind(n == 3.0))
                * (0.5 * ind(r == 0.0) + ind(r == 1.0) + 1.3 * ind(r == 2.0))
                + 2.0 * (-(a - 30.0).powi(2)).exp()
                + 5.0 * (e - 2.0).tanh().abs()
                + 2.0 * ind(s == 0.0)
                + u)
                * ind(a < 70.0)
        },
        // w: work status
        |pa, u| {
            let a = pa.get(1);
            let n = pa.get(2);
            let e = pa.get(4);
            let h = pa.get(5);
            let w1 = ind(5.0 * (e - 2.0).tanh().abs() + sigmoid(h - 30.0 + u) > 0.3)
                + ind(sigmoid(h - 30.0 + u) > 0.3) * ind(a + 1.5 * u > 50.0)
                - ind(n == 0.0)
                + ind(n == 2.0)
                + 3.0 * ind(n == 3.0);
            let w2 = w1 * ind(w1 <= 3.0) + 3.0 * ind(w1 > 3.0);
            w2 * ind(w2 >= 0.0)
        },
        // m: marital status
        |pa, u| {
            let r = pa.get(0);
            let a = pa.get(1);
            let s = pa.get(3);
            let h = pa.get(5);
            let w = pa.get(6);
            let r1 = trunc(r + 0.2 * u) * ind((0.0..=2.0).contains(&r)) + 2.0 * ind(r > 2.0);
            let r2 = 2.0 * ind(r1 == 1.0) + ind(r1 == 2.0);
            let g1 = trunc(s + 0.5 * u);
            let g2 = ind(g1 > 1.0) + g1 * ind((0.0..=1.0).contains(&g1));
            let g3 = ind(g2 == 0.0) + 2.0 * ind(g2 == 1.0);
            let a1 = a + 2.0 * u;
            let a2 = 2.0 * ind(a1 > 20.0 && a1 <= 40.0)
                + ind(a1 > 40.0 && a1 <= 50.0)
                + 2.0 * ind(a1 >= 50.0);
            let h1 = 3.0 * trunc(sigmoid(h - 30.0));
            let h2 = h1 * ind(h1 <= 2.0) + 2.0 * ind(h1 > 2.0);
            mode(&[r2, a2, w, h2, h, g3])
        },
        // o: occupation sector
        |pa, u| {
            let r = pa.get(0);
            let a = pa.get(1);
            let s = pa.get(3);
            let e = pa.get(4);
            let w = pa.get(6);
            let m = pa.get(7);
            let ka = 2.0 * (-(a + u - 20.0).powi(2)).exp();
            let ke = -sigmoid(e * u - 30.0);
            let k = r + ka + ke + w + 3.0 * m + 4.0 * s;
            ind(1.0 <= k && k <= 4.0) + 2.0 * ind(k > 4.0)
        },
        // l: relationship status
        |pa, u| {
            let a = pa.get(1);
            let n = pa.get(2);
            let s = pa.get(3);
            let e = pa.get(4);
            let m = pa.get(7);
            let cn = u * ind(n == 0.0) - u * ind(n == 1.0)
                + 2.0 * u * ind(n == 2.0)
                + 2.0 * ind(n == 3.0);
            let ce = sigmoid(e - 30.0);
            let c = cn + ce + 2.0 * ind(a < 20.0) - 2.0 * ind(s == 0.0);
            let married = m == 1.0;
            ind(married && c >= -1.0)
                + 2.0 * ind(!married && c >= -1.0)
                + ind(!married && c < -1.0)
        },
        // i: income
        |pa, u| {
            let r = pa.get(0);
            let a = pa.get(1);
            let n = pa.get(2);
            let s = pa.get(3);
            let e = pa.get(4);
            let h = pa.get(5);
            let w = pa.get(6);
            let m = pa.get(7);
            let o = pa.get(8);
            let l = pa.get(9);
            let _ = l; // relationship enters only through the graph here
            u + 10_000.0 * ind(r > 1.5)
                + 20_000.0 * ind(r < 1.5)
                + 3_000.0 * ind(21.0 <= a && a < 30.0)
                + 8_000.0 * ind(a >= 30.0)
                + 5_000.0 * ind(e < 2.0)
                + 10_000.0 * ind(2.0 <= e && e < 10.0)
                + 30_000.0 * ind(e >= 10.0)
                + 5_000.0 * ind(o == 1.0)
                + 15_000.0 * ind(o == 2.0)
                + 5_000.0 * ind(w == 0.0)
                + 7_000.0 * ind(w == 1.0)
                + 1_000.0 * ind(m == 0.0)
                + 4_000.0 * ind(m == 1.0)
                - 2_000.0 * ind(m == 2.0)
                + 15_000.0 * ind(h > 45.0)
                + 10_000.0 * ind(n >= 2.0)
                + 4_000.0 * ind(s == 1.0)
                + 3_000.0 * ind(r <= 1.0)
        },
    ]);
    let mut pre_scale = vec![1.0; 11];
    // Income is in raw currency units; bring it into the range of the other
    // columns before standardization. The inverse transform restores units.
    pre_scale[10] = 1e-4;
    ScmSpec {
        name: "adult".into(),
        sem: Sem::Fixed,
        graph,
        priors: vec![
            ExogenousPrior::Categorical { weights: vec![1.0 / 3.0; 3] },
            ExogenousPrior::Gamma { shape: 5.0, scale: 4.0 },
            ExogenousPrior::Categorical { weights: vec![0.25; 4] },
            ExogenousPrior::Bernoulli { p: 0.5 },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 4.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 1.0 },
            ExogenousPrior::Normal { mean: 0.0, variance: 16_000_000.0 },
        ],
        equations,
        pre_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_prefers_most_frequent_then_lowest() {
        assert_eq!(mode(&[1.0, 2.0, 2.0, 0.0, 47.3, 1.0]), 1.0); // tie 1 vs 2 -> lowest
        assert_eq!(mode(&[2.0, 2.0, 0.0, 1.0]), 2.0);
        assert_eq!(mode(&[0.0, 1.0, 2.0, 3.0]), 0.0); // all singletons -> lowest
    }

    #[test]
    fn trunc_is_toward_zero() {
        assert_eq!(trunc(1.9), 1.0);
        assert_eq!(trunc(-1.9), -1.0);
    }

    #[test]
    fn all_builtins_validate() {
        for name in ["collider", "triangle", "chain", "mgraph"] {
            for sem in [Sem::Lin, Sem::Nlin, Sem::Nadd] {
                builtin_scm(name, sem).unwrap();
            }
        }
        builtin_scm("loan", Sem::Fixed).unwrap();
        builtin_scm("adult", Sem::Fixed).unwrap();
    }
}
