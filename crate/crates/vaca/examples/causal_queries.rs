//! The three query types against a trained model, next to the exact
//! answers from the ground-truth oracle.
//!
//! Run with `cargo run --example causal_queries`.

use vaca::dataset::SplitSizes;
use vaca::model::{VacaConfig, VacaModel};
use vaca::queries::{
    counterfactual_vaca, sample_interventional_vaca, sample_observational_vaca, CfOptions,
    InterventionSpec,
};
use vaca::scm::{builtin_scm, Sem};

fn col_mean(m: &vaca::diff::Matrix, c: usize) -> f64 {
    m.column(c).sum() / m.nrows() as f64
}

fn main() -> vaca::Result<()> {
    let scm = builtin_scm("chain", Sem::Lin)?;
    let ds = scm
        .sample_splits(SplitSizes { train: 2000, valid: 500, test: 500 }, 3)
        .normalize()?;
    let config = VacaConfig {
        decoder_hidden_layers: 1,
        parents_dropout: 0.1,
        max_epochs: 60,
        patience: 15,
        iwae_k: 25,
        batch_size: 500,
        ..VacaConfig::default()
    };
    let mut model = VacaModel::new(scm.graph.clone(), config, 3)?;
    println!("training a small chain model...");
    model.train(&ds, 3)?;

    // Observational: means per column, model vs fresh oracle draws.
    let obs = sample_observational_vaca(&model, 1000, 1)?;
    let oracle_obs = ds.normalize_matrix(&scm.sample_observational(1000, 91).x);
    println!("\nobservational means (model | oracle), normalized units:");
    for c in 0..3 {
        println!("  x{}: {:+.3} | {:+.3}", c + 1, col_mean(&obs.samples, c), col_mean(&oracle_obs, c));
    }

    // Interventional: do(x1 = 1) in normalized units.
    let spec = InterventionSpec { node: 0, alpha: 1.0 };
    let int = sample_interventional_vaca(&model, spec, 1000, 2)?;
    let slices = ds.layout.node_slices();
    let alpha_raw = ds.normalization.as_ref().unwrap().columns[slices[0].start].invert(1.0);
    let oracle_int = ds.normalize_matrix(&scm.sample_interventional(0, alpha_raw, 1000, 92).x);
    println!("\nunder do(x1 = 1.0) (model | oracle):");
    for c in 0..3 {
        println!("  x{}: {:+.3} | {:+.3}", c + 1, col_mean(&int.samples, c), col_mean(&oracle_int, c));
    }

    // Counterfactual for the first test rows, model vs exact oracle.
    let test_start = ds.splits.train + ds.splits.valid;
    let x_f = ds.x.slice(ndarray::s![test_start..test_start + 3, ..]).to_owned();
    let cf = counterfactual_vaca(&model, &x_f, spec, CfOptions::default(), 0)?;
    println!("\ncounterfactuals under do(x1 = 1.0), first 3 test rows:");
    for r in 0..3 {
        let truth_raw = scm.counterfactual_oracle(&ds, test_start + r, 0, alpha_raw)?;
        let mut truth = vaca::diff::Matrix::zeros((1, 3));
        for c in 0..3 {
            truth[[0, c]] = truth_raw[c];
        }
        let truth = ds.normalize_matrix(&truth);
        println!(
            "  model ({:+.3}, {:+.3}, {:+.3})   oracle ({:+.3}, {:+.3}, {:+.3})",
            cf.samples[[r, 0]],
            cf.samples[[r, 1]],
            cf.samples[[r, 2]],
            truth[[0, 0]],
            truth[[0, 1]],
            truth[[0, 2]]
        );
    }
    Ok(())
}
