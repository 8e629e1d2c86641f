//! The metric suite: the kernel two-sample distance on hand-made sets,
//! then the full intervention-grid evaluation of a small trained model.
//!
//! Run with `cargo run --example evaluate_metrics`.

use vaca::dataset::SplitSizes;
use vaca::diff::Matrix;
use vaca::metrics::{evaluate_model, mmd2, KernelSpec, SuiteConfig};
use vaca::model::{VacaConfig, VacaModel};
use vaca::scm::{builtin_scm, Sem};

fn main() -> vaca::Result<()> {
    // Identical sets cancel exactly; separated sets do not.
    let xs = Matrix::from_shape_vec((2, 1), vec![0.0, 0.0]).unwrap();
    let ys = Matrix::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap();
    let k1 = KernelSpec { bandwidths: vec![1.0] };
    println!("mmd^2 identical sets: {}", mmd2(&xs, &xs.clone(), &k1, true)?);
    println!("mmd^2 {{0,0}} vs {{1,1}}: {:.6} (= 4 - 4/e)", mmd2(&xs, &ys, &k1, true)?);

    // Train a small model and score it on the intervention grid.
    let scm = builtin_scm("collider", Sem::Lin)?;
    let ds = scm
        .sample_splits(SplitSizes { train: 2000, valid: 500, test: 500 }, 5)
        .normalize()?;
    let config = VacaConfig {
        decoder_hidden_layers: 1,
        parents_dropout: 0.2,
        max_epochs: 60,
        patience: 15,
        iwae_k: 25,
        batch_size: 500,
        ..VacaConfig::default()
    };
    let mut model = VacaModel::new(scm.graph.clone(), config, 5)?;
    println!("\ntraining...");
    model.train(&ds, 5)?;

    let suite = SuiteConfig { n_samples: 1000, max_cf_rows: 500, seed: 5, ..SuiteConfig::default() };
    let report = evaluate_model(&model, &scm, &ds, &suite)?;
    println!("scalar metrics (x100, the reporting convention):");
    println!("  obs mmd^2 {:.2}", 100.0 * report.mmd_obs);
    println!("  int mmd^2 {:.2}", 100.0 * report.mmd_int);
    println!("  mean_e    {:.2}", 100.0 * report.mean_e);
    println!("  std_e     {:.2}", 100.0 * report.std_e);
    println!("  cf mse    {:.2}", 100.0 * report.mse_cf);
    println!("  cf sdse   {:.2}", 100.0 * report.sdse_cf);
    println!("\nper intervention cell:");
    for c in &report.cells {
        println!(
            "  do({} = {:+.2}): mmd^2 {:.4}  mean_e {:.4}  mse {:.4}",
            c.node_name, c.alpha_norm, c.mmd, c.mean_e, c.mse
        );
    }
    Ok(())
}
