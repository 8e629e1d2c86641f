//! Train a model end to end on collider data: sample from the ground
//! truth, normalize, fit with early stopping, checkpoint, reload.
//!
//! Sizes are reduced so the example finishes in about a minute; see
//! `configs/collider-lin.toml` for a full-scale run via the CLI.
//!
//! Run with `cargo run --example train_vaca`.

use vaca::dataset::SplitSizes;
use vaca::model::{VacaConfig, VacaModel};
use vaca::scm::{builtin_scm, Sem};

fn main() -> vaca::Result<()> {
    let scm = builtin_scm("collider", Sem::Lin)?;
    let ds = scm
        .sample_splits(SplitSizes { train: 2000, valid: 500, test: 500 }, 7)
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
    let mut model = VacaModel::new(scm.graph.clone(), config, 7)?;
    println!("training on {} rows ({} parameters)...", ds.splits.train, model.params.value_count());
    let report = model.train(&ds, 7)?;
    println!(
        "stopped after {} epochs ({:?}); best validation bound {:.4} at epoch {}",
        report.val_iwae.len(),
        report.stop_reason,
        report.best_val(),
        report.best_epoch
    );
    for (e, (tr, va)) in report.train_elbo.iter().zip(&report.val_iwae).enumerate().step_by(10) {
        println!("  epoch {e:>3}: train bound {tr:>8.4}   valid bound {va:>8.4}");
    }

    // Checkpoints round-trip bit-exactly.
    let dir = std::env::temp_dir().join("vaca-train-example");
    std::fs::create_dir_all(&dir)?;
    let ckpt = dir.join("model.ckpt");
    model.save(&ckpt)?;
    let reloaded = VacaModel::load(&ckpt, scm.graph.clone())?;
    let adj = model.base_adjacency().clone();
    let x = ds.test_x();
    let (mu_a, _) = model.encode_plain(&x, &adj)?;
    let (mu_b, _) = reloaded.encode_plain(&x, &adj)?;
    let identical = mu_a
        .iter()
        .zip(&mu_b)
        .all(|(a, b)| a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    println!("checkpoint reload reproduces encodings bitwise: {identical}");
    Ok(())
}
