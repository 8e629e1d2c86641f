//! A miniature hyperparameter sweep through the library API: decoder depth
//! on the triangle graph, two seeds, aggregated mean and standard
//! deviation per configuration.
//!
//! The CLI equivalent is
//! `vaca sweep --config configs/triangle-depth-sweep.toml --out runs/sweep`.
//!
//! Run with `cargo run --example config_sweep`.

use vaca::cli::run_sweep;
use vaca::config::ExperimentConfig;

const CONFIG: &str = r#"
[experiment]
name = "triangle-depth-mini"

[data]
scm = "triangle"
sem = "NLIN"
n_train = 800
n_valid = 300
n_test = 300

[vaca]
parents_dropout = 0.1
allow_shallow_decoder = true
max_epochs = 25
patience = 8
iwae_k = 10
batch_size = 400

[metrics]
n_samples = 500
max_cf_rows = 200

[sweep]
seeds = [0, 1]
jobs = 1

[sweep.grid]
"vaca.decoder_hidden_layers" = [0, 1]
"#;

fn main() -> vaca::Result<()> {
    let cfg = ExperimentConfig::from_str(CONFIG)?;
    let out = std::env::temp_dir().join("vaca-sweep-example");
    let rows = run_sweep(&cfg, &out, 1)?;
    println!("\n{} configurations swept; aggregate CSV at {}", rows.len(), out.join("sweep.csv").display());
    Ok(())
}
