//! How stack depth and adjacency surgery control information flow in the
//! message-passing layers: a stack with `N_h` hidden layers reaches
//! neighbors up to `N_h + 1` hops away, and severing a node's incoming
//! edges cuts exactly the paths that ran through it.
//!
//! Run with `cargo run --example message_passing`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vaca::diff::{randn, Matrix, ParamSet};
use vaca::fdcheck::fd_block_sensitivity;
use vaca::gnn::{Activation, GnnLayer, GnnStack, LayerMode};
use vaca::scm::{builtin_scm, Sem};

fn print_blocks(label: &str, blocks: &[Vec<f64>]) {
    println!("{label}");
    for row in blocks {
        let cells: Vec<&str> = row.iter().map(|v| if *v > 1e-8 { "X" } else { "." }).collect();
        println!("  {}", cells.join(" "));
    }
}

fn main() -> vaca::Result<()> {
    let graph = builtin_scm("chain", Sem::Lin)?.graph;
    let adj = graph.vaca_adjacency(&[])?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamSet::new();
    let layer = |params: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str| {
        GnnLayer::new(
            params,
            rng,
            name,
            &adj,
            LayerMode::Disjoint,
            3,
            &[8],
            8,
            3,
            Activation::Tanh,
            None,
            false,
        )
    };
    let one = GnnStack::new(vec![layer(&mut params, &mut rng, "a")])?;
    let two = GnnStack::new(vec![
        layer(&mut params, &mut rng, "b0"),
        layer(&mut params, &mut rng, "b1"),
    ])?;

    let h0: Vec<Matrix> = (0..3).map(|_| randn(&mut rng, 1, 3)).collect();
    let none = vec![false; 3];

    // Sensitivity of output row i to input row j ("X" = reachable).
    // Chain x1 -> x2 -> x3: one layer reaches parents, two reach
    // grandparents.
    let blocks =
        fd_block_sensitivity(|h| one.forward_plain(&params, h, &adj, &none).unwrap(), &h0, 1e-4);
    print_blocks("N_h = 0 (rows = receivers, cols = sources):", &blocks);
    let blocks =
        fd_block_sensitivity(|h| two.forward_plain(&params, h, &adj, &none).unwrap(), &h0, 1e-4);
    print_blocks("N_h = 1:", &blocks);

    // Severing x2's incoming edges removes the x1 -> x3 route entirely.
    let severed = graph.vaca_adjacency(&[1])?;
    let blocks = fd_block_sensitivity(
        |h| two.forward_plain(&params, h, &severed, &none).unwrap(),
        &h0,
        1e-4,
    );
    print_blocks("N_h = 1 under do(x2):", &blocks);
    Ok(())
}
