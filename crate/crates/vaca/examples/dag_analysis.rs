//! Structural quantities of causal DAGs: diameter, longest path, ancestor
//! and descendant sets, and the adjacency surgery that interventions
//! perform.
//!
//! Run with `cargo run --example dag_analysis`.

use vaca::scm::{builtin_scm, Sem};

fn main() -> vaca::Result<()> {
    for (name, sem) in [
        ("collider", Sem::Lin),
        ("triangle", Sem::Lin),
        ("chain", Sem::Lin),
        ("mgraph", Sem::Lin),
        ("loan", Sem::Fixed),
        ("adult", Sem::Fixed),
    ] {
        let g = builtin_scm(name, sem)?.graph;
        println!(
            "{name:<9} d={:<2} diameter={}  longest_path={}",
            g.node_count(),
            g.diameter(),
            g.longest_path()
        );
    }

    // Ancestors and descendants drive which latents may influence which
    // outputs; the loan graph is small enough to print in full.
    let loan = builtin_scm("loan", Sem::Fixed)?.graph;
    println!("\nloan ancestor sets:");
    for i in 0..loan.node_count() {
        let an: Vec<&str> = loan
            .ancestors(i)?
            .into_iter()
            .map(|j| loan.nodes()[j].name.as_str())
            .collect();
        println!("  an({}) = {{{}}}", loan.nodes()[i].name, an.join(", "));
    }

    // Intervening removes a node's incoming edges and keeps its self-loop.
    let triangle = builtin_scm("triangle", Sem::Lin)?.graph;
    let plain = triangle.vaca_adjacency(&[])?;
    let severed = triangle.vaca_adjacency(&[1])?;
    println!("\ntriangle adjacency (row = receiver), then with do(x2):");
    for adj in [&plain, &severed] {
        for i in 0..3 {
            let row: Vec<&str> =
                (0..3).map(|j| if adj.get(i, j) { "1" } else { "." }).collect();
            println!("  {}", row.join(" "));
        }
        println!();
    }
    Ok(())
}
