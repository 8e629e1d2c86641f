//! The differentiation substrate: record operations on a tape, run the
//! backward pass, check a gradient against central finite differences, and
//! take Adam steps on a toy least-squares problem.
//!
//! Run with `cargo run --example autodiff_basics`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vaca::diff::{randn, Init, Matrix, ParamSet, Tape, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use vaca::fdcheck::fd_gradient;

fn main() -> vaca::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // d/dw mean((x.w)^2) at a random point, tape vs finite differences.
    let mut params = ParamSet::new();
    let w = params.alloc("w", 3, 1, Init::Glorot, &mut rng);
    let x = randn(&mut rng, 8, 3);

    let mut tape = Tape::new();
    let xt = tape.input(x.clone())?;
    let wt = tape.param(&params, w)?;
    let y = tape.matmul(xt, wt)?;
    let sq = tape.mul(y, y)?;
    let loss = tape.mean_all(sq)?;
    tape.backward(loss, &mut params)?;

    let analytic: Vec<f64> = params.grad(w).iter().copied().collect();
    let fd = fd_gradient(
        |v| {
            let wm = Matrix::from_shape_vec((3, 1), v.to_vec()).unwrap();
            let y = x.dot(&wm);
            y.iter().map(|t| t * t).sum::<f64>() / y.len() as f64
        },
        &params.value(w).iter().copied().collect::<Vec<_>>(),
        1e-5,
    );
    println!("gradient check (analytic vs central differences):");
    for (a, f) in analytic.iter().zip(&fd) {
        println!("  {a:+.8}  {f:+.8}");
    }

    // Adam on least squares: w should approach the generating coefficients.
    let true_w = Matrix::from_shape_vec((3, 1), vec![1.5, -2.0, 0.5]).unwrap();
    let xs = randn(&mut rng, 256, 3);
    let ys = xs.dot(&true_w);
    let mut params = ParamSet::new();
    let w = params.alloc("w", 3, 1, Init::Zero, &mut rng);
    for step in 0..400 {
        let mut tape = Tape::new();
        let xt = tape.input(xs.clone())?;
        let yt = tape.input(ys.clone())?;
        let wt = tape.param(&params, w)?;
        let pred = tape.matmul(xt, wt)?;
        let err = tape.sub(pred, yt)?;
        let sq = tape.mul(err, err)?;
        let loss = tape.mean_all(sq)?;
        if step % 100 == 0 {
            println!("step {step:>3}: loss {:.6}", tape.scalar(loss));
        }
        params.zero_grads();
        tape.backward(loss, &mut params)?;
        params.adam_step(0.05, ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
    }
    println!(
        "fitted w = [{:+.4}, {:+.4}, {:+.4}]  (target [1.5, -2.0, 0.5])",
        params.value(w)[[0, 0]],
        params.value(w)[[1, 0]],
        params.value(w)[[2, 0]]
    );
    Ok(())
}
