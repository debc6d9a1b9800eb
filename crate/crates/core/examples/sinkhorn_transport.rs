//! Entropic optimal transport with barycentric projection.
//!
//! Run with `cargo run --example sinkhorn_transport`.

use mklvc::assignment;
use mklvc::baselines::{cost_matrix, sinkhorn_convert, sinkhorn_plan, Metric, SinkhornConfig};
use mklvc::stats::EmbeddingSequence;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sequence(frames: usize, dim: usize, shift: f64, seed: u64) -> EmbeddingSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..frames * dim)
        .map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    EmbeddingSequence::new(data, frames, dim).unwrap()
}

fn main() -> mklvc::Result<()> {
    let source = sequence(48, 16, 0.0, 1);
    let reference = sequence(48, 16, 0.5, 2);
    let cost = cost_matrix(&source, &reference, Metric::Cosine);
    let exact = assignment::solve(&cost).cost / 48.0;

    for epsilon in [1e-1, 1e-2, 1e-3] {
        let cfg = SinkhornConfig {
            epsilon,
            max_iters: 20_000,
            ..SinkhornConfig::default()
        };
        let plan = sinkhorn_plan(&cost, &cfg)?;
        println!(
            "eps={epsilon:<6} iterations {:>5}  violation {:.1e}  cost {:.5} (exact {exact:.5})",
            plan.iterations,
            plan.marginal_violation,
            plan.cost(&cost)
        );
    }

    let (converted, plan) = sinkhorn_convert(&source, &reference, &SinkhornConfig::default())?;
    if let Some(w) = plan.warning() {
        eprintln!("warning: {w}");
    }
    println!("converted {} frames of dim {}", converted.frames(), converted.dim());
    Ok(())
}
