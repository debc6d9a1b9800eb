//! Per-dimension std spectrum and the sort profile built from it.
//!
//! Run with `cargo run --example std_spectrum`.

use mklvc::diagnostics::{std_spectrum, variance_share};
use mklvc::stats::{profile_of, EmbeddingSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> mklvc::Result<()> {
    // 256 dims whose scale decays like a power law, in shuffled order.
    let (frames, dim) = (1500, 256);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scale: Vec<f64> = (0..dim).map(|j| 1.0 / (1.0 + ((j * 37) % dim) as f64).powf(0.8)).collect();
    let data = (0..frames * dim)
        .map(|i| scale[i % dim] * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let x = EmbeddingSequence::new(data, frames, dim)?;

    let profile = profile_of(&x, "synthetic")?;
    println!("highest-std dimensions: {:?}", profile.top(8));

    let spectrum = std_spectrum(&x)?;
    for rank in [1, 2, 4, 16, 64, 256] {
        println!("rank {rank:>3}: std {:.4}", spectrum[rank - 1]);
    }
    println!("top-100 variance share: {:.3}", variance_share(&spectrum, 100));
    Ok(())
}
