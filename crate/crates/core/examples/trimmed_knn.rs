//! kNN regression with distances restricted to the highest-std dimensions.
//!
//! Run with `cargo run --example trimmed_knn`.

use mklvc::baselines::{knn_convert, KnnConfig, Metric};
use mklvc::stats::{profile_of, EmbeddingSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn sequence(frames: usize, dim: usize, seed: u64) -> EmbeddingSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..frames * dim)
        .map(|i| (1.0 + (i % dim) as f64).recip() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    EmbeddingSequence::new(data, frames, dim).unwrap()
}

fn main() -> mklvc::Result<()> {
    let source = sequence(200, 64, 1);
    let reference = sequence(600, 64, 2);
    let profile = profile_of(&reference, "reference")?;

    let full = knn_convert(&source, &reference, &KnnConfig::default(), &profile)?;
    for n_trim in [64, 16, 4] {
        let cfg = KnnConfig {
            k: 4,
            n_trim: Some(n_trim),
            metric: Metric::Cosine,
        };
        let trimmed = knn_convert(&source, &reference, &cfg, &profile)?;
        let changed = (0..source.frames()).filter(|&t| trimmed.frame(t) != full.frame(t)).count();
        println!("n_trim={n_trim:>2}: {changed}/{} frames differ from the untrimmed result", source.frames());
    }
    Ok(())
}
