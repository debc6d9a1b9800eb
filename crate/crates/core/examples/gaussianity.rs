//! Per-block distance to the best-fitting Gaussian for several block sizes,
//! next to the value a truly Gaussian block reaches at the same sample size.
//!
//! Run with `cargo run --release --example gaussianity`.

use mklvc::diagnostics::{gaussian_self_distance, gaussianity_profile, ProfileOptions};
use mklvc::stats::{fit_gaussian, permute_dims, profile_of, EmbeddingSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Mixture of 16 Student-t clusters (3 degrees of freedom).
fn heavy_tailed(frames: usize, dim: usize, seed: u64) -> EmbeddingSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<f64> = (0..16 * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mixing = Gamma::new(1.5, 1.0 / 1.5).unwrap();
    let mut data = Vec::with_capacity(frames * dim);
    for _ in 0..frames {
        let c = rng.random_range(0..16);
        let w: f64 = mixing.sample(&mut rng);
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(centres[c * dim + j] + 0.5 * z / w.sqrt());
        }
    }
    EmbeddingSequence::new(data, frames, dim).unwrap()
}

fn main() -> mklvc::Result<()> {
    let x = heavy_tailed(2048, 64, 7);
    let profile = profile_of(&x, "heavy-tailed mixture")?;
    let opts = ProfileOptions::new(11);
    let sorted = permute_dims(&x, &profile.permutation, false)?;

    println!("K   mean W2/K   Gaussian floor (first block)");
    for k in [2, 4, 8, 16] {
        let g = gaussianity_profile(&x, k, &profile, &opts)?;
        let stats = fit_gaussian(&sorted.column_block(0, k))?;
        let floor = gaussian_self_distance(&stats, 2048, opts.mc_samples, opts.subsample, opts.seed)?;
        println!("{k:<3} {:<11.4} {floor:.4}", g.mean());
    }
    Ok(())
}
