//! Block-factorized MKL conversion between two synthetic speakers.
//!
//! Both speakers share the same "phone" clusters; the target applies a
//! different per-dimension gain and offset plus a mild rotation. The
//! distance to the target statistics is reported for several block sizes.
//!
//! Run with `cargo run --example factorized_mkl`.

use mklvc::stats::{fit_sequence, profile_of, EmbeddingSequence};
use mklvc::transport::{factorize_apply, factorize_fit, gaussian_w2, Ridge};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const DIM: usize = 32;

fn speaker(frames: usize, gain: f64, offset: f64, twist: f64, rng: &mut ChaCha8Rng) -> EmbeddingSequence {
    let centres: Vec<f64> = {
        let mut fixed = ChaCha8Rng::seed_from_u64(99);
        (0..12 * DIM).map(|_| StandardNormal.sample(&mut fixed)).collect()
    };
    let mut data = Vec::with_capacity(frames * DIM);
    for _ in 0..frames {
        let c = rng.random_range(0..12);
        let frame: Vec<f64> = (0..DIM)
            .map(|j| centres[c * DIM + j] + 0.3 * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect();
        for j in 0..DIM {
            let mixed = frame[j] + twist * frame[(j + 1) % DIM];
            data.push(gain * (1.0 + j as f64 / DIM as f64) * mixed + offset);
        }
    }
    EmbeddingSequence::new(data, frames, DIM).unwrap()
}

fn main() -> mklvc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let source = speaker(800, 1.0, 0.0, 0.0, &mut rng);
    let target = speaker(1200, 1.6, -0.5, 0.4, &mut rng);
    let target_stats = fit_sequence(&target)?;
    let profile = profile_of(&source, "source utterance")?;

    println!("before: W2 to target = {:.4}", gaussian_w2(&fit_sequence(&source)?, &target_stats)?);
    for k in [1, 2, 4, 8, 32] {
        let map = factorize_fit(&source, &target, k, &profile, Ridge::default())?;
        let converted = factorize_apply(&map, &source)?;
        let w2 = gaussian_w2(&fit_sequence(&converted)?, &target_stats)?;
        println!("K={k:>2}: {} blocks, W2 to target = {w2:.4}", map.num_blocks());
    }
    Ok(())
}
