//! Writing embeddings, profiles and fitted maps to EMBF files and reading
//! them back.
//!
//! Run with `cargo run --example embf_files`.

use mklvc::io::{self, PayloadKind};
use mklvc::stats::{profile_of, EmbeddingSequence};
use mklvc::transport::{factorize_apply, factorize_fit, Ridge};

fn main() -> mklvc::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| mklvc::Error::InvalidParameter(e.to_string()))?;
    let frames = |n: usize, phase: f64| -> Vec<Vec<f64>> {
        (0..n)
            .map(|t| (0..4).map(|j| ((t * (j + 1)) as f64 * 0.31 + phase).sin() * (j + 1) as f64).collect())
            .collect()
    };
    let source = EmbeddingSequence::from_rows(&frames(60, 0.0))?;
    let target = EmbeddingSequence::from_rows(&frames(90, 1.3))?;

    let src_path = dir.path().join("source.embf");
    io::write_embeddings(&src_path, &source)?;
    let bytes = std::fs::read(&src_path).map_err(|e| mklvc::Error::InvalidParameter(e.to_string()))?;
    let raw = io::decode(&bytes)?;
    println!("{}: {:?} {}x{}, {} bytes", src_path.display(), raw.kind, raw.rows, raw.cols, bytes.len());
    assert_eq!(raw.kind, PayloadKind::Sequence);

    let profile = profile_of(&source, "source")?;
    let profile_path = dir.path().join("profile.embf");
    io::write_profile(&profile_path, &profile)?;
    let profile = io::read_profile(&profile_path)?;
    println!("profile permutation {:?} (tag {:?})", profile.permutation, profile.source_tag);

    let map = factorize_fit(&io::read_embeddings(&src_path)?, &target, 2, &profile, Ridge::default())?;
    let map_path = dir.path().join("map.embf");
    io::write_map(&map_path, &map)?;
    let loaded = io::read_map(&map_path)?;

    let direct = factorize_apply(&map, &source)?;
    let reloaded = factorize_apply(&loaded, &source)?;
    let gap = direct
        .as_slice()
        .iter()
        .zip(reloaded.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("map stored as f32: max output change after reload {gap:.2e}");
    Ok(())
}
