//! Scoring converted utterances and ranking methods.
//!
//! Run with `cargo run --example leaderboard`.

use mklvc::metrics::{aggregate, score_pair, ScoredPair};

fn main() -> mklvc::Result<()> {
    // (method, pair, reference transcript, ASR hypothesis, speaker vectors)
    let pairs = [
        ("mkl", "p1", "the cat sat on the mat", "the cat sat on the mat", [0.9, 0.1, 0.4], [1.0, 0.1, 0.35]),
        ("mkl", "p2", "a quick brown fox", "a quick brown box", [0.2, 0.8, 0.5], [0.25, 0.75, 0.5]),
        ("knn", "p1", "the cat sat on the mat", "the cat sat the mat", [1.0, 0.1, 0.36], [1.0, 0.1, 0.35]),
        ("knn", "p2", "a quick brown fox", "quick round fax", [0.24, 0.76, 0.5], [0.25, 0.75, 0.5]),
    ];
    let mut scored = Vec::new();
    for (method, pair, reference, hypothesis, u, v) in pairs {
        let (wer, cer, sim, scores) = score_pair(reference, hypothesis, &u, &v)?;
        println!(
            "{method} {pair}: WER {:.3} CER {:.3} SIM {:.3} -> {:.4}",
            wer.raw, cer.raw, sim.raw, scores.total
        );
        scored.push(ScoredPair {
            method: method.into(),
            pair_id: pair.into(),
            scores,
        });
    }
    println!();
    for row in aggregate(&scored)? {
        println!("{:<4} total {:.4} over {} pairs", row.method, row.scores.total, row.pairs);
    }
    Ok(())
}
