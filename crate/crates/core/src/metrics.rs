//! Objective evaluation: word/character error rates, speaker similarity and
//! the combined distance-to-ideal score.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Levenshtein distance with unit insert, delete and substitute costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut curr = vec![0; a.len() + 1];
    for (j, bj) in b.iter().enumerate() {
        curr[0] = j + 1;
        for (i, ai) in a.iter().enumerate() {
            let sub = prev[i] + usize::from(ai != bj);
            curr[i + 1] = sub.min(prev[i + 1] + 1).min(curr[i] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[a.len()]
}

/// Lowercases, drops punctuation and symbols, and collapses runs of
/// whitespace to single spaces.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else if c.is_alphanumeric() {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// An error rate with the counts it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRate {
    pub edits: usize,
    pub reference_len: usize,
    /// `edits / reference_len`; may exceed 1.
    pub raw: f64,
}

impl ErrorRate {
    fn new(edits: usize, reference_len: usize) -> Result<Self> {
        if reference_len == 0 {
            return Err(Error::EmptyReference);
        }
        Ok(ErrorRate {
            edits,
            reference_len,
            raw: edits as f64 / reference_len as f64,
        })
    }

    /// The rate capped at 1, as used in the total score.
    pub fn clamped(&self) -> f64 {
        self.raw.min(1.0)
    }
}

/// Word error rate of `hypothesis` against `reference`, after normalization.
pub fn wer(reference: &str, hypothesis: &str) -> Result<ErrorRate> {
    let r = normalize_text(reference);
    let h = normalize_text(hypothesis);
    let rw: Vec<&str> = r.split(' ').filter(|w| !w.is_empty()).collect();
    let hw: Vec<&str> = h.split(' ').filter(|w| !w.is_empty()).collect();
    ErrorRate::new(edit_distance(&rw, &hw), rw.len())
}

/// Character error rate (spaces count as characters), after normalization.
pub fn cer(reference: &str, hypothesis: &str) -> Result<ErrorRate> {
    let rc: Vec<char> = normalize_text(reference).chars().collect();
    let hc: Vec<char> = normalize_text(hypothesis).chars().collect();
    ErrorRate::new(edit_distance(&rc, &hc), rc.len())
}

/// Cosine similarity with its score-ready counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// In `[-1, 1]`.
    pub raw: f64,
}

impl Similarity {
    /// Negative similarities count as 0.
    pub fn clamped(&self) -> f64 {
        self.raw.max(0.0)
    }
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<Similarity> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(Similarity {
        raw: (dot / (nu * nv)).clamp(-1.0, 1.0),
    })
}

/// WER, CER and SIM with their Euclidean distance to the ideal point
/// `(0, 0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTriple {
    pub wer: f64,
    pub cer: f64,
    pub sim: f64,
    pub total: f64,
}

/// `sqrt(wer² + cer² + (1 - sim)²)`; every input must lie in `[0, 1]`.
pub fn total_score(wer: f64, cer: f64, sim: f64) -> Result<ScoreTriple> {
    for (name, value) in [("WER", wer), ("CER", cer), ("SIM", sim)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutOfRange { name, value });
        }
    }
    let miss = 1.0 - sim;
    Ok(ScoreTriple {
        wer,
        cer,
        sim,
        total: (wer * wer + cer * cer + miss * miss).sqrt(),
    })
}

/// Scores one converted utterance from its transcripts and speaker vectors.
pub fn score_pair(
    reference_text: &str,
    hypothesis_text: &str,
    converted_speaker: &[f64],
    reference_speaker: &[f64],
) -> Result<(ErrorRate, ErrorRate, Similarity, ScoreTriple)> {
    let w = wer(reference_text, hypothesis_text)?;
    let c = cer(reference_text, hypothesis_text)?;
    let s = cosine_sim(converted_speaker, reference_speaker)?;
    let triple = total_score(w.clamped(), c.clamped(), s.clamped())?;
    Ok((w, c, s, triple))
}

/// A per-pair score tagged with the method that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub method: String,
    pub pair_id: String,
    pub scores: ScoreTriple,
}

/// One leaderboard line: means over a method's pairs, scored as a triple.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderboardRow {
    pub method: String,
    pub pairs: usize,
    pub scores: ScoreTriple,
    /// Mean of the per-pair totals, kept alongside the total of the means.
    pub mean_pair_total: f64,
}

/// Averages WER, CER and SIM per method and scores the means. Sorted by
/// ascending total, then by method name.
pub fn aggregate(rows: &[ScoredPair]) -> Result<Vec<LeaderboardRow>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no scored pairs to aggregate"));
    }
    let mut groups: BTreeMap<&str, Vec<&ScoreTriple>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.method.as_str()).or_default().push(&r.scores);
    }
    let mut board = groups
        .into_iter()
        .map(|(method, triples)| {
            let n = triples.len() as f64;
            let mean = |f: fn(&ScoreTriple) -> f64| triples.iter().map(|t| f(t)).sum::<f64>() / n;
            let scores = total_score(mean(|t| t.wer), mean(|t| t.cer), mean(|t| t.sim))?;
            Ok(LeaderboardRow {
                method: method.to_string(),
                pairs: triples.len(),
                scores,
                mean_pair_total: mean(|t| t.total),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    board.sort_by(|a, b| {
        a.scores
            .total
            .total_cmp(&b.scores.total)
            .then_with(|| a.method.cmp(&b.method))
    });
    Ok(board)
}
