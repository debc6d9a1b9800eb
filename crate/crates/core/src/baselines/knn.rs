use rayon::prelude::*;

use super::Metric;
use crate::error::{Error, Result};
use crate::stats::{EmbeddingSequence, SortProfile};

/// Settings for kNN regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    /// Number of reference frames averaged per output frame.
    pub k: usize,
    /// Number of highest-std dimensions used for distances; `None` uses all.
    pub n_trim: Option<usize>,
    pub metric: Metric,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 4,
            n_trim: None,
            metric: Metric::Cosine,
        }
    }
}

impl KnnConfig {
    fn validate(&self, dim: usize, ref_frames: usize) -> Result<usize> {
        if self.k == 0 || self.k > ref_frames {
            return Err(Error::InvalidParameter(format!(
                "k = {} must be in [1, {ref_frames}] (reference frame count)",
                self.k
            )));
        }
        let n_trim = self.n_trim.unwrap_or(dim);
        if n_trim == 0 || n_trim > dim {
            return Err(Error::InvalidParameter(format!(
                "n_trim = {n_trim} must be in [1, {dim}]"
            )));
        }
        Ok(n_trim)
    }
}

/// Replaces every source frame by the mean of its `k` nearest reference
/// frames.
///
/// Distances only look at the `n_trim` leading dimensions of `profile`;
/// the averaged frames keep all dimensions. Ties in distance go to the
/// lower reference index.
pub fn knn_convert(
    src: &EmbeddingSequence,
    reference: &EmbeddingSequence,
    cfg: &KnnConfig,
    profile: &SortProfile,
) -> Result<EmbeddingSequence> {
    let dim = src.dim();
    for d in [reference.dim(), profile.dim()] {
        if d != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: d });
        }
    }
    let n_trim = cfg.validate(dim, reference.frames())?;
    let trimmed = (n_trim < dim).then(|| {
        let mut dims = profile.top(n_trim).to_vec();
        dims.sort_unstable();
        dims
    });

    let k = cfg.k;
    let out: Vec<Vec<f64>> = (0..src.frames())
        .into_par_iter()
        .map(|t| {
            let query = src.frame(t);
            let mut dists: Vec<(f64, usize)> = reference
                .rows()
                .enumerate()
                .map(|(j, r)| {
                    let d = match &trimmed {
                        Some(dims) => cfg.metric.distance_on(query, r, dims),
                        None => cfg.metric.distance(query, r),
                    };
                    (d, j)
                })
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut acc = vec![0.0; dim];
            for &(_, j) in &dists[..k] {
                acc.iter_mut().zip(reference.frame(j)).for_each(|(a, v)| *a += v);
            }
            if k > 1 {
                acc.iter_mut().for_each(|a| *a /= k as f64);
            }
            acc
        })
        .collect();

    let data = out.into_iter().flatten().collect();
    Ok(EmbeddingSequence::new(data, src.frames(), dim)?.with_frame_rate(src.frame_rate_hz()))
}
