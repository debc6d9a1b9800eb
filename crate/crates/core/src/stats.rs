//! Embedding sequences, per-block Gaussian fits and the descending-variance
//! dimension ordering.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

pub const DEFAULT_FRAME_RATE_HZ: f64 = 50.0;

/// A `T x D` sequence of frame embeddings, stored row-major in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    data: Vec<f64>,
    frames: usize,
    dim: usize,
    frame_rate_hz: f64,
}

impl EmbeddingSequence {
    /// Builds a sequence from row-major data. Rejects empty shapes and
    /// non-finite entries.
    pub fn new(data: Vec<f64>, frames: usize, dim: usize) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::EmptyInput("embedding sequence needs T >= 1 and D >= 1"));
        }
        if data.len() != frames * dim {
            return Err(Error::DimensionMismatch {
                expected: frames * dim,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                frame: pos / dim,
                dim: pos % dim,
            });
        }
        Ok(EmbeddingSequence {
            data,
            frames,
            dim,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len(), dim)
    }

    pub fn with_frame_rate(mut self, hz: f64) -> Self {
        self.frame_rate_hz = hz;
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.frame_rate_hz
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copies the selected columns into a `T x cols.len()` matrix.
    pub fn select_columns(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.frames, cols.len(), |t, j| self.data[t * self.dim + cols[j]])
    }

    /// Copies the contiguous column range `[start, start + width)`.
    pub fn column_block(&self, start: usize, width: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.frames, width, |t, j| self.data[t * self.dim + start + j])
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Stacks sequences along the time axis.
    pub fn concat(seqs: &[EmbeddingSequence]) -> Result<Self> {
        let first = seqs.first().ok_or(Error::EmptyInput("no sequences to concatenate"))?;
        let mut data = Vec::new();
        let mut frames = 0;
        for s in seqs {
            if s.dim != first.dim {
                return Err(Error::DimensionMismatch {
                    expected: first.dim,
                    actual: s.dim,
                });
            }
            data.extend_from_slice(&s.data);
            frames += s.frames;
        }
        Ok(EmbeddingSequence {
            data,
            frames,
            dim: first.dim,
            frame_rate_hz: first.frame_rate_hz,
        })
    }
}

/// Mean and maximum-likelihood covariance of a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: SymMatrix,
    pub sample_count: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Fits a Gaussian to the rows of `samples` (one sample per row).
///
/// The covariance divides by `T`, not `T - 1`.
pub fn fit_gaussian(samples: &DMatrix<f64>) -> Result<GaussianStats> {
    let t = samples.nrows();
    if t < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: t,
        });
    }
    let k = samples.ncols();
    let n = t as f64;
    let mean = DVector::from_iterator(k, (0..k).map(|j| samples.column(j).sum() / n));
    let mut centered = samples.clone();
    for j in 0..k {
        let m = mean[j];
        centered.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let cov = centered.transpose() * &centered / n;
    Ok(GaussianStats {
        mean,
        cov: SymMatrix::new(cov),
        sample_count: t,
    })
}

/// Fits a Gaussian over all dimensions of a sequence.
pub fn fit_sequence(x: &EmbeddingSequence) -> Result<GaussianStats> {
    fit_gaussian(&x.column_block(0, x.dim()))
}

/// Population standard deviation of each dimension across time.
pub fn per_dim_std(x: &EmbeddingSequence) -> Result<Vec<f64>> {
    let t = x.frames();
    if t < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            actual: t,
        });
    }
    let n = t as f64;
    let d = x.dim();
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in x.rows() {
        for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let c = v - m;
            *acc += c * c;
        }
    }
    Ok(var.into_iter().map(|v| (v / n).sqrt()).collect())
}

/// Per-dimension spread and the dimension order sorted by it.
#[derive(Debug, Clone, PartialEq)]
pub struct SortProfile {
    pub std: Vec<f64>,
    /// `permutation[i]` is the original index of the i-th largest-std dimension.
    pub permutation: Vec<usize>,
    /// Names the corpus, utterance or file the statistics came from.
    pub source_tag: String,
}

impl SortProfile {
    pub fn dim(&self) -> usize {
        self.std.len()
    }

    /// Checks that `permutation` is a bijection in descending-std order.
    pub fn validate(&self) -> Result<()> {
        validate_permutation(&self.permutation, self.std.len())?;
        let ordered = self
            .permutation
            .windows(2)
            .all(|w| self.std[w[0]] >= self.std[w[1]]);
        if !ordered {
            return Err(Error::InvalidPermutation(
                "profile permutation is not in descending std order".into(),
            ));
        }
        Ok(())
    }

    /// The first `n` dimensions of the ordering.
    pub fn top(&self, n: usize) -> &[usize] {
        &self.permutation[..n.min(self.permutation.len())]
    }
}

/// Orders dimensions by non-increasing std, breaking ties by index.
pub fn sort_profile(std: &[f64], source_tag: impl Into<String>) -> SortProfile {
    let mut permutation: Vec<usize> = (0..std.len()).collect();
    // stable sort keeps ascending index order among equal values
    permutation.sort_by(|&a, &b| std[b].total_cmp(&std[a]));
    SortProfile {
        std: std.to_vec(),
        permutation,
        source_tag: source_tag.into(),
    }
}

/// Computes the sort profile of a sequence from its own statistics.
pub fn profile_of(x: &EmbeddingSequence, source_tag: impl Into<String>) -> Result<SortProfile> {
    Ok(sort_profile(&per_dim_std(x)?, source_tag))
}

pub(crate) fn validate_permutation(perm: &[usize], dim: usize) -> Result<()> {
    if perm.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: perm.len(),
        });
    }
    let mut seen = vec![false; dim];
    for &p in perm {
        if p >= dim || seen[p] {
            return Err(Error::InvalidPermutation(format!(
                "index {p} is out of range or repeated"
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Reorders columns: forward puts original column `perm[i]` at position
/// `i`; inverse undoes it.
pub fn permute_dims(x: &EmbeddingSequence, perm: &[usize], inverse: bool) -> Result<EmbeddingSequence> {
    validate_permutation(perm, x.dim())?;
    let d = x.dim();
    let mut data = vec![0.0; x.as_slice().len()];
    for (src, dst) in x.rows().zip(data.chunks_exact_mut(d)) {
        if inverse {
            for (i, &p) in perm.iter().enumerate() {
                dst[p] = src[i];
            }
        } else {
            for (i, &p) in perm.iter().enumerate() {
                dst[i] = src[p];
            }
        }
    }
    Ok(EmbeddingSequence {
        data,
        frames: x.frames(),
        dim: d,
        frame_rate_hz: x.frame_rate_hz(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rel_frobenius, sym_eig, sym_sqrt};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal, Uniform};

    fn random_seq(t: usize, d: usize, seed: u64) -> EmbeddingSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * d)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * (1.0 + (i % d) as f64)
            })
            .collect();
        EmbeddingSequence::new(data, t, d).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(matches!(
            EmbeddingSequence::new(vec![1.0, f64::NAN], 1, 2),
            Err(Error::NonFinite { frame: 0, dim: 1 })
        ));
        assert!(EmbeddingSequence::new(vec![], 0, 3).is_err());
    }

    #[test]
    fn two_point_gaussian() {
        let x = EmbeddingSequence::from_rows(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        let g = fit_sequence(&x).unwrap();
        assert_eq!(g.mean.as_slice(), &[1.0, 1.0]);
        assert_eq!(g.cov.as_matrix().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(g.sample_count, 2);
    }

    #[test]
    fn constant_sequence_has_zero_cov_and_std() {
        let x = EmbeddingSequence::from_rows(&[[3.0, -1.0, 2.0]; 5]).unwrap();
        let g = fit_sequence(&x).unwrap();
        assert!(g.cov.as_matrix().iter().all(|&v| v == 0.0));
        assert_eq!(per_dim_std(&x).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_frame_is_insufficient() {
        let x = EmbeddingSequence::from_rows(&[[1.0, 2.0]]).unwrap();
        assert!(matches!(
            fit_sequence(&x),
            Err(Error::InsufficientSamples { required: 2, actual: 1 })
        ));
        assert!(per_dim_std(&x).is_err());
    }

    #[test]
    fn monte_carlo_recovers_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let m = DMatrix::from_fn(4, 4, |_, _| StandardNormal.sample(&mut rng));
        let sigma = SymMatrix::new(m.transpose() * &m).with_ridge(0.3);
        let root = sym_sqrt(&sigma, 0.0).unwrap();
        let n = 10_000;
        let z = DMatrix::from_fn(n, 4, |_, _| StandardNormal.sample(&mut rng));
        let mut samples = z * root.as_matrix();
        for mut row in samples.row_iter_mut() {
            row += mu.transpose();
        }
        let g = fit_gaussian(&samples).unwrap();
        assert!((&g.mean - &mu).norm() / mu.norm() < 0.05);
        assert!(rel_frobenius(g.cov.as_matrix(), sigma.as_matrix()) < 0.05);
    }

    #[test]
    fn alternating_dimension_has_unit_std() {
        let rows: Vec<[f64; 2]> = (0..10).map(|t| [if t % 2 == 0 { -1.0 } else { 1.0 }, 7.0]).collect();
        let x = EmbeddingSequence::from_rows(&rows).unwrap();
        assert_eq!(per_dim_std(&x).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn std_matches_two_pass_oracle() {
        let x = random_seq(37, 6, 9);
        let got = per_dim_std(&x).unwrap();
        for (j, g) in got.iter().enumerate() {
            let col: Vec<f64> = x.rows().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!((g - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn sort_profile_orders_and_breaks_ties() {
        assert_eq!(sort_profile(&[1.0, 3.0, 2.0], "t").permutation, vec![1, 2, 0]);
        assert_eq!(sort_profile(&[5.0; 4], "t").permutation, vec![0, 1, 2, 3]);
        assert_eq!(sort_profile(&[1.0, 2.0, 2.0, 0.5], "t").permutation, vec![1, 2, 0, 3]);
    }

    #[test]
    fn power_law_presorted_is_identity() {
        let std: Vec<f64> = (1..=64).map(|r| 10.0 * (r as f64).powf(-1.3)).collect();
        let p = sort_profile(&std, "power-law");
        assert_eq!(p.permutation, (0..64).collect::<Vec<_>>());
        p.validate().unwrap();
    }

    #[test]
    fn permute_identity_and_swap() {
        let x = random_seq(4, 3, 1);
        assert_eq!(permute_dims(&x, &[0, 1, 2], false).unwrap(), x);
        let swapped = permute_dims(&x, &[1, 0, 2], false).unwrap();
        assert_eq!(swapped.frame(2)[0], x.frame(2)[1]);
        assert_eq!(permute_dims(&swapped, &[1, 0, 2], true).unwrap(), x);
    }

    #[test]
    fn permute_rejects_bad_permutations() {
        let x = random_seq(3, 3, 2);
        assert!(matches!(permute_dims(&x, &[0, 1], false), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(permute_dims(&x, &[0, 0, 1], false), Err(Error::InvalidPermutation(_))));
    }

    fn shuffled(d: usize, seed: u64) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut p: Vec<usize> = (0..d).collect();
        p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        p
    }

    proptest! {
        #[test]
        fn permute_round_trip_is_bit_exact(t in 1usize..20, d in 1usize..20, seed in any::<u64>()) {
            let x = random_seq(t, d, seed);
            let p = shuffled(d, seed ^ 0x5a5a);
            let y = permute_dims(&permute_dims(&x, &p, false).unwrap(), &p, true).unwrap();
            prop_assert_eq!(y, x);
        }

        #[test]
        fn covariance_is_psd(t in 2usize..30, d in 1usize..8, seed in any::<u64>()) {
            let g = fit_sequence(&random_seq(t, d, seed)).unwrap();
            let eig = sym_eig(&g.cov).unwrap();
            prop_assert!(eig.min() >= -1e-10 * g.cov.trace());
            prop_assert!(g.cov.as_matrix().diagonal().iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn std_is_sqrt_of_cov_diagonal(t in 2usize..30, d in 1usize..8, seed in any::<u64>()) {
            let x = random_seq(t, d, seed);
            let std = per_dim_std(&x).unwrap();
            let g = fit_sequence(&x).unwrap();
            for (j, s) in std.iter().enumerate() {
                prop_assert!((s - g.cov.as_matrix()[(j, j)].sqrt()).abs() < 1e-12 * (1.0 + s));
            }
        }

        #[test]
        fn sorting_is_idempotent_through_permutation(d in 1usize..40, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // coarse values so ties occur
            let levels = Uniform::new(0u32, 5).unwrap();
            let std: Vec<f64> = (0..d).map(|_| levels.sample(&mut rng) as f64).collect();
            let p = sort_profile(&std, "a");
            p.validate().unwrap();
            let sorted: Vec<f64> = p.permutation.iter().map(|&i| std[i]).collect();
            let again = sort_profile(&sorted, "b");
            prop_assert_eq!(again.permutation, (0..d).collect::<Vec<_>>());
        }
    }
}
