//! Checks of the structural assumptions behind factorized transport: how
//! Gaussian each block of sorted dimensions is, and how the per-dimension
//! spread decays.
//!
//! Distances between point clouds are exact (optimal assignment on equal
//! size subsamples), never entropic, so a perfect fit reads as zero up to
//! sampling noise.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::assignment;
use crate::error::{Error, Result};
use crate::linalg::sym_sqrt;
use crate::stats::{fit_gaussian, per_dim_std, permute_dims, EmbeddingSequence, GaussianStats, SortProfile};

pub const DEFAULT_STRIDE: usize = 8;
pub const DEFAULT_SUBSAMPLE: usize = 512;
pub const SOLVER_NAME: &str = "exact-assignment";

fn subsample_rows(points: &DMatrix<f64>, size: usize, seed: u64) -> DMatrix<f64> {
    let n = points.nrows();
    if size == n {
        return points.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, size).into_vec();
    picked.sort_unstable();
    points.select_rows(picked.iter())
}

fn lexicographic_le(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            match a[(i, j)].total_cmp(&b[(i, j)]) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
    }
    true
}

/// Empirical Wasserstein-2 distance between two point clouds (one point
/// per row).
///
/// Both clouds are subsampled without replacement to
/// `s = min(n, m, subsample)` points, each with an RNG seeded by `seed`,
/// and matched exactly under squared-Euclidean cost. Returns
/// `sqrt(total matched cost / s)`. The result does not depend on argument
/// order.
pub fn empirical_w2(x: &DMatrix<f64>, y: &DMatrix<f64>, subsample: usize, seed: u64) -> Result<f64> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::EmptyInput("point cloud"));
    }
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: y.ncols(),
        });
    }
    if subsample == 0 {
        return Err(Error::InvalidParameter("subsample must be >= 1".into()));
    }
    let s = x.nrows().min(y.nrows()).min(subsample);
    let xs = subsample_rows(x, s, seed);
    let ys = subsample_rows(y, s, seed);
    let (rows, cols) = if lexicographic_le(&xs, &ys) { (&xs, &ys) } else { (&ys, &xs) };

    let cost = DMatrix::from_fn(s, s, |i, j| {
        rows.row(i)
            .iter()
            .zip(cols.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    });
    let matched = assignment::solve(&cost);
    Ok((matched.cost / s as f64).sqrt())
}

/// Draws `count` samples of `N(μ, Σ)`, one per row.
pub fn sample_gaussian(stats: &GaussianStats, count: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let k = stats.dim();
    let root = sym_sqrt(&stats.cov, 0.0)?;
    let z = DMatrix::from_fn(count, k, |_, _| StandardNormal.sample(rng));
    let mut out = z * root.as_matrix();
    for mut row in out.row_iter_mut() {
        row += stats.mean.transpose();
    }
    Ok(out)
}

/// Settings for [`gaussianity_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    /// Distance between consecutive block start indices.
    pub stride: usize,
    pub subsample: usize,
    /// Number of synthetic Gaussian points per block.
    pub mc_samples: usize,
    pub seed: u64,
}

impl ProfileOptions {
    pub fn new(seed: u64) -> Self {
        ProfileOptions {
            stride: DEFAULT_STRIDE,
            subsample: DEFAULT_SUBSAMPLE,
            mc_samples: DEFAULT_SUBSAMPLE,
            seed,
        }
    }
}

/// Per-block distance to the best-fitting Gaussian, divided by the block
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianityProfile {
    pub block_dim: usize,
    /// Start of each block in sorted-dimension space.
    pub block_start_indices: Vec<usize>,
    pub w2_values: Vec<f64>,
    /// Points per cloud that entered each assignment.
    pub sample_size: usize,
    pub seed: u64,
    pub solver: &'static str,
}

impl GaussianityProfile {
    pub fn mean(&self) -> f64 {
        self.w2_values.iter().sum::<f64>() / self.w2_values.len() as f64
    }
}

fn block_seed(seed: u64, block: usize) -> u64 {
    seed.wrapping_add((block as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// For each block of `block_dim` sorted dimensions starting every
/// `opts.stride` indices: fit a Gaussian, draw `mc_samples` points from it,
/// and record `empirical_w2(frames, samples) / block_dim`.
pub fn gaussianity_profile(
    x: &EmbeddingSequence,
    block_dim: usize,
    profile: &SortProfile,
    opts: &ProfileOptions,
) -> Result<GaussianityProfile> {
    let dim = x.dim();
    if profile.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: profile.dim(),
        });
    }
    if block_dim == 0 || !dim.is_multiple_of(block_dim) {
        return Err(Error::InvalidBlockDim { block_dim, dim });
    }
    if opts.stride == 0 || opts.mc_samples == 0 || opts.subsample == 0 {
        return Err(Error::InvalidParameter(
            "stride, subsample and mc_samples must be >= 1".into(),
        ));
    }
    if x.frames() < block_dim + 1 {
        return Err(Error::InsufficientSamples {
            required: block_dim + 1,
            actual: x.frames(),
        });
    }

    let sorted = permute_dims(x, &profile.permutation, false)?;
    let starts: Vec<usize> = (0..=dim - block_dim).step_by(opts.stride).collect();
    let w2_values = starts
        .par_iter()
        .enumerate()
        .map(|(b, &start)| {
            let frames = sorted.column_block(start, block_dim);
            let stats = fit_gaussian(&frames)?;
            let mut rng = ChaCha8Rng::seed_from_u64(block_seed(opts.seed, b));
            let synthetic = sample_gaussian(&stats, opts.mc_samples, &mut rng)?;
            let w2 = empirical_w2(&frames, &synthetic, opts.subsample, block_seed(opts.seed, b) ^ 1)?;
            Ok(w2 / block_dim as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    Ok(GaussianityProfile {
        block_dim,
        block_start_indices: starts,
        w2_values,
        sample_size: x.frames().min(opts.mc_samples).min(opts.subsample),
        seed: opts.seed,
        solver: SOLVER_NAME,
    })
}

/// Distance between two independent draws from the same Gaussian, divided
/// by its dimension: the floor a perfectly Gaussian block can reach at
/// these sample sizes.
pub fn gaussian_self_distance(
    stats: &GaussianStats,
    n: usize,
    m: usize,
    subsample: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = sample_gaussian(stats, n, &mut rng)?;
    let b = sample_gaussian(stats, m, &mut rng)?;
    Ok(empirical_w2(&a, &b, subsample, seed ^ 1)? / stats.dim() as f64)
}

/// Per-dimension standard deviations sorted in descending order.
pub fn std_spectrum(x: &EmbeddingSequence) -> Result<Vec<f64>> {
    let mut std = per_dim_std(x)?;
    std.sort_by(|a, b| b.total_cmp(a));
    Ok(std)
}

/// Share of total variance held by the first `top` entries of a spectrum.
pub fn variance_share(spectrum: &[f64], top: usize) -> f64 {
    let total: f64 = spectrum.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    spectrum.iter().take(top).map(|s| s * s).sum::<f64>() / total
}

/// Rows of a 1-D sample as an `n x 1` matrix.
pub fn column(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(values.len(), 1, values)
}
