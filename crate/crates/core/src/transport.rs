//! Closed-form optimal transport between Gaussians and its factorized,
//! block-wise application to embedding sequences.
//!
//! For source `N(μ₁, Σ₁)` and target `N(μ₂, Σ₂)` the quadratic-cost optimal
//! map is affine:
//!
//! ```text
//! T(x) = μ₂ + A (x - μ₁),   A = Σ₁^{-1/2} (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2} Σ₁^{-1/2}
//! ```
//!
//! A [`FactorizedMap`] sorts the embedding dimensions by spread, cuts them
//! into contiguous blocks of `K` dimensions and fits one such map per block,
//! treating the cross-block covariance as zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, sym_sqrt, SymMatrix};
use crate::stats::{fit_gaussian, permute_dims, validate_permutation, EmbeddingSequence, GaussianStats, SortProfile};

/// Relative tolerance for the symmetric-PSD check on [`AffineMap`].
pub const AFFINE_TOLERANCE: f64 = 1e-8;

/// Tolerance for maps read back from `f32` files.
const STORED_TOLERANCE: f64 = 1e-5;

/// Source covariances whose eigenvalue spread exceeds this are singular.
const SINGULAR_RATIO: f64 = 1e-12;

/// `x ↦ A x + b` with `A` symmetric positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineMap {
    /// Validates that `matrix` is symmetric PSD (within [`AFFINE_TOLERANCE`],
    /// relative to its norm) and stores its symmetric part.
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        Self::with_tolerance(matrix, offset, AFFINE_TOLERANCE)
    }

    /// Like [`AffineMap::new`] but with the looser tolerance that `f32`
    /// storage calls for.
    pub fn from_stored(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        Self::with_tolerance(matrix, offset, STORED_TOLERANCE)
    }

    fn with_tolerance(matrix: DMatrix<f64>, offset: DVector<f64>, tolerance: f64) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: offset.len(),
            });
        }
        let scale = matrix.norm().max(f64::MIN_POSITIVE);
        let asymmetry = (&matrix - matrix.transpose()).norm() / scale;
        let sym = SymMatrix::new(matrix);
        let eig = sym_eig(&sym)?;
        let min_eigenvalue = eig.min() / scale;
        if asymmetry > tolerance || min_eigenvalue < -tolerance {
            return Err(Error::InvalidAffineMap {
                asymmetry,
                min_eigenvalue,
            });
        }
        Ok(AffineMap {
            matrix: sym.into_matrix(),
            offset,
        })
    }

    pub fn identity(dim: usize) -> Self {
        AffineMap {
            matrix: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }

    /// Pushes a Gaussian through the map: `N(Aμ + b, A Σ Aᵀ)`.
    pub fn push_forward(&self, g: &GaussianStats) -> GaussianStats {
        GaussianStats {
            mean: self.apply(&g.mean),
            cov: SymMatrix::new(&self.matrix * g.cov.as_matrix() * self.matrix.transpose()),
            sample_count: g.sample_count,
        }
    }
}

/// How much to add to block covariance diagonals before fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// A fixed amount.
    Absolute(f64),
    /// A multiple of the mean diagonal of each block's source covariance.
    RelativeToSource(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::RelativeToSource(1e-6)
    }
}

impl Ridge {
    pub fn resolve(&self, src_cov: &SymMatrix) -> f64 {
        match *self {
            Ridge::Absolute(r) => r,
            Ridge::RelativeToSource(f) => f * src_cov.trace() / src_cov.dim() as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Ridge::Absolute(r) | Ridge::RelativeToSource(r) => r,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge must be finite and >= 0, got {v}")));
        }
        Ok(())
    }
}

/// Fits the Monge-Kantorovich linear map from `src` to `tgt`, with `ridge`
/// added to both covariance diagonals.
///
/// Returns [`Error::SingularMatrix`] when the (ridged) source covariance is
/// singular.
pub fn mkl_fit(src: &GaussianStats, tgt: &GaussianStats, ridge: f64) -> Result<AffineMap> {
    if src.dim() != tgt.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            actual: tgt.dim(),
        });
    }
    let s1 = src.cov.with_ridge(ridge);
    let s2 = tgt.cov.with_ridge(ridge);

    let eig1 = sym_eig(&s1)?;
    if eig1.max() <= 0.0 || eig1.min() <= SINGULAR_RATIO * eig1.max() {
        return Err(Error::SingularMatrix);
    }
    let s1_half = eig1.reconstruct_with(f64::sqrt);
    let s1_inv_half = eig1.reconstruct_with(|l| 1.0 / l.sqrt());

    let inner = SymMatrix::new(s1_half.as_matrix() * s2.as_matrix() * s1_half.as_matrix());
    let middle = sym_sqrt(&inner, 0.0)?;
    let a = s1_inv_half.as_matrix() * middle.as_matrix() * s1_inv_half.as_matrix();
    let offset = &tgt.mean - &a * &src.mean;
    AffineMap::new(a, offset)
}

/// Block-wise MKL maps over profile-sorted dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedMap {
    block_dim: usize,
    permutation: Vec<usize>,
    blocks: Vec<AffineMap>,
    source_means: Vec<DVector<f64>>,
    target_means: Vec<DVector<f64>>,
}

impl FactorizedMap {
    /// Assembles a map from parts, checking that the shapes agree.
    pub fn from_parts(
        block_dim: usize,
        permutation: Vec<usize>,
        blocks: Vec<AffineMap>,
        source_means: Vec<DVector<f64>>,
        target_means: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let dim = permutation.len();
        check_block_dim(block_dim, dim)?;
        validate_permutation(&permutation, dim)?;
        let n = dim / block_dim;
        for len in [blocks.len(), source_means.len(), target_means.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, actual: len });
            }
        }
        let wrong = blocks
            .iter()
            .map(AffineMap::dim)
            .chain(source_means.iter().map(DVector::len))
            .chain(target_means.iter().map(DVector::len))
            .find(|&k| k != block_dim);
        if let Some(actual) = wrong {
            return Err(Error::DimensionMismatch {
                expected: block_dim,
                actual,
            });
        }
        Ok(FactorizedMap {
            block_dim,
            permutation,
            blocks,
            source_means,
            target_means,
        })
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn dim(&self) -> usize {
        self.permutation.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn blocks(&self) -> &[AffineMap] {
        &self.blocks
    }

    pub fn source_means(&self) -> &[DVector<f64>] {
        &self.source_means
    }

    pub fn target_means(&self) -> &[DVector<f64>] {
        &self.target_means
    }
}

fn check_block_dim(block_dim: usize, dim: usize) -> Result<()> {
    if block_dim == 0 || !dim.is_multiple_of(block_dim) {
        return Err(Error::InvalidBlockDim { block_dim, dim });
    }
    Ok(())
}

/// Fits one MKL map per block of `block_dim` sorted dimensions, from the
/// source utterance statistics to the reference statistics.
pub fn factorize_fit(
    src: &EmbeddingSequence,
    reference: &EmbeddingSequence,
    block_dim: usize,
    profile: &SortProfile,
    ridge: Ridge,
) -> Result<FactorizedMap> {
    let dim = src.dim();
    if reference.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: reference.dim(),
        });
    }
    if profile.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: profile.dim(),
        });
    }
    check_block_dim(block_dim, dim)?;
    ridge.validate()?;
    let required = block_dim + 1;
    for t in [src.frames(), reference.frames()] {
        if t < required {
            return Err(Error::InsufficientSamples { required, actual: t });
        }
    }

    let src_sorted = permute_dims(src, &profile.permutation, false)?;
    let ref_sorted = permute_dims(reference, &profile.permutation, false)?;
    let fitted: Vec<(AffineMap, DVector<f64>, DVector<f64>)> = (0..dim / block_dim)
        .into_par_iter()
        .map(|block| {
            let start = block * block_dim;
            let s = fit_gaussian(&src_sorted.column_block(start, block_dim))?;
            let r = fit_gaussian(&ref_sorted.column_block(start, block_dim))?;
            let lambda = ridge.resolve(&s.cov);
            let map = mkl_fit(&s, &r, lambda).map_err(|e| match e {
                Error::SingularMatrix => Error::SingularSourceCovariance { block },
                other => other,
            })?;
            Ok((map, s.mean, r.mean))
        })
        .collect::<Result<_>>()?;

    let mut blocks = Vec::with_capacity(fitted.len());
    let mut source_means = Vec::with_capacity(fitted.len());
    let mut target_means = Vec::with_capacity(fitted.len());
    for (m, s, t) in fitted {
        blocks.push(m);
        source_means.push(s);
        target_means.push(t);
    }
    Ok(FactorizedMap {
        block_dim,
        permutation: profile.permutation.clone(),
        blocks,
        source_means,
        target_means,
    })
}

/// Applies a factorized map frame by frame: `y = μ₂ + A (x - μ₁)` in each
/// block of the sorted space, then restores the original dimension order.
pub fn factorize_apply(map: &FactorizedMap, x: &EmbeddingSequence) -> Result<EmbeddingSequence> {
    let dim = map.dim();
    if x.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.dim(),
        });
    }
    let k = map.block_dim;
    let t = x.frames();
    let sorted = permute_dims(x, &map.permutation, false)?;

    let mapped: Vec<DMatrix<f64>> = (0..map.num_blocks())
        .into_par_iter()
        .map(|b| {
            let mut centered = sorted.column_block(b * k, k);
            for mut row in centered.row_iter_mut() {
                row -= map.source_means[b].transpose();
            }
            // rows are frames, so y = x Aᵀ; A is symmetric
            let mut out = centered * map.blocks[b].matrix();
            for mut row in out.row_iter_mut() {
                row += map.target_means[b].transpose();
            }
            out
        })
        .collect();

    let mut data = vec![0.0; t * dim];
    for (b, block) in mapped.iter().enumerate() {
        for frame in 0..t {
            let row = &mut data[frame * dim + b * k..frame * dim + (b + 1) * k];
            for (j, v) in row.iter_mut().enumerate() {
                *v = block[(frame, j)];
            }
        }
    }
    let out = EmbeddingSequence::new(data, t, dim)?.with_frame_rate(x.frame_rate_hz());
    permute_dims(&out, &map.permutation, true)
}

/// Closed-form Wasserstein-2 distance between two Gaussians.
pub fn gaussian_w2(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a.mean == b.mean && a.cov == b.cov {
        return Ok(0.0);
    }
    let mean_sq = (&a.mean - &b.mean).norm_squared();
    let a_half = sym_sqrt(&a.cov, 0.0)?;
    let inner = SymMatrix::new(a_half.as_matrix() * b.cov.as_matrix() * a_half.as_matrix());
    let cross: f64 = sym_eig(&inner)?.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let w2_sq = mean_sq + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(w2_sq.max(0.0).sqrt())
}
