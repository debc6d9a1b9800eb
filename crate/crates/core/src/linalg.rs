//! Symmetric-matrix primitives: eigendecomposition, square root, inverse
//! square root.
//!
//! Everything here works in `f64`. Square roots are computed from a single
//! eigendecomposition `S = Q diag(λ) Qᵀ` and rebuilt as `Q diag(φ(λ)) Qᵀ`,
//! so the results are exactly symmetric.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below `-NEGATIVE_EIG_TOLERANCE * max|λ|` are treated as
/// genuine indefiniteness rather than rounding noise.
pub const NEGATIVE_EIG_TOLERANCE: f64 = 1e-6;

const EIG_MAX_ITERS: usize = 10_000;

/// A square matrix that is symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Builds a symmetric matrix from `m`, replacing it with `(m + mᵀ) / 2`.
    ///
    /// Panics if `m` is empty or not square.
    pub fn new(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "SymMatrix requires a square matrix");
        assert!(m.nrows() >= 1, "SymMatrix requires dim >= 1");
        let mut m = m;
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        SymMatrix(m)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Returns a copy with `ridge` added to the diagonal.
    pub fn with_ridge(&self, ridge: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        SymMatrix(m)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors, one per column, matching `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymEigen {
    /// Rebuilds `Q diag(f(λ)) Qᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let q = &self.eigenvectors;
        let mut scaled = q.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let v = f(lambda);
            scaled.column_mut(j).scale_mut(v);
        }
        SymMatrix::new(scaled * q.transpose())
    }

    pub fn max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eig(s: &SymMatrix) -> Result<SymEigen> {
    let dim = s.dim();
    let eig = SymmetricEigen::try_new(s.0.clone(), f64::EPSILON, EIG_MAX_ITERS)
        .ok_or(Error::EigenFailure { dim })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure { dim });
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

fn check_psd(eig: &SymEigen) -> Result<()> {
    let tolerance = NEGATIVE_EIG_TOLERANCE * eig.max_abs();
    let min = eig.min();
    if min < -tolerance {
        return Err(Error::NotPsd {
            eigenvalue: min,
            tolerance,
        });
    }
    Ok(())
}

/// Principal square root `Q diag(sqrt(max(λ, eig_floor))) Qᵀ`.
///
/// Slightly negative eigenvalues (rounding noise) are clamped to
/// `eig_floor`; anything below `-1e-6 * max|λ|` is rejected as not PSD.
pub fn sym_sqrt(s: &SymMatrix, eig_floor: f64) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    check_psd(&eig)?;
    Ok(eig.reconstruct_with(|l| l.max(eig_floor).sqrt()))
}

/// Inverse square root `Q diag(1 / sqrt(max(λ, 0) + ridge)) Qᵀ`.
pub fn sym_inv_sqrt(s: &SymMatrix, ridge: f64) -> Result<SymMatrix> {
    let eig = sym_eig(s)?;
    if eig.eigenvalues.iter().any(|&l| l.max(0.0) + ridge <= 0.0) {
        return Err(Error::SingularMatrix);
    }
    Ok(eig.reconstruct_with(|l| 1.0 / (l.max(0.0) + ridge).sqrt()))
}

/// `||a - b||_F / ||b||_F`, or the absolute norm when `b` is zero.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale == 0.0 { diff } else { diff / scale }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_psd(dim: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        SymMatrix::new(m.transpose() * &m)
    }

    fn well_conditioned(dim: usize, seed: u64) -> SymMatrix {
        random_psd(dim, seed).with_ridge(0.5)
    }

    #[test]
    fn construction_symmetrizes() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 4.0, 3.0]);
        let s = SymMatrix::new(m);
        assert_eq!(s.as_matrix()[(0, 1)], 3.0);
        assert_eq!(s.as_matrix()[(1, 0)], 3.0);
    }

    #[test]
    fn eig_identity() {
        let eig = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(eig.eigenvalues.as_slice(), &[1.0, 1.0, 1.0]);
        let qtq = eig.eigenvectors.transpose() * &eig.eigenvectors;
        assert!((qtq - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn eig_diagonal_ascending() {
        let eig = sym_eig(&SymMatrix::from_diagonal(&[4.0, 1.0])).unwrap();
        assert_eq!(eig.eigenvalues.as_slice(), &[1.0, 4.0]);
    }

    #[test]
    fn eig_reconstructs_random_psd() {
        let s = random_psd(8, 11);
        let eig = sym_eig(&s).unwrap();
        let rebuilt = eig.reconstruct_with(|l| l);
        assert!(rel_frobenius(rebuilt.as_matrix(), s.as_matrix()) < 1e-10);
        let qtq = eig.eigenvectors.transpose() * &eig.eigenvectors;
        assert!((qtq - DMatrix::identity(8, 8)).norm() < 1e-10);
        assert!(eig.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sqrt_diagonal_and_identity() {
        let r = sym_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0]), 0.0).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!((r.as_matrix() - expected).norm() < 1e-14);
        let r = sym_sqrt(&SymMatrix::identity(4), 0.0).unwrap();
        assert!((r.as_matrix() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let s = random_psd(16, 3);
        let r = sym_sqrt(&s, 0.0).unwrap();
        let sq = r.as_matrix() * r.as_matrix();
        assert!(rel_frobenius(&sq, s.as_matrix()) < 1e-9);
    }

    #[test]
    fn sqrt_clamps_noise_rejects_indefinite() {
        // rank-deficient: tiny negative eigenvalue from rounding is fine
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = SymMatrix::new(&v * v.transpose());
        let r = sym_sqrt(&s, 0.0).unwrap();
        assert!(rel_frobenius(&(r.as_matrix() * r.as_matrix()), s.as_matrix()) < 1e-9);

        let bad = SymMatrix::from_diagonal(&[1.0, -0.5]);
        assert!(matches!(sym_sqrt(&bad, 0.0), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn sqrt_applies_floor() {
        let r = sym_sqrt(&SymMatrix::from_diagonal(&[0.0, 4.0]), 0.25).unwrap();
        assert!((r.as_matrix()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inv_sqrt_diagonal_and_identity() {
        let r = sym_inv_sqrt(&SymMatrix::from_diagonal(&[4.0, 16.0]), 0.0).unwrap();
        assert!((r.as_matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((r.as_matrix()[(1, 1)] - 0.25).abs() < 1e-15);
        let r = sym_inv_sqrt(&SymMatrix::identity(3), 0.0).unwrap();
        assert!((r.as_matrix() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn inv_sqrt_whitens() {
        let s = well_conditioned(8, 5);
        let w = sym_inv_sqrt(&s, 0.0).unwrap();
        let white = w.as_matrix() * s.as_matrix() * w.as_matrix();
        assert!((white - DMatrix::<f64>::identity(8, 8)).norm() < 1e-8);
    }

    #[test]
    fn inv_sqrt_singular_without_ridge() {
        let zero = SymMatrix::new(DMatrix::zeros(2, 2));
        assert!(matches!(sym_inv_sqrt(&zero, 0.0), Err(Error::SingularMatrix)));
        let r = sym_inv_sqrt(&zero, 4.0).unwrap();
        assert!((r.as_matrix()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn sqrt_is_symmetric_psd(dim in 1usize..10, seed in any::<u64>()) {
                let s = random_psd(dim, seed);
                let r = sym_sqrt(&s, 0.0).unwrap();
                let eig = sym_eig(&r).unwrap();
                prop_assert!(eig.min() >= -1e-12 * eig.max_abs().max(f64::MIN_POSITIVE));
                prop_assert_eq!(r.as_matrix(), &r.as_matrix().transpose());
            }

            #[test]
            fn sqrt_scales_with_sqrt_of_factor(dim in 1usize..8, seed in any::<u64>(), a in 0.01f64..100.0) {
                let s = well_conditioned(dim, seed);
                let lhs = sym_sqrt(&s.scaled(a), 0.0).unwrap();
                let rhs = sym_sqrt(&s, 0.0).unwrap().scaled(a.sqrt());
                prop_assert!(rel_frobenius(lhs.as_matrix(), rhs.as_matrix()) < 1e-10);
            }

            #[test]
            fn inv_sqrt_times_sqrt_is_identity(dim in 1usize..8, seed in any::<u64>()) {
                let s = well_conditioned(dim, seed);
                let prod = sym_inv_sqrt(&s, 0.0).unwrap().into_matrix() * sym_sqrt(&s, 0.0).unwrap().into_matrix();
                prop_assert!((prod - DMatrix::<f64>::identity(dim, dim)).norm() < 1e-8);
            }

            #[test]
            fn eigenvectors_orthonormal(dim in 1usize..12, seed in any::<u64>()) {
                let eig = sym_eig(&random_psd(dim, seed)).unwrap();
                let qtq = eig.eigenvectors.transpose() * &eig.eigenvectors;
                prop_assert!((qtq - DMatrix::<f64>::identity(dim, dim)).norm() < 1e-10);
            }
        }
    }
}
