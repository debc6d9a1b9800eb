use nalgebra::DMatrix;
use rayon::prelude::*;

use super::Metric;
use crate::error::{Error, Result};
use crate::stats::EmbeddingSequence;

/// Settings for entropic optimal transport.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Entropic regularization strength.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Convergence threshold on the L1 marginal violation.
    pub marginal_tol: f64,
    pub metric: Metric,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        SinkhornConfig {
            epsilon: 1e-2,
            max_iters: 1000,
            marginal_tol: 1e-6,
            metric: Metric::Cosine,
        }
    }
}

/// A coupling between source and reference frames.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub weights: DMatrix<f64>,
    pub row_marginal: Vec<f64>,
    pub col_marginal: Vec<f64>,
    pub iterations: usize,
    /// `max(L1 row violation, L1 column violation)` of the returned plan.
    pub marginal_violation: f64,
    pub converged: bool,
}

impl TransportPlan {
    /// A human-readable warning when the iteration budget ran out.
    pub fn warning(&self) -> Option<String> {
        (!self.converged).then(|| {
            format!(
                "sinkhorn did not converge in {} iterations (marginal violation {:e})",
                self.iterations, self.marginal_violation
            )
        })
    }

    /// `<P, C>`.
    pub fn cost(&self, cost: &DMatrix<f64>) -> f64 {
        self.weights.component_mul(cost).sum()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn iteration with uniform marginals.
///
/// Keeps dual potentials `f`, `g`; the plan is
/// `P_ij = exp((f_i + g_j - C_ij) / ε)`.
#[derive(Debug, Clone)]
pub struct SinkhornSolver<'a> {
    cost: &'a DMatrix<f64>,
    epsilon: f64,
    /// `C / ε`, row-major and column-major copies for contiguous sweeps.
    by_row: Vec<f64>,
    by_col: Vec<f64>,
    log_a: f64,
    log_b: f64,
    f: Vec<f64>,
    g: Vec<f64>,
    /// `LSE_j((g_j - C_ij) / ε)` for the current `g`.
    row_lse: Vec<f64>,
    col_violation: f64,
    iterations: usize,
    scratch: Vec<f64>,
}

impl<'a> SinkhornSolver<'a> {
    pub fn new(cost: &'a DMatrix<f64>, epsilon: f64) -> Result<Self> {
        let (n, m) = cost.shape();
        if n == 0 || m == 0 {
            return Err(Error::EmptyInput("cost matrix"));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {epsilon}")));
        }
        if cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("cost matrix has non-finite entries".into()));
        }
        let by_col: Vec<f64> = cost.iter().map(|c| c / epsilon).collect();
        let by_row: Vec<f64> = cost.transpose().iter().map(|c| c / epsilon).collect();
        let mut solver = SinkhornSolver {
            cost,
            epsilon,
            by_row,
            by_col,
            log_a: -(n as f64).ln(),
            log_b: -(m as f64).ln(),
            f: vec![0.0; n],
            g: vec![0.0; m],
            row_lse: vec![0.0; n],
            col_violation: f64::INFINITY,
            iterations: 0,
            scratch: vec![0.0; n.max(m)],
        };
        solver.update_row_lse();
        Ok(solver)
    }

    fn update_row_lse(&mut self) {
        let m = self.g.len();
        for (i, lse) in self.row_lse.iter_mut().enumerate() {
            let row = &self.by_row[i * m..(i + 1) * m];
            for ((s, g), c) in self.scratch.iter_mut().zip(&self.g).zip(row) {
                *s = g / self.epsilon - c;
            }
            *lse = log_sum_exp(&self.scratch[..m]);
        }
    }

    /// One full iteration: match rows, then columns.
    pub fn step(&mut self) -> Result<()> {
        let eps = self.epsilon;
        let (n, m) = (self.f.len(), self.g.len());
        for (f, lse) in self.f.iter_mut().zip(&self.row_lse) {
            *f = eps * (self.log_a - lse);
        }
        let b = self.log_b.exp();
        self.col_violation = 0.0;
        for j in 0..m {
            let col = &self.by_col[j * n..(j + 1) * n];
            for ((s, f), c) in self.scratch.iter_mut().zip(&self.f).zip(col) {
                *s = f / eps - c;
            }
            let lse = log_sum_exp(&self.scratch[..n]);
            self.g[j] = eps * (self.log_b - lse);
            self.col_violation += ((self.g[j] / eps + lse).exp() - b).abs();
        }
        self.update_row_lse();
        self.iterations += 1;
        if self.f.iter().chain(&self.g).any(|v| !v.is_finite()) {
            return Err(Error::SinkhornNumerical {
                iteration: self.iterations,
                epsilon: eps,
            });
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// L1 violations of the row and column marginals of the current plan,
    /// read off the log-sum-exps the iteration already computes.
    pub fn current_violations(&self) -> (f64, f64) {
        let a = self.log_a.exp();
        let rows = self
            .f
            .iter()
            .zip(&self.row_lse)
            .map(|(f, lse)| ((f / self.epsilon + lse).exp() - a).abs())
            .sum();
        (rows, self.col_violation)
    }

    pub fn plan_weights(&self) -> DMatrix<f64> {
        let (n, m) = self.cost.shape();
        DMatrix::from_fn(n, m, |i, j| ((self.f[i] + self.g[j] - self.cost[(i, j)]) / self.epsilon).exp())
    }

    /// L1 violations of the row and column marginals of `weights`.
    pub fn violations(&self, weights: &DMatrix<f64>) -> (f64, f64) {
        let a = self.log_a.exp();
        let b = self.log_b.exp();
        let rows = weights.row_iter().map(|r| (r.sum() - a).abs()).sum();
        let cols = weights.column_iter().map(|c| (c.sum() - b).abs()).sum();
        (rows, cols)
    }

    /// Entropic dual objective `<f, a> + <g, b> - ε Σ P_ij + ε`, which
    /// never decreases from one step to the next.
    pub fn dual_objective(&self) -> f64 {
        let a = self.log_a.exp();
        let b = self.log_b.exp();
        let mass = self.plan_weights().sum();
        a * self.f.iter().sum::<f64>() + b * self.g.iter().sum::<f64>() - self.epsilon * (mass - 1.0)
    }
}

/// Entropy-regularized transport plan between uniform marginals.
///
/// Stops when both L1 marginal violations drop below `marginal_tol` or
/// after `max_iters`; the second case is reported through
/// [`TransportPlan::converged`] and [`TransportPlan::warning`].
pub fn sinkhorn_plan(cost: &DMatrix<f64>, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    let mut solver = SinkhornSolver::new(cost, cfg.epsilon)?;
    let (n, m) = cost.shape();
    let mut converged = false;
    for _ in 0..cfg.max_iters.max(1) {
        solver.step()?;
        let (rows, cols) = solver.current_violations();
        let violation = rows.max(cols);
        if violation.is_nan() {
            return Err(Error::SinkhornNumerical {
                iteration: solver.iterations(),
                epsilon: cfg.epsilon,
            });
        }
        if violation < cfg.marginal_tol {
            converged = true;
            break;
        }
    }
    let weights = solver.plan_weights();
    let (rows, cols) = solver.violations(&weights);
    Ok(TransportPlan {
        weights,
        row_marginal: vec![1.0 / n as f64; n],
        col_marginal: vec![1.0 / m as f64; m],
        iterations: solver.iterations(),
        marginal_violation: rows.max(cols),
        converged,
    })
}

/// Pairwise frame costs, `src` frames as rows.
pub fn cost_matrix(src: &EmbeddingSequence, reference: &EmbeddingSequence, metric: Metric) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..src.frames())
        .into_par_iter()
        .map(|i| reference.rows().map(|r| metric.distance(src.frame(i), r)).collect())
        .collect();
    DMatrix::from_fn(src.frames(), reference.frames(), |i, j| rows[i][j])
}

/// Converts `src` by barycentric projection of the Sinkhorn plan onto the
/// reference frames. Also returns the plan so callers can inspect
/// convergence.
pub fn sinkhorn_convert(
    src: &EmbeddingSequence,
    reference: &EmbeddingSequence,
    cfg: &SinkhornConfig,
) -> Result<(EmbeddingSequence, TransportPlan)> {
    if src.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: src.dim(),
            actual: reference.dim(),
        });
    }
    let cost = cost_matrix(src, reference, cfg.metric);
    let plan = sinkhorn_plan(&cost, cfg)?;
    let dim = src.dim();
    let mut data = vec![0.0; src.frames() * dim];
    for (i, out) in data.chunks_exact_mut(dim).enumerate() {
        let row = plan.weights.row(i);
        let mass = row.sum();
        if mass.is_nan() || mass <= 0.0 {
            return Err(Error::SinkhornNumerical {
                iteration: plan.iterations,
                epsilon: cfg.epsilon,
            });
        }
        for (j, r) in reference.rows().enumerate() {
            let w = row[j] / mass;
            out.iter_mut().zip(r).for_each(|(o, v)| *o += w * v);
        }
    }
    let out = EmbeddingSequence::new(data, src.frames(), dim)?.with_frame_rate(src.frame_rate_hz());
    Ok((out, plan))
}
