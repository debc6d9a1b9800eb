//! Reference converters: kNN regression (optionally trimmed to the
//! highest-variance dimensions) and entropic optimal transport.

mod knn;
mod sinkhorn;

pub use knn::{knn_convert, KnnConfig};
pub use sinkhorn::{
    cost_matrix, sinkhorn_convert, sinkhorn_plan, SinkhornConfig, SinkhornSolver, TransportPlan,
};

use std::fmt;
use std::str::FromStr;

/// Frame-to-frame ground cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// `1 - cos(u, v)`; a zero vector is at distance 1 from everything.
    #[default]
    Cosine,
    SquaredEuclidean,
}

impl Metric {
    /// Distance between two full frames, accumulated in index order.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        self.accumulate(a.iter().copied().zip(b.iter().copied()))
    }

    /// Distance restricted to `dims`. With `dims` ascending and covering
    /// every index this is bit-identical to [`Metric::distance`].
    pub fn distance_on(self, a: &[f64], b: &[f64], dims: &[usize]) -> f64 {
        self.accumulate(dims.iter().map(|&k| (a[k], b[k])))
    }

    fn accumulate(self, pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
        match self {
            Metric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in pairs {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    return 1.0;
                }
                1.0 - dot / (na * nb).sqrt()
            }
            Metric::SquaredEuclidean => pairs.map(|(x, y)| (x - y) * (x - y)).sum(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::SquaredEuclidean => "sqeuclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "sqeuclidean" | "squared-euclidean" => Ok(Metric::SquaredEuclidean),
            other => Err(format!("unknown metric '{other}' (expected cosine or sqeuclidean)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_basics() {
        assert_eq!(Metric::Cosine.distance(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((Metric::Cosine.distance(&[1.0, 0.0], &[0.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(Metric::Cosine.distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
    }

    #[test]
    fn full_index_list_is_bit_identical() {
        let a = [0.3, -1.7, 2.2, 0.01, 5.5];
        let b = [1.1, 0.4, -0.9, 3.3, 0.2];
        let all: Vec<usize> = (0..5).collect();
        for m in [Metric::Cosine, Metric::SquaredEuclidean] {
            assert_eq!(m.distance(&a, &b).to_bits(), m.distance_on(&a, &b, &all).to_bits());
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("cosine".parse::<Metric>().unwrap(), Metric::Cosine);
        assert_eq!("sqeuclidean".parse::<Metric>().unwrap(), Metric::SquaredEuclidean);
        assert!("l1".parse::<Metric>().is_err());
    }
}
