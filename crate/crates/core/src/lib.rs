//! Converter stage for voice conversion over self-supervised speech
//! embeddings.
//!
//! The main converter is a factorized linear optimal-transport map: the
//! embedding dimensions are sorted by their spread over time, cut into
//! blocks of `K`, and each block of the source utterance is moved onto the
//! matching block of the reference with the closed-form Gaussian transport
//! map. Baselines (kNN regression, with optional trimming, and entropic
//! optimal transport), Gaussianity diagnostics and evaluation scores are
//! included, all operating on embedding files so nothing here needs a
//! neural model.
//!
//! ```no_run
//! use mklvc::{io, stats, transport};
//!
//! let src = io::read_embeddings("source.embf")?;
//! let reference = io::read_embeddings("reference.embf")?;
//! let profile = stats::profile_of(&src, "source")?;
//! let map = transport::factorize_fit(&src, &reference, 2, &profile, Default::default())?;
//! let converted = transport::factorize_apply(&map, &src)?;
//! io::write_embeddings("converted.embf", &converted)?;
//! # Ok::<(), mklvc::Error>(())
//! ```

pub mod assignment;
pub mod baselines;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use stats::{EmbeddingSequence, GaussianStats, SortProfile};
pub use transport::{AffineMap, FactorizedMap, Ridge};
