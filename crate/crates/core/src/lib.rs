//! Hybrid automatic playlist continuation.
//!
//! Two recommenders are combined per playlist:
//!
//! * [`mf`]: a feature-aware latent factor model whose playlist and track
//!   vectors are sums of feature embeddings (normalized title one-hot,
//!   genre probabilities, identity). It is trained with the WARP ranking
//!   loss by stochastic gradient descent.
//! * [`proximity`]: a windowed co-occurrence matrix where two tracks at
//!   distance `k < d` inside a playlist contribute `1 - k/d`.
//!
//! [`fusion`] merges the two ranked lists with a rank-normalized linear
//! combination and [`metrics`] scores the result with R-precision, NDCG and
//! CLICKS, aggregating across systems with a Borda count.
//!
//! Data-parallel loops (proximity build, batch recommendation, evaluation,
//! training) use rayon when the `parallel` feature is enabled. Every such
//! entry point takes an [`Execution`] so callers can force the sequential,
//! bit-reproducible path.

pub mod dataset;
pub mod error;
pub mod exec;
pub mod features;
pub mod fusion;
mod io;
pub mod metrics;
pub mod mf;
pub mod proximity;
pub mod ranked;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};
pub use exec::Execution;

/// Dense track index into a [`dataset::Catalog`].
pub type TrackIdx = u32;
