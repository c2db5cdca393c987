//! Average consensus over evolutionary graphs.
//!
//! Agents run linear consensus while links appear and disappear at random:
//! at every step each feasible pair keeps or (re)creates its link with a
//! probability driven by a coordination game, and the state contracts along
//! the sampled graph Laplacian,
//!
//! ```text
//! x_{k+1} = x_k - delta * L_k * x_k .
//! ```
//!
//! The crate provides the graph machinery ([`topology`]), the game fitness
//! and link weights ([`game`]), sampled and expected Laplacians
//! ([`laplacian`]), the Euler-discretized stochastic recursion
//! ([`dynamics`]), dense spectra ([`spectral`]), convergence bookkeeping
//! ([`metrics`]) and a Monte Carlo experiment harness ([`harness`]) behind
//! the `evocons` CLI.

pub mod dynamics;
pub mod game;
pub mod harness;
pub mod laplacian;
pub mod metrics;
pub mod rng;
pub mod spectral;
pub mod topology;

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error(
        "no connected graph after {attempts} attempts (n={n}, p1={p1}); \
         p1 is too small for connectivity at this size"
    )]
    ConnectivityRetriesExhausted { attempts: u32, n: usize, p1: f64 },

    #[error("not a valid Laplacian matrix: {0}")]
    NotLaplacian(String),

    #[error("unusable fit window: {0}")]
    UnusableFitWindow(String),

    #[error("trial {trial_index} (seed {seed:#018x}) failed: {source}")]
    TrialFailed {
        trial_index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Malformed { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
