//! Joint inference of overlapping communities and anomalous node pairs in
//! binary directed temporal networks.
//!
//! Regular edges appear at a community-driven rate
//! `lambda_ij(t) = sum_kq u_ik v_jq w_kq(t)` and disappear at rate `beta`;
//! pairs flagged as anomalous (`Z_ij = 1`) instead follow their own
//! appearance/disappearance rates `(ell, phi)`. An EM procedure recovers the
//! memberships, the affinity trajectory, the rate scalars and the posterior
//! anomaly score `Q_ij = E[Z_ij]` for every unordered pair.
//!
//! The crate is organised as:
//! - [`network`]: the temporal adjacency tensor, edge-list ingestion and preprocessing.
//! - [`model`]: closed-form model quantities and the variational objective.
//! - [`inference`]: the EM engine.
//! - [`generator`]: synthetic benchmark networks with planted communities and anomalies.
//! - [`evaluation`]: metrics and experiment protocols.
//! - [`cli`]: the `dynacd` command-line tool.

// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod inference;
pub mod manifest;
pub mod model;
pub mod network;
pub mod numeric;
pub mod rng;

pub use error::{Error, Result};
pub use evaluation::{CvReport, PairKind, ScoredPair, ScoredPairs};
pub use generator::{GenConfig, GroundTruth};
pub use inference::{EmConfig, FitResult, FixedParams};
pub use model::{AnomalyPosterior, ModelParams};
pub use network::{Binning, HatView, PreprocessOptions, PreprocessReport, TemporalNetwork};
