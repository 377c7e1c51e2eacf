//! Longitudinal eye-gaze network analysis.
//!
//! Scanpaths of AOI fixations become weighted directed multigraphs
//! ([`graph`]), each summarized by a suite of network and entropy metrics
//! ([`metrics`]). Per-participant metric trajectories are clustered with
//! DTW k-means ([`tsc`]) and related to performance scores through one-way
//! ANOVA and a REML linear mixed model ([`stats`]). [`synth`] generates
//! cohorts with known ground truth, and [`pipeline`] wires the stages into
//! the file-based batch workflow used by the `gazenet` CLI.

pub mod error;
pub mod graph;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod stats;
pub mod synth;
pub mod tsc;

pub use error::{Error, ErrorKind, Result};
