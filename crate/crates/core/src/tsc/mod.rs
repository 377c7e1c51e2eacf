//! Per-metric clustering of participant trajectories under dynamic time
//! warping.

mod dba;
mod dtw;
mod kmeans;
mod normalize;

use serde::{Deserialize, Serialize};

pub use dba::{dba_centroid, dba_refine, median_length, medoid, resample, DbaConfig, DbaResult};
pub use dtw::{dtw_distance, dtw_path, dtw_squared};
pub use kmeans::{
    kmeans_dtw, select_k, silhouette_samples, ClusteringResult, KMeansConfig, Selection,
    LOW_CONFIDENCE_SILHOUETTE,
};
pub use normalize::{normalize_corpus, znormalize, NormStats, NormalizeMode};

/// One participant's values of one metric, ordered by trial index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub participant_id: String,
    pub metric: String,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn new(
        participant_id: impl Into<String>,
        metric: impl Into<String>,
        values: Vec<f64>,
    ) -> Self {
        MetricSeries {
            participant_id: participant_id.into(),
            metric: metric.into(),
            values,
        }
    }

    /// At least two values, all finite.
    pub fn is_eligible(&self) -> bool {
        self.values.len() >= 2 && self.values.iter().all(|v| v.is_finite())
    }
}
