use serde::Serialize;

use super::special::f_sf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnovaFlag {
    /// Groups have no spread but different means: `F = inf`, `p = 0`.
    InfiniteF,
    /// Every observation is identical; reported as `F = 0`, `p = 1`.
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OneWayAnova {
    pub f_stat: f64,
    pub p_value: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub flag: Option<AnovaFlag>,
}

/// Per-cluster summary next to the test across clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStats {
    pub size: usize,
    /// Mean normalized metric value over the cluster's trials.
    pub metric_mean: f64,
    /// Mean score over the cluster's scored trials.
    pub bfd_mean: Option<f64>,
    pub scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnovaResult {
    pub metric: String,
    pub clusters: Vec<ClusterStats>,
    /// `None` when fewer than two clusters carry scores.
    pub test: Option<OneWayAnova>,
}

/// Classical one-way ANOVA across `groups`.
pub fn oneway_anova(groups: &[Vec<f64>]) -> Result<OneWayAnova> {
    if groups.len() < 2 {
        return Err(Error::Validation("ANOVA needs at least two groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Validation("ANOVA group with no observations".into()));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Validation(
            "ANOVA observations must be finite".into(),
        ));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= groups.len() {
        return Err(Error::Validation(format!(
            "ANOVA needs more observations ({n}) than groups ({})",
            groups.len()
        )));
    }
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand).powi(2);
        ssw += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    // sums of squares this small relative to the data are rounding noise
    let scale = groups
        .iter()
        .flatten()
        .map(|v| (v - grand).powi(2))
        .sum::<f64>();
    let noise = 1e-24 * groups.iter().flatten().map(|v| v * v).sum::<f64>();
    if scale <= noise {
        return Ok(OneWayAnova {
            f_stat: 0.0,
            p_value: 1.0,
            df_between,
            df_within,
            flag: Some(AnovaFlag::Undefined),
        });
    }
    if ssw <= noise {
        return Ok(OneWayAnova {
            f_stat: f64::INFINITY,
            p_value: 0.0,
            df_between,
            df_within,
            flag: Some(AnovaFlag::InfiniteF),
        });
    }
    let f_stat = (ssb / df_between as f64) / (ssw / df_within as f64);
    Ok(OneWayAnova {
        f_stat,
        p_value: f_sf(f_stat, df_between as f64, df_within as f64),
        df_between,
        df_within,
        flag: None,
    })
}
