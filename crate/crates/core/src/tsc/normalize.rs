use serde::{Deserialize, Serialize};

use super::MetricSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    /// `(x - mean) / sd` with the population sd.
    #[default]
    Zscore,
    /// `(x - min) / (max - min)`.
    Minmax,
}

impl std::str::FromStr for NormalizeMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "zscore" => Ok(NormalizeMode::Zscore),
            "minmax" => Ok(NormalizeMode::Minmax),
            other => Err(crate::Error::Config(format!(
                "unknown normalization `{other}`"
            ))),
        }
    }
}

/// Location and scale pooled over every observation of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mode: NormalizeMode,
    pub center: f64,
    pub scale: f64,
}

impl NormStats {
    /// Pools all finite values of `series`. An empty pool yields scale 0.
    pub fn pooled(series: &[MetricSeries], mode: NormalizeMode) -> Self {
        let values = || {
            series
                .iter()
                .flat_map(|s| s.values.iter().copied())
                .filter(|v| v.is_finite())
        };
        let (center, scale) = match mode {
            NormalizeMode::Zscore => {
                let n = values().count();
                if n == 0 {
                    (0.0, 0.0)
                } else {
                    let mean = values().sum::<f64>() / n as f64;
                    let var = values().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                    (mean, var.sqrt())
                }
            }
            NormalizeMode::Minmax => {
                let lo = values().fold(f64::INFINITY, f64::min);
                let hi = values().fold(f64::NEG_INFINITY, f64::max);
                if lo.is_finite() {
                    (lo, hi - lo)
                } else {
                    (0.0, 0.0)
                }
            }
        };
        NormStats {
            mode,
            center,
            scale,
        }
    }
}

/// Normalizes one series with pooled statistics. When the pooled scale is
/// zero the values pass through unchanged and the flag is `true`.
pub fn znormalize(series: &MetricSeries, stats: &NormStats) -> (MetricSeries, bool) {
    if !(stats.scale > 0.0) {
        return (series.clone(), true);
    }
    let values = series
        .values
        .iter()
        .map(|v| (v - stats.center) / stats.scale)
        .collect();
    (
        MetricSeries {
            values,
            ..series.clone()
        },
        false,
    )
}

/// Normalizes a whole corpus of one metric against its own pooled statistics.
pub fn normalize_corpus(series: &[MetricSeries], mode: NormalizeMode) -> (Vec<MetricSeries>, bool) {
    let stats = NormStats::pooled(series, mode);
    let mut passthrough = false;
    let out = series
        .iter()
        .map(|s| {
            let (n, flag) = znormalize(s, &stats);
            passthrough |= flag;
            n
        })
        .collect();
    (out, passthrough)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(id: &str, v: &[f64]) -> MetricSeries {
        MetricSeries::new(id, "m", v.to_vec())
    }

    #[test]
    fn arithmetic_example() {
        let stats = NormStats {
            mode: NormalizeMode::Zscore,
            center: 1.0,
            scale: 1.0,
        };
        let (out, flag) = znormalize(&series("p", &[0.0, 1.0, 2.0]), &stats);
        assert!(!flag);
        assert_eq!(out.values, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_corpus_passes_through() {
        let corpus = vec![series("a", &[3.0, 3.0]), series("b", &[3.0])];
        let (out, flag) = normalize_corpus(&corpus, NormalizeMode::Zscore);
        assert!(flag);
        assert_eq!(out, corpus);
        let (_, flag) = normalize_corpus(&corpus, NormalizeMode::Minmax);
        assert!(flag);
    }

    #[test]
    fn renormalizing_is_idempotent() {
        let corpus = vec![series("a", &[0.3, 1.7, -2.0]), series("b", &[5.0, 4.5])];
        let (once, _) = normalize_corpus(&corpus, NormalizeMode::Zscore);
        let (twice, _) = normalize_corpus(&once, NormalizeMode::Zscore);
        for (a, b) in once.iter().zip(&twice) {
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let (mm, _) = normalize_corpus(&corpus, NormalizeMode::Minmax);
        let all: Vec<f64> = mm.iter().flat_map(|s| s.values.clone()).collect();
        assert_eq!(all.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
        assert_eq!(all.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 1.0);
    }
}
