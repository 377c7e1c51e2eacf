use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::dba::{dba_refine, median_length, resample, DbaConfig};
use super::dtw::{dtw_distance, dtw_squared};
use super::MetricSeries;
use crate::error::{Error, Result};

/// Mean silhouette below which a clustering is reported as low-confidence.
pub const LOW_CONFIDENCE_SILHOUETTE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Sakoe-Chiba radius used for every DTW evaluation.
    pub band: Option<usize>,
    pub dba: DbaConfig,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 2,
            restarts: 10,
            max_iter: 50,
            seed: 0,
            band: None,
            dba: DbaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringResult {
    pub metric: String,
    pub k: usize,
    /// Participant to cluster id in `0..k`, ids ordered by ascending centroid mean.
    pub assignments: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Total squared DTW distance to the assigned centroids.
    pub inertia: f64,
    /// Mean DTW silhouette over clustered participants.
    pub silhouette: f64,
    pub sample_silhouettes: BTreeMap<String, f64>,
    pub seed: u64,
    pub restarts: usize,
    /// Participants whose series were too short or non-finite.
    pub unclustered: Vec<String>,
    /// All pairwise distances are zero.
    pub degenerate: bool,
    pub low_confidence: bool,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

struct Prepared<'a> {
    metric: String,
    ids: Vec<&'a str>,
    values: Vec<&'a [f64]>,
    unclustered: Vec<String>,
    pairwise: Vec<Vec<f64>>,
    length: usize,
}

fn prepare<'a>(series: &'a [MetricSeries], band: Option<usize>) -> Result<Prepared<'a>> {
    let mut seen = BTreeSet::new();
    for s in series {
        if !seen.insert(s.participant_id.as_str()) {
            return Err(Error::Validation(format!(
                "participant `{}` has more than one series",
                s.participant_id
            )));
        }
    }
    let mut eligible: Vec<&MetricSeries> = series.iter().filter(|s| s.is_eligible()).collect();
    eligible.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    let mut unclustered: Vec<String> = series
        .iter()
        .filter(|s| !s.is_eligible())
        .map(|s| s.participant_id.clone())
        .collect();
    unclustered.sort();
    let values: Vec<&[f64]> = eligible.iter().map(|s| s.values.as_slice()).collect();
    let pairwise = (0..values.len())
        .into_par_iter()
        .map(|i| {
            (0..values.len())
                .map(|j| {
                    if i == j {
                        Ok(0.0)
                    } else {
                        dtw_distance(values[i], values[j], band)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        metric: series.first().map(|s| s.metric.clone()).unwrap_or_default(),
        ids: eligible.iter().map(|s| s.participant_id.as_str()).collect(),
        length: median_length(&values),
        values,
        unclustered,
        pairwise,
    })
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    history: Vec<f64>,
}

fn distances(
    prep: &Prepared,
    centroids: &[Vec<f64>],
    band: Option<usize>,
) -> Result<Vec<Vec<f64>>> {
    prep.values
        .par_iter()
        .map(|x| {
            centroids
                .iter()
                .map(|c| dtw_squared(x, c, band))
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Nearest centroid; a tie keeps the current label, otherwise the lowest id.
fn assign(dist: &[Vec<f64>], current: Option<&[usize]>) -> Vec<usize> {
    dist.iter()
        .enumerate()
        .map(|(i, row)| {
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] < row[best] {
                    best = c;
                }
            }
            match current {
                Some(cur) if row[cur[i]] <= row[best] => cur[i],
                _ => best,
            }
        })
        .collect()
}

/// Moves the farthest point of a multi-member cluster into each empty one,
/// using that point's own series as the new centroid.
fn reseed_empty(
    prep: &Prepared,
    labels: &mut [usize],
    centroids: &mut [Vec<f64>],
    dist: &mut [Vec<f64>],
    band: Option<usize>,
) -> Result<()> {
    let k = centroids.len();
    for _ in 0..k {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return Ok(());
        };
        let far = (0..labels.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[b][labels[b]] >= dist[i][labels[i]] => Some(b),
                _ => Some(i),
            })
            .ok_or_else(|| Error::Numerical("cannot reseed an empty cluster".into()))?;
        centroids[empty] = prep.values[far].to_vec();
        for (i, row) in dist.iter_mut().enumerate() {
            row[empty] = dtw_squared(prep.values[i], &centroids[empty], band)?;
        }
        labels[far] = empty;
    }
    Ok(())
}

fn total(dist: &[Vec<f64>], labels: &[usize]) -> f64 {
    dist.iter().zip(labels).map(|(row, &l)| row[l]).sum()
}

fn plus_plus_seeds(prep: &Prepared, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = prep.values.len();
    let mut centers = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| prep.pairwise[i][centers[0]].powi(2))
        .collect();
    while centers.len() < k {
        let mass: f64 = d2.iter().sum();
        let next = if mass > 0.0 {
            let target = rng.random::<f64>() * mass;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.unwrap_or(0)
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !centers.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        centers.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(prep.pairwise[i][next].powi(2));
        }
    }
    centers
}

fn run_once(prep: &Prepared, cfg: &KMeansConfig, restart: usize) -> Result<Run> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let dba = DbaConfig {
        band: cfg.band,
        ..cfg.dba
    };
    let mut centroids: Vec<Vec<f64>> = plus_plus_seeds(prep, cfg.k, &mut rng)
        .into_iter()
        .map(|c| resample(prep.values[c], prep.length))
        .collect();
    let mut dist = distances(prep, &centroids, cfg.band)?;
    let mut labels = assign(&dist, None);
    reseed_empty(prep, &mut labels, &mut centroids, &mut dist, cfg.band)?;
    let mut inertia = total(&dist, &labels);
    let mut history = vec![inertia];
    for _ in 0..cfg.max_iter {
        centroids = (0..cfg.k)
            .into_par_iter()
            .map(|c| {
                let members: Vec<&[f64]> = labels
                    .iter()
                    .zip(&prep.values)
                    .filter(|(&l, _)| l == c)
                    .map(|(_, v)| *v)
                    .collect();
                dba_refine(&members, centroids[c].clone(), &dba).map(|r| r.centroid)
            })
            .collect::<Result<Vec<_>>>()?;
        dist = distances(prep, &centroids, cfg.band)?;
        let mut next = assign(&dist, Some(&labels));
        reseed_empty(prep, &mut next, &mut centroids, &mut dist, cfg.band)?;
        let next_inertia = total(&dist, &next);
        history.push(next_inertia);
        let stable = next == labels && inertia - next_inertia < dba.tol;
        labels = next;
        inertia = next_inertia;
        if stable {
            break;
        }
    }
    Ok(Run {
        labels,
        centroids,
        inertia,
        history,
    })
}

/// Silhouette per sample from a precomputed distance matrix. Singletons
/// and `0 / 0` cases score 0.
pub fn silhouette_samples(pairwise: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<f64> {
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    (0..labels.len())
        .map(|i| {
            let own = labels[i];
            if sizes[own] <= 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for (j, &l) in labels.iter().enumerate() {
                if j != i {
                    sums[l] += pairwise[i][j];
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 && denom.is_finite() {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect()
}

/// k-means under DTW with k-means++ seeding and DBA centroid updates.
///
/// Eligible series (length >= 2, finite) are processed in participant-id
/// order, so the result does not depend on input order. Initial centroids
/// have the median eligible length. Each restart draws from its own stream
/// of a ChaCha8 generator keyed by `cfg.seed`; the lowest-inertia restart
/// wins, ties going to the earliest.
pub fn kmeans_dtw(series: &[MetricSeries], cfg: &KMeansConfig) -> Result<ClusteringResult> {
    if cfg.k < 2 {
        return Err(Error::Config(format!(
            "k must be at least 2, got {}",
            cfg.k
        )));
    }
    if cfg.restarts == 0 {
        return Err(Error::Config("restarts must be at least 1".into()));
    }
    let prep = prepare(series, cfg.band)?;
    cluster_prepared(&prep, cfg)
}

fn cluster_prepared(prep: &Prepared, cfg: &KMeansConfig) -> Result<ClusteringResult> {
    let n = prep.values.len();
    if n < cfg.k {
        return Err(Error::Validation(format!(
            "metric `{}`: {n} eligible series, fewer than k = {}",
            prep.metric, cfg.k
        )));
    }
    let runs = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_once(prep, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("at least one restart");

    let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
    let mut order: Vec<usize> = (0..cfg.k).collect();
    order.sort_by(|&a, &b| {
        mean(&best.centroids[a])
            .total_cmp(&mean(&best.centroids[b]))
            .then(a.cmp(&b))
    });
    let mut relabel = vec![0; cfg.k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let labels: Vec<usize> = best.labels.iter().map(|&l| relabel[l]).collect();
    let centroids: Vec<Vec<f64>> = order
        .iter()
        .map(|&old| best.centroids[old].clone())
        .collect();

    let samples = silhouette_samples(&prep.pairwise, &labels, cfg.k);
    let silhouette = samples.iter().sum::<f64>() / n as f64;
    let degenerate = prep.pairwise.iter().flatten().all(|&d| d == 0.0);
    Ok(ClusteringResult {
        metric: prep.metric.clone(),
        k: cfg.k,
        assignments: prep
            .ids
            .iter()
            .map(|id| id.to_string())
            .zip(labels)
            .collect(),
        centroids,
        inertia: best.inertia,
        silhouette,
        sample_silhouettes: prep
            .ids
            .iter()
            .map(|id| id.to_string())
            .zip(samples)
            .collect(),
        seed: cfg.seed,
        restarts: cfg.restarts,
        unclustered: prep.unclustered.clone(),
        degenerate,
        low_confidence: degenerate || silhouette < LOW_CONFIDENCE_SILHOUETTE,
        inertia_history: best.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub chosen: ClusteringResult,
    /// Mean silhouette for each candidate that could be fitted.
    pub scores: Vec<(usize, f64)>,
    /// Candidates skipped for having more clusters than eligible series.
    pub skipped: Vec<usize>,
}

/// Fits every candidate k and keeps the highest mean silhouette; ties go
/// to the smaller k. Candidates above the eligible count are skipped.
pub fn select_k(
    series: &[MetricSeries],
    candidates: &[usize],
    cfg: &KMeansConfig,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Config("no k candidates given".into()));
    }
    let mut ks: Vec<usize> = candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if let Some(&k) = ks.iter().find(|&&k| k < 2) {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    let prep = prepare(series, cfg.band)?;
    let n = prep.values.len();
    let (fit, skipped): (Vec<usize>, Vec<usize>) = ks.iter().partition(|&&k| k <= n);
    if fit.is_empty() {
        return Err(Error::Validation(format!(
            "metric `{}`: {n} eligible series, fewer than every k candidate",
            prep.metric
        )));
    }
    let mut results = fit
        .iter()
        .map(|&k| cluster_prepared(&prep, &KMeansConfig { k, ..*cfg }))
        .collect::<Result<Vec<_>>>()?;
    let scores = results.iter().map(|r| (r.k, r.silhouette)).collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.silhouette > results[best].silhouette {
            best = i;
        }
    }
    Ok(Selection {
        chosen: results.swap_remove(best),
        scores,
        skipped,
    })
}
