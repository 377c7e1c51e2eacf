//! Seeded generators with known ground truth: Markov scanpaths, novice to
//! expert drift, planted metric clusters and complete synthetic cohorts.
//!
//! Under the default merged collapse policy a repeated AOI disappears, so the
//! chain that the metrics observe is the generating chain conditioned on
//! leaving the current state:
//!
//! ```text
//! P'_ij = P_ij / (1 - P_ii)   for i != j,   P'_ii = 0
//! ```
//!
//! [`merged_chain`] applies this, and analytic oracles such as
//! [`chain_transition_entropy`] are stated for the merged chain.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FixationRecord, TrialOutcome};
use crate::tsc::MetricSeries;

/// Tolerance on row sums of transition matrices and initial distributions.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

/// AOI labels `A..Z`, then `AA, AB, ...`.
pub fn aoi_labels(n: usize) -> Vec<String> {
    (0..n)
        .map(|mut i| {
            let mut s = Vec::new();
            loop {
                s.push(b'A' + (i % 26) as u8);
                if i < 26 {
                    break;
                }
                i = i / 26 - 1;
            }
            s.reverse();
            String::from_utf8(s).expect("ascii")
        })
        .collect()
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::Validation(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
        return Err(Error::Validation(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

fn check_matrix(p: &[Vec<f64>]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Validation("transition matrix has no states".into()));
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != p.len() {
            return Err(Error::Validation(format!(
                "transition matrix row {i} has the wrong length"
            )));
        }
        check_distribution(row, &format!("transition matrix row {i}"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanpathGenerator {
    pub aois: Vec<String>,
    pub p: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub steps: usize,
    pub seed: u64,
}

impl ScanpathGenerator {
    /// Generator with labels from [`aoi_labels`] and a uniform start.
    pub fn new(p: Vec<Vec<f64>>, steps: usize, seed: u64) -> Result<Self> {
        let n = p.len();
        let g = ScanpathGenerator {
            aois: aoi_labels(n),
            initial: vec![1.0 / n.max(1) as f64; n],
            p,
            steps,
            seed,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        check_matrix(&self.p)?;
        if self.aois.len() != self.p.len() || self.initial.len() != self.p.len() {
            return Err(Error::Validation("generator dimensions disagree".into()));
        }
        check_distribution(&self.initial, "initial distribution")?;
        if self.steps == 0 {
            return Err(Error::Validation(
                "generator needs at least one step".into(),
            ));
        }
        Ok(())
    }
}

fn draw(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}

fn sample_states(
    p: &[Vec<f64>],
    initial: &[f64],
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut seq = Vec::with_capacity(steps);
    let mut s = draw(initial, rng);
    seq.push(s);
    for _ in 1..steps {
        s = draw(&p[s], rng);
        seq.push(s);
    }
    seq
}

/// `steps` AOI labels sampled from the chain, before any collapsing.
pub fn markov_scanpath(gen: &ScanpathGenerator) -> Result<Vec<String>> {
    gen.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    Ok(sample_states(&gen.p, &gen.initial, gen.steps, &mut rng)
        .into_iter()
        .map(|s| gen.aois[s].clone())
        .collect())
}

/// The chain observed after merging repeats. Absorbing states become sinks
/// (all-zero rows).
pub fn merged_chain(p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    p.iter()
        .enumerate()
        .map(|(i, row)| {
            let leave = 1.0 - row[i];
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    if i == j || leave <= 0.0 {
                        0.0
                    } else {
                        v / leave
                    }
                })
                .collect()
        })
        .collect()
}

/// Stationary distribution by power iteration on the lazy chain `(I + P) / 2`.
pub fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..100_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += 0.5 * pi[i] * p[i][j];
            }
            next[i] += 0.5 * pi[i];
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if delta < 1e-15 {
            break;
        }
    }
    pi
}

/// Transition entropy of the merged chain under its stationary distribution.
pub fn chain_transition_entropy(p: &[Vec<f64>]) -> f64 {
    let m = merged_chain(p);
    let pi = stationary_distribution(&m);
    -m.iter()
        .zip(&pi)
        .map(|(row, &w)| {
            w * row
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>()
        })
        .sum::<f64>()
}

/// Evenly spaced schedule from 0 to 1 over `trials` entries.
pub fn linear_schedule(trials: usize) -> Vec<f64> {
    match trials {
        0 => Vec::new(),
        1 => vec![0.0],
        t => (0..t).map(|i| i as f64 / (t - 1) as f64).collect(),
    }
}

fn mix(novice: &[Vec<f64>], expert: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    novice
        .iter()
        .zip(expert)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (1.0 - s) * x + s * y)
                .collect()
        })
        .collect()
}

/// One scanpath per schedule entry `s_t`, sampled from
/// `(1 - s_t) * novice + s_t * expert` with `steps` fixations and a uniform
/// start. Trial `t` uses stream `t` of the generator keyed by `seed`.
pub fn expertise_trajectory(
    novice: &[Vec<f64>],
    expert: &[Vec<f64>],
    schedule: &[f64],
    steps: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    check_matrix(novice)?;
    check_matrix(expert)?;
    if novice.len() != expert.len() {
        return Err(Error::Validation(
            "novice and expert chains differ in size".into(),
        ));
    }
    if steps == 0 {
        return Err(Error::Validation(
            "trajectory needs at least one step".into(),
        ));
    }
    if let Some(s) = schedule.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Validation(format!(
            "schedule value {s} outside [0, 1]"
        )));
    }
    let labels = aoi_labels(novice.len());
    let initial = vec![1.0 / novice.len() as f64; novice.len()];
    Ok(schedule
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            sample_states(&mix(novice, expert, s), &initial, steps, &mut rng)
                .into_iter()
                .map(|i| labels[i].clone())
                .collect()
        })
        .collect())
}

/// Uniform chain over `n` states, self-transitions included.
pub fn uniform_chain(n: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / n as f64; n]; n]
}

/// Cyclic chain `i -> i+1` with probability `stay`, the rest spread evenly
/// over the other states.
pub fn cyclic_chain(n: usize, stay: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let rest = if n > 1 {
                (1.0 - stay) / (n - 1) as f64
            } else {
                0.0
            };
            (0..n)
                .map(|j| if j == (i + 1) % n { stay } else { rest })
                .collect()
        })
        .collect()
}

/// Constant-plus-Gaussian-noise series around each level, with lengths drawn
/// uniformly from `lengths`. Ids are `L{level}_{member}`; the truth maps each
/// id to its level index.
pub fn planted_cluster_series(
    levels: &[f64],
    per_level: usize,
    lengths: (usize, usize),
    noise_sd: f64,
    seed: u64,
) -> Result<(Vec<MetricSeries>, BTreeMap<String, usize>)> {
    if lengths.0 == 0 || lengths.0 > lengths.1 {
        return Err(Error::Validation(format!(
            "invalid length range {lengths:?}"
        )));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::new();
    let mut truth = BTreeMap::new();
    for (l, &level) in levels.iter().enumerate() {
        for m in 0..per_level {
            let id = format!("L{l}_{m:03}");
            let len = rng.random_range(lengths.0..=lengths.1);
            let values = (0..len).map(|_| level + noise.sample(&mut rng)).collect();
            series.push(MetricSeries::new(id.clone(), "planted", values));
            truth.insert(id, l);
        }
    }
    Ok((series, truth))
}

/// Settings for a synthetic cohort in the ingest schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub participants: usize,
    pub groups: usize,
    pub semesters: usize,
    pub trials_per_semester: usize,
    pub aois: usize,
    pub min_fixations: usize,
    pub max_fixations: usize,
    /// Mean normalized score of group 0; group `g` adds `g * bfd_shift`.
    pub base_bfd: f64,
    pub bfd_shift: f64,
    pub anomalies_total: u32,
    /// Expert-chain weight added per group index.
    pub group_expertise: f64,
    /// Expert-chain weight gained from the first to the last trial.
    pub drift: f64,
    /// Probability of the cyclic step in the expert chain.
    pub expert_stay: f64,
    pub min_duration_ms: u64,
    pub max_duration_ms: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            participants: 12,
            groups: 2,
            semesters: 3,
            trials_per_semester: 4,
            aois: 10,
            min_fixations: 6,
            max_fixations: 40,
            base_bfd: 0.4,
            bfd_shift: 0.2,
            anomalies_total: 20,
            group_expertise: 0.5,
            drift: 0.4,
            expert_stay: 0.95,
            min_duration_ms: 100,
            max_duration_ms: 600,
        }
    }
}

/// Ground truth of one synthetic participant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub participant_id: String,
    pub group: usize,
    pub bfd_mean: f64,
    pub expertise_start: f64,
    pub expertise_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub fixations: Vec<FixationRecord>,
    pub outcomes: Vec<TrialOutcome>,
    pub truth: Vec<TruthRow>,
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.participants == 0
            || self.groups == 0
            || self.semesters == 0
            || self.trials_per_semester == 0
        {
            return bad("participants, groups, semesters and trials_per_semester must be positive");
        }
        if self.aois < 2 {
            return bad("at least two AOIs are needed");
        }
        if self.min_fixations == 0 || self.min_fixations > self.max_fixations {
            return bad("invalid fixation count range");
        }
        if self.min_duration_ms == 0 || self.min_duration_ms > self.max_duration_ms {
            return bad("invalid duration range");
        }
        if self.anomalies_total == 0 {
            return bad("anomalies_total must be positive");
        }
        let top = self.base_bfd + (self.groups - 1) as f64 * self.bfd_shift;
        if !(0.0..=1.0).contains(&self.base_bfd) || !(0.0..=1.0).contains(&top) {
            return bad("group score means must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.expert_stay) {
            return bad("expert_stay must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Cohort in which participant `i` belongs to group `i % groups`. A group's
/// scanpaths mix the uniform novice chain with the cyclic expert chain at
/// weight `group * group_expertise`, rising by `drift` over the trials
/// (clamped to `[0, 1]`); its scores are Binomial with mean
/// `base_bfd + group * bfd_shift`.
pub fn synth_cohort(cfg: &CohortConfig, seed: u64) -> Result<Cohort> {
    cfg.validate()?;
    let novice = uniform_chain(cfg.aois);
    let expert = cyclic_chain(cfg.aois, cfg.expert_stay);
    let labels = aoi_labels(cfg.aois);
    let trials = cfg.semesters * cfg.trials_per_semester;
    let width = cfg.participants.to_string().len().max(2);
    let mut fixations = Vec::new();
    let mut outcomes = Vec::new();
    let mut truth = Vec::new();
    for i in 0..cfg.participants {
        let id = format!("P{:0width$}", i + 1);
        let group = i % cfg.groups;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let offset = group as f64 * cfg.group_expertise;
        let weight = |t: usize| {
            let frac = if trials > 1 {
                t as f64 / (trials - 1) as f64
            } else {
                0.0
            };
            (offset + cfg.drift * frac).clamp(0.0, 1.0)
        };
        let bfd_mean = cfg.base_bfd + group as f64 * cfg.bfd_shift;
        let found = Binomial::new(cfg.anomalies_total as u64, bfd_mean)
            .map_err(|e| Error::Config(e.to_string()))?;
        let initial = vec![1.0 / cfg.aois as f64; cfg.aois];
        for t in 0..trials {
            let (sem, opt) = (t / cfg.trials_per_semester, t % cfg.trials_per_semester);
            let chain = mix(&novice, &expert, weight(t));
            let steps = rng.random_range(cfg.min_fixations..=cfg.max_fixations);
            let mut start = 0u64;
            for (k, s) in sample_states(&chain, &initial, steps, &mut rng)
                .into_iter()
                .enumerate()
            {
                let duration = rng.random_range(cfg.min_duration_ms..=cfg.max_duration_ms);
                fixations.push(FixationRecord {
                    participant_id: id.clone(),
                    semester: sem as u32 + 1,
                    session_index: sem as u32,
                    opt_index: opt as u32,
                    fixation_index: k as u32,
                    aoi_id: labels[s].clone(),
                    start_ms: start,
                    duration_ms: duration,
                });
                start += duration + rng.random_range(20..=60);
            }
            let hits = found.sample(&mut rng) as u32;
            outcomes.push(TrialOutcome {
                participant_id: id.clone(),
                semester: sem as u32 + 1,
                session_index: sem as u32,
                opt_index: opt as u32,
                anomalies_found: Some(hits),
                anomalies_total: Some(cfg.anomalies_total),
                bfd_normalized: Some(hits as f64 / cfg.anomalies_total as f64),
            });
        }
        truth.push(TruthRow {
            participant_id: id,
            group,
            bfd_mean,
            expertise_start: weight(0),
            expertise_end: weight(trials - 1),
        });
    }
    Ok(Cohort {
        fixations,
        outcomes,
        truth,
    })
}
