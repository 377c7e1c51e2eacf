//! File-based batch stages: metrics, clustering, ANOVA, mixed model and
//! synthetic cohorts.
//!
//! Every stage reads its inputs from files, writes its outputs under
//! `out_dir`, and only renames them into place once the whole stage has
//! succeeded. All outputs are CSV with a schema comment line that records
//! the root seed. Work is parallel inside a stage, and every collection is
//! ordered, so outputs do not depend on the thread count.

mod config;
mod output;
mod tables;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rayon::prelude::*;

pub use config::{
    ClusteringSection, InputSection, KSetting, LmmSection, MetricsSection, NetworkSection,
    PipelineConfig, MAX_K,
};
pub use output::{csv_document, header_line, OutputSet, SCHEMA_VERSION};
pub use tables::{
    metric_series, metrics_header, read_clusters_file, read_metrics, read_metrics_file, ClusterRow,
    MetricsRow,
};

use crate::error::{Error, Result};
use crate::graph::{build_network, to_node_link};
use crate::ingest::{load_trials, write_fixations, write_outcomes};
use crate::metrics::{compute_all, Metric};
use crate::stats::{
    build_design, display_name, oneway_anova, reml_fit, wald_tests, AnovaResult, ClusterStats,
    DesignRow,
};
use crate::synth::synth_cohort;
use crate::tsc::{kmeans_dtw, normalize_corpus, select_k, NormStats, Selection};
use output::{fmt_f64, fmt_opt};
use tables::{metrics_record, read_scores, tag, TrialTag, CLUSTER_HEADER};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const CENTROIDS_FILE: &str = "centroids.csv";
pub const CLUSTER_SUMMARY_FILE: &str = "cluster_summary.csv";
pub const ANOVA_FILE: &str = "anova.csv";
pub const LMM_FILE: &str = "lmm.csv";
pub const FIXATIONS_FILE: &str = "fixations.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const TRUTH_FILE: &str = "truth.csv";

/// Files written by a stage and non-fatal remarks for the user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageReport {
    pub written: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl StageReport {
    fn extend(&mut self, other: StageReport) {
        self.written.extend(other.written);
        self.notes.extend(other.notes);
    }
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(f)
}

/// Per-trial metrics of the configured fixation log, plus node-link exports
/// when enabled.
pub fn cmd_metrics(cfg: &PipelineConfig) -> Result<StageReport> {
    cfg.validate()?;
    in_pool(cfg.jobs, || {
        let outcomes = cfg.input.outcomes.as_deref();
        let trials = load_trials(cfg.fixations_path()?, outcomes, cfg.csv_format()?)?;
        if trials.is_empty() {
            return Err(Error::NoTrials);
        }
        let net_cfg = cfg.network_config();
        let m_cfg = cfg.metrics_config();
        let entries: Vec<_> = trials.trials.iter().collect();
        let computed = entries
            .par_iter()
            .map(|(key, trial)| {
                let net = build_network(&trial.scanpath, &net_cfg)?.with_trial((*key).clone());
                let mut metrics = compute_all(&net, &m_cfg)?;
                metrics.trial = Some((*key).clone());
                let json = cfg.network.export_networks.then(|| to_node_link(&net));
                Ok((
                    MetricsRow {
                        key: (*key).clone(),
                        metrics,
                        bfd: trial.bfd,
                    },
                    json,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut out = OutputSet::new(&cfg.out_dir)?;
        let records: Vec<Vec<String>> = computed.iter().map(|(r, _)| metrics_record(r)).collect();
        out.write(
            METRICS_FILE,
            &csv_document("metrics", cfg.seed, &metrics_header(), &records)?,
        )?;
        for (row, json) in &computed {
            if let Some(json) = json {
                out.write(
                    &format!("networks/{}.json", row.key.label()),
                    json.as_bytes(),
                )?;
            }
        }
        let degenerate = computed
            .iter()
            .filter(|(r, _)| !r.metrics.degenerate.is_empty())
            .count();
        let mut notes = trials.warnings.clone();
        notes.push(format!(
            "{} trials, {degenerate} with degenerate metrics",
            computed.len()
        ));
        Ok(StageReport {
            written: out.commit()?,
            notes,
        })
    })
}

/// Clustering of one metric, or why it was skipped.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricClustering {
    Done {
        selection: Selection,
        passthrough: bool,
    },
    Skipped {
        reason: String,
        n_unclustered: usize,
    },
}

/// Normalizes each configured metric over the corpus and clusters the
/// per-participant series.
pub fn cluster_metrics(
    rows: &[MetricsRow],
    cfg: &PipelineConfig,
) -> Result<Vec<(Metric, MetricClustering)>> {
    let c = &cfg.clustering;
    c.metrics
        .par_iter()
        .map(|&metric| {
            let (series, passthrough) = normalize_corpus(&metric_series(rows, metric), c.normalize);
            let eligible = series.iter().filter(|s| s.is_eligible()).count();
            let needed = match c.k {
                KSetting::Fixed(k) => k,
                KSetting::Auto => *c.candidates.iter().min().expect("validated non-empty"),
            };
            if eligible < needed {
                return Ok((
                    metric,
                    MetricClustering::Skipped {
                        reason: format!("{eligible} eligible participants, {needed} needed"),
                        n_unclustered: series.len() - eligible,
                    },
                ));
            }
            let selection = match c.k {
                KSetting::Fixed(k) => {
                    let chosen = kmeans_dtw(&series, &cfg.kmeans_config(k))?;
                    Selection {
                        scores: vec![(k, chosen.silhouette)],
                        chosen,
                        skipped: Vec::new(),
                    }
                }
                KSetting::Auto => select_k(&series, &c.candidates, &cfg.kmeans_config(2))?,
            };
            Ok((
                metric,
                MetricClustering::Done {
                    selection,
                    passthrough,
                },
            ))
        })
        .collect()
}

/// `clusters.csv`, `centroids.csv` and `cluster_summary.csv` from `metrics.csv`.
pub fn cmd_cluster(cfg: &PipelineConfig) -> Result<StageReport> {
    cfg.validate()?;
    in_pool(cfg.jobs, || {
        let rows = read_metrics_file(&cfg.out_dir.join(METRICS_FILE))?;
        if rows.is_empty() {
            return Err(Error::NoTrials);
        }
        let results = cluster_metrics(&rows, cfg)?;
        let mut clusters = Vec::new();
        let mut centroids = Vec::new();
        let mut summary = Vec::new();
        let mut notes = Vec::new();
        for (metric, result) in &results {
            match result {
                MetricClustering::Done {
                    selection,
                    passthrough,
                } => {
                    let r = &selection.chosen;
                    for (pid, &cl) in &r.assignments {
                        clusters.push(vec![
                            metric.to_string(),
                            pid.clone(),
                            cl.to_string(),
                            fmt_f64(r.sample_silhouettes[pid]),
                        ]);
                    }
                    for (cl, centroid) in r.centroids.iter().enumerate() {
                        for (pos, v) in centroid.iter().enumerate() {
                            centroids.push(vec![
                                metric.to_string(),
                                cl.to_string(),
                                pos.to_string(),
                                fmt_f64(*v),
                            ]);
                        }
                    }
                    let scores: Vec<String> = selection
                        .scores
                        .iter()
                        .map(|(k, s)| format!("{k}:{}", fmt_f64(*s)))
                        .collect();
                    let mut reasons = Vec::new();
                    if r.degenerate {
                        reasons.push("all series coincide".to_string());
                    } else if r.low_confidence {
                        reasons.push("weak cluster structure".to_string());
                    }
                    if *passthrough {
                        reasons.push("zero variance, not normalized".to_string());
                    }
                    if !selection.skipped.is_empty() {
                        let ks: Vec<String> =
                            selection.skipped.iter().map(|k| k.to_string()).collect();
                        reasons.push(format!("k {} exceeds eligible participants", ks.join("|")));
                    }
                    if r.low_confidence {
                        notes.push(format!(
                            "{metric}: low-confidence clustering (silhouette {})",
                            r.silhouette
                        ));
                    }
                    summary.push(vec![
                        metric.to_string(),
                        "clustered".into(),
                        r.k.to_string(),
                        fmt_f64(r.silhouette),
                        fmt_f64(r.inertia),
                        r.assignments.len().to_string(),
                        r.unclustered.len().to_string(),
                        r.low_confidence.to_string(),
                        r.degenerate.to_string(),
                        passthrough.to_string(),
                        scores.join("|"),
                        reasons.join("; "),
                    ]);
                }
                MetricClustering::Skipped {
                    reason,
                    n_unclustered,
                } => {
                    notes.push(format!("{metric}: skipped, {reason}"));
                    summary.push(vec![
                        metric.to_string(),
                        "skipped".into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        "0".into(),
                        n_unclustered.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        reason.clone(),
                    ]);
                }
            }
        }
        let mut out = OutputSet::new(&cfg.out_dir)?;
        out.write(
            CLUSTERS_FILE,
            &csv_document("clusters", cfg.seed, &CLUSTER_HEADER, &clusters)?,
        )?;
        out.write(
            CENTROIDS_FILE,
            &csv_document(
                "centroids",
                cfg.seed,
                &["metric", "cluster_id", "position_index", "value"],
                &centroids,
            )?,
        )?;
        out.write(
            CLUSTER_SUMMARY_FILE,
            &csv_document(
                "cluster_summary",
                cfg.seed,
                &[
                    "metric",
                    "status",
                    "k",
                    "silhouette",
                    "inertia",
                    "n_clustered",
                    "n_unclustered",
                    "low_confidence",
                    "degenerate",
                    "normalization_passthrough",
                    "candidate_silhouettes",
                    "note",
                ],
                &summary,
            )?,
        )?;
        Ok(StageReport {
            written: out.commit()?,
            notes,
        })
    })
}

/// Scores by trial: from the outcomes file when one is configured, else the
/// `bfd` column of `metrics.csv`.
fn scores(cfg: &PipelineConfig, rows: &[MetricsRow]) -> Result<BTreeMap<TrialTag, f64>> {
    match cfg.input.outcomes.as_deref() {
        Some(path) => read_scores(path, cfg.csv_format()?),
        None => Ok(rows
            .iter()
            .filter_map(|r| r.bfd.map(|b| (tag(&r.key), b)))
            .collect()),
    }
}

/// Cluster-level ANOVA of trial scores for every clustered metric.
pub fn anova_results(
    rows: &[MetricsRow],
    clusters: &[ClusterRow],
    scores: &BTreeMap<TrialTag, f64>,
    cfg: &PipelineConfig,
) -> Result<Vec<AnovaResult>> {
    let mut metrics: Vec<Metric> = Vec::new();
    let mut assign: BTreeMap<Metric, BTreeMap<&str, usize>> = BTreeMap::new();
    for c in clusters {
        if !metrics.contains(&c.metric) {
            metrics.push(c.metric);
        }
        assign
            .entry(c.metric)
            .or_default()
            .insert(c.participant_id.as_str(), c.cluster_id);
    }
    metrics
        .iter()
        .map(|&metric| {
            let labels = &assign[&metric];
            let k = labels.values().max().map_or(0, |m| m + 1);
            let stats = NormStats::pooled(&metric_series(rows, metric), cfg.clustering.normalize);
            let mut values = vec![Vec::new(); k];
            let mut bfd = vec![Vec::new(); k];
            let mut sizes = vec![0usize; k];
            labels.values().for_each(|&c| sizes[c] += 1);
            for r in rows {
                let Some(&c) = labels.get(r.key.participant_id.as_str()) else {
                    continue;
                };
                let raw = r.metrics.get(metric);
                values[c].push(if stats.scale > 0.0 {
                    (raw - stats.center) / stats.scale
                } else {
                    raw
                });
                if let Some(&s) = scores.get(&tag(&r.key)) {
                    bfd[c].push(s);
                }
            }
            let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
            let cluster_stats = (0..k)
                .map(|c| ClusterStats {
                    size: sizes[c],
                    metric_mean: mean(&values[c]).unwrap_or(f64::NAN),
                    bfd_mean: mean(&bfd[c]),
                    scored: bfd[c].len(),
                })
                .collect();
            let groups: Vec<Vec<f64>> = bfd.into_iter().filter(|g| !g.is_empty()).collect();
            let total: usize = groups.iter().map(Vec::len).sum();
            let test = if groups.len() >= 2 && total > groups.len() {
                Some(oneway_anova(&groups)?)
            } else {
                None
            };
            Ok(AnovaResult {
                metric: metric.to_string(),
                clusters: cluster_stats,
                test,
            })
        })
        .collect()
}

/// `anova.csv`: per-cluster normalized metric and score means with F and p.
pub fn cmd_anova(cfg: &PipelineConfig) -> Result<StageReport> {
    cfg.validate()?;
    let rows = read_metrics_file(&cfg.out_dir.join(METRICS_FILE))?;
    let clusters = read_clusters_file(&cfg.out_dir.join(CLUSTERS_FILE))?;
    let scores = scores(cfg, &rows)?;
    let results = anova_results(&rows, &clusters, &scores, cfg)?;
    let width = results
        .iter()
        .map(|r| r.clusters.len())
        .max()
        .unwrap_or(0)
        .max(3);
    let mut header: Vec<String> = vec!["Metric".into()];
    header.extend((1..=width).map(|c| format!("N-Mean-{c}")));
    header.extend((1..=width).map(|c| format!("BFD-{c}")));
    header.extend(["f-stat", "p-stat", "df-between", "df-within", "flag"].map(String::from));
    let na = || "na".to_string();
    let mut notes = Vec::new();
    let body: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = vec![r.metric.clone()];
            row.extend((0..width).map(|c| {
                r.clusters
                    .get(c)
                    .map_or_else(na, |s| fmt_f64(s.metric_mean))
            }));
            row.extend((0..width).map(|c| {
                r.clusters
                    .get(c)
                    .and_then(|s| s.bfd_mean)
                    .map_or_else(na, fmt_f64)
            }));
            match &r.test {
                Some(t) => {
                    let star = if t.p_value < 0.05 { "*" } else { "" };
                    row.extend([
                        fmt_f64(t.f_stat),
                        format!("{}{star}", fmt_f64(t.p_value)),
                        t.df_between.to_string(),
                        t.df_within.to_string(),
                        t.flag
                            .map(|f| format!("{f:?}").to_lowercase())
                            .unwrap_or_default(),
                    ]);
                }
                None => {
                    notes.push(format!(
                        "{}: fewer than two clusters with scored trials",
                        r.metric
                    ));
                    row.extend([na(), na(), na(), na(), String::new()]);
                }
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = OutputSet::new(&cfg.out_dir)?;
    out.write(
        ANOVA_FILE,
        &csv_document("anova", cfg.seed, &header_refs, &body)?,
    )?;
    Ok(StageReport {
        written: out.commit()?,
        notes,
    })
}

/// Mixed-model rows built from `metrics.csv` and the trial scores.
pub fn design_rows(rows: &[MetricsRow], scores: &BTreeMap<TrialTag, f64>) -> Vec<DesignRow> {
    rows.iter()
        .map(|r| DesignRow {
            participant_id: r.key.participant_id.clone(),
            semester: r.key.semester,
            ordered_index: r.key.ordered_index,
            label: r.key.label(),
            score: scores.get(&tag(&r.key)).copied(),
            metrics: r.metrics.clone(),
        })
        .collect()
}

/// `lmm.csv`: Wald table of the REML fit, variance components and fit
/// diagnostics.
pub fn cmd_lmm(cfg: &PipelineConfig) -> Result<StageReport> {
    cfg.validate()?;
    let rows = read_metrics_file(&cfg.out_dir.join(METRICS_FILE))?;
    let scores = scores(cfg, &rows)?;
    let design = build_design(&design_rows(&rows, &scores), &cfg.design_config())?;
    let mut per_group: BTreeMap<usize, usize> = BTreeMap::new();
    design
        .groups
        .iter()
        .for_each(|&g| *per_group.entry(g).or_default() += 1);
    let repeated = per_group.values().filter(|&&n| n >= 2).count();
    if repeated < 2 {
        return Err(Error::Validation(format!(
            "the mixed model needs at least two participants with two or more scored trials, found {repeated}"
        )));
    }
    let fit = reml_fit(&design, &cfg.reml_config())?;
    let mut notes = Vec::new();
    if !fit.converged {
        notes.push(format!(
            "REML did not converge in {} iterations (gradient norm {})",
            fit.iterations, fit.grad_norm
        ));
    }
    if fit.boundary {
        notes.push("a variance component is estimated at zero".into());
    }
    let report = &design.report;
    if report.total() > 0 {
        notes.push(format!(
            "{} trials deleted ({} without score, {} with degenerate predictors)",
            report.total(),
            report.missing_score.len(),
            report.degenerate.len()
        ));
    }
    let mut body: Vec<Vec<String>> = wald_tests(&fit)
        .iter()
        .map(|w| {
            vec![
                display_name(&w.name).to_string(),
                fmt_f64(w.coef),
                fmt_f64(w.std_err),
                fmt_f64(w.z),
                fmt_f64(w.p_value),
                fmt_f64(w.ci_low),
                fmt_f64(w.ci_high),
            ]
        })
        .collect();
    let single = |name: &str, v: String| {
        vec![
            name.to_string(),
            v,
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ]
    };
    let v = &fit.variance;
    body.push(single("Participant Var", fmt_f64(v.participant_var)));
    body.push(single(
        "Participant x Semester Cov",
        fmt_opt(v.participant_semester_cov),
    ));
    body.push(single("Semester Var", fmt_opt(v.semester_var)));
    body.push(single("Residual Var", fmt_f64(v.residual_var)));
    body.push(single("reml_loglik", fmt_f64(fit.reml_loglik)));

    let mut doc = header_line("lmm", cfg.seed);
    let dropped: Vec<&str> = cfg.lmm.drop_predictors.iter().map(String::as_str).collect();
    doc.push_str(&format!(
        "# n_obs={} n_groups={} group_min={} group_mean={} group_max={} converged={} boundary={} iterations={} grad_norm={}\n",
        fit.n_obs,
        fit.n_groups,
        fit.group_min,
        fmt_f64(fit.group_mean),
        fit.group_max,
        fit.converged,
        fit.boundary,
        fit.iterations,
        fmt_f64(fit.grad_norm)
    ));
    doc.push_str(&format!(
        "# dropped_predictors={} standardized={} deleted_missing_score={} deleted_degenerate={}\n",
        dropped.join("|"),
        cfg.lmm.standardize,
        report.missing_score.len(),
        report.degenerate.len()
    ));
    let table = csv_document(
        "lmm",
        cfg.seed,
        &[
            "term", "Coef.", "Std.Err.", "z", "P>|z|", "[0.025", "0.975]",
        ],
        &body,
    )?;
    // drop the duplicate schema line that csv_document adds
    let table = &table[header_line("lmm", cfg.seed).len()..];
    let mut bytes = doc.into_bytes();
    bytes.extend_from_slice(table);
    let mut out = OutputSet::new(&cfg.out_dir)?;
    out.write(LMM_FILE, &bytes)?;
    Ok(StageReport {
        written: out.commit()?,
        notes,
    })
}

/// Synthetic cohort in the ingest schema plus its ground truth.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<StageReport> {
    cfg.validate()?;
    let cohort = synth_cohort(&cfg.synth, cfg.seed)?;
    let mut fix = header_line("fixations", cfg.seed).into_bytes();
    write_fixations(&mut fix, &cohort.fixations)?;
    let mut outc = header_line("outcomes", cfg.seed).into_bytes();
    write_outcomes(&mut outc, &cohort.outcomes)?;
    let truth: Vec<Vec<String>> = cohort
        .truth
        .iter()
        .map(|t| {
            vec![
                t.participant_id.clone(),
                t.group.to_string(),
                fmt_f64(t.bfd_mean),
                fmt_f64(t.expertise_start),
                fmt_f64(t.expertise_end),
            ]
        })
        .collect();
    let mut out = OutputSet::new(&cfg.out_dir)?;
    out.write(FIXATIONS_FILE, &fix)?;
    out.write(OUTCOMES_FILE, &outc)?;
    out.write(
        TRUTH_FILE,
        &csv_document(
            "truth",
            cfg.seed,
            &[
                "participant_id",
                "group",
                "bfd_mean",
                "expertise_start",
                "expertise_end",
            ],
            &truth,
        )?,
    )?;
    let groups: BTreeSet<usize> = cohort.truth.iter().map(|t| t.group).collect();
    Ok(StageReport {
        written: out.commit()?,
        notes: vec![format!(
            "{} participants in {} groups, {} fixations",
            cohort.truth.len(),
            groups.len(),
            cohort.fixations.len()
        )],
    })
}

/// Metrics, clustering, ANOVA and mixed model in sequence. When a stage
/// fails, files already written by this run are removed.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<StageReport> {
    let mut report = StageReport::default();
    let stages: [fn(&PipelineConfig) -> Result<StageReport>; 4] =
        [cmd_metrics, cmd_cluster, cmd_anova, cmd_lmm];
    for stage in stages {
        match stage(cfg) {
            Ok(r) => report.extend(r),
            Err(e) => {
                for path in &report.written {
                    let _ = std::fs::remove_file(path);
                }
                return Err(e);
            }
        }
    }
    Ok(report)
}
