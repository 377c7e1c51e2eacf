use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{normalize_bfd, parse_outcomes, CsvFormat, TrialKey};
use crate::metrics::{Metric, MetricVector};
use crate::tsc::MetricSeries;

use super::output::{fmt_f64, fmt_opt};

const KEY_COLUMNS: [&str; 6] = [
    "participant_id",
    "semester",
    "session_index",
    "opt_index",
    "ordered_index",
    "trial",
];

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub key: TrialKey,
    pub metrics: MetricVector,
    pub bfd: Option<f64>,
}

pub fn metrics_header() -> Vec<&'static str> {
    let mut h = KEY_COLUMNS.to_vec();
    h.extend(Metric::ALL.iter().map(|m| m.name()));
    h.extend(["bfd", "degenerate"]);
    h
}

pub fn metrics_record(row: &MetricsRow) -> Vec<String> {
    let k = &row.key;
    let mut r = vec![
        k.participant_id.clone(),
        k.semester.to_string(),
        k.session_index.to_string(),
        k.opt_index.to_string(),
        k.ordered_index.to_string(),
        k.label(),
    ];
    let m = &row.metrics;
    for metric in Metric::ALL {
        r.push(match metric {
            Metric::NNodes => m.n_nodes.to_string(),
            Metric::NEdges => m.n_edges.to_string(),
            Metric::NodeConnectivity => m.node_connectivity.to_string(),
            other => fmt_f64(m.get(other)),
        });
    }
    r.push(fmt_opt(row.bfd));
    r.push(m.degenerate_label());
    r
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(input)
}

fn column_index(headers: &csv::StringRecord, name: &str, source: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            path: source.to_string(),
            column: name.to_string(),
        })
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
    source: &str,
) -> Result<T> {
    let line = rec.position().map(|p| p.line()).unwrap_or(0);
    rec.get(idx)
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| Error::Row {
            path: source.to_string(),
            line,
            message: format!(
                "cannot parse `{name}` from `{}`",
                rec.get(idx).unwrap_or("")
            ),
        })
}

pub fn read_metrics<R: Read>(input: R, source: &str) -> Result<Vec<MetricsRow>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let idx: BTreeMap<&str, usize> = metrics_header()
        .into_iter()
        .map(|c| column_index(&headers, c, source).map(|i| (c, i)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |c: &str| idx[c];
        let key = TrialKey {
            participant_id: rec.get(f("participant_id")).unwrap_or("").to_string(),
            semester: field(&rec, f("semester"), "semester", source)?,
            session_index: field(&rec, f("session_index"), "session_index", source)?,
            opt_index: field(&rec, f("opt_index"), "opt_index", source)?,
            ordered_index: field(&rec, f("ordered_index"), "ordered_index", source)?,
        };
        let real = |name: &str| field::<f64>(&rec, f(name), name, source);
        let degenerate: BTreeSet<Metric> = rec
            .get(f("degenerate"))
            .unwrap_or("")
            .split('|')
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        let bfd_text = rec.get(f("bfd")).unwrap_or("").trim();
        let bfd = if bfd_text.is_empty() {
            None
        } else {
            Some(real("bfd")?)
        };
        let metrics = MetricVector {
            trial: Some(key.clone()),
            n_nodes: field(&rec, f("n_nodes"), "n_nodes", source)?,
            n_edges: field(&rec, f("n_edges"), "n_edges", source)?,
            avg_degree: real("avg_degree")?,
            avg_betweenness: real("avg_betweenness")?,
            avg_closeness: real("avg_closeness")?,
            avg_pagerank: real("avg_pagerank")?,
            avg_eigenvector: real("avg_eigenvector")?,
            density: real("density")?,
            reciprocity: real("reciprocity")?,
            node_connectivity: field(&rec, f("node_connectivity"), "node_connectivity", source)?,
            stationary_entropy: real("stationary_entropy")?,
            transition_entropy: real("transition_entropy")?,
            degenerate,
        };
        rows.push(MetricsRow { key, metrics, bfd });
    }
    rows.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(rows)
}

pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics(file, &path.display().to_string())
}

/// Trial identity used to join outcomes onto metric rows.
pub type TrialTag = (String, u32, u32, u32);

pub fn tag(key: &TrialKey) -> TrialTag {
    (
        key.participant_id.clone(),
        key.semester,
        key.session_index,
        key.opt_index,
    )
}

/// Normalized scores by trial from an outcomes file.
pub fn read_scores(path: &Path, format: CsvFormat) -> Result<BTreeMap<TrialTag, f64>> {
    parse_outcomes(path, format)?
        .iter()
        .map(|o| {
            normalize_bfd(o).map(|s| {
                (
                    (
                        o.participant_id.clone(),
                        o.semester,
                        o.session_index,
                        o.opt_index,
                    ),
                    s,
                )
            })
        })
        .collect()
}

/// One series per participant, ordered by trial index.
pub fn metric_series(rows: &[MetricsRow], metric: Metric) -> Vec<MetricSeries> {
    let mut by: BTreeMap<&str, Vec<(u32, f64)>> = BTreeMap::new();
    for r in rows {
        by.entry(r.key.participant_id.as_str())
            .or_default()
            .push((r.key.ordered_index, r.metrics.get(metric)));
    }
    by.into_iter()
        .map(|(pid, mut v)| {
            v.sort_by_key(|(i, _)| *i);
            MetricSeries::new(pid, metric.name(), v.into_iter().map(|(_, x)| x).collect())
        })
        .collect()
}

/// One row of `clusters.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRow {
    pub metric: Metric,
    pub participant_id: String,
    pub cluster_id: usize,
    pub silhouette: f64,
}

pub const CLUSTER_HEADER: [&str; 4] = [
    "metric",
    "participant_id",
    "cluster_id",
    "silhouette_sample",
];

pub fn read_clusters_file(path: &Path) -> Result<Vec<ClusterRow>> {
    let source = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = reader(file);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = CLUSTER_HEADER
        .iter()
        .map(|c| column_index(&headers, c, &source))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(ClusterRow {
            metric: field(&rec, idx[0], "metric", &source)?,
            participant_id: rec.get(idx[1]).unwrap_or("").to_string(),
            cluster_id: field(&rec, idx[2], "cluster_id", &source)?,
            silhouette: field(&rec, idx[3], "silhouette_sample", &source)?,
        });
    }
    Ok(rows)
}
