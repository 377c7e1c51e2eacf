use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{Metric, MetricVector};

/// Fixed-effect predictors after the intercept, with their table labels.
pub const PREDICTORS: [(&str, &str); 12] = [
    ("time", "Time"),
    ("stationary_entropy", "Stationary Entropy"),
    ("transition_entropy", "Transition Entropy"),
    ("n_nodes", "Number of Nodes"),
    ("n_edges", "Number of Edges"),
    ("avg_degree", "Average Degree Centrality"),
    ("avg_betweenness", "Average Betweenness Centrality"),
    ("avg_closeness", "Average Closeness Centrality"),
    ("avg_pagerank", "Average PageRank"),
    ("density", "Density"),
    ("reciprocity", "Reciprocity"),
    ("node_connectivity", "Node Connectivity"),
];

pub const INTERCEPT: &str = "intercept";

/// Table label for a design column name; unknown names map to themselves.
pub fn display_name(column: &str) -> &str {
    if column == INTERCEPT {
        return "Intercept";
    }
    PREDICTORS
        .iter()
        .find(|(n, _)| *n == column)
        .map(|(_, d)| *d)
        .unwrap_or(column)
}

/// One scored trial entering the model.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub participant_id: String,
    pub semester: u32,
    pub ordered_index: u32,
    pub label: String,
    pub score: Option<f64>,
    pub metrics: MetricVector,
}

fn predictor_value(row: &DesignRow, name: &str) -> f64 {
    if name == "time" {
        return row.ordered_index as f64;
    }
    let metric: Metric = name.parse().expect("predictor names are metric names");
    row.metrics.get(metric)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DeletionReport {
    /// Trials without a score.
    pub missing_score: Vec<String>,
    /// Trials whose used predictors include a degenerate metric, with those metrics.
    pub degenerate: Vec<(String, Vec<String>)>,
}

impl DeletionReport {
    pub fn total(&self) -> usize {
        self.missing_score.len() + self.degenerate.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DesignConfig {
    /// Predictor names to leave out of X.
    pub drop: Vec<String>,
    /// Center and scale every predictor column to unit population sd.
    pub standardize: bool,
}

/// Response, fixed-effect and random-effect matrices with their grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    pub z: DMatrix<f64>,
    pub z_columns: Vec<String>,
    /// Group index of every row.
    pub groups: Vec<usize>,
    pub group_ids: Vec<String>,
    pub row_labels: Vec<String>,
    pub report: DeletionReport,
}

impl Design {
    /// Assembles a design from raw parts; group indices follow sorted ids.
    pub fn new(
        y: DVector<f64>,
        x: DMatrix<f64>,
        columns: Vec<String>,
        z: DMatrix<f64>,
        z_columns: Vec<String>,
        row_groups: &[String],
    ) -> Result<Design> {
        let n = y.len();
        if x.nrows() != n || z.nrows() != n || row_groups.len() != n {
            return Err(Error::Validation(
                "design parts disagree on row count".into(),
            ));
        }
        if columns.len() != x.ncols() || z_columns.len() != z.ncols() {
            return Err(Error::Validation(
                "design column names disagree with matrix widths".into(),
            ));
        }
        if y.iter()
            .chain(x.iter())
            .chain(z.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Validation(
                "design contains non-finite values".into(),
            ));
        }
        let ids: BTreeMap<&str, usize> = row_groups
            .iter()
            .map(String::as_str)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        Ok(Design {
            y,
            x,
            columns,
            z,
            z_columns,
            groups: row_groups.iter().map(|g| ids[g.as_str()]).collect(),
            group_ids: ids.keys().map(|s| s.to_string()).collect(),
            row_labels: (0..n).map(|i| i.to_string()).collect(),
            report: DeletionReport::default(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_ids.len()
    }

    pub fn group_rows(&self, g: usize) -> Vec<usize> {
        (0..self.n_obs()).filter(|&i| self.groups[i] == g).collect()
    }

    /// Rows of Z belonging to group `g`.
    pub fn z_block(&self, g: usize) -> DMatrix<f64> {
        self.z.select_rows(&self.group_rows(g))
    }

    /// The same design without random effects.
    pub fn without_random_effects(&self) -> Design {
        Design {
            z: DMatrix::zeros(self.n_obs(), 0),
            z_columns: Vec::new(),
            ..self.clone()
        }
    }
}

/// Builds y, X (intercept plus the predictors not dropped) and Z (random
/// intercept and raw semester slope per participant). Rows without a score,
/// or with a degenerate metric among the used predictors, are deleted and
/// reported. Fails when X is rank deficient.
pub fn build_design(rows: &[DesignRow], cfg: &DesignConfig) -> Result<Design> {
    for d in &cfg.drop {
        if d == INTERCEPT {
            return Err(Error::Config("the intercept cannot be dropped".into()));
        }
        if !PREDICTORS.iter().any(|(n, _)| n == d) {
            return Err(Error::Config(format!("unknown predictor `{d}`")));
        }
    }
    let used: Vec<&str> = PREDICTORS
        .iter()
        .map(|(n, _)| *n)
        .filter(|n| !cfg.drop.iter().any(|d| d == n))
        .collect();

    let mut ordered: Vec<&DesignRow> = rows.iter().collect();
    ordered.sort_by(|a, b| {
        (a.participant_id.as_str(), a.ordered_index, a.label.as_str()).cmp(&(
            b.participant_id.as_str(),
            b.ordered_index,
            b.label.as_str(),
        ))
    });

    let mut report = DeletionReport::default();
    let mut kept = Vec::new();
    for row in ordered {
        let Some(score) = row.score.filter(|s| s.is_finite()) else {
            report.missing_score.push(row.label.clone());
            continue;
        };
        let bad: Vec<String> = used
            .iter()
            .filter(|&&n| n != "time")
            .filter(|&&n| row.metrics.is_degenerate(n.parse().expect("metric name")))
            .map(|n| n.to_string())
            .collect();
        if !bad.is_empty() {
            report.degenerate.push((row.label.clone(), bad));
            continue;
        }
        kept.push((row, score));
    }
    let n = kept.len();
    let p = used.len() + 1;
    if n <= p {
        return Err(Error::Validation(format!(
            "{n} usable trials for {p} fixed effects ({} deleted)",
            report.total()
        )));
    }
    let mut x = DMatrix::from_element(n, p, 1.0);
    for (i, (row, _)) in kept.iter().enumerate() {
        for (j, name) in used.iter().enumerate() {
            x[(i, j + 1)] = predictor_value(row, name);
        }
    }
    if cfg.standardize {
        for j in 1..p {
            let mean = x.column(j).mean();
            let sd =
                (x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let scale = if sd > 0.0 { sd } else { 1.0 };
            x.column_mut(j)
                .iter_mut()
                .for_each(|v| *v = (*v - mean) / scale);
        }
    }
    let mut columns = vec![INTERCEPT.to_string()];
    columns.extend(used.iter().map(|s| s.to_string()));
    check_rank(&x, &columns)?;

    let y = DVector::from_iterator(n, kept.iter().map(|(_, s)| *s));
    let mut z = DMatrix::from_element(n, 2, 1.0);
    for (i, (row, _)) in kept.iter().enumerate() {
        z[(i, 1)] = row.semester as f64;
    }
    let row_groups: Vec<String> = kept.iter().map(|(r, _)| r.participant_id.clone()).collect();
    let mut design = Design::new(
        y,
        x,
        columns,
        z,
        vec!["participant".into(), "semester".into()],
        &row_groups,
    )?;
    design.row_labels = kept.iter().map(|(r, _)| r.label.clone()).collect();
    design.report = report;
    Ok(design)
}

/// Modified Gram-Schmidt with re-orthogonalization. The first column whose
/// residual is negligible is reported with the earlier columns it depends on.
pub fn check_rank(x: &DMatrix<f64>, columns: &[String]) -> Result<()> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut accepted: Vec<usize> = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let resid = v.norm();
        if norm == 0.0 || resid <= 1e-10 * norm {
            return Err(Error::RankDeficient {
                column: columns[j].clone(),
                depends_on: dependencies(x, &accepted, &col, columns),
            });
        }
        basis.push(v / resid);
        accepted.push(j);
    }
    Ok(())
}

fn dependencies(
    x: &DMatrix<f64>,
    accepted: &[usize],
    col: &DVector<f64>,
    columns: &[String],
) -> Vec<String> {
    if accepted.is_empty() || col.norm() == 0.0 {
        return Vec::new();
    }
    let sub = x.select_columns(accepted);
    let Ok(coef) = sub.clone().svd(true, true).solve(col, 1e-12) else {
        return Vec::new();
    };
    accepted
        .iter()
        .zip(coef.iter())
        .filter(|(&k, &c)| (c * x.column(k).norm()).abs() > 1e-8 * col.norm())
        .map(|(&k, _)| columns[k].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_network, NetworkConfig};
    use crate::ingest::Scanpath;
    use crate::metrics::{compute_all, MetricsConfig};

    fn metrics(seq: &[&str]) -> MetricVector {
        let g = build_network(&Scanpath::from_aois(seq), &NetworkConfig::default()).unwrap();
        compute_all(&g, &MetricsConfig::default()).unwrap()
    }

    fn rows() -> Vec<DesignRow> {
        let paths: [&[&str]; 6] = [
            &["A", "B", "C", "A", "D"],
            &["A", "B", "A", "C", "B", "D", "B"],
            &["C", "A", "B", "C", "B", "A", "C", "D", "A"],
            &["A", "C", "D", "A", "B", "D", "C"],
            &["B", "A", "B", "C", "D", "C", "E", "A"],
            &["D", "C", "A", "B", "E", "B", "A", "D", "E", "C", "B"],
        ];
        paths
            .iter()
            .enumerate()
            .map(|(i, p)| DesignRow {
                participant_id: format!("p{}", i / 3),
                semester: 6 + (i % 3) as u32,
                ordered_index: (i % 3) as u32,
                label: format!("t{i}"),
                score: Some(0.1 * i as f64),
                metrics: metrics(p),
            })
            .collect()
    }

    #[test]
    fn shapes() {
        // six rows cannot carry thirteen columns, so build the X shape from
        // the raw constructor and check the block structure
        let cfg = DesignConfig::default();
        let err = build_design(&rows(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let x = DMatrix::from_element(6, 13, 1.0);
        let z = DMatrix::from_element(6, 2, 1.0);
        let ids: Vec<String> = (0..6).map(|i| format!("p{}", i / 3)).collect();
        let names: Vec<String> = (0..13).map(|i| format!("c{i}")).collect();
        let d = Design::new(
            DVector::zeros(6),
            x,
            names,
            z,
            vec!["a".into(), "b".into()],
            &ids,
        )
        .unwrap();
        assert_eq!((d.x.nrows(), d.x.ncols()), (6, 13));
        assert_eq!(d.n_groups(), 2);
        for g in 0..2 {
            assert_eq!(d.z_block(g).shape(), (3, 2));
        }
    }

    #[test]
    fn listwise_deletion_and_degenerate_rows() {
        let mut rows = rows();
        rows[1].score = None;
        rows.push(DesignRow {
            label: "single".into(),
            metrics: metrics(&["A"]),
            ..rows[0].clone()
        });
        let drop: Vec<String> = PREDICTORS
            .iter()
            .map(|(n, _)| n.to_string())
            .filter(|n| n != "time" && n != "n_edges")
            .collect();
        let d = build_design(
            &rows,
            &DesignConfig {
                drop,
                standardize: false,
            },
        )
        .unwrap();
        assert_eq!(d.report.missing_score, vec!["t1".to_string()]);
        assert!(
            d.report.degenerate.is_empty(),
            "n_edges is never degenerate"
        );
        assert_eq!(d.n_obs(), 6);
        assert_eq!(d.columns, vec!["intercept", "time", "n_edges"]);

        let drop: Vec<String> = PREDICTORS
            .iter()
            .map(|(n, _)| n.to_string())
            .filter(|n| n != "time" && n != "stationary_entropy")
            .collect();
        let d = build_design(
            &rows,
            &DesignConfig {
                drop,
                standardize: true,
            },
        )
        .unwrap();
        assert_eq!(
            d.report.degenerate,
            vec![("single".to_string(), vec!["stationary_entropy".to_string()])]
        );
        assert!(d.x.column(1).mean().abs() < 1e-12);
    }

    #[test]
    fn duplicate_column_is_named() {
        let mut x = DMatrix::from_fn(8, 4, |i, j| {
            if j == 0 {
                1.0
            } else {
                ((i * 7 + j * 3) % 5) as f64
            }
        });
        let copy = x.column(2) * 2.0;
        x.set_column(3, &copy);
        let names: Vec<String> = ["intercept", "a", "b", "b_twice"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        match check_rank(&x, &names) {
            Err(Error::RankDeficient { column, depends_on }) => {
                assert_eq!(column, "b_twice");
                assert_eq!(depends_on, vec!["b".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        let rank = x.clone().svd(false, false).rank(1e-10);
        assert_eq!(rank, 3);
    }

    #[test]
    fn degree_and_density_are_collinear() {
        // mean degree centrality is twice the density on the simple digraph
        let forced: Vec<DesignRow> = rows()
            .into_iter()
            .map(|mut r| {
                r.metrics.avg_degree = 2.0 * r.metrics.density;
                r
            })
            .collect();
        let drop: Vec<String> = PREDICTORS
            .iter()
            .map(|(n, _)| n.to_string())
            .filter(|n| n != "avg_degree" && n != "density")
            .collect();
        match build_design(
            &forced,
            &DesignConfig {
                drop,
                standardize: false,
            },
        ) {
            Err(Error::RankDeficient { column, depends_on }) => {
                assert_eq!(column, "density");
                assert_eq!(depends_on, vec!["avg_degree".to_string()]);
            }
            other => panic!("{other:?}"),
        }
        for r in rows() {
            assert!((r.metrics.avg_degree - 2.0 * r.metrics.density).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_predictor_is_a_config_error() {
        let cfg = DesignConfig {
            drop: vec!["nope".into()],
            standardize: false,
        };
        assert!(matches!(build_design(&rows(), &cfg), Err(Error::Config(_))));
    }
}
