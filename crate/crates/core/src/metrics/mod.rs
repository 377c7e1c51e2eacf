//! The per-trial network metric suite.
//!
//! Freeman-family centralities (degree, betweenness, closeness), density,
//! reciprocity and connectivity use the simple digraph of distinct non-self
//! pairs. PageRank and eigenvector centrality use multiplicity weights.
//! Averages are arithmetic means over nodes. Sizes too small for a metric
//! to be defined yield `0.0` and set that metric's degenerate flag.

mod centrality;
mod entropy;
mod structure;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{transition_model, GazeNetwork, PiSource};
use crate::ingest::TrialKey;

pub use centrality::{
    avg_betweenness_centrality, avg_closeness_centrality, avg_degree_centrality,
    avg_eigenvector_centrality, avg_pagerank, betweenness_centrality, closeness_centrality,
    degree_centrality, eigenvector_centrality, pagerank, EigenvectorConfig, EigenvectorResult,
    PageRankConfig, PageRankResult,
};
pub use entropy::{stationary_entropy, transition_entropy, EntropyUnits};
pub use structure::{density, node_connectivity, reciprocity, ConnectivityMode};

/// Weighted directed graph over `0..n` with its simple (distinct, non-self)
/// skeleton precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    n: usize,
    weights: Vec<Vec<u64>>,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl Digraph {
    /// `weights[i][j]` is the multiplicity of i -> j. Must be square.
    pub fn from_weights(weights: Vec<Vec<u64>>) -> Self {
        let n = weights.len();
        assert!(
            weights.iter().all(|r| r.len() == n),
            "weight matrix must be square"
        );
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if i != j && weights[i][j] > 0 {
                    out[i].push(j);
                    inc[j].push(i);
                }
            }
        }
        Digraph {
            n,
            weights,
            out,
            inc,
        }
    }

    pub fn from_network(network: &GazeNetwork) -> Self {
        Self::from_weights(network.adjacency())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weight(&self, i: usize, j: usize) -> u64 {
        self.weights[i][j]
    }

    pub fn weights(&self) -> &[Vec<u64>] {
        &self.weights
    }

    /// Distinct non-self successors of `i`.
    pub fn successors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    /// Distinct non-self predecessors of `i`.
    pub fn predecessors(&self, i: usize) -> &[usize] {
        &self.inc[i]
    }

    pub fn has_arc(&self, i: usize, j: usize) -> bool {
        i != j && self.weights[i][j] > 0
    }

    /// Number of distinct non-self arcs.
    pub fn simple_arc_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn total_multiplicity(&self) -> u64 {
        self.weights.iter().flatten().sum()
    }

    /// Same graph with nodes relabeled: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut w = vec![vec![0u64; self.n]; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                w[perm[i]][perm[j]] = self.weights[i][j];
            }
        }
        Self::from_weights(w)
    }
}

/// The metrics of one trial, in the column order used by `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NNodes,
    NEdges,
    AvgDegree,
    AvgBetweenness,
    AvgCloseness,
    AvgPagerank,
    AvgEigenvector,
    Density,
    Reciprocity,
    NodeConnectivity,
    StationaryEntropy,
    TransitionEntropy,
}

impl Metric {
    pub const ALL: [Metric; 12] = [
        Metric::NNodes,
        Metric::NEdges,
        Metric::AvgDegree,
        Metric::AvgBetweenness,
        Metric::AvgCloseness,
        Metric::AvgPagerank,
        Metric::AvgEigenvector,
        Metric::Density,
        Metric::Reciprocity,
        Metric::NodeConnectivity,
        Metric::StationaryEntropy,
        Metric::TransitionEntropy,
    ];

    /// The eleven metrics clustered by default (eigenvector centrality excluded).
    pub const CLUSTERED: [Metric; 11] = [
        Metric::NNodes,
        Metric::NEdges,
        Metric::AvgDegree,
        Metric::AvgCloseness,
        Metric::AvgPagerank,
        Metric::AvgBetweenness,
        Metric::Density,
        Metric::NodeConnectivity,
        Metric::Reciprocity,
        Metric::StationaryEntropy,
        Metric::TransitionEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::NNodes => "n_nodes",
            Metric::NEdges => "n_edges",
            Metric::AvgDegree => "avg_degree",
            Metric::AvgBetweenness => "avg_betweenness",
            Metric::AvgCloseness => "avg_closeness",
            Metric::AvgPagerank => "avg_pagerank",
            Metric::AvgEigenvector => "avg_eigenvector",
            Metric::Density => "density",
            Metric::Reciprocity => "reciprocity",
            Metric::NodeConnectivity => "node_connectivity",
            Metric::StationaryEntropy => "stationary_entropy",
            Metric::TransitionEntropy => "transition_entropy",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricVector {
    pub trial: Option<TrialKey>,
    pub n_nodes: usize,
    pub n_edges: u64,
    pub avg_degree: f64,
    pub avg_betweenness: f64,
    pub avg_closeness: f64,
    pub avg_pagerank: f64,
    pub avg_eigenvector: f64,
    pub density: f64,
    pub reciprocity: f64,
    pub node_connectivity: usize,
    pub stationary_entropy: f64,
    pub transition_entropy: f64,
    /// Metrics whose value is a convention (`0.0`) or fallback, not a
    /// computed quantity.
    pub degenerate: BTreeSet<Metric>,
}

impl MetricVector {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::NNodes => self.n_nodes as f64,
            Metric::NEdges => self.n_edges as f64,
            Metric::AvgDegree => self.avg_degree,
            Metric::AvgBetweenness => self.avg_betweenness,
            Metric::AvgCloseness => self.avg_closeness,
            Metric::AvgPagerank => self.avg_pagerank,
            Metric::AvgEigenvector => self.avg_eigenvector,
            Metric::Density => self.density,
            Metric::Reciprocity => self.reciprocity,
            Metric::NodeConnectivity => self.node_connectivity as f64,
            Metric::StationaryEntropy => self.stationary_entropy,
            Metric::TransitionEntropy => self.transition_entropy,
        }
    }

    pub fn is_degenerate(&self, metric: Metric) -> bool {
        self.degenerate.contains(&metric)
    }

    /// `|`-joined names of the degenerate metrics (empty when none).
    pub fn degenerate_label(&self) -> String {
        self.degenerate
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join("|")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    pub pi_source: PiSource,
    pub entropy_units: EntropyUnits,
    pub pagerank: PageRankConfig,
    pub eigenvector: EigenvectorConfig,
    pub connectivity: ConnectivityMode,
    /// Fail on eigenvector non-convergence instead of keeping the last
    /// iterate and flagging the metric.
    pub strict_eigenvector: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            pi_source: PiSource::Counts,
            entropy_units: EntropyUnits::Nats,
            pagerank: PageRankConfig::default(),
            eigenvector: EigenvectorConfig::default(),
            connectivity: ConnectivityMode::Undirected,
            strict_eigenvector: false,
        }
    }
}

pub fn n_nodes(network: &GazeNetwork) -> usize {
    network.n_nodes()
}

pub fn n_edges(network: &GazeNetwork) -> u64 {
    network.total_multiplicity()
}

fn tag(metric: Metric) -> impl FnOnce(Error) -> Error {
    move |e| Error::Metric {
        metric: metric.name(),
        source: Box::new(e),
    }
}

pub fn compute_all(network: &GazeNetwork, config: &MetricsConfig) -> Result<MetricVector> {
    let g = Digraph::from_network(network);
    let n = g.n();
    let tm = transition_model(network, config.pi_source);
    let mut degenerate = BTreeSet::new();

    if n <= 1 {
        degenerate.extend([
            Metric::AvgDegree,
            Metric::AvgCloseness,
            Metric::Density,
            Metric::NodeConnectivity,
            Metric::StationaryEntropy,
        ]);
    }
    if n <= 2 {
        degenerate.insert(Metric::AvgBetweenness);
    }
    if g.simple_arc_count() == 0 {
        degenerate.insert(Metric::Reciprocity);
    }
    if tm.sink.iter().all(|&s| s) {
        degenerate.insert(Metric::TransitionEntropy);
    }

    let (pr_mean, _) = avg_pagerank(&g, &config.pagerank).map_err(tag(Metric::AvgPagerank))?;

    let avg_eigenvector = match avg_eigenvector_centrality(&g, &config.eigenvector) {
        Ok((mean, res)) => {
            if res.zero_matrix {
                degenerate.insert(Metric::AvgEigenvector);
            }
            mean
        }
        Err(Error::NoConvergence { last_iterate, .. }) if !config.strict_eigenvector => {
            degenerate.insert(Metric::AvgEigenvector);
            last_iterate.iter().sum::<f64>() / last_iterate.len() as f64
        }
        Err(e) => return Err(tag(Metric::AvgEigenvector)(e)),
    };

    Ok(MetricVector {
        trial: network.trial.clone(),
        n_nodes: n,
        n_edges: network.total_multiplicity(),
        avg_degree: avg_degree_centrality(&g),
        avg_betweenness: avg_betweenness_centrality(&g),
        avg_closeness: avg_closeness_centrality(&g),
        avg_pagerank: pr_mean,
        avg_eigenvector,
        density: density(&g),
        reciprocity: reciprocity(&g).unwrap_or(0.0),
        node_connectivity: node_connectivity(&g, config.connectivity),
        stationary_entropy: stationary_entropy(&tm, config.entropy_units),
        transition_entropy: transition_entropy(&tm, config.entropy_units),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_network, NetworkConfig};
    use crate::ingest::Scanpath;

    fn vector(seq: &[&str]) -> MetricVector {
        let g = build_network(&Scanpath::from_aois(seq), &NetworkConfig::default()).unwrap();
        compute_all(&g, &MetricsConfig::default()).unwrap()
    }

    #[test]
    fn single_fixation_is_all_zero_and_flagged() {
        let v = vector(&["A"]);
        assert_eq!((v.n_nodes, v.n_edges), (1, 0));
        for m in [
            Metric::AvgDegree,
            Metric::AvgBetweenness,
            Metric::AvgCloseness,
            Metric::Density,
            Metric::Reciprocity,
            Metric::NodeConnectivity,
            Metric::StationaryEntropy,
            Metric::TransitionEntropy,
        ] {
            assert_eq!(v.get(m), 0.0, "{m}");
            assert!(v.is_degenerate(m), "{m}");
        }
        assert_eq!(v.avg_pagerank, 1.0);
        assert_eq!(v.avg_eigenvector, 1.0);
    }

    #[test]
    fn alternation_vector() {
        let v = vector(&["A", "B", "A", "B", "A"]);
        assert_eq!(v.n_nodes, 2);
        assert_eq!(v.n_edges, 4);
        // in + out = 2 on a 2-cycle, over n - 1 = 1
        assert_eq!(v.avg_degree, 2.0);
        assert_eq!(v.avg_betweenness, 0.0);
        assert_eq!(v.avg_closeness, 1.0);
        assert!((v.avg_pagerank - 0.5).abs() < 1e-12);
        assert!((v.avg_eigenvector - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert_eq!(v.density, 1.0);
        assert_eq!(v.reciprocity, 1.0);
        assert_eq!(v.node_connectivity, 1);
        assert_eq!(v.transition_entropy, 0.0);
        // -(0.6 ln 0.6 + 0.4 ln 0.4), evaluated independently
        assert!((v.stationary_entropy - 0.673_011_667_009_256_4).abs() < 1e-12);
        assert_eq!(v.degenerate_label(), "avg_betweenness");
    }

    #[test]
    fn compute_all_is_deterministic() {
        let seq = ["A", "C", "B", "A", "D", "C", "A", "B"];
        let a = vector(&seq);
        let b = vector(&seq);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("diameter".parse::<Metric>().is_err());
    }
}
