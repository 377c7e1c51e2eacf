//! Gaze networks: AOIs as nodes, saccades between consecutive fixations as
//! directed multi-edges.
//!
//! The multigraph is stored as a `(source, target) -> multiplicity` map.
//! Nodes are kept in lexicographic `aoi_id` order, which fixes the index
//! order used by every dense view (`adjacency`, [`TransitionModel`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Scanpath, TrialKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapsePolicy {
    /// Consecutive fixations on the same AOI are one dwell; no self-loops.
    #[default]
    Merge,
    KeepSelfLoops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiSource {
    #[default]
    Counts,
    Durations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NetworkConfig {
    pub collapse: CollapsePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeWeight {
    pub fixation_count: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GazeNetwork {
    pub nodes: BTreeMap<String, NodeWeight>,
    pub edges: BTreeMap<(String, String), u64>,
    pub trial: Option<TrialKey>,
    pub collapse: CollapsePolicy,
}

/// Replaces each maximal run of equal adjacent items with one occurrence.
pub fn collapse_consecutive<T: PartialEq + Clone>(seq: &[T]) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(seq.len());
    for item in seq {
        if out.last() != Some(item) {
            out.push(item.clone());
        }
    }
    out
}

pub fn build_network(scanpath: &Scanpath, config: &NetworkConfig) -> Result<GazeNetwork> {
    if scanpath.is_empty() {
        return Err(Error::EmptyTrial);
    }
    if scanpath.durations_ms.len() != scanpath.aois.len() {
        return Err(Error::Validation(
            "scanpath durations and AOIs differ in length".into(),
        ));
    }
    let mut nodes: BTreeMap<String, NodeWeight> = BTreeMap::new();
    for (aoi, &dur) in scanpath.aois.iter().zip(&scanpath.durations_ms) {
        let w = nodes.entry(aoi.clone()).or_default();
        w.fixation_count += 1;
        w.duration_ms += dur;
    }

    let walk: Vec<&String> = match config.collapse {
        CollapsePolicy::Merge => collapse_consecutive(&scanpath.aois.iter().collect::<Vec<_>>()),
        CollapsePolicy::KeepSelfLoops => scanpath.aois.iter().collect(),
    };
    let mut edges: BTreeMap<(String, String), u64> = BTreeMap::new();
    for pair in walk.windows(2) {
        *edges.entry((pair[0].clone(), pair[1].clone())).or_insert(0) += 1;
    }
    Ok(GazeNetwork {
        nodes,
        edges,
        trial: None,
        collapse: config.collapse,
    })
}

impl GazeNetwork {
    pub fn with_trial(mut self, key: TrialKey) -> Self {
        self.trial = Some(key);
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Total edge multiplicity (saccade count), not distinct pairs.
    pub fn total_multiplicity(&self) -> u64 {
        self.edges.values().sum()
    }

    pub fn node_ids(&self) -> Vec<&str> {
        self.nodes.keys().map(String::as_str).collect()
    }

    /// Dense `n x n` multiplicity matrix in node order; `w[i][j]` counts i -> j.
    pub fn adjacency(&self) -> Vec<Vec<u64>> {
        let index: BTreeMap<&str, usize> = self
            .nodes
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let n = self.nodes.len();
        let mut w = vec![vec![0u64; n]; n];
        for ((s, t), &c) in &self.edges {
            w[index[s.as_str()]][index[t.as_str()]] = c;
        }
        w
    }
}

/// Row-stochastic transition matrix and the empirical fixation distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    pub aois: Vec<String>,
    /// `p[i][j]` = multiplicity(i -> j) / out-multiplicity(i); sink rows are zero.
    pub p: Vec<Vec<f64>>,
    pub sink: Vec<bool>,
    pub pi: Vec<f64>,
}

pub fn transition_model(network: &GazeNetwork, pi_source: PiSource) -> TransitionModel {
    let w = network.adjacency();
    let n = w.len();
    let mut p = vec![vec![0.0; n]; n];
    let mut sink = vec![false; n];
    for i in 0..n {
        let out: u64 = w[i].iter().sum();
        if out == 0 {
            sink[i] = true;
            continue;
        }
        for j in 0..n {
            p[i][j] = w[i][j] as f64 / out as f64;
        }
    }
    let weights: Vec<u64> = network
        .nodes
        .values()
        .map(|nw| match pi_source {
            PiSource::Counts => nw.fixation_count,
            PiSource::Durations => nw.duration_ms,
        })
        .collect();
    let total: u64 = weights.iter().sum();
    let pi = if total == 0 {
        vec![1.0 / n as f64; n]
    } else {
        weights.iter().map(|&x| x as f64 / total as f64).collect()
    };
    TransitionModel {
        aois: network.nodes.keys().cloned().collect(),
        p,
        sink,
        pi,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeLinkDoc {
    directed: bool,
    multigraph: bool,
    graph: GraphAttrs,
    nodes: Vec<NodeEntry>,
    links: Vec<LinkEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphAttrs {
    collapse_policy: CollapsePolicy,
    trial: Option<TrialKey>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeEntry {
    id: String,
    fixation_count: u64,
    duration_ms: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkEntry {
    source: String,
    target: String,
    count: u64,
}

/// Node-link JSON document (`nodes`, `links`), nodes in lexicographic order.
pub fn to_node_link(network: &GazeNetwork) -> String {
    let doc = NodeLinkDoc {
        directed: true,
        multigraph: true,
        graph: GraphAttrs {
            collapse_policy: network.collapse,
            trial: network.trial.clone(),
        },
        nodes: network
            .nodes
            .iter()
            .map(|(id, w)| NodeEntry {
                id: id.clone(),
                fixation_count: w.fixation_count,
                duration_ms: w.duration_ms,
            })
            .collect(),
        links: network
            .edges
            .iter()
            .map(|((s, t), &count)| LinkEntry {
                source: s.clone(),
                target: t.clone(),
                count,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("node-link serialization");
    text.push('\n');
    text
}

pub fn from_node_link(text: &str) -> Result<GazeNetwork> {
    let doc: NodeLinkDoc = serde_json::from_str(text)?;
    let mut nodes = BTreeMap::new();
    for n in doc.nodes {
        let w = NodeWeight {
            fixation_count: n.fixation_count,
            duration_ms: n.duration_ms,
        };
        if nodes.insert(n.id.clone(), w).is_some() {
            return Err(Error::Validation(format!("duplicate node `{}`", n.id)));
        }
    }
    let mut edges = BTreeMap::new();
    for l in doc.links {
        if !nodes.contains_key(&l.source) || !nodes.contains_key(&l.target) {
            return Err(Error::Validation(format!(
                "link {} -> {} references an unknown node",
                l.source, l.target
            )));
        }
        if l.count == 0 {
            return Err(Error::Validation("link count must be >= 1".into()));
        }
        if doc.graph.collapse_policy == CollapsePolicy::Merge && l.source == l.target {
            return Err(Error::Validation(format!(
                "self-loop on `{}` in a merged network",
                l.source
            )));
        }
        *edges.entry((l.source, l.target)).or_insert(0) += l.count;
    }
    Ok(GazeNetwork {
        nodes,
        edges,
        trial: doc.graph.trial,
        collapse: doc.graph.collapse_policy,
    })
}
