use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::Digraph;

/// Distinct non-self arcs over `n(n-1)`; zero for `n <= 1`.
pub fn density(g: &Digraph) -> f64 {
    let n = g.n();
    if n <= 1 {
        return 0.0;
    }
    g.simple_arc_count() as f64 / (n * (n - 1)) as f64
}

/// Fraction of distinct non-self arcs whose reverse arc also exists.
/// `None` when the graph has no such arcs.
pub fn reciprocity(g: &Digraph) -> Option<f64> {
    let arcs = g.simple_arc_count();
    if arcs == 0 {
        return None;
    }
    let mutual = (0..g.n())
        .flat_map(|u| g.successors(u).iter().map(move |&v| (u, v)))
        .filter(|&(u, v)| g.has_arc(v, u))
        .count();
    Some(mutual as f64 / arcs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityMode {
    /// Vertex connectivity of the undirected simplification.
    #[default]
    Undirected,
    /// Vertex connectivity of the simple digraph (0 unless strongly connected).
    Directed,
}

/// Minimum number of nodes whose removal disconnects the graph.
///
/// Complete graphs give `n - 1`; disconnected graphs and `n <= 1` give 0.
/// Otherwise the minimum over non-adjacent pairs of the local vertex
/// connectivity, each found by max-flow on the node-split graph.
pub fn node_connectivity(g: &Digraph, mode: ConnectivityMode) -> usize {
    let n = g.n();
    if n <= 1 {
        return 0;
    }
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|u| {
            (0..n)
                .map(|v| match mode {
                    ConnectivityMode::Undirected => g.has_arc(u, v) || g.has_arc(v, u),
                    ConnectivityMode::Directed => g.has_arc(u, v),
                })
                .collect()
        })
        .collect();

    let connected = match mode {
        ConnectivityMode::Undirected => reaches_all(&adj, 0, false),
        ConnectivityMode::Directed => reaches_all(&adj, 0, false) && reaches_all(&adj, 0, true),
    };
    if !connected {
        return 0;
    }

    let mut best = n - 1;
    for s in 0..n {
        for t in 0..n {
            if s == t || adj[s][t] {
                continue;
            }
            if mode == ConnectivityMode::Undirected && t < s {
                continue;
            }
            best = best.min(local_vertex_connectivity(&adj, s, t));
            if best == 0 {
                return 0;
            }
        }
    }
    best
}

fn reaches_all(adj: &[Vec<bool>], start: usize, reverse: bool) -> bool {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let arc = if reverse { adj[v][u] } else { adj[u][v] };
            if arc && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Internally vertex-disjoint s-t paths, via unit node capacities on the
/// split graph (`v_in = 2v`, `v_out = 2v + 1`) and Edmonds-Karp.
fn local_vertex_connectivity(adj: &[Vec<bool>], s: usize, t: usize) -> usize {
    let n = adj.len();
    let m = 2 * n;
    let big = n as i64;
    let mut cap = vec![vec![0i64; m]; m];
    for v in 0..n {
        cap[2 * v][2 * v + 1] = if v == s || v == t { big } else { 1 };
        for u in 0..n {
            if adj[v][u] {
                cap[2 * v + 1][2 * u] = big;
            }
        }
    }
    let (source, sink) = (2 * s + 1, 2 * t);
    let mut flow = 0usize;
    let mut parent = vec![usize::MAX; m];
    loop {
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            if u == sink {
                break;
            }
            for v in 0..m {
                if cap[u][v] > 0 && parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            return flow;
        }
        let mut bottleneck = i64::MAX;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            bottleneck = bottleneck.min(cap[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            cap[u][v] -= bottleneck;
            cap[v][u] += bottleneck;
            v = u;
        }
        flow += bottleneck as usize;
    }
}
