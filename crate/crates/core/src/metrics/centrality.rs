use std::collections::VecDeque;

use super::Digraph;
use crate::error::{Error, Result};

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// (in-degree + out-degree) / (n - 1) on the simple digraph; zeros for n < 2.
pub fn degree_centrality(g: &Digraph) -> Vec<f64> {
    let n = g.n();
    if n < 2 {
        return vec![0.0; n];
    }
    let scale = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|v| (g.successors(v).len() + g.predecessors(v).len()) as f64 * scale)
        .collect()
}

pub fn avg_degree_centrality(g: &Digraph) -> f64 {
    mean(&degree_centrality(g))
}

/// Shortest-path betweenness (Brandes), normalized by (n-1)(n-2).
pub fn betweenness_centrality(g: &Digraph) -> Vec<f64> {
    let n = g.n();
    let mut bc = vec![0.0; n];
    if n < 3 {
        return bc;
    }
    let mut stack = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut queue = VecDeque::with_capacity(n);

    for s in 0..n {
        stack.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
        }
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            stack.push(v);
            for &w in g.successors(v) {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    let scale = 1.0 / ((n - 1) * (n - 2)) as f64;
    bc.iter_mut().for_each(|b| *b *= scale);
    bc
}

pub fn avg_betweenness_centrality(g: &Digraph) -> f64 {
    mean(&betweenness_centrality(g))
}

/// Wasserman-Faust closeness over incoming distances:
/// `((r-1)/(n-1)) * ((r-1)/sum_d)` where `r` counts nodes reaching `v`
/// (including `v`). Zero when nothing else reaches `v`.
pub fn closeness_centrality(g: &Digraph) -> Vec<f64> {
    let n = g.n();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    for (v, slot) in out.iter_mut().enumerate() {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[v] = 0;
        queue.push_back(v);
        let (mut reached, mut total) = (1usize, 0usize);
        while let Some(u) = queue.pop_front() {
            for &w in g.predecessors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    reached += 1;
                    total += dist[w];
                    queue.push_back(w);
                }
            }
        }
        if reached > 1 {
            let r1 = (reached - 1) as f64;
            *slot = (r1 / (n - 1) as f64) * (r1 / total as f64);
        }
    }
    out
}

pub fn avg_closeness_centrality(g: &Digraph) -> f64 {
    mean(&closeness_centrality(g))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PageRankConfig {
    pub damping: f64,
    /// Convergence threshold on the L1 change between iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PageRankConfig {
    fn default() -> Self {
        PageRankConfig {
            damping: 0.85,
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
}

/// Power-iteration PageRank on the multiplicity-weighted graph, with
/// uniform teleportation and dangling mass spread uniformly.
pub fn pagerank(g: &Digraph, config: &PageRankConfig) -> Result<PageRankResult> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Validation("PageRank of an empty graph".into()));
    }
    let d = config.damping;
    let nf = n as f64;
    let out_w: Vec<f64> = (0..n)
        .map(|i| g.weights()[i].iter().sum::<u64>() as f64)
        .collect();
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for it in 1..=config.max_iter {
        let dangling: f64 = (0..n).filter(|&i| out_w[i] == 0.0).map(|i| x[i]).sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|v| *v = base);
        for i in 0..n {
            if out_w[i] == 0.0 {
                continue;
            }
            let share = d * x[i] / out_w[i];
            for (j, &w) in g.weights()[i].iter().enumerate() {
                if w > 0 {
                    next[j] += share * w as f64;
                }
            }
        }
        let change: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < config.tol {
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
            return Ok(PageRankResult {
                scores: x,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "PageRank",
        iterations: config.max_iter,
        advice: "increase max_iter or loosen tol",
        last_iterate: x,
    })
}

/// Mean PageRank (identically `1/n` once converged) and the per-node scores.
pub fn avg_pagerank(g: &Digraph, config: &PageRankConfig) -> Result<(f64, PageRankResult)> {
    let res = pagerank(g, config)?;
    Ok((mean(&res.scores), res))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenvectorConfig {
    /// Convergence threshold on the L1 change between normalized iterates.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenvectorConfig {
    fn default() -> Self {
        EigenvectorConfig {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvectorResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
    /// No edges at all (the uniform vector was returned).
    pub zero_matrix: bool,
}

/// Eigenvector centrality with the in-edge convention: a node is central
/// when central nodes point at it. Iterates `x <- (A + I)^T x` (the shift
/// keeps periodic graphs from oscillating) and L2-normalizes.
pub fn eigenvector_centrality(
    g: &Digraph,
    config: &EigenvectorConfig,
) -> Result<EigenvectorResult> {
    let n = g.n();
    if n == 0 {
        return Err(Error::Validation(
            "eigenvector centrality of an empty graph".into(),
        ));
    }
    if g.total_multiplicity() == 0 {
        return Ok(EigenvectorResult {
            scores: vec![1.0 / (n as f64).sqrt(); n],
            iterations: 0,
            zero_matrix: true,
        });
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for it in 1..=config.max_iter {
        next.copy_from_slice(&x);
        for (i, row) in g.weights().iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if w > 0 {
                    next[j] += w as f64 * x[i];
                }
            }
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        next.iter_mut().for_each(|v| *v /= norm);
        let change: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < config.tol {
            return Ok(EigenvectorResult {
                scores: x,
                iterations: it,
                zero_matrix: false,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "eigenvector centrality",
        iterations: config.max_iter,
        advice:
            "the graph is likely not strongly connected; fall back to the last iterate or PageRank",
        last_iterate: x,
    })
}

pub fn avg_eigenvector_centrality(
    g: &Digraph,
    config: &EigenvectorConfig,
) -> Result<(f64, EigenvectorResult)> {
    let res = eigenvector_centrality(g, config)?;
    Ok((mean(&res.scores), res))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, arcs: &[(usize, usize, u64)]) -> Digraph {
        let mut w = vec![vec![0; n]; n];
        for &(i, j, c) in arcs {
            w[i][j] += c;
        }
        Digraph::from_weights(w)
    }

    #[test]
    fn degree_examples() {
        let path = graph(3, &[(0, 1, 1), (1, 2, 1)]);
        assert_eq!(degree_centrality(&path), [0.5, 1.0, 0.5]);
        assert!((avg_degree_centrality(&path) - 2.0 / 3.0).abs() < 1e-15);
        let k3 = graph(
            3,
            &[
                (0, 1, 1),
                (1, 0, 1),
                (0, 2, 1),
                (2, 0, 1),
                (1, 2, 1),
                (2, 1, 1),
            ],
        );
        assert_eq!(avg_degree_centrality(&k3), 2.0);
        assert_eq!(avg_degree_centrality(&graph(2, &[(0, 1, 3)])), 1.0);
        assert_eq!(avg_degree_centrality(&graph(1, &[])), 0.0);
    }

    #[test]
    fn degree_ignores_self_loops_and_multiplicity() {
        let g = graph(2, &[(0, 1, 5), (0, 0, 2)]);
        assert_eq!(degree_centrality(&g), [1.0, 1.0]);
    }

    #[test]
    fn betweenness_examples() {
        let path = graph(3, &[(0, 1, 1), (1, 2, 1)]);
        assert_eq!(betweenness_centrality(&path), [0.0, 0.5, 0.0]);
        assert!((avg_betweenness_centrality(&path) - 1.0 / 6.0).abs() < 1e-15);
        let k3 = graph(
            3,
            &[
                (0, 1, 1),
                (1, 0, 1),
                (0, 2, 1),
                (2, 0, 1),
                (1, 2, 1),
                (2, 1, 1),
            ],
        );
        assert_eq!(avg_betweenness_centrality(&k3), 0.0);
    }

    #[test]
    fn betweenness_splits_over_parallel_paths() {
        // 0 -> {1,2} -> 3: each middle node carries half of the 0->3 pair
        let g = graph(4, &[(0, 1, 1), (0, 2, 1), (1, 3, 1), (2, 3, 1)]);
        let b = betweenness_centrality(&g);
        assert!((b[1] - 0.5 / 6.0).abs() < 1e-15);
        assert!((b[2] - 0.5 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn closeness_examples() {
        let cycle = graph(2, &[(0, 1, 1), (1, 0, 1)]);
        assert_eq!(closeness_centrality(&cycle), [1.0, 1.0]);
        let arc = graph(2, &[(0, 1, 1)]);
        assert_eq!(closeness_centrality(&arc), [0.0, 1.0]);
        assert_eq!(avg_closeness_centrality(&arc), 0.5);
    }

    #[test]
    fn closeness_path_of_three() {
        // B is reached by A only: (1/2)*(1/1); C by B (d=1) and A (d=2): (2/2)*(2/3)
        let path = graph(3, &[(0, 1, 1), (1, 2, 1)]);
        let c = closeness_centrality(&path);
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 0.5).abs() < 1e-15);
        assert!((c[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn pagerank_two_cycle() {
        let g = graph(2, &[(0, 1, 1), (1, 0, 1)]);
        let pr = pagerank(&g, &PageRankConfig::default()).unwrap();
        assert!((pr.scores[0] - 0.5).abs() < 1e-12);
        assert!((pr.scores[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pagerank_star_into_dangling_hub() {
        let g = graph(4, &[(1, 0, 1), (2, 0, 1), (3, 0, 1)]);
        let pr = pagerank(&g, &PageRankConfig::default()).unwrap().scores;
        assert!(pr[0] > pr[1]);
        assert!((pr[1] - pr[2]).abs() < 1e-12 && (pr[2] - pr[3]).abs() < 1e-12);
        assert!((pr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pagerank_non_convergence_carries_iterate() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1), (2, 0, 1), (0, 2, 1)]);
        let cfg = PageRankConfig {
            max_iter: 2,
            ..Default::default()
        };
        match pagerank(&g, &cfg) {
            Err(Error::NoConvergence { last_iterate, .. }) => assert_eq!(last_iterate.len(), 3),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn eigenvector_examples() {
        let g = graph(2, &[(0, 1, 1), (1, 0, 1)]);
        let e = eigenvector_centrality(&g, &EigenvectorConfig::default()).unwrap();
        assert!((e.scores[0] - 0.7071).abs() < 1e-4);
        assert!((e.scores[0] - e.scores[1]).abs() < 1e-12);
        let single = eigenvector_centrality(&graph(1, &[]), &EigenvectorConfig::default()).unwrap();
        assert_eq!(single.scores, [1.0]);
        assert!(single.zero_matrix);
    }

    #[test]
    fn eigenvector_directed_cycle_converges_despite_period() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1), (2, 0, 1)]);
        let e = eigenvector_centrality(&g, &EigenvectorConfig::default()).unwrap();
        for s in &e.scores {
            assert!((s - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenvector_reports_non_convergence_on_a_path() {
        let g = graph(3, &[(0, 1, 1), (1, 2, 1)]);
        assert!(matches!(
            eigenvector_centrality(&g, &EigenvectorConfig::default()),
            Err(Error::NoConvergence { .. })
        ));
    }
}
