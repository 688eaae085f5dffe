//! Reference computations used to validate the proximity recurrence.
//!
//! Nothing here shares code with the sparse kernels: distances come from
//! per-source breadth-first search and path costs from exhaustive
//! enumeration of simple paths.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::proximity::MatmulMode;

/// Default cap on DFS steps for one enumeration.
pub const DEFAULT_PATH_BUDGET: u64 = 20_000_000;

/// Hop distances from `source` (`None` when unreachable).
pub fn bfs_from(g: &Graph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_nodes()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for &v in g.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// All-pairs hop distances by one BFS per source.
pub fn bfs_distances(g: &Graph) -> Vec<Vec<Option<usize>>> {
    (0..g.num_nodes()).map(|s| bfs_from(g, s)).collect()
}

/// Largest finite hop distance.
pub fn diameter(distances: &[Vec<Option<usize>>]) -> usize {
    distances
        .iter()
        .flat_map(|row| row.iter().flatten())
        .copied()
        .max()
        .unwrap_or(0)
}

/// Sum of path costs over every simple path of exactly `k` hops from
/// `source`, kept only for targets whose hop distance is exactly `k`.
/// Multiplicative cost multiplies edge weights, additive cost sums them.
pub fn shortest_path_sums_from(
    g: &Graph,
    source: usize,
    k: usize,
    cost: MatmulMode,
    budget: u64,
) -> Result<Vec<f64>> {
    let n = g.num_nodes();
    let dist = bfs_from(g, source);
    let mut sums = vec![0.0; n];
    let mut on_path = vec![false; n];
    let mut steps = 0u64;
    on_path[source] = true;

    struct Walk<'a> {
        g: &'a Graph,
        k: usize,
        cost: MatmulMode,
        budget: u64,
    }

    fn dfs(
        w: &Walk<'_>,
        node: usize,
        depth: usize,
        acc: f64,
        on_path: &mut [bool],
        sums: &mut [f64],
        steps: &mut u64,
    ) -> Result<()> {
        *steps += 1;
        if *steps > w.budget {
            return Err(Error::OracleOverflow { budget: w.budget });
        }
        if depth == w.k {
            sums[node] += acc;
            return Ok(());
        }
        let row = w.g.adjacency().row(node);
        for (next, weight) in row.iter() {
            if on_path[next] {
                continue;
            }
            let next_acc = match w.cost {
                MatmulMode::Multiplicative => acc * weight,
                MatmulMode::Additive => acc + weight,
            };
            on_path[next] = true;
            dfs(w, next, depth + 1, next_acc, on_path, sums, steps)?;
            on_path[next] = false;
        }
        Ok(())
    }

    let start = match cost {
        MatmulMode::Multiplicative => 1.0,
        MatmulMode::Additive => 0.0,
    };
    let walk = Walk { g, k, cost, budget };
    dfs(&walk, source, 0, start, &mut on_path, &mut sums, &mut steps)?;
    for (t, s) in sums.iter_mut().enumerate() {
        if dist[t] != Some(k) {
            *s = 0.0;
        }
    }
    Ok(sums)
}

/// Sum of path costs over all `k`-hop shortest paths from `i` to `j`; zero
/// when the hop distance is not `k`.
pub fn shortest_path_sum(g: &Graph, i: usize, j: usize, k: usize, cost: MatmulMode) -> Result<f64> {
    Ok(shortest_path_sums_from(g, i, k, cost, DEFAULT_PATH_BUDGET)?[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::reweight_by_degree;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::from_edges(n, false, false, edges.iter().map(|&(u, v)| (u, v, 1.0))).unwrap()
    }

    #[test]
    fn distances() {
        let path = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(bfs_distances(&path)[0][2], Some(2));
        let split = graph(4, &[(0, 1), (2, 3)]);
        assert_eq!(bfs_distances(&split)[0][3], None);
        let cycle = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let d = bfs_distances(&cycle);
        assert_eq!(d[0][2], Some(2));
        assert_eq!(d[1][3], Some(2));
        assert_eq!(diameter(&d), 2);
    }

    #[test]
    fn path_sums() {
        let cycle = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert_eq!(shortest_path_sum(&cycle, 0, 2, 2, MatmulMode::Multiplicative).unwrap(), 2.0);
        let rw = reweight_by_degree(&cycle).unwrap();
        assert_eq!(shortest_path_sum(&rw, 0, 2, 2, MatmulMode::Additive).unwrap(), 1.0);
        let tri = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(shortest_path_sum(&tri, 0, 1, 2, MatmulMode::Multiplicative).unwrap(), 0.0);
    }

    #[test]
    fn budget_overflow() {
        let mut edges = Vec::new();
        for u in 0..10 {
            for v in u + 1..10 {
                edges.push((u, v));
            }
        }
        let k10 = graph(10, &edges);
        let err = shortest_path_sums_from(&k10, 0, 6, MatmulMode::Multiplicative, 100).unwrap_err();
        assert!(matches!(err, Error::OracleOverflow { budget: 100 }));
    }
}
