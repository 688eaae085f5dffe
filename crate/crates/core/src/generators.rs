//! Seeded synthetic graphs: classic random models and small fixtures.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::Graph;

fn unit(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Graph {
    Graph::from_edges(n, false, false, edges.into_iter().map(|(u, v)| (u, v, 1.0)))
        .expect("generated edges are valid")
}

/// G(n, p): every pair is an edge independently with probability `p`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    unit(n, edges)
}

/// Roughly `n * avg_degree / 2` uniformly random edges, built in linear time.
pub fn sparse_random(n: usize, avg_degree: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = (n as f64 * avg_degree / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            edges.push((u, v));
        }
    }
    unit(n, edges)
}

/// Preferential attachment: each new node links to `m` distinct existing
/// nodes chosen proportionally to degree.
pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Graph {
    assert!(m >= 1 && n > m, "need n > m >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // endpoint multiset: sampling from it is degree-proportional
    let mut endpoints: Vec<usize> = Vec::new();
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    for new in m + 1..n {
        let mut chosen = HashSet::new();
        while chosen.len() < m {
            chosen.insert(*endpoints.choose(&mut rng).unwrap());
        }
        let mut chosen: Vec<usize> = chosen.into_iter().collect();
        chosen.sort_unstable();
        for t in chosen {
            edges.push((new, t));
            endpoints.push(new);
            endpoints.push(t);
        }
    }
    unit(n, edges)
}

/// Stochastic block model with contiguous blocks; returns the block of each node.
pub fn stochastic_block_model(block_sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> (Graph, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = blocks.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if blocks[u] == blocks[v] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    (unit(n, edges), blocks)
}

pub fn path(n: usize) -> Graph {
    unit(n, (1..n).map(|i| (i - 1, i)))
}

pub fn cycle(n: usize) -> Graph {
    unit(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// Node 0 is the center.
pub fn star(leaves: usize) -> Graph {
    unit(leaves + 1, (1..=leaves).map(|i| (0, i)))
}

pub fn complete(n: usize) -> Graph {
    unit(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
}

/// Two disjoint cliques: nodes `0..size` and `size..2*size`.
pub fn clique_pair(size: usize) -> Graph {
    let clique = |off: usize| (0..size).flat_map(move |u| (u + 1..size).map(move |v| (off + u, off + v)));
    unit(2 * size, clique(0).chain(clique(size)))
}
