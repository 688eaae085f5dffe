//! Edge splits for the reconstruction and link-prediction protocols.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Disjoint-set forest with path halving.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when already joined.
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Component id of every node, ids ordered by first node.
pub fn connected_components(g: &Graph) -> Vec<usize> {
    let mut uf = UnionFind::new(g.num_nodes());
    for (u, v, _) in g.adjacency().iter() {
        uf.union(u, v);
    }
    let mut ids = vec![usize::MAX; g.num_nodes()];
    let mut next = 0;
    let mut comp = vec![0; g.num_nodes()];
    for (i, c) in comp.iter_mut().enumerate() {
        let root = uf.find(i);
        if ids[root] == usize::MAX {
            ids[root] = next;
            next += 1;
        }
        *c = ids[root];
    }
    comp
}

/// True when every node with an edge lies in one (weakly) connected component.
pub fn is_connected(g: &Graph) -> bool {
    let comp = connected_components(g);
    let mut seen = None;
    for (u, _, _) in g.adjacency().iter() {
        match seen {
            None => seen = Some(comp[u]),
            Some(c) if c != comp[u] => return false,
            _ => {}
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct EdgeRemoval {
    pub train: Graph,
    /// Removed edges as `(min, max)` pairs for undirected graphs.
    pub removed: Vec<(usize, usize)>,
    /// `⌊fraction · |E|⌋` over the edges of the largest component.
    pub target: usize,
    /// Components other than the largest; their edges are never removed.
    pub excluded_components: usize,
}

/// Removes `⌊fraction·|E|⌋` edges of the largest component without
/// disconnecting it. Edges are visited in a seeded random order; a random
/// spanning tree of the component is kept, so every other edge is safe to
/// drop. When too few non-tree edges exist, all of them are removed.
pub fn connectivity_preserving_removal(g: &Graph, fraction: f64, seed: u64) -> Result<EdgeRemoval> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::validation(format!("removal fraction must lie in [0, 1), got {fraction}")));
    }
    if g.directed() {
        return Err(Error::validation("edge removal is defined for undirected graphs"));
    }
    let comp = connected_components(g);
    let mut sizes = std::collections::HashMap::<usize, usize>::new();
    for (u, _, _) in g.edges() {
        *sizes.entry(comp[u]).or_default() += 1;
    }
    let largest = sizes
        .iter()
        .max_by_key(|(c, &e)| (e, std::cmp::Reverse(**c)))
        .map(|(c, _)| *c);
    let excluded_components = sizes.len().saturating_sub(1);
    if excluded_components > 0 {
        log::warn!("{excluded_components} smaller component(s) excluded from edge removal");
    }

    let mut candidates: Vec<(usize, usize)> = g
        .edges()
        .filter(|(u, _, _)| Some(comp[*u]) == largest)
        .map(|(u, v, _)| (u, v))
        .collect();
    let target = (fraction * candidates.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);

    // the spanning tree prefers edges late in the visiting order
    let mut uf = UnionFind::new(g.num_nodes());
    let mut in_tree = vec![false; candidates.len()];
    for (idx, &(u, v)) in candidates.iter().enumerate().rev() {
        in_tree[idx] = uf.union(u, v);
    }
    let removed: Vec<(usize, usize)> = candidates
        .iter()
        .zip(&in_tree)
        .filter(|(_, &t)| !t)
        .map(|(e, _)| *e)
        .take(target)
        .collect();
    if removed.len() < target {
        log::warn!(
            "only {} of {target} edges can be removed without disconnecting the graph",
            removed.len()
        );
    }
    let train = g.without_edges(&removed)?;
    Ok(EdgeRemoval {
        train,
        removed,
        target,
        excluded_components,
    })
}

/// Uniformly random node pairs `(u, v)`, `u < v`, that are not edges of `g`,
/// not in `exclude` and not repeated.
pub fn sample_unconnected_pairs(
    g: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    let n = g.num_nodes();
    let total_pairs = n * n.saturating_sub(1) / 2;
    let is_free = |u: usize, v: usize| !g.has_edge(u, v) && !g.has_edge(v, u) && !exclude.contains(&(u, v));
    // enumerating free pairs is O(n²); only do it when rejection could stall
    let free_lower_bound = total_pairs.saturating_sub(g.num_edges() + exclude.len());
    let dense = count.saturating_mul(2) > free_lower_bound;
    if dense {
        let mut free: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| is_free(u, v))
            .collect();
        if free.len() < count {
            return Err(Error::validation(format!(
                "only {} unconnected pairs available, {count} requested",
                free.len()
            )));
        }
        free.shuffle(rng);
        free.truncate(count);
        return Ok(free);
    }
    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let (u, v) = (a.min(b), a.max(b));
        if is_free(u, v) && chosen.insert((u, v)) {
            out.push((u, v));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    LinkPrediction,
    Classification,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Reconstruction => "reconstruction",
            Task::LinkPrediction => "link_prediction",
            Task::Classification => "classification",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reconstruction" => Ok(Task::Reconstruction),
            "link_prediction" | "link-prediction" => Ok(Task::LinkPrediction),
            "classification" => Ok(Task::Classification),
            _ => Err(Error::validation(format!("unknown task {s:?}"))),
        }
    }
}

/// Split fractions for one protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub task: Task,
    pub fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(task: Task, seed: u64) -> Self {
        let fraction = match task {
            Task::Reconstruction => 0.8,
            Task::LinkPrediction => 0.4,
            Task::Classification => 0.9,
        };
        Self { task, fraction, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fraction > 0.0 && self.fraction < 1.0 {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "{} fraction must lie in (0, 1), got {}",
                self.task, self.fraction
            )))
        }
    }
}
