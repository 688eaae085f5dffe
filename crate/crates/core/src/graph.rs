//! Edge-list ingestion and the canonical [`Graph`] representation.
//!
//! Edge lists are whitespace separated `src dst [weight]` lines. Lines that
//! start with `#` are comments, except for two optional directives written by
//! [`write_edge_list`]: `# nodes: N` (minimum node count) and `# base: B`
//! (the smallest raw id). Without a `base` directive the id base is taken
//! from the minimum id in the file: 0 when some id is 0, otherwise 1.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Maps internal contiguous indices to the ids found in the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub struct IdMap {
    pub base: u64,
}

impl IdMap {
    pub fn to_raw(&self, internal: usize) -> u64 {
        internal as u64 + self.base
    }

    pub fn to_internal(&self, raw: u64) -> Option<usize> {
        raw.checked_sub(self.base).map(|v| v as usize)
    }
}


#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    directed: bool,
    weighted: bool,
    reweighted: bool,
    adjacency: CsrMatrix,
    degrees: Vec<f64>,
    ids: IdMap,
}

impl Graph {
    /// Builds a graph from an adjacency matrix. Undirected graphs must be
    /// symmetric and no graph may carry self-loops.
    pub fn from_adjacency(adjacency: CsrMatrix, directed: bool, weighted: bool) -> Result<Self> {
        if adjacency.rows() != adjacency.cols() {
            return Err(Error::validation("adjacency must be square"));
        }
        if adjacency.rows() == 0 {
            return Err(Error::validation("graph must have at least one node"));
        }
        if adjacency.has_diagonal_entries() {
            return Err(Error::validation("adjacency contains self-loops"));
        }
        if !directed && !adjacency.is_symmetric() {
            return Err(Error::validation("undirected adjacency is not symmetric"));
        }
        let degrees = adjacency.row_sums();
        Ok(Self {
            directed,
            weighted,
            reweighted: false,
            adjacency,
            degrees,
            ids: IdMap::default(),
        })
    }

    /// Builds a graph from `(src, dst, weight)` edges. Undirected edges are
    /// mirrored; duplicates are summed for weighted graphs and collapsed to 1
    /// for unweighted ones.
    pub fn from_edges<I>(num_nodes: usize, directed: bool, weighted: bool, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut triplets = Vec::new();
        for (u, v, w) in edges {
            if u == v {
                return Err(Error::validation(format!("self-loop on node {u}")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!("edge ({u}, {v}) has invalid weight {w}")));
            }
            triplets.push((u, v, w));
            if !directed {
                triplets.push((v, u, w));
            }
        }
        let mut adjacency = CsrMatrix::from_triplets(num_nodes, num_nodes, triplets)?;
        if !weighted {
            adjacency = adjacency.pattern();
        }
        Self::from_adjacency(adjacency, directed, weighted)
    }

    pub fn with_ids(mut self, ids: IdMap) -> Self {
        self.ids = ids;
        self
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    /// Edge count; an undirected edge counts once.
    pub fn num_edges(&self) -> usize {
        if self.directed {
            self.adjacency.nnz()
        } else {
            self.adjacency.nnz() / 2
        }
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    /// Whether the stored weights carry information (input weights or degree reweighting).
    pub fn weighted(&self) -> bool {
        self.weighted || self.reweighted
    }

    pub fn reweighted(&self) -> bool {
        self.reweighted
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    /// Row sums of the adjacency. After [`reweight_by_degree`] these are the
    /// original unweighted degrees.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn ids(&self) -> IdMap {
        self.ids
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        self.adjacency.row(node).indices
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.contains(u, v)
    }

    /// Edges as `(src, dst, weight)`; undirected edges appear once with `src < dst`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let directed = self.directed;
        self.adjacency.iter().filter(move |(u, v, _)| directed || u < v)
    }

    /// A copy of this graph without the listed edges. Undirected edges may be
    /// given in either orientation.
    pub fn without_edges(&self, removed: &[(usize, usize)]) -> Result<Self> {
        let mut drop = std::collections::HashSet::with_capacity(removed.len() * 2);
        for &(u, v) in removed {
            drop.insert((u, v));
            if !self.directed {
                drop.insert((v, u));
            }
        }
        let adjacency = CsrMatrix::from_triplets(
            self.num_nodes(),
            self.num_nodes(),
            self.adjacency.iter().filter(|(u, v, _)| !drop.contains(&(*u, *v))),
        )?;
        let degrees = adjacency.row_sums();
        Ok(Self {
            adjacency,
            degrees,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub directed: bool,
    pub weighted: bool,
    /// Overrides id base detection.
    pub base: Option<u64>,
    /// Guarantees at least this many nodes (isolated nodes get zero degree).
    pub min_nodes: usize,
}

impl LoadOptions {
    pub fn new(directed: bool, weighted: bool) -> Self {
        Self {
            directed,
            weighted,
            base: None,
            min_nodes: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub lines: usize,
    pub edges_read: usize,
    pub self_loops_dropped: usize,
    pub zero_weight_dropped: usize,
}

/// Loads an edge list file into a graph with contiguous 0-based ids.
pub fn load_edge_list(path: impl AsRef<Path>, directed: bool, weighted: bool) -> Result<Graph> {
    load_edge_list_with(path, &LoadOptions::new(directed, weighted)).map(|(g, _)| g)
}

pub fn load_edge_list_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(Graph, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_edge_list(BufReader::new(file), path, opts)
}

pub fn read_edge_list<R: BufRead>(reader: R, source: &Path, opts: &LoadOptions) -> Result<(Graph, LoadReport)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };

    let mut report = LoadReport::default();
    let mut raw: Vec<(u64, u64, f64)> = Vec::new();
    let mut min_id = u64::MAX;
    let mut max_id = 0u64;
    let mut min_nodes = opts.min_nodes;
    let mut base = opts.base;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        report.lines += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(n) = comment.strip_prefix("nodes:") {
                let n: usize = n.trim().parse().map_err(|_| parse_err(lineno, "bad nodes directive".into()))?;
                min_nodes = min_nodes.max(n);
            } else if let Some(b) = comment.strip_prefix("base:") {
                if base.is_none() {
                    base = Some(b.trim().parse().map_err(|_| parse_err(lineno, "bad base directive".into()))?);
                }
            }
            continue;
        }

        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let expected = if opts.weighted { 3..=3 } else { 2..=3 };
        if !expected.contains(&fields.len()) {
            return Err(parse_err(
                lineno,
                format!("expected {} columns, found {}", if opts.weighted { 3 } else { 2 }, fields.len()),
            ));
        }
        let parse_id = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(lineno, format!("invalid node id {s:?}")))
        };
        let src = parse_id(fields[0])?;
        let dst = parse_id(fields[1])?;
        let weight = if opts.weighted {
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(lineno, format!("invalid weight {:?}", fields[2])))?;
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!(
                    "{}:{lineno}: edge weight must be a non-negative number, found {w}",
                    source.display()
                )));
            }
            w
        } else {
            1.0
        };
        min_id = min_id.min(src).min(dst);
        max_id = max_id.max(src).max(dst);
        report.edges_read += 1;
        if src == dst {
            report.self_loops_dropped += 1;
            continue;
        }
        if weight == 0.0 {
            report.zero_weight_dropped += 1;
            continue;
        }
        raw.push((src, dst, weight));
    }

    if report.edges_read == 0 && min_nodes == 0 {
        return Err(Error::validation(format!("{} contains no edges", source.display())));
    }
    let base = base.unwrap_or(if min_id == 0 || report.edges_read == 0 { 0 } else { 1 });
    if report.edges_read > 0 && min_id < base {
        return Err(Error::validation(format!("node id {min_id} is below the id base {base}")));
    }
    let span = if report.edges_read > 0 { (max_id - base + 1) as usize } else { 0 };
    let num_nodes = span.max(min_nodes);

    if report.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop line(s)",
            source.display(),
            report.self_loops_dropped
        );
    }

    let edges = raw
        .into_iter()
        .map(|(u, v, w)| ((u - base) as usize, (v - base) as usize, w));
    let graph = Graph::from_edges(num_nodes, opts.directed, opts.weighted, edges)?.with_ids(IdMap { base });
    Ok((graph, report))
}

/// Writes a graph in the edge-list format, with directives so that
/// reloading reproduces the same node count and ids.
pub fn write_edge_list<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "# nodes: {}", graph.num_nodes())?;
    writeln!(out, "# base: {}", graph.ids.base)?;
    let ids = graph.ids;
    for (u, v, w) in graph.edges() {
        if graph.weighted() {
            writeln!(out, "{} {} {}", ids.to_raw(u), ids.to_raw(v), w)?;
        } else {
            writeln!(out, "{} {}", ids.to_raw(u), ids.to_raw(v))?;
        }
    }
    Ok(())
}

/// Replaces every edge weight by `1 / (d_i * d_j)`.
///
/// Only defined for unweighted graphs. For directed graphs `d_i` is the
/// out-degree of the source and `d_j` the in-degree of the target, which
/// reduces to the symmetric rule on undirected input.
pub fn reweight_by_degree(g: &Graph) -> Result<Graph> {
    if g.weighted() {
        return Err(Error::validation("degree reweighting applies to unweighted graphs only"));
    }
    let out_deg = g.adjacency.row_sums();
    let in_deg = if g.directed {
        let mut d = vec![0.0; g.num_nodes()];
        for (_, v, w) in g.adjacency.iter() {
            d[v] += w;
        }
        d
    } else {
        out_deg.clone()
    };
    let a = &g.adjacency;
    let values: Vec<f64> = a.iter().map(|(i, j, _)| 1.0 / (out_deg[i] * in_deg[j])).collect();
    let adjacency = CsrMatrix::new(a.rows(), a.cols(), a.indptr().to_vec(), a.indices().to_vec(), values)?;
    Ok(Graph {
        reweighted: true,
        adjacency,
        degrees: out_deg,
        ..g.clone()
    })
}

/// Divides all weights by the largest one.
pub fn normalize_weights_by_max(g: &Graph) -> Graph {
    match g.adjacency.max_value() {
        Some(max) if max > 0.0 => {
            let adjacency = g.adjacency.scale(1.0 / max);
            let degrees = adjacency.row_sums();
            Graph {
                adjacency,
                degrees,
                ..g.clone()
            }
        }
        _ => g.clone(),
    }
}

/// Multi-label node annotations; `labels[node]` holds sorted label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeLabels {
    pub labels: Vec<Vec<usize>>,
    /// Raw label id of each label index.
    pub label_ids: Vec<u64>,
}

impl NodeLabels {
    pub fn num_labels(&self) -> usize {
        self.label_ids.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Nodes carrying at least one label.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| !self.labels[i].is_empty()).collect()
    }

    /// Single-label annotations from a class vector.
    pub fn from_classes(classes: &[usize]) -> Self {
        let k = classes.iter().copied().max().map_or(0, |m| m + 1);
        Self {
            labels: classes.iter().map(|&c| vec![c]).collect(),
            label_ids: (0..k as u64).collect(),
        }
    }
}

/// Largest raw node id in a label file, for sizing the graph before load.
pub fn max_label_node_id(path: impl AsRef<Path>) -> Result<Option<u64>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut max = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let first = t.split_whitespace().next().unwrap_or_default();
        let id: u64 = first.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: format!("invalid node id {first:?}"),
        })?;
        max = Some(max.map_or(id, |m: u64| m.max(id)));
    }
    Ok(max)
}

/// Reads `node_id label_id` lines; repeated node ids give multiple labels.
pub fn load_labels(path: impl AsRef<Path>, graph: &Graph) -> Result<NodeLabels> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        if fields.len() != 2 {
            return Err(bad(format!("expected 2 columns, found {}", fields.len())));
        }
        let node: u64 = fields[0].parse().map_err(|_| bad(format!("invalid node id {:?}", fields[0])))?;
        let label: u64 = fields[1].parse().map_err(|_| bad(format!("invalid label id {:?}", fields[1])))?;
        let internal = graph
            .ids()
            .to_internal(node)
            .filter(|&i| i < graph.num_nodes())
            .ok_or_else(|| bad(format!("node {node} is not in the graph")))?;
        pairs.push((internal, label));
    }
    let mut label_ids: Vec<u64> = pairs.iter().map(|p| p.1).collect();
    label_ids.sort_unstable();
    label_ids.dedup();
    let mut labels = vec![Vec::new(); graph.num_nodes()];
    for (node, label) in pairs {
        let idx = label_ids.binary_search(&label).unwrap();
        labels[node].push(idx);
    }
    for l in &mut labels {
        l.sort_unstable();
        l.dedup();
    }
    Ok(NodeLabels { labels, label_ids })
}
