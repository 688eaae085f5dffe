//! Downstream protocols: network reconstruction, link prediction and
//! multi-label node classification.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{Features, LogisticConfig, LogisticRegression};
use super::metrics::{roc_auc, F1Scores, LabelConfusion};
use super::split::{sample_unconnected_pairs, EdgeRemoval};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeLabels};

/// How an edge `(u, v)` becomes a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeFeature {
    /// `[e_u, e_v]` with `u < v`; length `2d`.
    #[default]
    Concat,
    /// `e_u ⊙ e_v`; length `d`.
    Hadamard,
}

impl std::fmt::Display for EdgeFeature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EdgeFeature::Concat => "concat",
            EdgeFeature::Hadamard => "hadamard",
        })
    }
}

impl std::str::FromStr for EdgeFeature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(EdgeFeature::Concat),
            "hadamard" => Ok(EdgeFeature::Hadamard),
            _ => Err(Error::validation(format!("unknown edge feature {s:?}"))),
        }
    }
}

impl EdgeFeature {
    pub fn len(self, dim: usize) -> usize {
        match self {
            EdgeFeature::Concat => 2 * dim,
            EdgeFeature::Hadamard => dim,
        }
    }

    fn write(self, emb: &EmbeddingMatrix, u: usize, v: usize, out: &mut Vec<f64>) {
        let (u, v) = (u.min(v), u.max(v));
        let (a, b) = (emb.vector(u), emb.vector(v));
        match self {
            EdgeFeature::Concat => {
                out.extend_from_slice(a);
                out.extend_from_slice(b);
            }
            EdgeFeature::Hadamard => out.extend(a.iter().zip(b).map(|(x, y)| x * y)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvalConfig {
    pub feature: EdgeFeature,
    pub classifier: LogisticConfig,
}

impl Default for EdgeEvalConfig {
    fn default() -> Self {
        Self {
            feature: EdgeFeature::Concat,
            classifier: LogisticConfig::default(),
        }
    }
}

/// Labeled endpoint pairs ready for a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSamples {
    pub features: Vec<f64>,
    pub labels: Vec<bool>,
    pub dim: usize,
}

impl EdgeSamples {
    pub fn build(
        emb: &EmbeddingMatrix,
        positives: &[(usize, usize)],
        negatives: &[(usize, usize)],
        feature: EdgeFeature,
    ) -> Self {
        let dim = feature.len(emb.dim());
        let mut features = Vec::with_capacity((positives.len() + negatives.len()) * dim);
        let mut labels = Vec::with_capacity(positives.len() + negatives.len());
        for (pairs, label) in [(positives, true), (negatives, false)] {
            for &(u, v) in pairs {
                feature.write(emb, u, v, &mut features);
                labels.push(label);
            }
        }
        Self { features, labels, dim }
    }

    pub fn as_features(&self) -> Features<'_> {
        Features {
            data: &self.features,
            dim: self.dim,
        }
    }
}

/// Fits on the train pairs and returns ROC-AUC on the test pairs.
pub fn edge_auc(
    emb: &EmbeddingMatrix,
    train: (&[(usize, usize)], &[(usize, usize)]),
    test: (&[(usize, usize)], &[(usize, usize)]),
    cfg: &EdgeEvalConfig,
) -> Result<f64> {
    if test.0.is_empty() || test.1.is_empty() {
        return Err(Error::validation("edge test set needs both positive and negative pairs"));
    }
    let train = EdgeSamples::build(emb, train.0, train.1, cfg.feature);
    let model = LogisticRegression::fit(train.as_features(), &train.labels, &cfg.classifier)?;
    let test = EdgeSamples::build(emb, test.0, test.1, cfg.feature);
    let x = test.as_features();
    let scores: Vec<f64> = (0..x.rows()).map(|i| model.decision(x.row(i))).collect();
    roc_auc(&scores, &test.labels)
}

/// Shuffles positives and negatives independently, trains on the first
/// `train_fraction` of each and scores the rest.
pub fn binary_edge_auc(
    emb: &EmbeddingMatrix,
    positives: &[(usize, usize)],
    negatives: &[(usize, usize)],
    train_fraction: f64,
    seed: u64,
    cfg: &EdgeEvalConfig,
) -> Result<f64> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::validation(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = positives.to_vec();
    let mut neg = negatives.to_vec();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let cut = |len: usize| ((train_fraction * len as f64).round() as usize).min(len);
    let (pc, nc) = (cut(pos.len()), cut(neg.len()));
    edge_auc(emb, (&pos[..pc], &neg[..nc]), (&pos[pc..], &neg[nc..]), cfg)
}

/// Every edge against an equal number of unconnected pairs, split
/// `train_fraction` / rest.
pub fn reconstruction_auc(
    g: &Graph,
    emb: &EmbeddingMatrix,
    train_fraction: f64,
    seed: u64,
    cfg: &EdgeEvalConfig,
) -> Result<f64> {
    check_nodes(g, emb)?;
    let positives: Vec<(usize, usize)> = g.edges().map(|(u, v, _)| (u, v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negatives = sample_unconnected_pairs(g, positives.len(), &HashSet::new(), &mut rng)?;
    binary_edge_auc(emb, &positives, &negatives, train_fraction, seed.wrapping_add(1), cfg)
}

/// Trains on the remaining edges and scores the removed ones, each side
/// against its own disjoint set of originally unconnected pairs. `emb` must
/// come from `removal.train`.
pub fn link_prediction_auc(
    original: &Graph,
    removal: &EdgeRemoval,
    emb: &EmbeddingMatrix,
    seed: u64,
    cfg: &EdgeEvalConfig,
) -> Result<f64> {
    check_nodes(original, emb)?;
    let train_pos: Vec<(usize, usize)> = removal.train.edges().map(|(u, v, _)| (u, v)).collect();
    let test_pos = &removal.removed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // `original` still holds the removed edges, so they never become negatives
    let negatives = sample_unconnected_pairs(original, train_pos.len() + test_pos.len(), &HashSet::new(), &mut rng)?;
    let (train_neg, test_neg) = negatives.split_at(train_pos.len());
    edge_auc(emb, (&train_pos, train_neg), (test_pos, test_neg), cfg)
}

fn check_nodes(g: &Graph, emb: &EmbeddingMatrix) -> Result<()> {
    if g.num_nodes() != emb.num_nodes() {
        return Err(Error::validation(format!(
            "graph has {} nodes but the embedding has {}",
            g.num_nodes(),
            emb.num_nodes()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationConfig {
    pub train_fraction: f64,
    pub runs: usize,
    pub classifier: LogisticConfig,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.9,
            runs: 10,
            classifier: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// Mean over runs.
    pub mean: F1Scores,
    pub runs: Vec<F1Scores>,
    /// Labels with no positive training node, summed over runs.
    pub missing_labels: usize,
}

/// One-vs-rest logistic models over the labeled nodes; a node with `ℓ` true
/// labels is assigned its `ℓ` highest-scoring labels. Runs use seeds
/// `seed, seed+1, ...` and execute in parallel.
pub fn multilabel_f1(
    emb: &EmbeddingMatrix,
    labels: &NodeLabels,
    seed: u64,
    cfg: &ClassificationConfig,
) -> Result<ClassificationResult> {
    if labels.num_nodes() != emb.num_nodes() {
        return Err(Error::validation(format!(
            "labels cover {} nodes but the embedding has {}",
            labels.num_nodes(),
            emb.num_nodes()
        )));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::validation("classification train fraction must lie in (0, 1)"));
    }
    if cfg.runs == 0 {
        return Err(Error::validation("classification needs at least one run"));
    }
    let nodes = labels.labeled_nodes();
    let train_len = (cfg.train_fraction * nodes.len() as f64).round() as usize;
    if train_len == 0 || train_len == nodes.len() {
        return Err(Error::validation(format!(
            "{} labeled nodes cannot be split at {}",
            nodes.len(),
            cfg.train_fraction
        )));
    }
    let outcomes: Vec<Result<(F1Scores, usize)>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut order = nodes.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(run as u64)));
            let (train, test) = order.split_at(train_len);
            classify_once(emb, labels, train, test, &cfg.classifier)
        })
        .collect();
    let mut runs = Vec::with_capacity(cfg.runs);
    let mut missing_labels = 0;
    for o in outcomes {
        let (scores, missing) = o?;
        runs.push(scores);
        missing_labels += missing;
    }
    let k = runs.len() as f64;
    let mean = F1Scores {
        micro: runs.iter().map(|s| s.micro).sum::<f64>() / k,
        macro_: runs.iter().map(|s| s.macro_).sum::<f64>() / k,
    };
    Ok(ClassificationResult {
        mean,
        runs,
        missing_labels,
    })
}

fn classify_once(
    emb: &EmbeddingMatrix,
    labels: &NodeLabels,
    train: &[usize],
    test: &[usize],
    cfg: &LogisticConfig,
) -> Result<(F1Scores, usize)> {
    let d = emb.dim();
    let gather = |nodes: &[usize]| -> Vec<f64> { nodes.iter().flat_map(|&n| emb.vector(n).iter().copied()).collect() };
    let train_x = gather(train);
    let test_x = gather(test);
    let test_features = Features { data: &test_x, dim: d };
    let num_labels = labels.num_labels();
    let mut scores = vec![vec![f64::NEG_INFINITY; num_labels]; test.len()];
    let mut missing = 0;
    for label in 0..num_labels {
        let y: Vec<bool> = train.iter().map(|&n| labels.labels[n].contains(&label)).collect();
        if !y.contains(&true) {
            log::warn!("label {} has no training node; predicted as all-negative", labels.label_ids[label]);
            missing += 1;
            continue;
        }
        let model = LogisticRegression::fit(Features { data: &train_x, dim: d }, &y, cfg)?;
        for (i, row) in scores.iter_mut().enumerate() {
            row[label] = model.decision(test_features.row(i));
        }
    }
    let mut confusion = LabelConfusion::new(num_labels);
    for (i, &node) in test.iter().enumerate() {
        let truth = &labels.labels[node];
        let mut ranked: Vec<usize> = (0..num_labels).filter(|&l| scores[i][l].is_finite()).collect();
        ranked.sort_by(|&a, &b| scores[i][b].total_cmp(&scores[i][a]).then(a.cmp(&b)));
        ranked.truncate(truth.len());
        confusion.record(truth, &ranked);
    }
    Ok((confusion.scores(), missing))
}
