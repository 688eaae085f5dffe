//! Graph → proximity → similarity → embedding, as one configured run.

use serde::{Deserialize, Serialize};

use crate::embedding::{self, EmbeddingMatrix, TrainConfig};
use crate::error::{Error, Result};
use crate::graph::{normalize_weights_by_max, reweight_by_degree, Graph};
use crate::proximity::{compute_stack, ProximityConfig, ProximityStack};
use crate::similarity::{assemble_similarity, SimilarityConfig, SimilarityMatrix};

/// When to apply the degree penalty `1/(d_i d_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweightMode {
    /// Only for unweighted input.
    #[default]
    Auto,
    On,
    Off,
}

impl std::fmt::Display for ReweightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReweightMode::Auto => "auto",
            ReweightMode::On => "on",
            ReweightMode::Off => "off",
        })
    }
}

impl std::str::FromStr for ReweightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ReweightMode::Auto),
            "on" | "true" | "yes" | "1" => Ok(ReweightMode::On),
            "off" | "false" | "no" | "0" => Ok(ReweightMode::Off),
            _ => Err(Error::validation(format!("unknown reweight mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub reweight: ReweightMode,
    /// Divide input weights by their maximum before anything else.
    pub normalize_weights: bool,
    pub proximity: ProximityConfig,
    pub similarity: SimilarityConfig,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            reweight: ReweightMode::Auto,
            normalize_weights: false,
            proximity: ProximityConfig::default(),
            similarity: SimilarityConfig::default(),
            train: TrainConfig::default(),
            seed: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.proximity.k == 0 {
            return Err(Error::validation("proximity order k must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.similarity.eta) {
            return Err(Error::validation(format!(
                "eta must lie in [0, 1), got {}",
                self.similarity.eta
            )));
        }
        self.similarity.schedule.validate()?;
        self.train.validate()
    }
}

/// Applies weight normalization and reweighting as configured.
pub fn prepare_graph(g: &Graph, cfg: &PipelineConfig) -> Result<Graph> {
    let g = if cfg.normalize_weights && g.weighted() {
        normalize_weights_by_max(g)
    } else {
        g.clone()
    };
    match cfg.reweight {
        ReweightMode::Off => Ok(g),
        ReweightMode::Auto if g.weighted() => Ok(g),
        ReweightMode::Auto | ReweightMode::On => reweight_by_degree(&g),
    }
}

/// Proximity stack and similarity for an already prepared graph.
pub fn similarity(prepared: &Graph, cfg: &PipelineConfig) -> Result<(ProximityStack, SimilarityMatrix)> {
    let stack = compute_stack(prepared, &cfg.proximity)?;
    let sim = assemble_similarity(&stack, &cfg.similarity)?;
    Ok((stack, sim))
}

/// Full run from raw graph to embedding.
pub fn embed(g: &Graph, cfg: &PipelineConfig) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    let prepared = prepare_graph(g, cfg)?;
    let (_, sim) = similarity(&prepared, cfg)?;
    embedding::train(&sim.matrix, &cfg.train, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    #[test]
    fn auto_reweights_only_unweighted_graphs() {
        let cfg = PipelineConfig::default();
        let g = generators::path(4);
        assert!(prepare_graph(&g, &cfg).unwrap().reweighted());
        let w = Graph::from_edges(3, false, true, [(0, 1, 2.0), (1, 2, 4.0)]).unwrap();
        let p = prepare_graph(&w, &cfg).unwrap();
        assert!(!p.reweighted());
        assert_eq!(p.adjacency(), w.adjacency());
    }

    #[test]
    fn forced_reweight_on_weighted_input_is_an_error() {
        let cfg = PipelineConfig {
            reweight: ReweightMode::On,
            ..Default::default()
        };
        let w = Graph::from_edges(3, false, true, [(0, 1, 2.0), (1, 2, 4.0)]).unwrap();
        assert!(prepare_graph(&w, &cfg).is_err());
    }

    #[test]
    fn normalize_divides_by_the_maximum() {
        let cfg = PipelineConfig {
            normalize_weights: true,
            ..Default::default()
        };
        let w = Graph::from_edges(3, false, true, [(0, 1, 2.0), (1, 2, 4.0)]).unwrap();
        let p = prepare_graph(&w, &cfg).unwrap();
        assert_eq!(p.adjacency().get(0, 1), 0.5);
        assert_eq!(p.adjacency().get(2, 1), 1.0);
    }

    #[test]
    fn embed_runs_end_to_end() {
        let mut cfg = PipelineConfig::default();
        cfg.train.dim = 4;
        cfg.train.samples = Some(10_000);
        let emb = embed(&generators::cycle(6), &cfg).unwrap();
        assert_eq!((emb.num_nodes(), emb.dim()), (6, 4));
    }
}
