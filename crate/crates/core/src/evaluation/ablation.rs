//! Step-by-step construction of the full method from plain LINE.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{self, EmbeddingMatrix};
use crate::error::Result;
use crate::graph::Graph;
use crate::pipeline::{prepare_graph, similarity, PipelineConfig, ReweightMode};
use crate::proximity::{MaskMode, MatmulMode};

/// Which calculation steps a variant enables. All off is LINE on `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct VariantFlags {
    pub reweight: bool,
    /// Add the second-order proximity matrix to the similarity.
    pub second_order: bool,
    pub additive: bool,
    pub truncate: bool,
    /// Replace the rectified mask by the unmasked product.
    pub vanilla: bool,
}

impl VariantFlags {
    pub const FULL: VariantFlags = VariantFlags {
        reweight: true,
        second_order: true,
        additive: true,
        truncate: true,
        vanilla: false,
    };

    /// Compact label such as `rw+2nd+add+trunc`, or `line` when all off.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.reweight, "rw"),
            (self.second_order, "2nd"),
            (self.additive, "add"),
            (self.truncate, "trunc"),
            (self.vanilla, "vanilla"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| *s)
        .collect();
        if parts.is_empty() {
            "line".to_string()
        } else {
            parts.join("+")
        }
    }

    /// Pipeline settings for this variant; `base` supplies everything the
    /// flags do not decide. The truncation level is `base.similarity.eta`.
    pub fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        cfg.reweight = if self.reweight { ReweightMode::On } else { ReweightMode::Off };
        cfg.proximity.k = if self.second_order { 2 } else { 1 };
        cfg.proximity.matmul = if self.additive {
            MatmulMode::Additive
        } else {
            MatmulMode::Multiplicative
        };
        cfg.proximity.mask = if self.vanilla { MaskMode::Vanilla } else { MaskMode::Rectified };
        if !self.truncate {
            cfg.similarity.eta = 0.0;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub flags: VariantFlags,
}

impl Variant {
    fn new(name: &str, flags: VariantFlags) -> Self {
        Self {
            name: name.to_string(),
            flags,
        }
    }
}

/// The base row and the six named construction steps.
pub fn named_variants() -> Vec<Variant> {
    let off = VariantFlags::default();
    let rw = VariantFlags { reweight: true, ..off };
    let rw2 = VariantFlags {
        second_order: true,
        ..rw
    };
    let add = VariantFlags { additive: true, ..rw2 };
    vec![
        Variant::new("LINE", off),
        Variant::new("+ reweighting", rw),
        Variant::new("+ rectified second-order", rw2),
        Variant::new("w/o reweighting", VariantFlags { reweight: false, ..rw2 }),
        Variant::new("+ add-dot", add),
        Variant::new("rectified -> vanilla", VariantFlags { vanilla: true, ..add }),
        Variant::new("+ truncating", VariantFlags::FULL),
    ]
}

/// All 16 combinations of reweight, second order, add-dot and truncation
/// under the rectified mask.
pub fn flag_matrix() -> Vec<Variant> {
    (0..16u8)
        .map(|bits| {
            let flags = VariantFlags {
                reweight: bits & 1 != 0,
                second_order: bits & 2 != 0,
                additive: bits & 4 != 0,
                truncate: bits & 8 != 0,
                vanilla: false,
            };
            Variant::new(&flags.label(), flags)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub flags: VariantFlags,
    /// Why the variant was not run, e.g. reweighting a weighted graph.
    pub skipped: Option<String>,
    pub reached_order: usize,
    pub metrics: BTreeMap<String, f64>,
}

/// Runs every variant through the pipeline and scores its embedding with
/// `evaluate`. Variants run in parallel; each one is seeded by `base.seed`.
pub fn ablation_run<F>(g: &Graph, variants: &[Variant], base: &PipelineConfig, evaluate: F) -> Result<Vec<AblationRow>>
where
    F: Fn(&EmbeddingMatrix) -> Result<BTreeMap<String, f64>> + Sync,
{
    base.validate()?;
    variants
        .par_iter()
        .map(|v| {
            let mut row = AblationRow {
                variant: v.name.clone(),
                flags: v.flags,
                skipped: None,
                reached_order: 0,
                metrics: BTreeMap::new(),
            };
            if v.flags.reweight && g.weighted() {
                row.skipped = Some("reweighting needs an unweighted graph".to_string());
                return Ok(row);
            }
            let cfg = v.flags.apply(base);
            let prepared = prepare_graph(g, &cfg)?;
            let (stack, sim) = similarity(&prepared, &cfg)?;
            row.reached_order = stack.reached_order();
            let emb = embedding::train(&sim.matrix, &cfg.train, cfg.seed)?;
            row.metrics = evaluate(&emb)?;
            Ok(row)
        })
        .collect()
}
