//! Similarity assembly: `S = P1 + Σ_{i≥2} α_i · trunc(P_i)` with
//! `α_i = λ_i / max(trunc(P_i))`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proximity::{MaskMode, MatmulMode, ProximityStack};
use crate::sparse::CsrMatrix;

/// Decay coefficient `λ_i` for each order `i ≥ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecaySchedule {
    /// `λ_i = base^(i-2)`.
    Geometric { base: f64 },
    /// `lambdas[0]` is `λ_2`; orders past the end get zero.
    Explicit { lambdas: Vec<f64> },
}

impl Default for DecaySchedule {
    fn default() -> Self {
        DecaySchedule::Geometric { base: 0.1 }
    }
}

impl DecaySchedule {
    pub fn lambda(&self, order: usize) -> f64 {
        debug_assert!(order >= 2);
        match self {
            DecaySchedule::Geometric { base } => base.powi(order as i32 - 2),
            DecaySchedule::Explicit { lambdas } => lambdas.get(order - 2).copied().unwrap_or(0.0),
        }
    }

    /// A zero coefficient switches an order off.
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match self {
            DecaySchedule::Geometric { base } => ok(*base),
            DecaySchedule::Explicit { lambdas } => lambdas.iter().all(|&v| ok(v)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid decay schedule {self:?}")))
        }
    }
}

impl FromStr for DecaySchedule {
    type Err = Error;

    /// `"0.1"` is a geometric base; `"1,0.1,0.01"` lists `λ_2, λ_3, ...`.
    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::validation(format!("invalid decay value {t:?}")))
        };
        let schedule = if s.contains(',') {
            DecaySchedule::Explicit {
                lambdas: s.split(',').map(parse).collect::<Result<_>>()?,
            }
        } else {
            DecaySchedule::Geometric { base: parse(s)? }
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl std::fmt::Display for DecaySchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecaySchedule::Geometric { base } => write!(f, "{base}"),
            DecaySchedule::Explicit { lambdas } => {
                let parts: Vec<String> = lambdas.iter().map(|v| v.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

/// Which matrix maximum the decay normalizer divides by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    Truncated,
    Raw,
}

impl FromStr for AlphaSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truncated" => Ok(AlphaSource::Truncated),
            "raw" => Ok(AlphaSource::Raw),
            _ => Err(Error::validation(format!("unknown alpha source {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TruncationReport {
    /// Number of largest elements targeted, `⌊η·|V|²⌋`.
    pub target: usize,
    /// Clip value, when truncation happened.
    pub threshold: Option<f64>,
    /// Entries lowered to the threshold.
    pub changed: usize,
}

/// Clips the `⌊eta·|V|²⌋` largest stored entries to the next strictly
/// smaller value. `|V|` is the row count.
pub fn truncate_top(m: &CsrMatrix, eta: f64) -> Result<(CsrMatrix, TruncationReport)> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::validation(format!("eta must lie in [0, 1), got {eta}")));
    }
    let n = m.rows() as f64;
    let target = (eta * n * n).floor() as usize;
    Ok(truncate_top_count(m, target))
}

/// Clips the `target` largest stored entries. Every entry tied with the
/// `target`-th largest value is clipped along with it; the threshold is
/// the largest stored value strictly below that one.
pub fn truncate_top_count(m: &CsrMatrix, target: usize) -> (CsrMatrix, TruncationReport) {
    let mut report = TruncationReport {
        target,
        ..Default::default()
    };
    if target == 0 {
        return (m.clone(), report);
    }
    if target >= m.nnz() {
        log::warn!(
            "truncation of {target} elements is vacuous for a matrix with {} stored entries",
            m.nnz()
        );
        return (m.clone(), report);
    }
    let mut sorted = m.values().to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let cut = sorted[target - 1];
    let Some(threshold) = sorted[target..].iter().copied().find(|&v| v < cut) else {
        log::warn!("truncation found no value below {cut}; matrix left unchanged");
        return (m.clone(), report);
    };
    let mut changed = 0;
    let out = m.map_values(|v| {
        if v > threshold {
            changed += 1;
            threshold
        } else {
            v
        }
    });
    report.threshold = Some(threshold);
    report.changed = changed;
    (out, report)
}

/// Scales `m` so that its largest entry is exactly 1; also returns that maximum.
pub fn normalize_by_max(m: &CsrMatrix) -> Result<(CsrMatrix, f64)> {
    let max = m
        .max_value()
        .ok_or_else(|| Error::validation("cannot normalize an empty matrix"))?;
    Ok((m.map_values(|v| v / max), max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub schedule: DecaySchedule,
    pub eta: f64,
    pub alpha_source: AlphaSource,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self {
            schedule: DecaySchedule::default(),
            eta: 11e-4,
            alpha_source: AlphaSource::Truncated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderContribution {
    pub order: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub raw_max: f64,
    pub truncation: TruncationReport,
}

/// Settings that produced a similarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProvenance {
    pub requested_order: usize,
    pub reached_order: usize,
    pub matmul: MatmulMode,
    pub mask: MaskMode,
    pub config: SimilarityConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub matrix: CsrMatrix,
    pub contributions: Vec<OrderContribution>,
    pub provenance: SimilarityProvenance,
}

impl SimilarityMatrix {
    /// Wraps a plain matrix (e.g. a raw adjacency) as a similarity.
    pub fn from_matrix(matrix: CsrMatrix) -> Self {
        Self {
            matrix,
            contributions: Vec::new(),
            provenance: SimilarityProvenance {
                requested_order: 1,
                reached_order: 1,
                matmul: MatmulMode::Multiplicative,
                mask: MaskMode::Rectified,
                config: SimilarityConfig {
                    eta: 0.0,
                    ..Default::default()
                },
            },
        }
    }
}

/// Sums the stack with truncation and decay applied to every order ≥ 2.
pub fn assemble_similarity(stack: &ProximityStack, cfg: &SimilarityConfig) -> Result<SimilarityMatrix> {
    cfg.schedule.validate()?;
    if stack.matrices.is_empty() {
        return Err(Error::validation("proximity stack is empty"));
    }
    let mut total = stack.first_order().clone();
    let mut contributions = Vec::new();
    for (idx, m) in stack.matrices.iter().enumerate().skip(1) {
        let order = idx + 1;
        let lambda = cfg.schedule.lambda(order);
        let (truncated, truncation) = truncate_top(m, cfg.eta)?;
        let raw_max = m.max_value().unwrap_or(0.0);
        if lambda == 0.0 || truncated.is_zero() {
            contributions.push(OrderContribution {
                order,
                lambda,
                alpha: 0.0,
                raw_max,
                truncation,
            });
            continue;
        }
        let alpha = match cfg.alpha_source {
            AlphaSource::Truncated => {
                let (_, max) = normalize_by_max(&truncated)?;
                lambda / max
            }
            AlphaSource::Raw => lambda / raw_max,
        };
        total = total.add_scaled(&truncated, alpha)?;
        contributions.push(OrderContribution {
            order,
            lambda,
            alpha,
            raw_max,
            truncation,
        });
    }
    Ok(SimilarityMatrix {
        matrix: total,
        contributions,
        provenance: SimilarityProvenance {
            requested_order: stack.requested_order,
            reached_order: stack.reached_order(),
            matmul: stack.matmul_mode,
            mask: stack.mask_mode,
            config: cfg.clone(),
        },
    })
}
