//! Downstream evaluation, metric records and summary tables.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use epine_core::embedding::EmbeddingMatrix;
use epine_core::evaluation::ablation::{ablation_run, flag_matrix, named_variants, AblationRow};
use epine_core::evaluation::logistic::LogisticConfig;
use epine_core::evaluation::split::{connectivity_preserving_removal, Task};
use epine_core::evaluation::tasks::{
    link_prediction_auc, multilabel_f1, reconstruction_auc, ClassificationConfig, EdgeEvalConfig,
};
use epine_core::graph::{load_labels, Graph, NodeLabels};
use epine_core::pipeline;

use crate::config::{AblationSet, Settings};

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub fingerprint: String,
}

fn edge_config(s: &Settings) -> EdgeEvalConfig {
    EdgeEvalConfig {
        feature: s.eval.edge_feature,
        classifier: classifier(s),
    }
}

fn classifier(s: &Settings) -> LogisticConfig {
    LogisticConfig {
        c: s.eval.c,
        ..Default::default()
    }
}

fn classification_config(s: &Settings) -> ClassificationConfig {
    ClassificationConfig {
        train_fraction: s.eval.classification_train,
        runs: s.eval.runs,
        classifier: classifier(s),
    }
}

/// Loads the label file, failing early when classification is requested
/// without one.
pub fn labels_for(s: &Settings, g: &Graph, required: bool) -> Result<Option<NodeLabels>> {
    match &s.labels {
        Some(path) => Ok(Some(
            load_labels(path, g).with_context(|| format!("loading labels {}", path.display()))?,
        )),
        None if required => bail!("invalid input: classification needs a label file (set labels=PATH)"),
        None => Ok(None),
    }
}

/// Runs every configured task `repeats` times. Reconstruction and
/// classification score `emb`; link prediction retrains on the graph left
/// after edge removal.
pub fn evaluate(
    s: &Settings,
    g: &Graph,
    emb: &EmbeddingMatrix,
    labels: Option<&NodeLabels>,
    variant: &str,
    fingerprint: &str,
) -> Result<Vec<Record>> {
    let cfg = &s.pipeline;
    let mut out = Vec::new();
    for &task in &s.eval.tasks {
        for r in 0..s.eval.repeats {
            let seed = cfg.seed.wrapping_add(r);
            let mut metrics = BTreeMap::new();
            match task {
                Task::Reconstruction => {
                    let auc = reconstruction_auc(g, emb, s.eval.reconstruction_train, seed, &edge_config(s))?;
                    metrics.insert("auc".to_string(), auc);
                }
                Task::LinkPrediction => {
                    let removal = connectivity_preserving_removal(g, s.eval.removal, seed)?;
                    if removal.removed.is_empty() {
                        bail!("link prediction removed no edges; the graph is too sparse for removal={}", s.eval.removal);
                    }
                    let run_cfg = pipeline::PipelineConfig { seed, ..cfg.clone() };
                    let train_emb = pipeline::embed(&removal.train, &run_cfg)?;
                    let auc = link_prediction_auc(g, &removal, &train_emb, seed, &edge_config(s))?;
                    metrics.insert("auc".to_string(), auc);
                    metrics.insert("removed_edges".to_string(), removal.removed.len() as f64);
                }
                Task::Classification => {
                    let labels = labels.context("classification needs a label file (set labels=PATH)")?;
                    let res = multilabel_f1(emb, labels, seed, &classification_config(s))?;
                    metrics.insert("micro_f1".to_string(), res.mean.micro);
                    metrics.insert("macro_f1".to_string(), res.mean.macro_);
                }
            }
            log::info!("{task} seed {seed}: {metrics:?}");
            out.push(Record {
                task: task.to_string(),
                variant: variant.to_string(),
                seed,
                metrics,
                fingerprint: fingerprint.to_string(),
            });
        }
    }
    Ok(out)
}

/// Scores each ablation variant with classification F1 when labels are
/// available and reconstruction AUC otherwise.
pub fn ablate(s: &Settings, g: &Graph, labels: Option<&NodeLabels>, fingerprint: &str) -> Result<(Vec<AblationRow>, Vec<Record>)> {
    let variants = match s.ablation {
        AblationSet::Named => named_variants(),
        AblationSet::Matrix => flag_matrix(),
    };
    let seed = s.pipeline.seed;
    let task = if labels.is_some() { Task::Classification } else { Task::Reconstruction };
    let rows = ablation_run(g, &variants, &s.pipeline, |emb| {
        let mut m = BTreeMap::new();
        match labels {
            Some(labels) => {
                let res = multilabel_f1(emb, labels, seed, &classification_config(s))?;
                m.insert("micro_f1".to_string(), res.mean.micro);
                m.insert("macro_f1".to_string(), res.mean.macro_);
            }
            None => {
                m.insert(
                    "auc".to_string(),
                    reconstruction_auc(g, emb, s.eval.reconstruction_train, seed, &edge_config(s))?,
                );
            }
        }
        Ok(m)
    })?;
    let records = rows
        .iter()
        .filter(|r| r.skipped.is_none())
        .map(|r| Record {
            task: task.to_string(),
            variant: r.variant.clone(),
            seed,
            metrics: r.metrics.clone(),
            fingerprint: fingerprint.to_string(),
        })
        .collect();
    Ok((rows, records))
}

pub fn append_jsonl(path: &Path, records: &[Record]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    for r in records {
        serde_json::to_writer(&mut f, r)?;
        writeln!(f)?;
    }
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and sample standard deviation per (variant, task, metric), in first-seen order.
pub fn summary_table(records: &[Record]) -> String {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    let mut values: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in records {
        for (metric, v) in &r.metrics {
            let key = (r.variant.clone(), r.task.clone(), metric.clone());
            if !values.contains_key(&key) {
                keys.push(key.clone());
            }
            values.entry(key).or_default().push(*v);
        }
    }
    let width = keys.iter().map(|k| k.0.len()).max().unwrap_or(7).max(7);
    let mut out = format!("{:<width$}  {:<16} {:<14} {:>8} {:>8} {:>3}\n", "variant", "task", "metric", "mean", "std", "n");
    for key in keys {
        let v = &values[&key];
        let (mean, std) = mean_std(v);
        out.push_str(&format!(
            "{:<width$}  {:<16} {:<14} {:>8.4} {:>8.4} {:>3}\n",
            key.0,
            key.1,
            key.2,
            mean,
            std,
            v.len()
        ));
    }
    out
}

/// Ablation rows including skipped variants, with their flags.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let width = rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7);
    let mut out = format!("{:<width$}  {:<40} {:>5}  metrics\n", "variant", "flags", "order");
    for r in rows {
        let metrics = match &r.skipped {
            Some(why) => format!("skipped: {why}"),
            None => r
                .metrics
                .iter()
                .map(|(k, v)| format!("{k}={v:.4}"))
                .collect::<Vec<_>>()
                .join(" "),
        };
        out.push_str(&format!(
            "{:<width$}  {:<40} {:>5}  {}\n",
            r.variant,
            r.flags.label(),
            r.reached_order,
            metrics
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(variant: &str, v: f64) -> Record {
        Record {
            task: "reconstruction".into(),
            variant: variant.into(),
            seed: 1,
            metrics: BTreeMap::from([("auc".to_string(), v)]),
            fingerprint: "f".into(),
        }
    }

    #[test]
    fn summary_aggregates_per_variant() {
        let t = summary_table(&[record("a", 0.5), record("a", 0.7), record("b", 1.0)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with('a') && lines[1].contains("0.6000") && lines[1].contains("0.1414"));
        assert!(lines[2].starts_with('b') && lines[2].contains("1.0000"));
    }

    #[test]
    fn jsonl_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        append_jsonl(&path, &[record("a", 0.5)]).unwrap();
        append_jsonl(&path, &[record("b", 0.6)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: Vec<Record> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(back, vec![record("a", 0.5), record("b", 0.6)]);
    }
}
