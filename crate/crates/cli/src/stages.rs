//! Pipeline stages with a content-addressed cache.
//!
//! Each stage lives under `out/cache/<stage>/<fingerprint>/` and holds its
//! artifacts plus a `manifest.json`. A stage fingerprint hashes the upstream
//! fingerprint together with the settings that stage consumes, so changing
//! η or λ reuses the cached proximity stack.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use epine_core::embedding::{self, EmbeddingMatrix, TrainReport};
use epine_core::graph::{load_edge_list_with, Graph, IdMap, LoadOptions, LoadReport};
use epine_core::io::{self, ArtifactMeta};
use epine_core::pipeline::{prepare_graph, PipelineConfig};
use epine_core::proximity::{compute_stack, ProximityStack};
use epine_core::similarity::{assemble_similarity, SimilarityMatrix};
use epine_core::sparse::CsrMatrix;

use crate::config::Settings;

pub const MANIFEST: &str = "manifest.json";

/// Common header of every stage manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub fingerprint: String,
    pub upstream: Option<String>,
    pub num_nodes: usize,
    /// Subtracted from raw ids to obtain internal indices.
    pub id_base: u64,
    pub seconds: f64,
    #[serde(flatten)]
    pub details: Value,
}

impl Manifest {
    pub fn ids(&self) -> IdMap {
        IdMap { base: self.id_base }
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(m)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Writes into a sibling temp dir and renames, so a crashed stage never
/// leaves a half-filled cache entry behind.
fn publish(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = dir.parent().context("cache dir has no parent")?;
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    fill(&tmp)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}

pub struct Pipeline<'a> {
    pub settings: &'a Settings,
    /// Ignore cache hits and recompute every stage.
    pub refresh: bool,
}

pub struct LoadedGraph {
    pub graph: Graph,
    pub manifest: Manifest,
}

pub struct Stage<T> {
    pub value: T,
    pub manifest: Manifest,
    pub dir: PathBuf,
    pub cached: bool,
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(io::hex(&Sha256::digest(bytes)))
}

impl<'a> Pipeline<'a> {
    pub fn new(settings: &'a Settings) -> Self {
        Self {
            settings,
            refresh: false,
        }
    }

    fn cfg(&self) -> &PipelineConfig {
        &self.settings.pipeline
    }

    fn cache_dir(&self, stage: &str, fp: &str) -> PathBuf {
        self.settings.out.join("cache").join(stage).join(fp)
    }

    fn hit(&self, dir: &Path) -> bool {
        !self.refresh && dir.join(MANIFEST).exists()
    }

    pub fn graph_fingerprint(&self) -> Result<String> {
        let s = self.settings;
        let digest = file_digest(s.input()?)?;
        Ok(io::fingerprint(&json!({
            "input_sha256": digest,
            "directed": s.directed,
            "weighted": s.weighted,
        }))?)
    }

    pub fn proximity_fingerprint(&self, graph_fp: &str) -> Result<String> {
        let c = self.cfg();
        Ok(io::fingerprint(&json!({
            "graph": graph_fp,
            "reweight": c.reweight,
            "normalize_weights": c.normalize_weights,
            "proximity": c.proximity,
        }))?)
    }

    pub fn similarity_fingerprint(&self, proximity_fp: &str) -> Result<String> {
        Ok(io::fingerprint(&json!({
            "proximity": proximity_fp,
            "similarity": self.cfg().similarity,
        }))?)
    }

    pub fn embedding_fingerprint(&self, similarity_fp: &str) -> Result<String> {
        Ok(io::fingerprint(&json!({
            "similarity": similarity_fp,
            "train": self.cfg().train,
            "seed": self.cfg().seed,
        }))?)
    }

    /// Fingerprint the embedding stage would have under the current settings.
    pub fn expected_embedding_fingerprint(&self) -> Result<String> {
        let g = self.graph_fingerprint()?;
        let p = self.proximity_fingerprint(&g)?;
        let s = self.similarity_fingerprint(&p)?;
        self.embedding_fingerprint(&s)
    }

    pub fn load(&self) -> Result<Stage<LoadedGraph>> {
        let s = self.settings;
        let input = s.input()?.to_path_buf();
        let fp = self.graph_fingerprint()?;
        let dir = self.cache_dir("graph", &fp);
        if self.hit(&dir) {
            let manifest = read_manifest(&dir)?;
            let (adj, meta) = io::load_sparse(dir.join("adjacency.bin"))?;
            check_fingerprint(&meta, &fp, "graph")?;
            let graph = Graph::from_adjacency(adj, s.directed, s.weighted)?.with_ids(manifest.ids());
            return Ok(Stage {
                value: LoadedGraph {
                    graph,
                    manifest: manifest.clone(),
                },
                manifest,
                dir,
                cached: true,
            });
        }
        let start = Instant::now();
        let (graph, report): (Graph, LoadReport) = load_edge_list_with(&input, &LoadOptions::new(s.directed, s.weighted))?;
        let manifest = Manifest {
            stage: "graph".into(),
            fingerprint: fp.clone(),
            upstream: None,
            num_nodes: graph.num_nodes(),
            id_base: graph.ids().base,
            seconds: start.elapsed().as_secs_f64(),
            details: json!({
                "input": input,
                "directed": graph.directed(),
                "weighted": graph.weighted(),
                "num_edges": graph.num_edges(),
                "load": report,
            }),
        };
        let meta = ArtifactMeta::new(&fp).with("stage", "graph")?;
        publish(&dir, |tmp| {
            io::save_sparse(tmp.join("adjacency.bin"), graph.adjacency(), &meta)?;
            write_manifest(tmp, &manifest)
        })?;
        Ok(Stage {
            value: LoadedGraph {
                graph,
                manifest: manifest.clone(),
            },
            manifest,
            dir,
            cached: false,
        })
    }

    pub fn proximity(&self) -> Result<Stage<ProximityStack>> {
        let loaded = self.load()?.value;
        let fp = self.proximity_fingerprint(&loaded.manifest.fingerprint)?;
        let dir = self.cache_dir("proximity", &fp);
        let cfg = self.cfg();
        if self.hit(&dir) {
            let manifest = read_manifest(&dir)?;
            let reached = manifest.details["reached_order"].as_u64().context("manifest lacks reached_order")? as usize;
            let matrices = (1..=reached)
                .map(|order| -> Result<CsrMatrix> {
                    let (m, meta) = io::load_sparse(dir.join(order_file(order)))?;
                    check_fingerprint(&meta, &fp, "proximity")?;
                    Ok(m)
                })
                .collect::<Result<_>>()?;
            let stack = ProximityStack {
                matrices,
                requested_order: cfg.proximity.k,
                early_stopped: manifest.details["early_stopped"].as_bool().unwrap_or(false),
                matmul_mode: cfg.proximity.matmul,
                mask_mode: cfg.proximity.mask,
            };
            return Ok(Stage {
                value: stack,
                manifest,
                dir,
                cached: true,
            });
        }
        let start = Instant::now();
        let prepared = prepare_graph(&loaded.graph, cfg)?;
        let stack = compute_stack(&prepared, &cfg.proximity)?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!(
            "proximity: reached order {} of {} in {seconds:.3}s",
            stack.reached_order(),
            stack.requested_order
        );
        let manifest = Manifest {
            stage: "proximity".into(),
            fingerprint: fp.clone(),
            upstream: Some(loaded.manifest.fingerprint.clone()),
            num_nodes: prepared.num_nodes(),
            id_base: loaded.manifest.id_base,
            seconds,
            details: json!({
                "requested_order": stack.requested_order,
                "reached_order": stack.reached_order(),
                "early_stopped": stack.early_stopped,
                "reweighted": prepared.reweighted(),
                "config": cfg.proximity,
                "nnz": stack.matrices.iter().map(CsrMatrix::nnz).collect::<Vec<_>>(),
                "files": (1..=stack.reached_order()).map(order_file).collect::<Vec<_>>(),
            }),
        };
        publish(&dir, |tmp| {
            for (idx, m) in stack.matrices.iter().enumerate() {
                let meta = ArtifactMeta::new(&fp).with("stage", "proximity")?.with("order", idx + 1)?;
                io::save_sparse(tmp.join(order_file(idx + 1)), m, &meta)?;
            }
            write_manifest(tmp, &manifest)
        })?;
        Ok(Stage {
            value: stack,
            manifest,
            dir,
            cached: false,
        })
    }

    pub fn similarity(&self) -> Result<Stage<CsrMatrix>> {
        // fingerprints are computed without touching the proximity cache, so a
        // similarity hit never reloads the stack
        let graph_fp = self.graph_fingerprint()?;
        let proximity_fp = self.proximity_fingerprint(&graph_fp)?;
        let fp = self.similarity_fingerprint(&proximity_fp)?;
        let dir = self.cache_dir("similarity", &fp);
        if self.hit(&dir) {
            let manifest = read_manifest(&dir)?;
            let (m, meta) = io::load_sparse(dir.join("similarity.bin"))?;
            check_fingerprint(&meta, &fp, "similarity")?;
            return Ok(Stage {
                value: m,
                manifest,
                dir,
                cached: true,
            });
        }
        let stack = self.proximity()?;
        let start = Instant::now();
        let sim: SimilarityMatrix = assemble_similarity(&stack.value, &self.cfg().similarity)?;
        let manifest = Manifest {
            stage: "similarity".into(),
            fingerprint: fp.clone(),
            upstream: Some(proximity_fp),
            num_nodes: sim.matrix.rows(),
            id_base: stack.manifest.id_base,
            seconds: start.elapsed().as_secs_f64(),
            details: json!({
                "reached_order": stack.value.reached_order(),
                "nnz": sim.matrix.nnz(),
                "contributions": sim.contributions,
                "provenance": sim.provenance,
            }),
        };
        let meta = ArtifactMeta::new(&fp).with("stage", "similarity")?;
        publish(&dir, |tmp| {
            io::save_sparse(tmp.join("similarity.bin"), &sim.matrix, &meta)?;
            write_manifest(tmp, &manifest)
        })?;
        Ok(Stage {
            value: sim.matrix,
            manifest,
            dir,
            cached: false,
        })
    }

    pub fn embed(&self) -> Result<Stage<EmbeddingMatrix>> {
        let graph_fp = self.graph_fingerprint()?;
        let similarity_fp = self.similarity_fingerprint(&self.proximity_fingerprint(&graph_fp)?)?;
        let fp = self.embedding_fingerprint(&similarity_fp)?;
        let dir = self.cache_dir("embedding", &fp);
        if self.hit(&dir) {
            let manifest = read_manifest(&dir)?;
            let (e, meta) = io::load_embedding(dir.join("embedding.bin"))?;
            check_fingerprint(&meta, &fp, "embedding")?;
            return Ok(Stage {
                value: e,
                manifest,
                dir,
                cached: true,
            });
        }
        let sim = self.similarity()?;
        let cfg = self.cfg();
        let start = Instant::now();
        let (emb, reports): (EmbeddingMatrix, Vec<TrainReport>) =
            embedding::train_with_report(&sim.value, &cfg.train, cfg.seed)?;
        let manifest = Manifest {
            stage: "embedding".into(),
            fingerprint: fp.clone(),
            upstream: Some(similarity_fp),
            num_nodes: emb.num_nodes(),
            id_base: sim.manifest.id_base,
            seconds: start.elapsed().as_secs_f64(),
            details: json!({
                "dim": emb.dim(),
                "train": cfg.train,
                "seed": cfg.seed,
                "reports": reports,
            }),
        };
        let meta = ArtifactMeta::new(&fp)
            .with("stage", "embedding")?
            .with("id_base", sim.manifest.id_base)?;
        publish(&dir, |tmp| {
            io::save_embedding(tmp.join("embedding.bin"), &emb, &meta)?;
            let text = fs::File::create(tmp.join("embedding.txt"))?;
            io::write_embedding_text(&emb, manifest.ids(), std::io::BufWriter::new(text))?;
            write_manifest(tmp, &manifest)
        })?;
        Ok(Stage {
            value: emb,
            manifest,
            dir,
            cached: false,
        })
    }
}

fn order_file(order: usize) -> String {
    format!("order-{order}.bin")
}

fn check_fingerprint(meta: &ArtifactMeta, expected: &str, stage: &str) -> Result<()> {
    if meta.fingerprint != expected {
        bail!(
            "{stage} artifact fingerprint {} does not match its cache key {expected}",
            meta.fingerprint
        );
    }
    Ok(())
}
