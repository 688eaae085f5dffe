//! `epine`: proximity, similarity, embedding and evaluation from the command line.

mod config;
mod report;
mod stages;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use epine_core::io;

use config::Settings;
use stages::{Manifest, Pipeline};

/// Environment variable holding the default worker count.
const WORKERS_ENV: &str = "EPINE_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "epine", version, about = "Rectified k-order proximity embeddings for sparse graphs")]
#[command(after_help = "Configuration keys (config file or --set):\n  input directed weighted labels out seed workers reweight normalize_weights\n  k matmul mask drop_tolerance lambda eta alpha_source\n  order dim samples samples_per_entry max_samples negatives learning_rate\n  min_rate_ratio noise_exponent both_split\n  tasks repeats runs reconstruction_train removal classification_train c edge_feature ablation")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key; repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Edge list to read.
    #[arg(short, long, global = true)]
    input: Option<PathBuf>,

    /// `node label` file for classification.
    #[arg(long, global = true)]
    labels: Option<PathBuf>,

    /// Output directory holding the stage cache and exported results.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for every stage [env: EPINE_WORKERS].
    #[arg(short, long, global = true)]
    workers: Option<usize>,

    /// Recompute stages even when a cached result exists.
    #[arg(long, global = true)]
    refresh: bool,

    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse the edge list and cache the graph.
    Load,
    /// Compute and cache the rectified proximity stack.
    Proximity,
    /// Assemble and cache the similarity matrix.
    Similarity {
        /// Also write `i j value` triplets with raw ids.
        #[arg(long)]
        triplets: Option<PathBuf>,
    },
    /// Train and export node embeddings.
    Embed,
    /// Score an embedding on the configured tasks.
    Evaluate {
        /// Binary embedding to score; defaults to the one for the current settings.
        #[arg(long)]
        embedding: Option<PathBuf>,
        /// Accept an embedding whose fingerprint differs from the current settings.
        #[arg(long)]
        force: bool,
    },
    /// Run the construction ablation, named rows or the full flag matrix.
    Ablate,
    /// Load, embed and evaluate in one go.
    RunAll,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Load => "load",
            Command::Proximity => "proximity",
            Command::Similarity { .. } => "similarity",
            Command::Embed => "embed",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate => "ablate",
            Command::RunAll => "run-all",
        }
    }
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::default();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        s.pipeline.train.workers = v
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV}={v:?} is not a worker count"))?;
    }
    if let Some(path) = &cli.config {
        s.apply_file(path)?;
    }
    for o in &cli.overrides {
        s.apply_override(o)?;
    }
    if let Some(p) = &cli.input {
        s.input = Some(p.clone());
    }
    if let Some(p) = &cli.labels {
        s.labels = Some(p.clone());
    }
    if let Some(p) = &cli.out {
        s.out = p.clone();
    }
    if let Some(w) = cli.workers {
        s.pipeline.train.workers = w;
    }
    s.validate()?;
    if let Some(labels) = &s.labels {
        if !labels.exists() {
            bail!("label file {} does not exist", labels.display());
        }
    }
    Ok(s)
}

/// Copies the latest manifest of a stage to `out/<stage>.json`.
fn export_manifest(s: &Settings, m: &Manifest) -> Result<PathBuf> {
    fs::create_dir_all(&s.out)?;
    let path = s.out.join(format!("{}.json", m.stage));
    fs::write(&path, serde_json::to_vec_pretty(m)?)?;
    Ok(path)
}

fn status(cached: bool) -> &'static str {
    if cached {
        "cached"
    } else {
        "computed"
    }
}

fn run(cli: &Cli) -> Result<()> {
    let s = settings(cli).context("config")?;
    let workers = s.pipeline.train.workers;
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
        log::debug!("thread pool already initialised: {e}");
    }
    let mut p = Pipeline::new(&s);
    p.refresh = cli.refresh;
    let stage = cli.command.stage();
    let tag = |r: Result<()>| r.with_context(|| format!("[{stage}] failed"));
    match &cli.command {
        Command::Load => tag(cmd_load(&p)),
        Command::Proximity => tag(cmd_proximity(&p)),
        Command::Similarity { triplets } => tag(cmd_similarity(&p, triplets.as_deref())),
        Command::Embed => tag(cmd_embed(&p)),
        Command::Evaluate { embedding, force } => tag(cmd_evaluate(&p, embedding.as_deref(), *force)),
        Command::Ablate => tag(cmd_ablate(&p)),
        Command::RunAll => tag(cmd_run_all(&p)),
    }
}

fn cmd_load(p: &Pipeline) -> Result<()> {
    let st = p.load()?;
    let g = &st.value.graph;
    let path = export_manifest(p.settings, &st.manifest)?;
    println!(
        "graph {}: {} nodes, {} edges, id base {} ({})",
        st.manifest.fingerprint,
        g.num_nodes(),
        g.num_edges(),
        g.ids().base,
        status(st.cached)
    );
    println!("manifest {}", path.display());
    Ok(())
}

fn cmd_proximity(p: &Pipeline) -> Result<()> {
    let st = p.proximity()?;
    let path = export_manifest(p.settings, &st.manifest)?;
    println!(
        "proximity {}: reached order {} of {}{} ({})",
        st.manifest.fingerprint,
        st.value.reached_order(),
        st.value.requested_order,
        if st.value.early_stopped { ", stopped early" } else { "" },
        status(st.cached)
    );
    println!("manifest {}", path.display());
    Ok(())
}

fn cmd_similarity(p: &Pipeline, triplets: Option<&Path>) -> Result<()> {
    let st = p.similarity()?;
    let path = export_manifest(p.settings, &st.manifest)?;
    if let Some(t) = triplets {
        let f = fs::File::create(t).with_context(|| format!("creating {}", t.display()))?;
        io::write_triplets(&st.value, st.manifest.ids(), std::io::BufWriter::new(f))?;
    }
    println!(
        "similarity {}: {} stored entries ({})",
        st.manifest.fingerprint,
        st.value.nnz(),
        status(st.cached)
    );
    println!("manifest {}", path.display());
    Ok(())
}

fn cmd_embed(p: &Pipeline) -> Result<()> {
    let st = p.embed()?;
    let out = &p.settings.out;
    let path = export_manifest(p.settings, &st.manifest)?;
    fs::copy(st.dir.join("embedding.bin"), out.join("embedding.bin"))?;
    fs::copy(st.dir.join("embedding.txt"), out.join("embedding.txt"))?;
    println!(
        "embedding {}: {} nodes x {} dims ({})",
        st.manifest.fingerprint,
        st.value.num_nodes(),
        st.value.dim(),
        status(st.cached)
    );
    println!("wrote {} and {}", out.join("embedding.txt").display(), out.join("embedding.bin").display());
    println!("manifest {}", path.display());
    Ok(())
}

fn cmd_evaluate(p: &Pipeline, embedding: Option<&Path>, force: bool) -> Result<()> {
    let s = p.settings;
    let graph = p.load()?.value.graph;
    let wants_labels = s.eval.tasks.contains(&epine_core::evaluation::split::Task::Classification);
    let labels = report::labels_for(s, &graph, wants_labels)?;
    let expected = p.expected_embedding_fingerprint()?;
    let (emb, fingerprint) = match embedding {
        Some(path) => {
            let (emb, meta) = io::load_embedding(path)?;
            if meta.fingerprint != expected {
                if !force {
                    bail!(
                        "embedding {} has fingerprint {} but the current settings give {expected}; pass --force to evaluate it anyway",
                        path.display(),
                        meta.fingerprint
                    );
                }
                log::warn!("evaluating {} despite a fingerprint mismatch", path.display());
            }
            (emb, meta.fingerprint)
        }
        None => {
            let st = p.embed()?;
            export_manifest(s, &st.manifest)?;
            (st.value, st.manifest.fingerprint)
        }
    };
    let records = report::evaluate(s, &graph, &emb, labels.as_ref(), "full", &fingerprint)?;
    let path = s.out.join("metrics.jsonl");
    report::append_jsonl(&path, &records)?;
    print!("{}", report::summary_table(&records));
    println!("metrics {}", path.display());
    Ok(())
}

fn cmd_ablate(p: &Pipeline) -> Result<()> {
    let s = p.settings;
    let loaded = p.load()?.value;
    let labels = report::labels_for(s, &loaded.graph, false)?;
    let (rows, records) = report::ablate(s, &loaded.graph, labels.as_ref(), &loaded.manifest.fingerprint)?;
    let path = s.out.join("ablation.jsonl");
    report::append_jsonl(&path, &records)?;
    print!("{}", report::ablation_table(&rows));
    println!("metrics {}", path.display());
    Ok(())
}

fn cmd_run_all(p: &Pipeline) -> Result<()> {
    cmd_load(p).context("load")?;
    cmd_proximity(p).context("proximity")?;
    cmd_similarity(p, None).context("similarity")?;
    cmd_embed(p).context("embed")?;
    cmd_evaluate(p, None, false).context("evaluate")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
