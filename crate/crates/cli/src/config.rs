//! Flat `key = value` configuration with command-line overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use epine_core::evaluation::split::Task;
use epine_core::evaluation::tasks::EdgeFeature;
use epine_core::pipeline::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationSet {
    /// LINE plus the six construction steps.
    Named,
    /// All 16 combinations of the four flags.
    Matrix,
}

impl FromStr for AblationSet {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "named" | "rows" => Ok(AblationSet::Named),
            "matrix" | "all" => Ok(AblationSet::Matrix),
            _ => bail!("unknown ablation set {s:?} (expected named or matrix)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSettings {
    pub tasks: Vec<Task>,
    /// Independent repetitions of the edge tasks, seeded `seed, seed+1, ...`.
    pub repeats: u64,
    /// Classification runs per repetition.
    pub runs: usize,
    pub reconstruction_train: f64,
    pub removal: f64,
    pub classification_train: f64,
    pub c: f64,
    pub edge_feature: EdgeFeature,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            tasks: vec![Task::Reconstruction, Task::LinkPrediction, Task::Classification],
            repeats: 1,
            runs: 10,
            reconstruction_train: 0.8,
            removal: 0.4,
            classification_train: 0.9,
            c: 1.0,
            edge_feature: EdgeFeature::Concat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub directed: bool,
    pub weighted: bool,
    pub labels: Option<PathBuf>,
    pub out: PathBuf,
    pub pipeline: PipelineConfig,
    pub eval: EvalSettings,
    pub ablation: AblationSet,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            input: None,
            directed: false,
            weighted: false,
            labels: None,
            out: PathBuf::from("epine-out"),
            pipeline: PipelineConfig::default(),
            eval: EvalSettings::default(),
            ablation: AblationSet::Named,
        }
    }
}

fn parse<T>(key: &str, value: &str) -> Result<T>
where
    T: FromStr,
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => bail!("invalid value {value:?} for {key}: expected true or false"),
    }
}

fn optional_path(value: &str, base: &Path) -> Option<PathBuf> {
    match value {
        "" | "none" => None,
        v => Some(base.join(v)),
    }
}

impl Settings {
    /// Applies one assignment; relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let p = &mut self.pipeline;
        match key {
            "input" => self.input = optional_path(value, base),
            "directed" => self.directed = parse_bool(key, value)?,
            "weighted" => self.weighted = parse_bool(key, value)?,
            "labels" => self.labels = optional_path(value, base),
            "out" => self.out = base.join(value),
            "seed" => p.seed = parse(key, value)?,
            "workers" => p.train.workers = parse(key, value)?,
            "reweight" => p.reweight = parse(key, value)?,
            "normalize_weights" => p.normalize_weights = parse_bool(key, value)?,
            "k" => p.proximity.k = parse(key, value)?,
            "matmul" => p.proximity.matmul = parse(key, value)?,
            "mask" => p.proximity.mask = parse(key, value)?,
            "drop_tolerance" => p.proximity.drop_tolerance = parse(key, value)?,
            "lambda" => p.similarity.schedule = parse(key, value)?,
            "eta" => p.similarity.eta = parse(key, value)?,
            "alpha_source" => p.similarity.alpha_source = parse(key, value)?,
            "order" => p.train.order = parse(key, value)?,
            "dim" => p.train.dim = parse(key, value)?,
            "samples" => {
                p.train.samples = match value {
                    "auto" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "samples_per_entry" => p.train.samples_per_entry = parse(key, value)?,
            "max_samples" => p.train.max_samples = parse(key, value)?,
            "negatives" => p.train.negatives = parse(key, value)?,
            "learning_rate" => p.train.learning_rate = parse(key, value)?,
            "min_rate_ratio" => p.train.min_rate_ratio = parse(key, value)?,
            "noise_exponent" => p.train.noise_exponent = parse(key, value)?,
            "both_split" => p.train.both_split = parse(key, value)?,
            "tasks" => {
                self.eval.tasks = value
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| parse(key, t))
                    .collect::<Result<_>>()?
            }
            "repeats" => self.eval.repeats = parse(key, value)?,
            "runs" => self.eval.runs = parse(key, value)?,
            "reconstruction_train" => self.eval.reconstruction_train = parse(key, value)?,
            "removal" => self.eval.removal = parse(key, value)?,
            "classification_train" => self.eval.classification_train = parse(key, value)?,
            "c" => self.eval.c = parse(key, value)?,
            "edge_feature" => self.eval.edge_feature = parse(key, value)?,
            "ablation" => self.ablation = parse(key, value)?,
            _ => bail!("unknown key {key:?}"),
        }
        Ok(())
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key = value", path.display(), idx + 1))?;
            self.set(key.trim(), value.trim(), base)
                .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .with_context(|| format!("override {assignment:?} is not key=value"))?;
        self.set(key.trim(), value.trim(), Path::new("."))
    }

    /// Range checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        let e = &self.eval;
        for (name, v) in [
            ("reconstruction_train", e.reconstruction_train),
            ("removal", e.removal),
            ("classification_train", e.classification_train),
        ] {
            if !(v > 0.0 && v < 1.0) {
                bail!("{name} must lie in (0, 1), got {v}");
            }
        }
        if e.repeats == 0 || e.runs == 0 {
            bail!("repeats and runs must be at least 1");
        }
        if !(e.c > 0.0) {
            bail!("classifier constant c must be positive");
        }
        Ok(())
    }

    pub fn input(&self) -> Result<&Path> {
        let input = self.input.as_deref().context("no input graph configured (set input=PATH)")?;
        if !input.exists() {
            bail!("input graph {} does not exist", input.display());
        }
        Ok(input)
    }
}
