//! LINE-style embedding of a weighted similarity matrix.
//!
//! Each step draws a stored entry `(u, v)` with probability proportional to
//! its weight and `K` noise nodes with probability proportional to
//! (weighted out-degree)^`noise_exponent`, then takes a gradient step on
//!
//! ```text
//! -log σ(x_u · c_v) - Σ_n log σ(-x_u · c_n)
//! ```
//!
//! where `c = x` for first-order training and `c` is a separate context
//! matrix for second-order training. The learning rate decays linearly to
//! a small floor. With several workers the parameter rows are updated
//! without locks; only single-worker runs are reproducible bit for bit.

use std::cell::Cell;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Which proximity the trainer preserves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    First,
    Second,
    /// Concatenation of a first-order and a second-order run.
    Both,
}

impl FromStr for Order {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" | "1st" | "1" => Ok(Order::First),
            "second" | "2nd" | "2" => Ok(Order::Second),
            "both" | "1st+2nd" => Ok(Order::Both),
            _ => Err(Error::validation(format!("unknown training order {s:?}"))),
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Order::First => "first",
            Order::Second => "second",
            Order::Both => "both",
        })
    }
}

/// How `Order::Both` splits the configured dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BothSplit {
    /// Two runs of `dim / 2`; the result has `dim` columns.
    Half,
    /// Two runs of `dim`; the result has `2 * dim` columns.
    Full,
}

impl FromStr for BothSplit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(BothSplit::Half),
            "full" => Ok(BothSplit::Full),
            _ => Err(Error::validation(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub order: Order,
    pub dim: usize,
    /// Total edge draws; `None` means `samples_per_entry * nnz`.
    pub samples: Option<u64>,
    pub samples_per_entry: u64,
    pub max_samples: u64,
    pub negatives: usize,
    pub learning_rate: f64,
    /// The rate never drops below `learning_rate * min_rate_ratio`.
    pub min_rate_ratio: f64,
    pub noise_exponent: f64,
    pub workers: usize,
    pub both_split: BothSplit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            order: Order::Second,
            dim: 128,
            samples: None,
            samples_per_entry: 100,
            max_samples: 1_000_000_000,
            negatives: 5,
            learning_rate: 0.025,
            min_rate_ratio: 1e-4,
            noise_exponent: 0.75,
            workers: 1,
            both_split: BothSplit::Half,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("embedding dimension must be positive"));
        }
        if self.order == Order::Both && self.both_split == BothSplit::Half && self.dim < 2 {
            return Err(Error::validation("splitting the dimension needs dim >= 2"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate must be positive"));
        }
        if !self.noise_exponent.is_finite() {
            return Err(Error::validation("noise exponent must be finite"));
        }
        if self.workers == 0 {
            return Err(Error::validation("need at least one worker"));
        }
        Ok(())
    }

    /// Number of edge draws for a similarity with `nnz` stored entries.
    pub fn total_samples(&self, nnz: usize) -> u64 {
        self.samples
            .unwrap_or(self.samples_per_entry.saturating_mul(nnz as u64))
            .min(self.max_samples)
    }
}

/// Node vectors, plus the context vectors of a second-order run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    num_nodes: usize,
    dim: usize,
    vectors: Vec<f64>,
    context: Option<Vec<f64>>,
}

impl EmbeddingMatrix {
    pub fn new(num_nodes: usize, dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 || vectors.len() != num_nodes * dim {
            return Err(Error::validation(format!(
                "embedding of {num_nodes}x{dim} cannot hold {} values",
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("embedding contains non-finite values"));
        }
        Ok(Self {
            num_nodes,
            dim,
            vectors,
            context: None,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, node: usize) -> &[f64] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }

    pub fn context(&self) -> Option<&[f64]> {
        self.context.as_deref()
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (self.vector(a), self.vector(b));
        let dot = dot(x, y);
        let nx = dot_self(x).sqrt();
        let ny = dot_self(y).sqrt();
        if nx == 0.0 || ny == 0.0 {
            0.0
        } else {
            dot / (nx * ny)
        }
    }

    /// Row-wise concatenation `[self | other]`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.num_nodes != other.num_nodes {
            return Err(Error::validation("cannot concatenate embeddings of different node counts"));
        }
        let dim = self.dim + other.dim;
        let mut vectors = Vec::with_capacity(self.num_nodes * dim);
        for i in 0..self.num_nodes {
            vectors.extend_from_slice(self.vector(i));
            vectors.extend_from_slice(other.vector(i));
        }
        Self::new(self.num_nodes, dim, vectors)
    }
}

/// Four interleaved partial sums, so the additions do not form one serial chain.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn dot_self(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `-log σ(x)`, stable for large `|x|`.
#[inline]
fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// `label - σ(x)`: the negative derivative of a term's loss w.r.t. its score.
#[inline]
pub fn pair_coefficient(score: f64, label: f64) -> f64 {
    label - sigmoid(score)
}

/// Loss of one (score, label) term.
#[inline]
fn pair_loss(score: f64, label: f64) -> f64 {
    if label > 0.5 {
        neg_log_sigmoid(score)
    } else {
        neg_log_sigmoid(-score)
    }
}

/// Edge and noise samplers for one similarity matrix.
#[derive(Debug, Clone)]
pub struct EdgeSampler {
    edges: AliasTable,
    sources: Vec<usize>,
    targets: Vec<usize>,
    noise: AliasTable,
}

impl EdgeSampler {
    #[inline]
    pub fn draw_edge<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let e = self.edges.sample(rng);
        (self.sources[e], self.targets[e])
    }

    #[inline]
    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.noise.sample(rng)
    }

    pub fn num_edges(&self) -> usize {
        self.sources.len()
    }

    pub fn edge_probability(&self, e: usize) -> f64 {
        self.edges.probability(e)
    }

    pub fn noise_probability(&self, node: usize) -> f64 {
        self.noise.probability(node)
    }
}

/// Samplers over the stored entries of `s` (every stored direction is an
/// edge) and over nodes by weighted out-degree raised to `noise_exponent`.
pub fn build_alias_tables(s: &CsrMatrix, noise_exponent: f64) -> Result<EdgeSampler> {
    if s.is_zero() {
        return Err(Error::validation("similarity matrix has no positive entries"));
    }
    let mut sources = Vec::with_capacity(s.nnz());
    let mut targets = Vec::with_capacity(s.nnz());
    let mut weights = Vec::with_capacity(s.nnz());
    for (i, j, w) in s.iter() {
        sources.push(i);
        targets.push(j);
        weights.push(w);
    }
    let noise: Vec<f64> = s
        .row_sums()
        .into_iter()
        .map(|d| if d > 0.0 { d.powf(noise_exponent) } else { 0.0 })
        .collect();
    Ok(EdgeSampler {
        edges: AliasTable::new(&weights)?,
        sources,
        targets,
        noise: AliasTable::new(&noise)?,
    })
}

/// One stored coordinate. Workers share [`AtomicU64`] cells holding `f64`
/// bits with relaxed ordering, so concurrent updates race only per
/// coordinate; a lone worker uses plain [`Cell`]s.
trait Slot: Sized {
    fn new(v: f64) -> Self;
    fn get(&self) -> f64;
    fn set(&self, v: f64);
    fn into_inner(self) -> f64;
}

impl Slot for AtomicU64 {
    #[inline]
    fn new(v: f64) -> Self {
        AtomicU64::new(v.to_bits())
    }
    #[inline]
    fn get(&self) -> f64 {
        f64::from_bits(self.load(Ordering::Relaxed))
    }
    #[inline]
    fn set(&self, v: f64) {
        self.store(v.to_bits(), Ordering::Relaxed)
    }
    fn into_inner(self) -> f64 {
        f64::from_bits(AtomicU64::into_inner(self))
    }
}

impl Slot for Cell<f64> {
    #[inline]
    fn new(v: f64) -> Self {
        Cell::new(v)
    }
    #[inline]
    fn get(&self) -> f64 {
        Cell::get(self)
    }
    #[inline]
    fn set(&self, v: f64) {
        Cell::set(self, v)
    }
    fn into_inner(self) -> f64 {
        Cell::into_inner(self)
    }
}

struct SharedRows<S> {
    dim: usize,
    data: Vec<S>,
}

impl<S: Slot> SharedRows<S> {
    fn from_vec(dim: usize, values: Vec<f64>) -> Self {
        Self {
            dim,
            data: values.into_iter().map(S::new).collect(),
        }
    }

    #[inline]
    fn row(&self, row: usize) -> &[S] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    #[inline]
    fn read(&self, row: usize, out: &mut [f64]) {
        for (o, cell) in out.iter_mut().zip(self.row(row)) {
            *o = cell.get();
        }
    }

    #[inline]
    fn add_scaled(&self, row: usize, scale: f64, delta: &[f64]) {
        for (cell, d) in self.row(row).iter().zip(delta) {
            cell.set(cell.get() + scale * d);
        }
    }

    fn into_vec(self) -> Vec<f64> {
        self.data.into_iter().map(S::into_inner).collect()
    }
}

/// Smoothed-loss checkpoints of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub samples: u64,
    /// Smoothed loss once 1% of the draws are done.
    pub early_loss: f64,
    pub final_loss: f64,
}

const LOSS_SMOOTHING: f64 = 0.01;

struct Scratch {
    source: Vec<f64>,
    target: Vec<f64>,
    error: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Self {
            source: vec![0.0; dim],
            target: vec![0.0; dim],
            error: vec![0.0; dim],
        }
    }
}

/// One stochastic update for the drawn edge `(u, v)`; returns the sample loss.
#[allow(clippy::too_many_arguments)]
#[inline]
fn sgd_step<S: Slot, R: Rng>(
    vectors: &SharedRows<S>,
    context: &SharedRows<S>,
    sampler: &EdgeSampler,
    u: usize,
    v: usize,
    negatives: usize,
    rate: f64,
    rng: &mut R,
    s: &mut Scratch,
) -> f64 {
    vectors.read(u, &mut s.source);
    s.error.iter_mut().for_each(|e| *e = 0.0);
    let mut loss = 0.0;
    for d in 0..=negatives {
        let (target, label) = if d == 0 {
            (v, 1.0)
        } else {
            let n = sampler.draw_noise(rng);
            if n == v {
                continue;
            }
            (n, 0.0)
        };
        let row = context.row(target);
        for (t, cell) in s.target.iter_mut().zip(row) {
            *t = cell.get();
        }
        let score = dot(&s.source, &s.target);
        loss += pair_loss(score, label);
        let g = pair_coefficient(score, label) * rate;
        // the error uses the context row as it was before this update
        for (((e, t), cell), x) in s.error.iter_mut().zip(&s.target).zip(row).zip(&s.source) {
            *e += g * t;
            cell.set(cell.get() + g * x);
        }
    }
    vectors.add_scaled(u, 1.0, &s.error);
    loss
}

fn init_vectors(num_nodes: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let half = 0.5 / dim as f64;
    (0..num_nodes * dim).map(|_| rng.gen_range(-half..half)).collect()
}

/// Shared state of one training run.
struct Run<'a> {
    sampler: &'a EdgeSampler,
    cfg: &'a TrainConfig,
    total: u64,
    seed: u64,
    workers: u64,
    progress: AtomicU64,
    abort: AtomicBool,
}

impl Run<'_> {
    fn worker<S: Slot>(&self, worker: u64, vectors: &SharedRows<S>, ctx: &SharedRows<S>) -> Result<Option<TrainReport>> {
        let (cfg, total) = (self.cfg, self.total);
        let floor = cfg.learning_rate * cfg.min_rate_ratio;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(worker + 1);
        let share = total / self.workers + u64::from(worker < total % self.workers);
        let checkpoint = (share / 100).max(1);
        let mut scratch = Scratch::new(vectors.dim);
        let mut smoothed: Option<f64> = None;
        let mut early = None;
        for local in 0..share {
            if self.abort.load(Ordering::Relaxed) {
                return Ok(None);
            }
            let done = self.progress.fetch_add(1, Ordering::Relaxed);
            let rate = (cfg.learning_rate * (1.0 - done as f64 / total as f64)).max(floor);
            let (u, v) = self.sampler.draw_edge(&mut rng);
            let loss = sgd_step(vectors, ctx, self.sampler, u, v, cfg.negatives, rate, &mut rng, &mut scratch);
            if !loss.is_finite() {
                self.abort.store(true, Ordering::Relaxed);
                return Err(Error::NonFiniteLoss {
                    step: done,
                    learning_rate: rate,
                    loss,
                });
            }
            let s = smoothed.map_or(loss, |s| s + LOSS_SMOOTHING * (loss - s));
            smoothed = Some(s);
            if local + 1 == checkpoint {
                early = Some(s);
            }
        }
        Ok(Some(TrainReport {
            samples: share,
            early_loss: early.unwrap_or(f64::NAN),
            final_loss: smoothed.unwrap_or(f64::NAN),
        }))
    }
}

fn finish<S: Slot>(
    num_nodes: usize,
    vectors: SharedRows<S>,
    context: Option<SharedRows<S>>,
    report: Option<TrainReport>,
    total: u64,
) -> Result<(EmbeddingMatrix, TrainReport)> {
    let mut report = report.unwrap_or(TrainReport {
        samples: 0,
        early_loss: f64::NAN,
        final_loss: f64::NAN,
    });
    report.samples = total;
    let dim = vectors.dim;
    let mut embedding = EmbeddingMatrix::new(num_nodes, dim, vectors.into_vec())?;
    embedding.context = context.map(SharedRows::into_vec);
    Ok((embedding, report))
}

fn train_single(
    sampler: &EdgeSampler,
    num_nodes: usize,
    dim: usize,
    second_order: bool,
    cfg: &TrainConfig,
    total: u64,
    seed: u64,
) -> Result<(EmbeddingMatrix, TrainReport)> {
    let initial = init_vectors(num_nodes, dim, &mut ChaCha8Rng::seed_from_u64(seed));
    let run = Run {
        sampler,
        cfg,
        total,
        seed,
        workers: cfg.workers.max(1) as u64,
        progress: AtomicU64::new(0),
        abort: AtomicBool::new(false),
    };

    if run.workers == 1 {
        let vectors = SharedRows::<Cell<f64>>::from_vec(dim, initial);
        let context = second_order.then(|| SharedRows::from_vec(dim, vec![0.0; num_nodes * dim]));
        let report = run.worker(0, &vectors, context.as_ref().unwrap_or(&vectors))?;
        return finish(num_nodes, vectors, context, report, total);
    }

    let vectors = SharedRows::<AtomicU64>::from_vec(dim, initial);
    let context = second_order.then(|| SharedRows::from_vec(dim, vec![0.0; num_nodes * dim]));
    let ctx = context.as_ref().unwrap_or(&vectors);
    let report = std::thread::scope(|scope| {
        let run = &run;
        let vectors = &vectors;
        let handles: Vec<_> = (0..run.workers)
            .map(|w| scope.spawn(move || run.worker(w, vectors, ctx)))
            .collect();
        let mut first = None;
        for (w, h) in handles.into_iter().enumerate() {
            let r = h.join().expect("training worker panicked")?;
            if w == 0 {
                first = r;
            }
        }
        Ok::<_, Error>(first)
    })?;
    finish(num_nodes, vectors, context, report, total)
}

/// Trains embeddings for the similarity matrix `s`.
pub fn train(s: &CsrMatrix, cfg: &TrainConfig, seed: u64) -> Result<EmbeddingMatrix> {
    train_with_report(s, cfg, seed).map(|(e, _)| e)
}

/// As [`train`], also returning one report per underlying run.
pub fn train_with_report(s: &CsrMatrix, cfg: &TrainConfig, seed: u64) -> Result<(EmbeddingMatrix, Vec<TrainReport>)> {
    cfg.validate()?;
    if s.rows() != s.cols() {
        return Err(Error::validation("similarity matrix must be square"));
    }
    let sampler = build_alias_tables(s, cfg.noise_exponent)?;
    let total = cfg.total_samples(s.nnz());
    let n = s.rows();
    match cfg.order {
        Order::First => {
            let (e, r) = train_single(&sampler, n, cfg.dim, false, cfg, total, seed)?;
            Ok((e, vec![r]))
        }
        Order::Second => {
            let (e, r) = train_single(&sampler, n, cfg.dim, true, cfg, total, seed)?;
            Ok((e, vec![r]))
        }
        Order::Both => {
            let (d1, d2) = match cfg.both_split {
                BothSplit::Half => (cfg.dim - cfg.dim / 2, cfg.dim / 2),
                BothSplit::Full => (cfg.dim, cfg.dim),
            };
            let (first, r1) = train_single(&sampler, n, d1, false, cfg, total, seed)?;
            let (second, r2) = train_single(&sampler, n, d2, true, cfg, total, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
            Ok((first.concat(&second)?, vec![r1, r2]))
        }
    }
}

/// One training sample with explicit parameters, for gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientInstance {
    pub second_order: bool,
    pub num_nodes: usize,
    pub dim: usize,
    pub vectors: Vec<f64>,
    /// Ignored for first-order instances.
    pub context: Vec<f64>,
    pub source: usize,
    pub target: usize,
    pub negatives: Vec<usize>,
}

impl GradientInstance {
    fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        std::iter::once((self.target, 1.0)).chain(self.negatives.iter().map(|&n| (n, 0.0)))
    }

    fn ctx(&self) -> &[f64] {
        if self.second_order {
            &self.context
        } else {
            &self.vectors
        }
    }

    fn row<'a>(&self, m: &'a [f64], i: usize) -> &'a [f64] {
        &m[i * self.dim..(i + 1) * self.dim]
    }

    /// Loss of the sample at the current parameters.
    pub fn loss(&self) -> f64 {
        let u = self.row(&self.vectors, self.source);
        self.terms()
            .map(|(t, label)| pair_loss(dot(u, self.row(self.ctx(), t)), label))
            .sum()
    }

    /// Analytic gradient w.r.t. `(vectors, context)`. For first-order
    /// instances every term lands in the vector gradient.
    pub fn gradient(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut gv = vec![0.0; self.vectors.len()];
        let mut gc = vec![0.0; self.context.len()];
        let u = self.row(&self.vectors, self.source).to_vec();
        for (t, label) in self.terms() {
            let c = self.row(self.ctx(), t).to_vec();
            let coef = pair_coefficient(dot(&u, &c), label);
            for k in 0..d {
                gv[self.source * d + k] -= coef * c[k];
            }
            let gt = if self.second_order { &mut gc } else { &mut gv };
            for k in 0..d {
                gt[t * d + k] -= coef * u[k];
            }
        }
        (gv, gc)
    }

    /// Random instance with parameters uniform in `[-1, 1]`.
    pub fn random<R: Rng>(rng: &mut R, second_order: bool, num_nodes: usize, dim: usize, negatives: usize) -> Self {
        let mut draw = |len: usize| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let vectors = draw(num_nodes * dim);
        let context = if second_order { draw(num_nodes * dim) } else { Vec::new() };
        let source = rng.gen_range(0..num_nodes);
        let target = rng.gen_range(0..num_nodes);
        let negatives = (0..negatives).map(|_| rng.gen_range(0..num_nodes)).collect();
        Self {
            second_order,
            num_nodes,
            dim,
            vectors,
            context,
            source,
            target,
            negatives,
        }
    }
}

/// Largest relative disagreement between the analytic gradient and
/// central finite differences with step `h`.
pub fn gradient_check(inst: &GradientInstance, h: f64) -> f64 {
    let (gv, gc) = inst.gradient();
    let mut worst: f64 = 0.0;
    let mut probe = inst.clone();
    let rel = |a: f64, n: f64| {
        let scale = a.abs().max(n.abs());
        if scale < 1e-12 {
            0.0
        } else {
            (a - n).abs() / scale
        }
    };
    for p in 0..inst.vectors.len() {
        let orig = probe.vectors[p];
        probe.vectors[p] = orig + h;
        let up = probe.loss();
        probe.vectors[p] = orig - h;
        let down = probe.loss();
        probe.vectors[p] = orig;
        worst = worst.max(rel(gv[p], (up - down) / (2.0 * h)));
    }
    for p in 0..inst.context.len() {
        let orig = probe.context[p];
        probe.context[p] = orig + h;
        let up = probe.loss();
        probe.context[p] = orig - h;
        let down = probe.loss();
        probe.context[p] = orig;
        worst = worst.max(rel(gc[p], (up - down) / (2.0 * h)));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clique_pair(size: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for block in 0..2 {
            for a in 0..size {
                for b in 0..size {
                    if a != b {
                        t.push((block * size + a, block * size + b, 1.0));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(2 * size, 2 * size, t).unwrap()
    }

    fn cycle4() -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..4 {
            t.push((i, (i + 1) % 4, 1.0));
            t.push(((i + 1) % 4, i, 1.0));
        }
        CsrMatrix::from_triplets(4, 4, t).unwrap()
    }

    #[test]
    fn clique_pair_first_order_separates() {
        let s = clique_pair(10);
        let cfg = TrainConfig {
            order: Order::First,
            dim: 2,
            ..Default::default()
        };
        let e = train(&s, &cfg, 3).unwrap();
        let (mut intra, mut inter, mut ni, mut nx) = (0.0, 0.0, 0, 0);
        for a in 0..20 {
            for b in 0..20 {
                if a == b {
                    continue;
                }
                if (a < 10) == (b < 10) {
                    intra += e.cosine(a, b);
                    ni += 1;
                } else {
                    inter += e.cosine(a, b);
                    nx += 1;
                }
            }
        }
        assert!(intra / ni as f64 > inter / nx as f64);
    }

    #[test]
    fn zero_samples_keep_initialization() {
        let s = cycle4();
        let cfg = TrainConfig {
            order: Order::First,
            dim: 4,
            samples: Some(0),
            ..Default::default()
        };
        let e = train(&s, &cfg, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        assert_eq!(e.as_slice(), init_vectors(4, 4, &mut rng).as_slice());
    }

    #[test]
    fn second_order_cycle_opposite_corners_closer() {
        let s = cycle4();
        let cfg = TrainConfig {
            order: Order::Second,
            dim: 8,
            samples: Some(20_000),
            ..Default::default()
        };
        let e = train(&s, &cfg, 5).unwrap();
        let dist = |a: usize, b: usize| -> f64 {
            e.vector(a).iter().zip(e.vector(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        assert!(dist(0, 2) < dist(0, 1));
        assert!(dist(1, 3) < dist(1, 2));
    }

    #[test]
    fn single_worker_is_deterministic() {
        let s = clique_pair(5);
        let cfg = TrainConfig {
            dim: 4,
            samples: Some(5000),
            ..Default::default()
        };
        assert_eq!(train(&s, &cfg, 9).unwrap(), train(&s, &cfg, 9).unwrap());
        assert_ne!(train(&s, &cfg, 9).unwrap(), train(&s, &cfg, 10).unwrap());
    }

    #[test]
    fn multi_worker_training_runs() {
        let s = clique_pair(10);
        let cfg = TrainConfig {
            order: Order::First,
            dim: 4,
            workers: 4,
            ..Default::default()
        };
        let (e, reports) = train_with_report(&s, &cfg, 1).unwrap();
        assert!(e.as_slice().iter().all(|v| v.is_finite()));
        assert_eq!(reports[0].samples, 100 * s.nnz() as u64);
    }

    #[test]
    fn both_orders_concatenate() {
        let s = cycle4();
        let half = TrainConfig {
            order: Order::Both,
            dim: 8,
            samples: Some(100),
            ..Default::default()
        };
        assert_eq!(train(&s, &half, 1).unwrap().dim(), 8);
        let full = TrainConfig {
            both_split: BothSplit::Full,
            ..half.clone()
        };
        assert_eq!(train(&s, &full, 1).unwrap().dim(), 16);
        let odd = TrainConfig { dim: 5, ..half };
        assert_eq!(train(&s, &odd, 1).unwrap().dim(), 5);
    }

    #[test]
    fn loss_decreases_on_clique_pair() {
        let s = clique_pair(10);
        let cfg = TrainConfig {
            order: Order::First,
            dim: 16,
            ..Default::default()
        };
        let (_, reports) = train_with_report(&s, &cfg, 2).unwrap();
        assert!(reports[0].final_loss < reports[0].early_loss, "{reports:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let s = clique_pair(4);
        let cfg = TrainConfig {
            order: Order::First,
            dim: 2,
            learning_rate: 1e300,
            samples: Some(1000),
            ..Default::default()
        };
        match train(&s, &cfg, 1) {
            Err(Error::NonFiniteLoss { learning_rate, .. }) => assert!(learning_rate > 0.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sampler_rejects_empty_similarity() {
        assert!(build_alias_tables(&CsrMatrix::zeros(3, 3), 0.75).is_err());
    }

    #[test]
    fn sampler_scale_invariant() {
        let s = clique_pair(3).map_values(|v| v * 1.5);
        let a = build_alias_tables(&s, 0.75).unwrap();
        let b = build_alias_tables(&s.scale(4.0), 0.75).unwrap();
        for e in 0..a.num_edges() {
            assert!((a.edge_probability(e) - b.edge_probability(e)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for second in [false, true] {
            for _ in 0..5 {
                let inst = GradientInstance::random(&mut rng, second, 6, 3, 3);
                assert!(gradient_check(&inst, 1e-5) < 1e-4);
            }
        }
    }

    #[test]
    fn gradient_at_zero_vectors() {
        let inst = GradientInstance {
            second_order: true,
            num_nodes: 3,
            dim: 2,
            vectors: vec![0.0; 6],
            context: vec![0.0; 6],
            source: 0,
            target: 1,
            negatives: vec![2],
        };
        assert_eq!(inst.loss(), 2.0 * std::f64::consts::LN_2);
        assert!(gradient_check(&inst, 1e-5) < 1e-4);
    }

    #[test]
    fn gradient_pure_attraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = GradientInstance::random(&mut rng, false, 4, 3, 0);
        assert!(gradient_check(&inst, 1e-5) < 1e-4);
        // with no negatives the source gradient is -(1 - σ(x)) c_v
        let (gv, _) = inst.gradient();
        let d = inst.dim;
        let u = &inst.vectors[inst.source * d..(inst.source + 1) * d];
        let c = &inst.vectors[inst.target * d..(inst.target + 1) * d];
        if inst.source != inst.target {
            let coef = 1.0 - sigmoid(dot(u, c));
            for k in 0..d {
                assert!((gv[inst.source * d + k] + coef * c[k]).abs() < 1e-15);
            }
        }
    }
}
