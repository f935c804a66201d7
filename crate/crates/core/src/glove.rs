//! GloVe training with AdaGrad.
//!
//! Minimises `J = sum_ij f(X_ij) (w_i . c_j + b_i + b~_j - ln X_ij)^2` with
//! `f(x) = min(1, (x / x_max)^alpha)`. Updates follow the reference implementation:
//! each step uses the gradient of `J / 2` scaled by the learning rate, divided by the
//! square root of an accumulator that starts at 1 and collects the squared scaled
//! gradients.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cooccur::{Cell, CooccurrenceMatrix};
use crate::text::Vocabulary;
use crate::vectors::Vectors;
use crate::{Error, Result};

/// Cells at or below this count are skipped.
pub const MIN_TRAIN_COUNT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportMode {
    /// `w + c`, the usual GloVe output.
    #[default]
    Sum,
    MainOnly,
}

impl std::str::FromStr for ExportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(ExportMode::Sum),
            "main_only" | "main-only" | "main" => Ok(ExportMode::MainOnly),
            other => Err(Error::InvalidArgument(format!("unknown export mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for ExportMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExportMode::Sum => "sum",
            ExportMode::MainOnly => "main_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub dim: usize,
    pub epochs: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub export_mode: ExportMode,
    /// `None` trains sequentially in a seed-determined order (bit-reproducible).
    /// `Some(n)` runs `n` lock-free workers.
    pub threads: Option<usize>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            dim: 300,
            epochs: 15,
            x_max: 100.0,
            alpha: 0.75,
            learning_rate: 0.05,
            seed: 0,
            export_mode: ExportMode::Sum,
            threads: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.x_max > 0.0) {
            return Err(Error::InvalidArgument("x_max must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument("alpha must be in (0, 1]".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// `min(1, (x / x_max)^alpha)`
#[inline]
pub fn weighting(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

/// Main and context vectors with their biases, row-major by vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    pub main: Vec<f64>,
    pub context: Vec<f64>,
    pub main_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
}

impl EmbeddingSet {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingSet {
            dim,
            main: vec![0.0; vocab_size * dim],
            context: vec![0.0; vocab_size * dim],
            main_bias: vec![0.0; vocab_size],
            context_bias: vec![0.0; vocab_size],
        }
    }

    /// Uniform initialisation in `[-0.5/dim, 0.5/dim)`.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / dim as f64;
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| (rng.gen::<f64>() - 0.5) * scale).collect() };
        let main = draw(vocab_size * dim);
        let context = draw(vocab_size * dim);
        let main_bias = draw(vocab_size);
        let context_bias = draw(vocab_size);
        EmbeddingSet {
            dim,
            main,
            context,
            main_bias,
            context_bias,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.main_bias.len()
    }

    pub fn main_row(&self, id: u32) -> &[f64] {
        &self.main[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    pub fn context_row(&self, id: u32) -> &[f64] {
        &self.context[id as usize * self.dim..(id as usize + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.main
            .iter()
            .chain(&self.context)
            .chain(&self.main_bias)
            .chain(&self.context_bias)
            .all(|v| v.is_finite())
    }

    /// All parameters as one flat slice view, in the order main, context, biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.main.len() + 2 * self.main_bias.len());
        out.extend_from_slice(&self.main);
        out.extend_from_slice(&self.context);
        out.extend_from_slice(&self.main_bias);
        out.extend_from_slice(&self.context_bias);
        out
    }

    /// Inverse of [`EmbeddingSet::params`].
    pub fn from_params(vocab_size: usize, dim: usize, params: &[f64]) -> Self {
        let nv = vocab_size * dim;
        EmbeddingSet {
            dim,
            main: params[..nv].to_vec(),
            context: params[nv..2 * nv].to_vec(),
            main_bias: params[2 * nv..2 * nv + vocab_size].to_vec(),
            context_bias: params[2 * nv + vocab_size..].to_vec(),
        }
    }

    /// Exported vectors in vocabulary order.
    pub fn export(&self, vocab: &Vocabulary, mode: ExportMode) -> Result<Vectors> {
        if vocab.len() != self.vocab_size() {
            return Err(Error::Data(format!(
                "vocabulary has {} words but embeddings have {}",
                vocab.len(),
                self.vocab_size()
            )));
        }
        let data = match mode {
            ExportMode::Sum => self.main.iter().zip(&self.context).map(|(w, c)| w + c).collect(),
            ExportMode::MainOnly => self.main.clone(),
        };
        let words = vocab.iter().map(|(_, t, _)| t.to_owned()).collect();
        Vectors::new(self.dim, words, data)
    }
}

/// `J` over every trainable cell.
pub fn loss(emb: &EmbeddingSet, matrix: &CooccurrenceMatrix, x_max: f64, alpha: f64) -> f64 {
    trainable(matrix)
        .map(|c| {
            let diff = residual(emb, c);
            weighting(c.weight, x_max, alpha) * diff * diff
        })
        .sum()
}

/// Analytic gradient of `J` with respect to every parameter.
pub fn gradient(emb: &EmbeddingSet, matrix: &CooccurrenceMatrix, x_max: f64, alpha: f64) -> EmbeddingSet {
    let dim = emb.dim;
    let mut g = EmbeddingSet::zeros(emb.vocab_size(), dim);
    for c in trainable(matrix) {
        let (i, j) = (c.word as usize, c.context as usize);
        let coef = 2.0 * weighting(c.weight, x_max, alpha) * residual(emb, c);
        for k in 0..dim {
            g.main[i * dim + k] += coef * emb.context[j * dim + k];
            g.context[j * dim + k] += coef * emb.main[i * dim + k];
        }
        g.main_bias[i] += coef;
        g.context_bias[j] += coef;
    }
    g
}

fn residual(emb: &EmbeddingSet, c: &Cell) -> f64 {
    let dot: f64 = emb
        .main_row(c.word)
        .iter()
        .zip(emb.context_row(c.context))
        .map(|(a, b)| a * b)
        .sum();
    dot + emb.main_bias[c.word as usize] + emb.context_bias[c.context as usize] - c.weight.ln()
}

fn trainable(matrix: &CooccurrenceMatrix) -> impl Iterator<Item = &Cell> {
    matrix.cells().iter().filter(|c| c.weight > MIN_TRAIN_COUNT)
}

/// Parameters shared between workers. Relaxed atomics give lock-free updates without
/// undefined behaviour; with one worker they behave like plain loads and stores.
struct Shared(Vec<AtomicU64>);

impl Shared {
    fn new(values: &[f64]) -> Self {
        Shared(values.iter().map(|v| AtomicU64::new(v.to_bits())).collect())
    }

    fn filled(len: usize, value: f64) -> Self {
        Shared((0..len).map(|_| AtomicU64::new(value.to_bits())).collect())
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, i: usize, v: f64) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed)
    }

    fn to_vec(&self) -> Vec<f64> {
        (0..self.0.len()).map(|i| self.get(i)).collect()
    }
}

/// Training state; exposes per-epoch stepping for inspection.
pub struct Trainer {
    cfg: TrainerConfig,
    vocab_size: usize,
    cells: Vec<Cell>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
    // layout: main | context | main_bias | context_bias, same as EmbeddingSet::params
    params: Shared,
    gradsq: Shared,
    epoch: usize,
}

impl Trainer {
    pub fn new(matrix: &CooccurrenceMatrix, cfg: &TrainerConfig) -> Result<Self> {
        cfg.validate()?;
        let cells: Vec<Cell> = trainable(matrix).copied().collect();
        if cells.is_empty() {
            return Err(Error::InvalidArgument("cannot train on an empty co-occurrence matrix".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = EmbeddingSet::random(matrix.vocab_size(), cfg.dim, &mut rng);
        Ok(Self::with_init(cells, init, cfg.clone(), rng))
    }

    /// Starts from the given parameters instead of a random initialisation.
    pub fn from_embeddings(matrix: &CooccurrenceMatrix, cfg: &TrainerConfig, init: EmbeddingSet) -> Result<Self> {
        cfg.validate()?;
        if init.dim() != cfg.dim || init.vocab_size() != matrix.vocab_size() {
            return Err(Error::InvalidArgument("initial embeddings do not match the matrix".into()));
        }
        let cells: Vec<Cell> = trainable(matrix).copied().collect();
        if cells.is_empty() {
            return Err(Error::InvalidArgument("cannot train on an empty co-occurrence matrix".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self::with_init(cells, init, cfg.clone(), rng))
    }

    fn with_init(cells: Vec<Cell>, init: EmbeddingSet, cfg: TrainerConfig, rng: ChaCha8Rng) -> Self {
        let vocab_size = init.vocab_size();
        let params = init.params();
        let gradsq = Shared::filled(params.len(), 1.0);
        Trainer {
            order: (0..cells.len()).collect(),
            cfg,
            vocab_size,
            cells,
            rng,
            params: Shared::new(&params),
            gradsq,
            epoch: 0,
        }
    }

    pub fn embeddings(&self) -> EmbeddingSet {
        EmbeddingSet::from_params(self.vocab_size, self.cfg.dim, &self.params.to_vec())
    }

    /// AdaGrad accumulators in parameter order.
    pub fn accumulators(&self) -> Vec<f64> {
        self.gradsq.to_vec()
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Runs one pass over the shuffled cells, returning half the weighted squared error
    /// accumulated along the way.
    pub fn step_epoch(&mut self) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        let epoch = self.epoch;
        let cost = match self.cfg.threads {
            None | Some(1) => self.run_range(&self.order, epoch, &AtomicBool::new(false))?,
            Some(n) => {
                let chunk = self.order.len().div_ceil(n);
                let abort = AtomicBool::new(false);
                let this = &*self;
                let results: Vec<Result<f64>> = std::thread::scope(|s| {
                    let handles: Vec<_> = this
                        .order
                        .chunks(chunk)
                        .map(|part| {
                            let abort = &abort;
                            s.spawn(move || this.run_range(part, epoch, abort))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
                });
                let mut total = 0.0;
                for r in results {
                    total += r?;
                }
                total
            }
        };
        self.epoch += 1;
        Ok(cost)
    }

    fn run_range(&self, order: &[usize], epoch: usize, abort: &AtomicBool) -> Result<f64> {
        let dim = self.cfg.dim;
        let n = self.vocab_size;
        let ctx_base = n * dim;
        let wb_base = 2 * n * dim;
        let cb_base = 2 * n * dim + n;
        let lr = self.cfg.learning_rate;
        let p = &self.params;
        let gsq = &self.gradsq;
        let mut cost = 0.0;
        for &idx in order {
            if abort.load(Ordering::Relaxed) {
                break;
            }
            let c = self.cells[idx];
            let l1 = c.word as usize * dim;
            let l2 = ctx_base + c.context as usize * dim;
            let mut dot = 0.0;
            for k in 0..dim {
                dot += p.get(l1 + k) * p.get(l2 + k);
            }
            let b1 = wb_base + c.word as usize;
            let b2 = cb_base + c.context as usize;
            let diff = dot + p.get(b1) + p.get(b2) - c.weight.ln();
            let fdiff = weighting(c.weight, self.cfg.x_max, self.cfg.alpha) * diff;
            if !diff.is_finite() || !fdiff.is_finite() {
                abort.store(true, Ordering::Relaxed);
                return Err(Error::NonFinite {
                    epoch,
                    word: c.word,
                    context: c.context,
                    count: c.weight,
                });
            }
            cost += 0.5 * fdiff * diff;
            let step = lr * fdiff;
            for k in 0..dim {
                let w1 = p.get(l1 + k);
                let w2 = p.get(l2 + k);
                let g1 = step * w2;
                let g2 = step * w1;
                let s1 = gsq.get(l1 + k);
                let s2 = gsq.get(l2 + k);
                p.set(l1 + k, w1 - g1 / s1.sqrt());
                p.set(l2 + k, w2 - g2 / s2.sqrt());
                gsq.set(l1 + k, s1 + g1 * g1);
                gsq.set(l2 + k, s2 + g2 * g2);
            }
            for b in [b1, b2] {
                let s = gsq.get(b);
                p.set(b, p.get(b) - step / s.sqrt());
                gsq.set(b, s + step * step);
            }
        }
        Ok(cost)
    }
}

/// Per-epoch training cost (half the weighted squared error, accumulated during the pass).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainStats {
    pub epoch_costs: Vec<f64>,
}

pub fn train(matrix: &CooccurrenceMatrix, cfg: &TrainerConfig) -> Result<(EmbeddingSet, TrainStats)> {
    let mut trainer = Trainer::new(matrix, cfg)?;
    let mut stats = TrainStats::default();
    for epoch in 0..cfg.epochs {
        let cost = trainer.step_epoch()?;
        log::debug!("epoch {epoch}: cost {:.6}", cost / trainer.cells.len() as f64);
        stats.epoch_costs.push(cost);
    }
    let emb = trainer.embeddings();
    if !emb.is_finite() {
        return Err(Error::Numerical("training produced non-finite parameters".into()));
    }
    Ok((emb, stats))
}
