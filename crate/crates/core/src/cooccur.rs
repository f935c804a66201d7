//! Window-based co-occurrence counting with score buckets.
//!
//! Every in-vocabulary token occurrence `b` acts as a context. Its bucket is derived
//! from the summed bias scores of the tokens around it, and every in-vocabulary token
//! `a` within the window of `b` adds a (distance-weighted) count to `(a, b, bucket)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::scoring::ScoreTable;
use crate::text::{Sentence, Vocabulary};
use crate::{Error, Result};

pub const DEFAULT_WINDOW: usize = 15;
pub const MAGIC: &[u8; 8] = b"BIRMCOOC";
pub const FORMAT_VERSION: u16 = 1;
const RECORD_LEN: usize = 4 + 4 + 1 + 8;
/// Sentences per counting shard. Shard boundaries are fixed so results do not depend
/// on the number of worker threads.
const SHARD_SENTENCES: usize = 2048;

pub type Bucket = i8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `1/d` per co-occurrence at distance `d`.
    #[default]
    Harmonic,
    Flat,
}

impl Weighting {
    #[inline]
    pub fn weight(self, distance: usize) -> f64 {
        match self {
            Weighting::Harmonic => 1.0 / distance as f64,
            Weighting::Flat => 1.0,
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Weighting::Harmonic),
            "flat" => Ok(Weighting::Flat),
            other => Err(Error::InvalidArgument(format!(
                "unknown weighting `{other}` (expected harmonic or flat)"
            ))),
        }
    }
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Weighting::Harmonic => "harmonic",
            Weighting::Flat => "flat",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountOptions {
    pub window: usize,
    /// Radius used for the bucket score sum; defaults to `window`.
    pub score_window: Option<usize>,
    pub weighting: Weighting,
    /// Buckets are `-radius..=radius`; radius 1 gives the sign of the sum.
    pub radius: u8,
    /// Leave the focal word out of its context's score sum.
    pub exclude_focal: bool,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            window: DEFAULT_WINDOW,
            score_window: None,
            weighting: Weighting::Harmonic,
            radius: 1,
            exclude_focal: false,
        }
    }
}

impl CountOptions {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be at least 1".into()));
        }
        if self.radius == 0 || self.radius > 127 {
            return Err(Error::InvalidArgument("bucket radius must be in 1..=127".into()));
        }
        Ok(())
    }
}

/// Sign of the summed scores: -1, 0 or +1.
pub fn pair_bucket(context_window_scores: &[i64]) -> Bucket {
    bucket_of(context_window_scores.iter().sum(), 1)
}

/// Clamps a score sum into `-radius..=radius`.
#[inline]
pub fn bucket_of(sum: i64, radius: u8) -> Bucket {
    sum.clamp(-(radius as i64), radius as i64) as Bucket
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCell {
    pub word: u32,
    pub context: u32,
    pub bucket: Bucket,
    pub weight: f64,
}

impl ScoredCell {
    fn key(&self) -> (u32, u32, Bucket) {
        (self.context, self.word, self.bucket)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub word: u32,
    pub context: u32,
    pub weight: f64,
}

/// Cached sums over a [`ScoredCooccurrence`].
#[derive(Debug, Clone, PartialEq)]
pub struct Marginals {
    radius: u8,
    context_bucket: Vec<f64>,
    bucket: Vec<f64>,
    context: Vec<f64>,
    total: f64,
}

impl Marginals {
    fn compute(vocab_size: usize, radius: u8, cells: &[ScoredCell]) -> Self {
        let nb = 2 * radius as usize + 1;
        let mut context_bucket = vec![0.0; vocab_size * nb];
        for c in cells {
            context_bucket[c.context as usize * nb + (c.bucket as isize + radius as isize) as usize] += c.weight;
        }
        let mut bucket = vec![0.0; nb];
        let mut context = vec![0.0; vocab_size];
        for (b, row) in context_bucket.chunks(nb).enumerate() {
            for (x, v) in row.iter().enumerate() {
                bucket[x] += v;
                context[b] += v;
            }
        }
        let total = context.iter().sum();
        Marginals {
            radius,
            context_bucket,
            bucket,
            context,
            total,
        }
    }

    #[inline]
    fn slot(&self, x: Bucket) -> usize {
        (x as isize + self.radius as isize) as usize
    }

    /// `M(b, x)`
    pub fn context_bucket(&self, context: u32, x: Bucket) -> f64 {
        let nb = 2 * self.radius as usize + 1;
        self.context_bucket[context as usize * nb + self.slot(x)]
    }

    /// `M(x)`
    pub fn bucket(&self, x: Bucket) -> f64 {
        self.bucket[self.slot(x)]
    }

    /// `M(b)`
    pub fn context(&self, context: u32) -> f64 {
        self.context[context as usize]
    }

    /// `M`
    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Sparse `(word, context, bucket) -> weight` counts plus their marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCooccurrence {
    vocab_size: usize,
    radius: u8,
    window: Option<usize>,
    cells: Vec<ScoredCell>,
    marginals: Marginals,
}

impl ScoredCooccurrence {
    /// Builds from arbitrary cells; duplicates are summed and cells are sorted by
    /// `(context, word, bucket)`.
    pub fn from_cells(vocab_size: usize, radius: u8, mut cells: Vec<ScoredCell>) -> Result<Self> {
        for c in &cells {
            if c.word as usize >= vocab_size || c.context as usize >= vocab_size {
                return Err(Error::Data(format!(
                    "cell ({}, {}) outside vocabulary of size {vocab_size}",
                    c.word, c.context
                )));
            }
            if c.bucket.unsigned_abs() > radius {
                return Err(Error::Data(format!("bucket {} outside radius {radius}", c.bucket)));
            }
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::Data(format!(
                    "cell ({}, {}, {}) has invalid weight {}",
                    c.word, c.context, c.bucket, c.weight
                )));
            }
        }
        cells.sort_by_key(|c| c.key());
        cells.dedup_by(|next, kept| {
            if next.key() == kept.key() {
                kept.weight += next.weight;
                true
            } else {
                false
            }
        });
        let marginals = Marginals::compute(vocab_size, radius, &cells);
        Ok(ScoredCooccurrence {
            vocab_size,
            radius,
            window: None,
            cells,
            marginals,
        })
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = Some(window);
        self
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn radius(&self) -> u8 {
        self.radius
    }

    pub fn window(&self) -> Option<usize> {
        self.window
    }

    pub fn buckets(&self) -> impl Iterator<Item = Bucket> {
        let r = self.radius as i8;
        -r..=r
    }

    pub fn cells(&self) -> &[ScoredCell] {
        &self.cells
    }

    pub fn marginals(&self) -> &Marginals {
        &self.marginals
    }

    pub fn total(&self) -> f64 {
        self.marginals.total
    }

    pub fn get(&self, word: u32, context: u32, bucket: Bucket) -> f64 {
        self.cells
            .binary_search_by(|c| c.key().cmp(&(context, word, bucket)))
            .map(|i| self.cells[i].weight)
            .unwrap_or(0.0)
    }

    /// Cells grouped by context id, in ascending context order.
    pub fn by_context(&self) -> impl Iterator<Item = (u32, &[ScoredCell])> {
        self.cells
            .chunk_by(|a, b| a.context == b.context)
            .map(|g| (g[0].context, g))
    }

    /// Sums two counts over the same vocabulary and bucket set.
    pub fn merge(&self, other: &ScoredCooccurrence) -> Result<ScoredCooccurrence> {
        if self.vocab_size != other.vocab_size || self.radius != other.radius {
            return Err(Error::Data("cannot merge counts with different shapes".into()));
        }
        let mut cells = Vec::with_capacity(self.cells.len() + other.cells.len());
        cells.extend_from_slice(&self.cells);
        cells.extend_from_slice(&other.cells);
        let mut out = ScoredCooccurrence::from_cells(self.vocab_size, self.radius, cells)?;
        out.window = self.window;
        Ok(out)
    }

    /// Marginalises the bucket away.
    pub fn collapse(&self) -> CooccurrenceMatrix {
        let mut cells: Vec<Cell> = Vec::with_capacity(self.cells.len());
        for c in &self.cells {
            match cells.last_mut() {
                Some(last) if last.word == c.word && last.context == c.context => last.weight += c.weight,
                _ => cells.push(Cell {
                    word: c.word,
                    context: c.context,
                    weight: c.weight,
                }),
            }
        }
        CooccurrenceMatrix::from_sorted(self.vocab_size, cells)
    }

    pub fn write<W: Write>(&self, w: W) -> std::io::Result<()> {
        let nb = 2 * self.radius as u16 + 1;
        write_records(
            w,
            nb,
            self.cells.iter().map(|c| (c.word, c.context, c.bucket, c.weight)),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn read<R: Read>(r: R, vocab_size: usize) -> Result<Self> {
        let (nb, records) = read_records(r)?;
        if nb % 2 == 0 {
            return Err(Error::Data(format!("bucket count {nb} is not odd")));
        }
        let radius = u8::try_from(nb / 2).map_err(|_| Error::Data(format!("bucket count {nb} too large")))?;
        let cells = records
            .into_iter()
            .map(|(word, context, bucket, weight)| ScoredCell {
                word,
                context,
                bucket,
                weight,
            })
            .collect();
        Self::from_cells(vocab_size, radius, cells)
    }

    pub fn load(path: &Path, vocab_size: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), vocab_size).map_err(|e| match e {
            Error::RawIo(source) => Error::io(path, source),
            other => other,
        })
    }
}

/// Sparse `(word, context) -> weight` counts, sorted by `(context, word)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    vocab_size: usize,
    cells: Vec<Cell>,
    total: f64,
}

impl CooccurrenceMatrix {
    fn from_sorted(vocab_size: usize, cells: Vec<Cell>) -> Self {
        let total = cells.iter().map(|c| c.weight).sum();
        CooccurrenceMatrix {
            vocab_size,
            cells,
            total,
        }
    }

    pub fn empty(vocab_size: usize) -> Self {
        Self::from_sorted(vocab_size, Vec::new())
    }

    /// Builds from arbitrary cells, summing duplicates.
    pub fn from_cells(vocab_size: usize, mut cells: Vec<Cell>) -> Result<Self> {
        for c in &cells {
            if c.word as usize >= vocab_size || c.context as usize >= vocab_size {
                return Err(Error::Data(format!(
                    "cell ({}, {}) outside vocabulary of size {vocab_size}",
                    c.word, c.context
                )));
            }
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::Data(format!(
                    "cell ({}, {}) has invalid weight {}",
                    c.word, c.context, c.weight
                )));
            }
        }
        cells.sort_by_key(|c| (c.context, c.word));
        cells.dedup_by(|next, kept| {
            if (next.context, next.word) == (kept.context, kept.word) {
                kept.weight += next.weight;
                true
            } else {
                false
            }
        });
        Ok(Self::from_sorted(vocab_size, cells))
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn get(&self, word: u32, context: u32) -> f64 {
        self.cells
            .binary_search_by(|c| (c.context, c.word).cmp(&(context, word)))
            .map(|i| self.cells[i].weight)
            .unwrap_or(0.0)
    }

    /// Total weight per word id (summed over contexts).
    pub fn word_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        for c in &self.cells {
            out[c.word as usize] += c.weight;
        }
        out
    }

    /// Total weight per context id.
    pub fn context_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        for c in &self.cells {
            out[c.context as usize] += c.weight;
        }
        out
    }

    pub fn by_context(&self) -> impl Iterator<Item = (u32, &[Cell])> {
        self.cells
            .chunk_by(|a, b| a.context == b.context)
            .map(|g| (g[0].context, g))
    }

    pub fn write<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_records(w, 1, self.cells.iter().map(|c| (c.word, c.context, 0, c.weight)))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    /// Reads a collapsed matrix. Scored files are rejected; collapse them first.
    pub fn read<R: Read>(r: R, vocab_size: usize) -> Result<Self> {
        let (nb, records) = read_records(r)?;
        if nb != 1 {
            return Err(Error::Data(format!(
                "expected a collapsed matrix (1 bucket), found {nb} buckets"
            )));
        }
        let cells = records
            .into_iter()
            .map(|(word, context, _, weight)| Cell { word, context, weight })
            .collect();
        Self::from_cells(vocab_size, cells)
    }

    pub fn load(path: &Path, vocab_size: usize) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), vocab_size).map_err(|e| match e {
            Error::RawIo(source) => Error::io(path, source),
            other => other,
        })
    }
}

fn write_records<W: Write>(
    w: W,
    bucket_count: u16,
    records: impl Iterator<Item = (u32, u32, Bucket, f64)>,
) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&bucket_count.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    for (a, b, x, weight) in records {
        w.write_all(&a.to_le_bytes())?;
        w.write_all(&b.to_le_bytes())?;
        w.write_all(&x.to_le_bytes())?;
        w.write_all(&weight.to_le_bytes())?;
    }
    w.flush()
}

type Record = (u32, u32, Bucket, f64);

fn read_records<R: Read>(mut r: R) -> Result<(u16, Vec<Record>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::Data("not a co-occurrence file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([header[8], header[9]]);
    if version != FORMAT_VERSION {
        return Err(Error::Data(format!("unsupported co-occurrence format version {version}")));
    }
    let bucket_count = u16::from_le_bytes([header[10], header[11]]);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % RECORD_LEN != 0 {
        return Err(Error::Data("truncated co-occurrence record".into()));
    }
    let records = body
        .chunks_exact(RECORD_LEN)
        .map(|rec| {
            (
                u32::from_le_bytes(rec[0..4].try_into().unwrap()),
                u32::from_le_bytes(rec[4..8].try_into().unwrap()),
                rec[8] as i8,
                f64::from_le_bytes(rec[9..17].try_into().unwrap()),
            )
        })
        .collect();
    Ok((bucket_count, records))
}

type ShardMap = FxHashMap<(u32, u32, Bucket), f64>;

fn count_sentence(ids: &[Option<u32>], scores: &[i64], opts: &CountOptions, out: &mut ShardMap) {
    let n = ids.len();
    let window = opts.window;
    let score_window = opts.score_window.unwrap_or(window);
    let pos_scores: Vec<i64> = ids
        .iter()
        .map(|id| id.map_or(0, |i| scores[i as usize]))
        .collect();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0i64);
    for s in &pos_scores {
        prefix.push(prefix.last().unwrap() + s);
    }
    for (j, b) in ids.iter().enumerate() {
        let Some(b) = *b else { continue };
        let lo = j.saturating_sub(score_window);
        let hi = (j + score_window).min(n - 1);
        let ctx_sum = prefix[hi + 1] - prefix[lo] - pos_scores[j];
        let shared = bucket_of(ctx_sum, opts.radius);
        let start = j.saturating_sub(window);
        let end = (j + window).min(n - 1);
        for i in start..=end {
            if i == j {
                continue;
            }
            let Some(a) = ids[i] else { continue };
            let d = i.abs_diff(j);
            let x = if opts.exclude_focal {
                let own = if d <= score_window { pos_scores[i] } else { 0 };
                bucket_of(ctx_sum - own, opts.radius)
            } else {
                shared
            };
            *out.entry((a, b, x)).or_insert(0.0) += opts.weighting.weight(d);
        }
    }
}

fn count_shards(sentences: &[Sentence], vocab: &Vocabulary, scores: &[i64], opts: &CountOptions) -> ShardMap {
    let shards: Vec<ShardMap> = sentences
        .par_chunks(SHARD_SENTENCES)
        .map(|chunk| {
            let mut map = ShardMap::default();
            for s in chunk {
                let ids = vocab.encode(s);
                count_sentence(&ids, scores, opts, &mut map);
            }
            map
        })
        .collect();
    let mut iter = shards.into_iter();
    let mut total = iter.next().unwrap_or_default();
    for shard in iter {
        let mut keys: Vec<_> = shard.into_iter().collect();
        // fixed per-shard order keeps the floating-point reduction reproducible
        keys.sort_by_key(|k| k.0);
        for (k, v) in keys {
            *total.entry(k).or_insert(0.0) += v;
        }
    }
    total
}

fn check_scores(vocab: &Vocabulary, scores: &ScoreTable) -> Result<()> {
    if scores.len() != vocab.len() {
        return Err(Error::Data(format!(
            "score table has {} entries but vocabulary has {}",
            scores.len(),
            vocab.len()
        )));
    }
    Ok(())
}

/// Counts bucketed word–context pairs over `sentences`.
pub fn count_scored_pairs(
    sentences: &[Sentence],
    vocab: &Vocabulary,
    scores: &ScoreTable,
    opts: &CountOptions,
) -> Result<ScoredCooccurrence> {
    opts.validate()?;
    check_scores(vocab, scores)?;
    let map = count_shards(sentences, vocab, scores.as_slice(), opts);
    let cells = map
        .into_iter()
        .map(|((word, context, bucket), weight)| ScoredCell {
            word,
            context,
            bucket,
            weight,
        })
        .collect();
    Ok(ScoredCooccurrence::from_cells(vocab.len(), opts.radius, cells)?.with_window(opts.window))
}

/// Plain (unscored) co-occurrence counts; the first counting pass.
pub fn count_pairs(sentences: &[Sentence], vocab: &Vocabulary, opts: &CountOptions) -> Result<CooccurrenceMatrix> {
    opts.validate()?;
    let zeros = vec![0i64; vocab.len()];
    let map = count_shards(sentences, vocab, &zeros, opts);
    let cells = map
        .into_iter()
        .map(|((word, context, _), weight)| Cell { word, context, weight })
        .collect();
    CooccurrenceMatrix::from_cells(vocab.len(), cells)
}
