//! Per-word bias scores from two seed sets.
//!
//! A non-seed word `w` gets
//!
//! ```text
//! round( c * ln( ((X(w,B) + eps) / (X(w,A) + eps)) / (P(B) / P(A)) ) )
//! ```
//!
//! where `X(w,S)` is the weighted count of `w` next to any seed in `S` and `P(S)` is
//! the share of pair mass taken by the seeds of `S`. Words leaning towards `B` are
//! positive, matching the fixed `+magnitude` given to members of `B` (and `-magnitude`
//! to members of `A`).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::{debug, warn};

use crate::cooccur::CooccurrenceMatrix;
use crate::text::Vocabulary;
use crate::wordlists;
use crate::{Error, Result};

pub const DEFAULT_C: f64 = 1.3;
pub const DEFAULT_SEED_MAGNITUDE: i64 = 100;
pub const DEFAULT_SMOOTHING: f64 = 0.5;

/// Two disjoint lists of explicit attribute markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSets {
    a: Vec<String>,
    b: Vec<String>,
    magnitude: i64,
}

/// Seed ids found in a vocabulary, plus the seeds that were not.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResolvedSeeds {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub missing: Vec<String>,
}

impl ResolvedSeeds {
    pub fn all(&self) -> impl Iterator<Item = u32> + '_ {
        self.a.iter().chain(&self.b).copied()
    }
}

impl SeedSets {
    pub fn new(a: Vec<String>, b: Vec<String>, magnitude: i64) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidArgument("both seed sets must be non-empty".into()));
        }
        if magnitude <= 0 {
            return Err(Error::InvalidArgument("seed magnitude must be positive".into()));
        }
        let set_a: HashSet<&str> = a.iter().map(String::as_str).collect();
        let shared: Vec<String> = b.iter().filter(|t| set_a.contains(t.as_str())).cloned().collect();
        if !shared.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "seed sets overlap: {}",
                shared.join(", ")
            )));
        }
        Ok(SeedSets { a, b, magnitude })
    }

    /// The masculine (`A`) / feminine (`B`) pronoun and noun sets.
    pub fn gender() -> Self {
        SeedSets::new(
            wordlists::to_strings(wordlists::SEEDS_MASCULINE),
            wordlists::to_strings(wordlists::SEEDS_FEMININE),
            DEFAULT_SEED_MAGNITUDE,
        )
        .expect("packaged seed sets are valid")
    }

    pub fn with_magnitude(mut self, magnitude: i64) -> Result<Self> {
        if magnitude <= 0 {
            return Err(Error::InvalidArgument("seed magnitude must be positive".into()));
        }
        self.magnitude = magnitude;
        Ok(self)
    }

    pub fn a(&self) -> &[String] {
        &self.a
    }

    pub fn b(&self) -> &[String] {
        &self.b
    }

    pub fn magnitude(&self) -> i64 {
        self.magnitude
    }

    pub fn swapped(&self) -> Self {
        SeedSets {
            a: self.b.clone(),
            b: self.a.clone(),
            magnitude: self.magnitude,
        }
    }

    pub fn resolve(&self, vocab: &Vocabulary) -> ResolvedSeeds {
        let mut out = ResolvedSeeds::default();
        for (list, ids) in [(&self.a, &mut out.a), (&self.b, &mut out.b)] {
            for tok in list {
                match vocab.id(tok) {
                    Some(id) => ids.push(id),
                    None => out.missing.push(tok.clone()),
                }
            }
        }
        out
    }

    /// Parses `[A]` / `[B]` sections with one token per line. `#` starts a comment.
    pub fn read<R: BufRead>(reader: R, context: &str) -> Result<Self> {
        let sections = read_sections(reader, context, &["A", "B"])?;
        let mut it = sections.into_iter();
        let a = it.next().unwrap();
        let b = it.next().unwrap();
        SeedSets::new(a, b, DEFAULT_SEED_MAGNITUDE)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "[A]")?;
        for t in &self.a {
            writeln!(w, "{t}")?;
        }
        writeln!(w, "[B]")?;
        for t in &self.b {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }
}

/// Reads a file made of `[NAME]` sections, returning the sections in the order of
/// `names`. Every named section must be present; unknown sections are an error.
pub(crate) fn read_sections<R: BufRead>(reader: R, context: &str, names: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut out: Vec<Option<Vec<String>>> = vec![None; names.len()];
    let mut current: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let idx = names
                .iter()
                .position(|n| *n == name.trim())
                .ok_or_else(|| Error::parse(context, i + 1, format!("unknown section [{name}]")))?;
            if out[idx].is_some() {
                return Err(Error::parse(context, i + 1, format!("duplicate section [{name}]")));
            }
            out[idx] = Some(Vec::new());
            current = Some(idx);
            continue;
        }
        let idx = current.ok_or_else(|| Error::parse(context, i + 1, "token before any section header"))?;
        if line.split_whitespace().count() != 1 {
            return Err(Error::parse(context, i + 1, "expected one token per line"));
        }
        out[idx].as_mut().unwrap().push(line.to_owned());
    }
    out.into_iter()
        .zip(names)
        .map(|(s, n)| s.ok_or_else(|| Error::parse(context, 0, format!("missing section [{n}]"))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub c: f64,
    pub smoothing: f64,
    /// Force every non-seed score to zero, leaving only the seed markers.
    pub seeds_only: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            c: DEFAULT_C,
            smoothing: DEFAULT_SMOOTHING,
            seeds_only: false,
        }
    }
}

/// Integer score per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    scores: Vec<i64>,
    unrounded: Vec<Option<f64>>,
    c: f64,
}

impl ScoreTable {
    pub fn zeros(len: usize) -> Self {
        ScoreTable {
            scores: vec![0; len],
            unrounded: vec![None; len],
            c: 0.0,
        }
    }

    pub fn from_scores(scores: Vec<i64>) -> Self {
        let len = scores.len();
        ScoreTable {
            scores,
            unrounded: vec![None; len],
            c: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn score(&self, id: u32) -> i64 {
        self.scores[id as usize]
    }

    pub fn set(&mut self, id: u32, score: i64) {
        self.scores[id as usize] = score;
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.scores
    }

    /// Log relative odds before rounding, for words that received a computed score.
    pub fn unrounded(&self, id: u32) -> Option<f64> {
        self.unrounded[id as usize]
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Every score negated.
    pub fn negated(&self) -> Self {
        ScoreTable {
            scores: self.scores.iter().map(|s| -s).collect(),
            unrounded: self.unrounded.iter().map(|u| u.map(|v| -v)).collect(),
            c: self.c,
        }
    }

    pub fn write<W: Write>(&self, vocab: &Vocabulary, mut w: W) -> std::io::Result<()> {
        for (id, tok, _) in vocab.iter() {
            writeln!(w, "{tok}\t{}", self.scores[id as usize])?;
        }
        Ok(())
    }

    pub fn save(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(vocab, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads `token<TAB>score` lines. Vocabulary words absent from the file score 0.
    pub fn read<R: BufRead>(reader: R, vocab: &Vocabulary, context: &str) -> Result<Self> {
        let mut table = ScoreTable::zeros(vocab.len());
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (tok, score) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(context, i + 1, "expected `token<TAB>score`"))?;
            let id = vocab
                .id(tok)
                .ok_or_else(|| Error::parse(context, i + 1, format!("token `{tok}` not in vocabulary")))?;
            let score: i64 = score
                .trim()
                .parse()
                .map_err(|_| Error::parse(context, i + 1, format!("bad score `{score}`")))?;
            table.set(id, score);
        }
        Ok(table)
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), vocab, &path.display().to_string())
    }
}

/// Diagnostics from [`compute_word_scores`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub missing_seeds: Vec<String>,
    /// Non-seed words with no co-occurrence mass next to either seed set.
    pub no_seed_mass: usize,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Scores every vocabulary word from the first-pass counts `raw`.
pub fn compute_word_scores(
    raw: &CooccurrenceMatrix,
    vocab: &Vocabulary,
    seeds: &SeedSets,
    opts: &ScoreOptions,
) -> Result<(ScoreTable, ScoreReport)> {
    if raw.vocab_size() != vocab.len() {
        return Err(Error::Data(format!(
            "count matrix covers {} words but vocabulary has {}",
            raw.vocab_size(),
            vocab.len()
        )));
    }
    if !(opts.smoothing > 0.0) || !opts.c.is_finite() {
        return Err(Error::InvalidArgument("smoothing must be positive and c finite".into()));
    }
    let resolved = seeds.resolve(vocab);
    for m in &resolved.missing {
        warn!("seed word `{m}` is not in the vocabulary");
    }
    let mut report = ScoreReport {
        missing_seeds: resolved.missing.clone(),
        ..ScoreReport::default()
    };

    // pole[id]: -1 for A, +1 for B
    let mut pole = vec![0i8; vocab.len()];
    for &id in &resolved.a {
        pole[id as usize] = -1;
    }
    for &id in &resolved.b {
        pole[id as usize] = 1;
    }

    let mut near_a = vec![0.0; vocab.len()];
    let mut near_b = vec![0.0; vocab.len()];
    for cell in raw.cells() {
        match pole[cell.context as usize] {
            -1 => near_a[cell.word as usize] += cell.weight,
            1 => near_b[cell.word as usize] += cell.weight,
            _ => {}
        }
    }

    let word_mass = raw.word_sums();
    let p_a: f64 = resolved.a.iter().map(|&id| word_mass[id as usize]).sum::<f64>();
    let p_b: f64 = resolved.b.iter().map(|&id| word_mass[id as usize]).sum::<f64>();
    if !opts.seeds_only && (p_a <= 0.0 || p_b <= 0.0) {
        return Err(Error::Data(
            "one of the seed sets has no co-occurrence mass in the corpus".into(),
        ));
    }
    // P(B)/P(A); the common 1/M factor cancels
    let corpus_odds = p_b / p_a;

    let mut table = ScoreTable::zeros(vocab.len());
    table.c = opts.c;
    let eps = opts.smoothing;
    for id in 0..vocab.len() {
        let score = match pole[id] {
            -1 => -seeds.magnitude,
            1 => seeds.magnitude,
            _ if opts.seeds_only => 0,
            _ if near_a[id] == 0.0 && near_b[id] == 0.0 => {
                report.no_seed_mass += 1;
                debug!("`{}` never co-occurs with a seed; score 0", vocab.token(id as u32));
                0
            }
            _ => {
                let odds = (near_b[id] + eps) / (near_a[id] + eps);
                let value = opts.c * (odds / corpus_odds).ln();
                table.unrounded[id] = Some(value);
                value.round() as i64
            }
        };
        table.scores[id] = score;
        match score.signum() {
            1 => report.positive += 1,
            -1 => report.negative += 1,
            _ => report.zero += 1,
        }
    }
    Ok((table, report))
}
