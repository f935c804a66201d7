//! Bias-neutralising correction of co-occurrence counts.
//!
//! For a context `b` that should be neutral, the bucket-conditional distributions
//! `P(a | b, s = x)` are kept but the context's own bucket mix `P(s = x | b)` is replaced
//! by the corpus-wide mix `P(s = x)`:
//!
//! ```text
//! X'(a, b) = M(b) * sum_x (X(a,b,x) / M(b,x)) * w(x) / sum_x w(x)      (x with M(b,x) > 0)
//! ```
//!
//! Buckets a context never occurs in are left out and the weights renormalised, so the
//! context keeps its total mass `M(b)`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cooccur::{Bucket, Cell, CooccurrenceMatrix, ScoredCell, ScoredCooccurrence};
use crate::scoring::ResolvedSeeds;
use crate::{Error, Result};

/// Corrected counts at or below this value are dropped.
pub const MIN_CORRECTED_COUNT: f64 = 1e-10;

/// Which contexts are corrected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeutralizationPolicy {
    protected: Vec<bool>,
    neutralize: Vec<bool>,
    symmetrize_marginals: bool,
}

impl NeutralizationPolicy {
    pub fn new(
        vocab_size: usize,
        protected: impl IntoIterator<Item = u32>,
        neutralize: impl IntoIterator<Item = u32>,
        symmetrize_marginals: bool,
    ) -> Result<Self> {
        let mut p = vec![false; vocab_size];
        let mut n = vec![false; vocab_size];
        for id in protected {
            *p.get_mut(id as usize)
                .ok_or_else(|| Error::InvalidArgument(format!("protected id {id} outside vocabulary")))? = true;
        }
        for id in neutralize {
            let slot = n
                .get_mut(id as usize)
                .ok_or_else(|| Error::InvalidArgument(format!("neutralised id {id} outside vocabulary")))?;
            if p[id as usize] {
                return Err(Error::InvalidArgument(format!(
                    "word id {id} is both protected and neutralised"
                )));
            }
            *slot = true;
        }
        Ok(NeutralizationPolicy {
            protected: p,
            neutralize: n,
            symmetrize_marginals,
        })
    }

    /// Protects the seed words and neutralises everything else.
    pub fn all_but_seeds(vocab_size: usize, seeds: &ResolvedSeeds, symmetrize_marginals: bool) -> Self {
        let mut protected = vec![false; vocab_size];
        for id in seeds.all() {
            protected[id as usize] = true;
        }
        let neutralize = protected.iter().map(|p| !p).collect();
        NeutralizationPolicy {
            protected,
            neutralize,
            symmetrize_marginals,
        }
    }

    /// Protects the seed words and neutralises only `words`.
    pub fn only(
        vocab_size: usize,
        seeds: &ResolvedSeeds,
        words: impl IntoIterator<Item = u32>,
        symmetrize_marginals: bool,
    ) -> Result<Self> {
        Self::new(vocab_size, seeds.all(), words, symmetrize_marginals)
    }

    /// A policy that corrects nothing.
    pub fn identity(vocab_size: usize) -> Self {
        NeutralizationPolicy {
            protected: vec![false; vocab_size],
            neutralize: vec![false; vocab_size],
            symmetrize_marginals: false,
        }
    }

    pub fn is_protected(&self, id: u32) -> bool {
        self.protected[id as usize]
    }

    pub fn is_neutralized(&self, id: u32) -> bool {
        self.neutralize[id as usize]
    }

    pub fn symmetrize_marginals(&self) -> bool {
        self.symmetrize_marginals
    }

    pub fn neutralized_count(&self) -> usize {
        self.neutralize.iter().filter(|&&n| n).count()
    }
}

/// Global bucket weights `w(x)` indexed by `x + radius`.
fn bucket_weights(sc: &ScoredCooccurrence, symmetrize: bool) -> Vec<f64> {
    let m = sc.marginals();
    let total = m.total();
    let r = sc.radius() as i8;
    (-r..=r)
        .map(|x| {
            if symmetrize && x != 0 {
                (m.bucket(x) + m.bucket(-x)) / (2.0 * total)
            } else {
                m.bucket(x) / total
            }
        })
        .collect()
}

fn correct_context(sc: &ScoredCooccurrence, context: u32, cells: &[ScoredCell], weights: &[f64]) -> Result<Vec<Cell>> {
    let m = sc.marginals();
    let r = sc.radius() as i8;
    let mass = m.context(context);
    let observed: Vec<Bucket> = (-r..=r).filter(|&x| m.context_bucket(context, x) > 0.0).collect();
    let norm: f64 = observed.iter().map(|&x| weights[(x + r) as usize]).sum();
    if mass > 0.0 && (observed.is_empty() || !(norm > 0.0)) {
        return Err(Error::Data(format!(
            "context {context} has mass {mass} but no usable bucket"
        )));
    }
    if observed.len() == 1 {
        // a weighted average over one bucket is the count itself
        return Ok(collapse_context(cells));
    }
    let mut out = Vec::new();
    for group in cells.chunk_by(|a, b| a.word == b.word) {
        let mut acc = 0.0;
        for c in group {
            let cond = c.weight / m.context_bucket(context, c.bucket);
            acc += cond * weights[(c.bucket + r) as usize];
        }
        let value = mass * acc / norm;
        if value > MIN_CORRECTED_COUNT {
            out.push(Cell {
                word: group[0].word,
                context,
                weight: value,
            });
        }
    }
    Ok(out)
}

fn collapse_context(cells: &[ScoredCell]) -> Vec<Cell> {
    cells
        .chunk_by(|a, b| a.word == b.word)
        .map(|g| Cell {
            word: g[0].word,
            context: g[0].context,
            weight: g.iter().map(|c| c.weight).sum(),
        })
        .collect()
}

/// Applies the correction to every neutralised context; other contexts are collapsed.
pub fn correct(sc: &ScoredCooccurrence, policy: &NeutralizationPolicy) -> Result<CooccurrenceMatrix> {
    if policy.neutralize.len() != sc.vocab_size() {
        return Err(Error::Data(format!(
            "policy covers {} words but counts cover {}",
            policy.neutralize.len(),
            sc.vocab_size()
        )));
    }
    let weights = bucket_weights(sc, policy.symmetrize_marginals);
    let groups: Vec<(u32, &[ScoredCell])> = sc.by_context().collect();
    let parts: Vec<Vec<Cell>> = groups
        .par_iter()
        .map(|&(context, cells)| {
            if policy.is_neutralized(context) {
                correct_context(sc, context, cells, &weights)
            } else {
                Ok(collapse_context(cells))
            }
        })
        .collect::<Result<_>>()?;
    CooccurrenceMatrix::from_cells(sc.vocab_size(), parts.concat())
}

/// Which cells the correction reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Only cells whose context is neutralised.
    Context,
    /// Also cells whose word is neutralised but whose context is not; those take the
    /// corrected value of the transposed cell.
    #[default]
    Both,
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context" => Ok(Orientation::Context),
            "both" => Ok(Orientation::Both),
            _ => Err(Error::InvalidArgument(format!("unknown orientation `{s}` (expected context or both)"))),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Context => "context",
            Orientation::Both => "both",
        })
    }
}

/// Replaces every cell `(a, b)` with `a` neutralised and `b` not by the corrected
/// transposed cell `(b, a)`, so a pair is corrected whichever side is neutralised.
pub fn complete_orientations(corrected: &CooccurrenceMatrix, policy: &NeutralizationPolicy) -> Result<CooccurrenceMatrix> {
    let mixed = |word: u32, context: u32| policy.is_neutralized(word) && !policy.is_neutralized(context);
    let mut cells: Vec<Cell> = corrected
        .cells()
        .iter()
        .filter(|c| !mixed(c.word, c.context))
        .copied()
        .collect();
    cells.extend(corrected.cells().iter().filter(|c| mixed(c.context, c.word)).map(|c| Cell {
        word: c.context,
        context: c.word,
        weight: c.weight,
    }));
    CooccurrenceMatrix::from_cells(corrected.vocab_size(), cells)
}

/// [`correct`], followed by [`complete_orientations`] for [`Orientation::Both`].
pub fn correct_pairs(
    sc: &ScoredCooccurrence,
    policy: &NeutralizationPolicy,
    orientation: Orientation,
) -> Result<CooccurrenceMatrix> {
    let corrected = correct(sc, policy)?;
    match orientation {
        Orientation::Context => Ok(corrected),
        Orientation::Both => complete_orientations(&corrected, policy),
    }
}

/// Change summary for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextChange {
    pub context: u32,
    pub mass_before: f64,
    pub mass_after: f64,
    pub modified_cells: usize,
    /// Smallest and largest `after / before` over the context's cells.
    pub min_cell_ratio: f64,
    pub max_cell_ratio: f64,
}

impl ContextChange {
    pub fn mass_ratio(&self) -> f64 {
        self.mass_after / self.mass_before
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LargestChange {
    pub word: u32,
    pub context: u32,
    pub relative: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrectionStats {
    /// Contexts with at least one modified cell, ascending by id.
    pub contexts: Vec<ContextChange>,
    pub modified_cells: usize,
    pub largest: Option<LargestChange>,
}

impl CorrectionStats {
    pub fn context(&self, id: u32) -> Option<&ContextChange> {
        self.contexts
            .binary_search_by_key(&id, |c| c.context)
            .ok()
            .map(|i| &self.contexts[i])
    }
}

impl fmt::Display for CorrectionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "modified cells: {}", self.modified_cells)?;
        writeln!(f, "modified contexts: {}", self.contexts.len())?;
        if let Some(l) = self.largest {
            writeln!(
                f,
                "largest relative change: {:.6} at ({}, {})",
                l.relative, l.word, l.context
            )?;
        }
        Ok(())
    }
}

/// Compares two matrices over the same vocabulary cell by cell.
pub fn report_correction_stats(before: &CooccurrenceMatrix, after: &CooccurrenceMatrix) -> Result<CorrectionStats> {
    if before.vocab_size() != after.vocab_size() {
        return Err(Error::Data("matrices cover different vocabularies".into()));
    }
    let mut stats = CorrectionStats::default();
    let key = |c: &Cell| (c.context, c.word);
    let (xs, ys) = (before.cells(), after.cells());
    let (mut i, mut j) = (0, 0);
    let mut current: Option<ContextChange> = None;
    let flush = |change: Option<ContextChange>, stats: &mut CorrectionStats| {
        if let Some(c) = change {
            if c.modified_cells > 0 {
                stats.contexts.push(c);
            }
        }
    };
    while i < xs.len() || j < ys.len() {
        let (k, b, a) = match (xs.get(i), ys.get(j)) {
            (Some(x), Some(y)) if key(x) == key(y) => {
                i += 1;
                j += 1;
                (key(x), x.weight, y.weight)
            }
            (Some(x), Some(y)) if key(x) < key(y) => {
                i += 1;
                (key(x), x.weight, 0.0)
            }
            (Some(x), None) => {
                i += 1;
                (key(x), x.weight, 0.0)
            }
            (_, Some(y)) => {
                j += 1;
                (key(y), 0.0, y.weight)
            }
            (None, None) => unreachable!(),
        };
        let (context, word) = k;
        if current.as_ref().map(|c| c.context) != Some(context) {
            flush(current.take(), &mut stats);
            current = Some(ContextChange {
                context,
                mass_before: 0.0,
                mass_after: 0.0,
                modified_cells: 0,
                min_cell_ratio: f64::INFINITY,
                max_cell_ratio: f64::NEG_INFINITY,
            });
        }
        let cc = current.as_mut().unwrap();
        cc.mass_before += b;
        cc.mass_after += a;
        let ratio = if b > 0.0 { a / b } else { f64::INFINITY };
        cc.min_cell_ratio = cc.min_cell_ratio.min(ratio);
        cc.max_cell_ratio = cc.max_cell_ratio.max(ratio);
        if a != b {
            cc.modified_cells += 1;
            stats.modified_cells += 1;
            let rel = if b > 0.0 { (a - b).abs() / b } else { f64::INFINITY };
            if stats.largest.is_none_or(|l| rel > l.relative) {
                stats.largest = Some(LargestChange {
                    word,
                    context,
                    relative: rel,
                });
            }
        }
    }
    flush(current, &mut stats);
    Ok(stats)
}
