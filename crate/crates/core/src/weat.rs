//! Word Embedding Association Test and RIPA projections.
//!
//! The permutation p-value counts partitions whose statistic is *at least* the observed
//! one, the observed partition included, so a perfectly separated `n + n` test has
//! `p = 1 / C(2n, n)`. The effect size divides by the population standard deviation
//! and is therefore bounded by 2 in magnitude.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::report::{order_stats, OrderStats};
use crate::scoring::read_sections;
use crate::vectors::{cosine, dot, norm, Vectors};
use crate::wordlists as wl;
use crate::{Error, Result};

pub const DEFAULT_MAX_EXACT: u64 = 1_000_000;
pub const DEFAULT_MC_SAMPLES: u64 = 100_000;

/// Mean cosine with `a` minus mean cosine with `b`.
pub fn association(w: &[f64], a: &[&[f64]], b: &[&[f64]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("attribute sets must be non-empty".into()));
    }
    let mean = |set: &[&[f64]], role: &str| -> Result<f64> {
        let mut total = 0.0;
        for (i, v) in set.iter().enumerate() {
            total += cosine(w, v).ok_or_else(|| {
                Error::ZeroVector(if norm(w) == 0.0 {
                    "target".to_owned()
                } else {
                    format!("{role} attribute #{i}")
                })
            })?;
        }
        Ok(total / set.len() as f64)
    };
    Ok(mean(a, "A")? - mean(b, "B")?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeatTestSpec {
    pub name: String,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

fn disjoint(p: &[String], q: &[String]) -> bool {
    let s: HashSet<&String> = p.iter().collect();
    q.iter().all(|w| !s.contains(w))
}

impl WeatTestSpec {
    pub fn new(name: impl Into<String>, x: Vec<String>, y: Vec<String>, a: Vec<String>, b: Vec<String>) -> Result<Self> {
        let spec = WeatTestSpec {
            name: name.into(),
            x,
            y,
            a,
            b,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_lists(name: &str, x: &[&str], y: &[&str], a: &[&str], b: &[&str]) -> Result<Self> {
        Self::new(name, wl::to_strings(x), wl::to_strings(y), wl::to_strings(a), wl::to_strings(b))
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() || self.a.is_empty() || self.b.is_empty() {
            return Err(Error::InvalidArgument(format!("{}: empty word list", self.name)));
        }
        if self.x.len() != self.y.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: target sets differ in size ({} vs {})",
                self.name,
                self.x.len(),
                self.y.len()
            )));
        }
        if !disjoint(&self.x, &self.y) || !disjoint(&self.a, &self.b) {
            return Err(Error::InvalidArgument(format!("{}: overlapping word lists", self.name)));
        }
        Ok(())
    }

    /// The same test with target sets exchanged.
    pub fn swap_targets(&self) -> Self {
        WeatTestSpec {
            name: self.name.clone(),
            x: self.y.clone(),
            y: self.x.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
        }
    }

    pub fn swap_attributes(&self) -> Self {
        WeatTestSpec {
            name: self.name.clone(),
            x: self.x.clone(),
            y: self.y.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &String> {
        self.x.iter().chain(&self.y).chain(&self.a).chain(&self.b)
    }

    /// Parses `[X] [Y] [A] [B]` sections, one token per line.
    pub fn read<R: BufRead>(reader: R, name: &str) -> Result<Self> {
        let mut sections = read_sections(reader, name, &["X", "Y", "A", "B"])?.into_iter();
        let mut next = || sections.next().unwrap();
        let (x, y, a, b) = (next(), next(), next(), next());
        Self::new(name, x, y, a, b)
    }

    /// Loads a test spec; the test is named after the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::read(BufReader::new(file), &name)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for (h, list) in [("X", &self.x), ("Y", &self.y), ("A", &self.a), ("B", &self.b)] {
            out.push_str(&format!("[{h}]\n"));
            for w in list.iter() {
                out.push_str(w);
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PValueMode {
    Exact,
    MonteCarlo,
}

impl fmt::Display for PValueMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PValueMode::Exact => "exact",
            PValueMode::MonteCarlo => "montecarlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Numerator and denominator of `p_value`: partitions (or samples, plus the
    /// observed one) at or above the observed statistic, out of the total.
    pub p_count: u64,
    pub p_total: u64,
    /// `None` when every association is identical (zero standard deviation).
    pub effect_size: Option<f64>,
    pub mode: PValueMode,
    pub n_partitions_or_samples: u64,
}

impl WeatResult {
    /// `name statistic p effect mode`
    pub fn line(&self, name: &str) -> String {
        let effect = match self.effect_size {
            Some(e) => e.to_string(),
            None => "degenerate".to_owned(),
        };
        format!("{name} {} {} {effect} {}", self.statistic, self.p_value, self.mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeatOptions {
    pub max_exact: u64,
    pub mc_samples: u64,
    pub seed: u64,
}

impl Default for WeatOptions {
    fn default() -> Self {
        WeatOptions {
            max_exact: DEFAULT_MAX_EXACT,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n.checked_sub(k)?);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// `sum over mask - sum over complement`, accumulated in index order.
fn partition_statistic(s: &[f64], mask: u64) -> f64 {
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (i, v) in s.iter().enumerate() {
        if mask >> i & 1 == 1 {
            inside += v;
        } else {
            outside += v;
        }
    }
    inside - outside
}

fn exact_count(s: &[f64], n: usize, observed: f64) -> u64 {
    let total_bits = 2 * n;
    let limit = 1u64 << total_bits;
    let mut mask: u64 = (1u64 << n) - 1;
    let mut count = 0;
    while mask < limit {
        if partition_statistic(s, mask) >= observed {
            count += 1;
        }
        // next mask with the same popcount
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    count
}

/// Correctly rounded sum (Shewchuk's partials), independent of summation order.
fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // round the partials to a single double, half-even on exact ties
    let mut n = partials.len();
    let mut hi = 0.0;
    if n > 0 {
        n -= 1;
        hi = partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

fn effect_size(s: &[f64], n: usize) -> Option<f64> {
    let mean_x = exact_sum(s[..n].iter().copied()) / n as f64;
    let mean_y = exact_sum(s[n..].iter().copied()) / n as f64;
    let mean = exact_sum(s.iter().copied()) / s.len() as f64;
    let var = exact_sum(s.iter().map(|v| (v - mean) * (v - mean))) / s.len() as f64;
    let sd = var.sqrt();
    if sd > 0.0 {
        Some((mean_x - mean_y) / sd)
    } else {
        None
    }
}

/// Runs a WEAT over the given associations: the first `n` entries belong to `X`, the
/// rest to `Y`.
pub fn weat_from_associations(s: &[f64], opts: &WeatOptions) -> Result<WeatResult> {
    if s.is_empty() || !s.len().is_multiple_of(2) {
        return Err(Error::InvalidArgument("need an even, non-zero number of associations".into()));
    }
    let n = s.len() / 2;
    let x_mask = (1u64 << n) - 1;
    let statistic = if 2 * n <= 63 {
        partition_statistic(s, x_mask)
    } else {
        s[..n].iter().sum::<f64>() - s[n..].iter().sum::<f64>()
    };
    let partitions = if 2 * n <= 63 { binomial(2 * n as u64, n as u64) } else { None };
    let effect_size = effect_size(s, n);
    match partitions {
        Some(total) if total <= opts.max_exact => {
            let k = exact_count(s, n, statistic);
            Ok(WeatResult {
                statistic,
                p_value: k as f64 / total as f64,
                p_count: k,
                p_total: total,
                effect_size,
                mode: PValueMode::Exact,
                n_partitions_or_samples: total,
            })
        }
        _ => {
            if opts.mc_samples == 0 {
                return Err(Error::InvalidArgument("Monte-Carlo needs at least one sample".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut idx: Vec<usize> = (0..2 * n).collect();
            let mut hits = 0u64;
            for _ in 0..opts.mc_samples {
                idx.shuffle(&mut rng);
                let mut sorted_x = idx[..n].to_vec();
                sorted_x.sort_unstable();
                let mut in_x = vec![false; 2 * n];
                for &i in &sorted_x {
                    in_x[i] = true;
                }
                let mut inside = 0.0;
                let mut outside = 0.0;
                for (i, v) in s.iter().enumerate() {
                    if in_x[i] {
                        inside += v;
                    } else {
                        outside += v;
                    }
                }
                if inside - outside >= statistic {
                    hits += 1;
                }
            }
            let count = hits + 1;
            let total = opts.mc_samples + 1;
            Ok(WeatResult {
                statistic,
                p_value: count as f64 / total as f64,
                p_count: count,
                p_total: total,
                effect_size,
                mode: PValueMode::MonteCarlo,
                n_partitions_or_samples: opts.mc_samples,
            })
        }
    }
}

/// Per-target associations, `X` first then `Y`.
pub fn associations(spec: &WeatTestSpec, vectors: &Vectors) -> Result<Vec<f64>> {
    spec.validate()?;
    let all: Vec<&String> = spec.words().collect();
    vectors.lookup_all(&all)?;
    for w in &all {
        if norm(vectors.get(w).unwrap()) == 0.0 {
            return Err(Error::ZeroVector((*w).clone()));
        }
    }
    let a = vectors.lookup_all(&spec.a)?;
    let b = vectors.lookup_all(&spec.b)?;
    spec.x
        .iter()
        .chain(&spec.y)
        .map(|w| association(vectors.get(w).unwrap(), &a, &b))
        .collect()
}

pub fn weat(spec: &WeatTestSpec, vectors: &Vectors, opts: &WeatOptions) -> Result<WeatResult> {
    let s = associations(spec, vectors)?;
    weat_from_associations(&s, opts)
}

/// Projection of `w` onto the unit vector along `f - m`.
pub fn ripa(w: &[f64], f: &[f64], m: &[f64]) -> Result<f64> {
    let rel: Vec<f64> = f.iter().zip(m).map(|(a, b)| a - b).collect();
    let len = norm(&rel);
    if len == 0.0 {
        return Err(Error::ZeroVector("relation vector f - m".into()));
    }
    Ok(dot(w, &rel) / len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipaResult {
    pub word: String,
    /// One score per `(feminine, masculine)` pair, feminine-major.
    pub scores: Vec<f64>,
    pub stats: OrderStats,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RipaReport {
    pub results: Vec<RipaResult>,
    /// Words (targets or attributes) missing from the vectors.
    pub skipped: Vec<String>,
}

/// RIPA for each word against every feminine/masculine attribute pair.
pub fn ripa_report(words: &[String], feminine: &[String], masculine: &[String], vectors: &Vectors) -> Result<RipaReport> {
    let mut report = RipaReport::default();
    let present = |list: &[String], report: &mut RipaReport| -> Vec<String> {
        list.iter()
            .filter(|w| {
                let ok = vectors.contains(w);
                if !ok {
                    report.skipped.push((*w).clone());
                }
                ok
            })
            .cloned()
            .collect()
    };
    let fem = present(feminine, &mut report);
    let masc = present(masculine, &mut report);
    let targets = present(words, &mut report);
    if fem.is_empty() || masc.is_empty() {
        return Err(Error::OutOfVocabulary(report.skipped));
    }
    for w in targets {
        let v = vectors.get(&w).unwrap();
        let mut scores = Vec::with_capacity(fem.len() * masc.len());
        for f in &fem {
            for m in &masc {
                scores.push(ripa(v, vectors.get(f).unwrap(), vectors.get(m).unwrap())?);
            }
        }
        let stats = order_stats(&scores).expect("at least one pair");
        report.results.push(RipaResult { word: w, scores, stats });
    }
    Ok(report)
}

/// Packaged tests whose word lists ship with the crate.
pub fn builtin_tests() -> Vec<WeatTestSpec> {
    let t = |name, x, y, a, b| WeatTestSpec::from_lists(name, x, y, a, b).expect("packaged lists are valid");
    vec![
        t("math-art-gender", wl::MATH, wl::ART, wl::MALE_TERMS, wl::FEMALE_TERMS),
        t(
            "science-art-gender",
            wl::WEAT_SCIENCE,
            wl::WEAT_SCIENCE_ARTS,
            wl::MALE_FAMILY_TERMS,
            wl::FEMALE_FAMILY_TERMS,
        ),
        t(
            "professions-adjectives",
            wl::MASCULINE_PROFESSIONS,
            wl::FEMININE_PROFESSIONS,
            wl::MASCULINE_ADJECTIVES,
            wl::FEMININE_ADJECTIVES,
        ),
        t(
            "math-art-adjectives",
            wl::MATH,
            wl::ART,
            wl::MASCULINE_ADJECTIVES,
            wl::FEMININE_ADJECTIVES,
        ),
        t(
            "science-art-adjectives",
            wl::WEAT_SCIENCE,
            wl::WEAT_SCIENCE_ARTS,
            wl::MASCULINE_ADJECTIVES,
            wl::FEMININE_ADJECTIVES,
        ),
    ]
}
