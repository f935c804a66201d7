//! Semi-synthetic stereotype corpus: sentences `pronoun is an adjective noun` over
//! synthetic adjectives and nouns whose pronoun counts encode a stereotype, plus a
//! seeded background corpus generator for running the experiment without real text.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::text::Sentence;
use crate::weat::WeatTestSpec;
use crate::wordlists as wl;
use crate::{Error, Result};

pub const ADJECTIVE_PREFIX: &str = "synthadj";
pub const NOUN_PREFIX: &str = "synthnoun";
pub const MASCULINE_PRONOUN: &str = "he";
pub const FEMININE_PRONOUN: &str = "she";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stereotype {
    Feminine,
    Masculine,
}

impl Stereotype {
    pub fn pronoun(self) -> &'static str {
        match self {
            Stereotype::Feminine => FEMININE_PRONOUN,
            Stereotype::Masculine => MASCULINE_PRONOUN,
        }
    }
}

impl fmt::Display for Stereotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stereotype::Feminine => "feminine",
            Stereotype::Masculine => "masculine",
        })
    }
}

/// Count table of the synthetic corpus. With `n` words per group, ids `0..n` are
/// feminine and `n..2n` masculine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub per_group: usize,
    /// Pronoun counts for a stereotype-matched pair: `(other, matching)`.
    pub matched_counts: (usize, usize),
    /// Count with each pronoun for a cross-stereotype pair.
    pub neutral_count: usize,
    pub shuffle_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            per_group: 10,
            matched_counts: (10, 90),
            neutral_count: 30,
            shuffle_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(seed: u64) -> Self {
        SyntheticSpec {
            shuffle_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_group == 0 || self.per_group > 50 {
            return Err(Error::InvalidArgument("per_group must be in 1..=50".into()));
        }
        Ok(())
    }

    pub fn adjective(&self, i: usize) -> String {
        format!("{ADJECTIVE_PREFIX}{i:02}")
    }

    pub fn noun(&self, i: usize) -> String {
        format!("{NOUN_PREFIX}{i:02}")
    }

    pub fn stereotype(&self, i: usize) -> Stereotype {
        if i < self.per_group {
            Stereotype::Feminine
        } else {
            Stereotype::Masculine
        }
    }

    /// Words of one kind (`adjective` or `noun`) with the given stereotype.
    pub fn group(&self, adjectives: bool, stereotype: Stereotype) -> Vec<String> {
        let range = match stereotype {
            Stereotype::Feminine => 0..self.per_group,
            Stereotype::Masculine => self.per_group..2 * self.per_group,
        };
        range
            .map(|i| if adjectives { self.adjective(i) } else { self.noun(i) })
            .collect()
    }

    /// `(he, she)` multiplicities of adjective `i` with noun `j`.
    pub fn counts(&self, adj: usize, noun: usize) -> (usize, usize) {
        let (minor, major) = self.matched_counts;
        match (self.stereotype(adj), self.stereotype(noun)) {
            (Stereotype::Feminine, Stereotype::Feminine) => (minor, major),
            (Stereotype::Masculine, Stereotype::Masculine) => (major, minor),
            _ => (self.neutral_count, self.neutral_count),
        }
    }

    pub fn total_sentences(&self) -> usize {
        let n = 2 * self.per_group;
        (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| {
                let (he, she) = self.counts(a, b);
                he + she
            })
            .sum()
    }
}

/// Every synthetic sentence, in a seed-determined order.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<Sentence>> {
    spec.validate()?;
    let n = 2 * spec.per_group;
    let mut out = Vec::with_capacity(spec.total_sentences());
    for a in 0..n {
        for b in 0..n {
            let (he, she) = spec.counts(a, b);
            for (pronoun, k) in [(MASCULINE_PRONOUN, he), (FEMININE_PRONOUN, she)] {
                for _ in 0..k {
                    out.push(Sentence::new(vec![
                        pronoun.to_owned(),
                        "is".to_owned(),
                        "an".to_owned(),
                        spec.adjective(a),
                        spec.noun(b),
                    ]));
                }
            }
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.shuffle_seed));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub word: String,
    pub stereotype: Stereotype,
    pub matching: u64,
    pub other: u64,
    /// Set when `matching != 3 * other`.
    pub flagged: bool,
}

impl RatioRow {
    pub fn ratio(&self) -> f64 {
        self.matching as f64 / self.other as f64
    }
}

fn parse_synthetic(token: &str, prefix: &str) -> Option<usize> {
    let rest = token.strip_prefix(prefix)?;
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// Per synthetic word, pronoun counts split into stereotype-matching and other.
/// Sentences without a `he`/`she` token are ignored.
pub fn stereotype_ratio_check<'a>(
    sentences: impl IntoIterator<Item = &'a Sentence>,
    spec: &SyntheticSpec,
) -> Vec<RatioRow> {
    // word -> (he, she)
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for s in sentences {
        let he = s.tokens.iter().any(|t| t == MASCULINE_PRONOUN);
        let she = s.tokens.iter().any(|t| t == FEMININE_PRONOUN);
        if he == she {
            continue;
        }
        for t in &s.tokens {
            let synthetic = parse_synthetic(t, ADJECTIVE_PREFIX)
                .or_else(|| parse_synthetic(t, NOUN_PREFIX))
                .is_some();
            if synthetic {
                let e = counts.entry(t.clone()).or_default();
                if he {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
    }
    counts
        .into_iter()
        .map(|(word, (he, she))| {
            let idx = parse_synthetic(&word, ADJECTIVE_PREFIX)
                .or_else(|| parse_synthetic(&word, NOUN_PREFIX))
                .unwrap();
            let stereotype = spec.stereotype(idx);
            let (matching, other) = match stereotype {
                Stereotype::Feminine => (she, he),
                Stereotype::Masculine => (he, she),
            };
            RatioRow {
                word,
                stereotype,
                matching,
                other,
                flagged: matching != 3 * other,
            }
        })
        .collect()
}

/// The three stereotype tests over synthetic words: adjectives and nouns against
/// explicit gender terms, and adjectives against nouns. Masculine groups come first,
/// so a stereotyped embedding gives a positive effect.
pub fn weat_specs(spec: &SyntheticSpec) -> Vec<WeatTestSpec> {
    let male = wl::to_strings(wl::MALE_TERMS);
    let female = wl::to_strings(wl::FEMALE_TERMS);
    let g = |adj, s| spec.group(adj, s);
    use Stereotype::*;
    vec![
        WeatTestSpec::new("synthetic-adjectives-gender", g(true, Masculine), g(true, Feminine), male.clone(), female.clone()),
        WeatTestSpec::new("synthetic-nouns-gender", g(false, Masculine), g(false, Feminine), male, female),
        WeatTestSpec::new(
            "synthetic-adjectives-nouns",
            g(true, Masculine),
            g(true, Feminine),
            g(false, Masculine),
            g(false, Feminine),
        ),
    ]
    .into_iter()
    .map(|r| r.expect("synthetic word lists are valid"))
    .collect()
}

/// Concatenates and shuffles two corpora.
pub fn mix(real: Vec<Sentence>, synthetic: Vec<Sentence>, seed: u64) -> Vec<Sentence> {
    let mut all = real;
    all.extend(synthetic);
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all
}

/// Parameters of the background ("pseudo-real") corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub sentences: usize,
    /// Invented content words, on top of the packaged evaluation word lists.
    pub content_words: usize,
    pub topics: usize,
    /// Fraction of sentences that mention a gendered term.
    pub gendered_fraction: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            sentences: 100_000,
            content_words: 1500,
            topics: 25,
            gendered_fraction: 0.4,
            min_len: 8,
            max_len: 18,
            seed: 0,
        }
    }
}

const FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "a", "to", "in", "is", "was", "that", "for", "it", "with", "as", "on", "be", "at", "by", "this",
    "an", "from", "or", "are", "not", "but", "all", "were", "they", "which", "there", "their",
];

const MASCULINE_TERMS: &[&str] = &[
    "he", "him", "his", "himself", "man", "men", "boy", "boys", "male", "brother", "son", "father", "uncle",
    "grandfather",
];
const FEMININE_TERMS: &[&str] = &[
    "she", "her", "hers", "herself", "woman", "women", "girl", "girls", "female", "sister", "daughter", "mother",
    "aunt", "grandmother",
];

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "pl"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "t"];

fn invented_word(rng: &mut impl Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w.push_str(CODAS.choose(rng).unwrap());
    w
}

/// Content words of the background corpus: the packaged gender-neutral evaluation
/// words followed by invented ones, all distinct from function and gendered words.
pub fn background_vocabulary(spec: &BackgroundSpec) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed0ff111e);
    let reserved: HashSet<&str> = FUNCTION_WORDS
        .iter()
        .chain(MASCULINE_TERMS)
        .chain(FEMININE_TERMS)
        .chain(wl::MALE_TERMS)
        .chain(wl::FEMALE_TERMS)
        .chain(wl::MALE_FAMILY_TERMS)
        .chain(wl::FEMALE_FAMILY_TERMS)
        .copied()
        .collect();
    let mut seen: HashSet<String> = HashSet::new();
    let mut words = Vec::new();
    let lists = [
        wl::FEMININE_ADJECTIVES,
        wl::MASCULINE_ADJECTIVES,
        wl::FEMININE_PROFESSIONS,
        wl::MASCULINE_PROFESSIONS,
        wl::CAREER,
        wl::HOME,
        wl::SCIENCE,
        wl::ART,
        wl::MATH,
        wl::WEAT_SCIENCE,
        wl::WEAT_SCIENCE_ARTS,
    ];
    for w in lists.iter().flat_map(|l| l.iter()) {
        if !reserved.contains(w) && seen.insert(w.to_string()) {
            words.push(w.to_string());
        }
    }
    let target = words.len() + spec.content_words;
    while words.len() < target {
        let w = invented_word(&mut rng);
        if !reserved.contains(w.as_str())
            && !w.starts_with(ADJECTIVE_PREFIX)
            && !w.starts_with(NOUN_PREFIX)
            && seen.insert(w.clone())
        {
            words.push(w);
        }
    }
    words
}

/// Seeded background corpus with topical structure and gender-balanced mentions of
/// gendered terms. Content words are spread round-robin over topics and drawn with
/// Zipf-like weights inside a topic.
pub fn generate_background(spec: &BackgroundSpec) -> Result<Vec<Sentence>> {
    if spec.topics == 0 || spec.min_len < 3 || spec.max_len < spec.min_len {
        return Err(Error::InvalidArgument("background spec needs topics and 3 <= min_len <= max_len".into()));
    }
    if !(0.0..=1.0).contains(&spec.gendered_fraction) {
        return Err(Error::InvalidArgument("gendered_fraction must lie in [0, 1]".into()));
    }
    let content = background_vocabulary(spec);
    let mut topics: Vec<Vec<&str>> = vec![Vec::new(); spec.topics];
    for (i, w) in content.iter().enumerate() {
        topics[i % spec.topics].push(w);
    }
    let zipf = |n: usize| WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).unwrap();
    let topic_dists: Vec<WeightedIndex<f64>> = topics.iter().map(|t| zipf(t.len().max(1))).collect();
    let function_dist = zipf(FUNCTION_WORDS.len());
    let masc_dist = zipf(MASCULINE_TERMS.len());
    let fem_dist = zipf(FEMININE_TERMS.len());

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.sentences);
    for _ in 0..spec.sentences {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let topic = rng.gen_range(0..spec.topics);
        let mut tokens: Vec<String> = Vec::with_capacity(len);
        for _ in 0..len {
            let t = if rng.gen_bool(0.4) {
                FUNCTION_WORDS[function_dist.sample(&mut rng)]
            } else if topics[topic].is_empty() || rng.gen_bool(0.1) {
                let other = rng.gen_range(0..spec.topics);
                match topics[other].len() {
                    0 => FUNCTION_WORDS[0],
                    _ => topics[other][topic_dists[other].sample(&mut rng)],
                }
            } else {
                topics[topic][topic_dists[topic].sample(&mut rng)]
            };
            tokens.push(t.to_owned());
        }
        if rng.gen_bool(spec.gendered_fraction) {
            let (terms, dist) = if rng.gen_bool(0.5) {
                (MASCULINE_TERMS, &masc_dist)
            } else {
                (FEMININE_TERMS, &fem_dist)
            };
            let mentions = rng.gen_range(1..=3);
            for _ in 0..mentions {
                let pos = rng.gen_range(0..tokens.len());
                tokens[pos] = terms[dist.sample(&mut rng)].to_owned();
            }
        }
        out.push(Sentence::new(tokens));
    }
    Ok(out)
}
