//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use birm::cooccur::{
    bucket_of, count_pairs, count_scored_pairs, Bucket, CountOptions, ScoredCell, ScoredCooccurrence, Weighting,
};
use birm::correction::{correct, NeutralizationPolicy};
use birm::glove::{gradient, loss, EmbeddingSet};
use birm::scoring::{compute_word_scores, ScoreOptions, ScoreTable, SeedSets};
use birm::text::{build_vocabulary, Sentence, Vocabulary};
use num_rational::Ratio;
use rand::Rng;

pub type Q = Ratio<i128>;
pub type Counts = BTreeMap<(u32, u32, Bucket), f64>;

/// A random corpus over `w0..w11` plus rare words that fall out of the vocabulary.
pub struct RandomCorpus {
    pub sentences: Vec<Sentence>,
    pub vocab: Vocabulary,
    pub scores: ScoreTable,
}

pub fn random_corpus(rng: &mut impl Rng, max_tokens: usize) -> RandomCorpus {
    let mut sentences = Vec::new();
    let mut budget = rng.gen_range(1..=max_tokens);
    while budget > 0 {
        let len = rng.gen_range(1..=budget.min(40));
        budget -= len;
        let tokens = (0..len)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    format!("rare{}", rng.gen_range(0..1000))
                } else {
                    format!("w{}", rng.gen_range(0..12))
                }
            })
            .collect();
        sentences.push(Sentence::new(tokens));
    }
    let vocab = build_vocabulary(&sentences, 2);
    let scores = (0..vocab.len())
        .map(|_| match rng.gen_range(0..4) {
            0 => 0,
            1 => rng.gen_range(-3..=3),
            2 => if rng.gen_bool(0.5) { 100 } else { -100 },
            _ => rng.gen_range(-20..=20),
        })
        .collect();
    RandomCorpus {
        sentences,
        vocab,
        scores: ScoreTable::from_scores(scores),
    }
}

/// Enumerates every (word, context) occurrence pair directly, recomputing the
/// context score sum from scratch for each pair.
pub fn brute_force_counts(
    sentences: &[Sentence],
    vocab: &Vocabulary,
    scores: &ScoreTable,
    opts: &CountOptions,
) -> Counts {
    let sw = opts.score_window.unwrap_or(opts.window);
    let mut out = Counts::new();
    for s in sentences {
        let ids: Vec<Option<u32>> = s.tokens.iter().map(|t| vocab.id(t)).collect();
        for (j, b) in ids.iter().enumerate() {
            let Some(b) = *b else { continue };
            for (i, a) in ids.iter().enumerate() {
                let Some(a) = *a else { continue };
                let d = i.abs_diff(j);
                if i == j || d > opts.window {
                    continue;
                }
                let mut sum = 0i64;
                for (k, id) in ids.iter().enumerate() {
                    let Some(id) = *id else { continue };
                    if k == j || k.abs_diff(j) > sw || (opts.exclude_focal && k == i) {
                        continue;
                    }
                    sum += scores.score(id);
                }
                let x = bucket_of(sum, opts.radius);
                let w = match opts.weighting {
                    Weighting::Harmonic => 1.0 / d as f64,
                    Weighting::Flat => 1.0,
                };
                *out.entry((a, b, x)).or_insert(0.0) += w;
            }
        }
    }
    out
}

/// Compares counts to the oracle: exact for flat weighting, `1e-9` relative otherwise.
pub fn compare_counts(sc: &ScoredCooccurrence, oracle: &Counts, weighting: Weighting) -> Result<(), String> {
    if sc.cells().len() != oracle.len() {
        return Err(format!("{} cells vs {} in oracle", sc.cells().len(), oracle.len()));
    }
    for (&(a, b, x), &want) in oracle {
        let got = sc.get(a, b, x);
        let ok = match weighting {
            Weighting::Flat => got == want,
            Weighting::Harmonic => (got - want).abs() <= 1e-9 * want.abs(),
        };
        if !ok {
            return Err(format!("entries({a}, {b}, {x}) = {got}, oracle {want}"));
        }
    }
    Ok(())
}

pub fn random_count_options(rng: &mut impl Rng, weighting: Weighting) -> CountOptions {
    let window = rng.gen_range(1..=8);
    CountOptions {
        window,
        score_window: if rng.gen_bool(0.3) { Some(rng.gen_range(1..=8)) } else { None },
        weighting,
        radius: rng.gen_range(1..=3),
        exclude_focal: rng.gen_bool(0.3),
    }
}

/// Runs the counting oracle on `n` random corpora of at most 200 tokens for both weightings.
pub fn counting_oracle_suite(rng: &mut impl Rng, n: usize) -> Result<(), String> {
    for round in 0..n {
        let corpus = random_corpus(rng, 200);
        for weighting in [Weighting::Flat, Weighting::Harmonic] {
            let opts = random_count_options(rng, weighting);
            let sc = count_scored_pairs(&corpus.sentences, &corpus.vocab, &corpus.scores, &opts)
                .map_err(|e| e.to_string())?;
            let oracle = brute_force_counts(&corpus.sentences, &corpus.vocab, &corpus.scores, &opts);
            compare_counts(&sc, &oracle, weighting).map_err(|e| format!("corpus {round}, {opts:?}: {e}"))?;
        }
    }
    Ok(())
}

pub fn cell(word: u32, context: u32, bucket: Bucket, weight: f64) -> ScoredCell {
    ScoredCell {
        word,
        context,
        bucket,
        weight,
    }
}

/// Random scored counts with integer weights, including single-bucket contexts.
pub fn random_scored(rng: &mut impl Rng, vocab_size: usize, radius: u8) -> ScoredCooccurrence {
    let r = radius as i8;
    let mut cells = Vec::new();
    for b in 0..vocab_size as u32 {
        let only: Option<Bucket> = if rng.gen_bool(0.2) { Some(rng.gen_range(-r..=r)) } else { None };
        for a in 0..vocab_size as u32 {
            for x in -r..=r {
                if only.is_some_and(|o| o != x) || rng.gen_bool(0.4) {
                    continue;
                }
                cells.push(cell(a, b, x, rng.gen_range(1..=30) as f64));
            }
        }
    }
    ScoredCooccurrence::from_cells(vocab_size, radius, cells).unwrap()
}

/// Evaluates the correction for every neutralised context in exact rational arithmetic.
/// Weights must be integers.
pub fn rational_correction(sc: &ScoredCooccurrence, neutralized: &[u32], symmetrize: bool) -> BTreeMap<(u32, u32), Q> {
    let r = sc.radius() as i8;
    let q = |v: f64| {
        assert_eq!(v.fract(), 0.0);
        Q::from_integer(v as i128)
    };
    let mut entries: BTreeMap<(u32, u32, Bucket), Q> = BTreeMap::new();
    for c in sc.cells() {
        *entries.entry((c.word, c.context, c.bucket)).or_insert(Q::from_integer(0)) += q(c.weight);
    }
    let zero = Q::from_integer(0);
    let m_bx = |b: u32, x: Bucket| -> Q {
        entries
            .iter()
            .filter(|(&(_, bb, xx), _)| bb == b && xx == x)
            .fold(zero, |acc, (_, v)| acc + v)
    };
    let m_x = |x: Bucket| -> Q { entries.iter().filter(|(&(_, _, xx), _)| xx == x).fold(zero, |acc, (_, v)| acc + v) };
    let total = entries.values().fold(zero, |acc, v| acc + v);
    let w = |x: Bucket| -> Q {
        if symmetrize && x != 0 {
            (m_x(x) + m_x(-x)) / (Q::from_integer(2) * total)
        } else {
            m_x(x) / total
        }
    };
    let mut out = BTreeMap::new();
    for &b in neutralized {
        let observed: Vec<Bucket> = (-r..=r).filter(|&x| m_bx(b, x) > zero).collect();
        if observed.is_empty() {
            continue;
        }
        let m_b = observed.iter().fold(zero, |acc, &x| acc + m_bx(b, x));
        let norm = observed.iter().fold(zero, |acc, &x| acc + w(x));
        for a in 0..sc.vocab_size() as u32 {
            let acc = observed.iter().fold(zero, |acc, &x| {
                let e = entries.get(&(a, b, x)).copied().unwrap_or(zero);
                acc + e / m_bx(b, x) * w(x)
            });
            if acc > zero {
                out.insert((a, b), m_b * acc / norm);
            }
        }
    }
    out
}

pub fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// The four-sentence family: counts of "he/she is a handsome/sentimental engineer".
#[derive(Debug, Clone, Copy)]
pub struct AppendixCounts {
    pub he_handsome: usize,
    pub she_handsome: usize,
    pub he_sentimental: usize,
    pub she_sentimental: usize,
}

impl AppendixCounts {
    pub fn random(rng: &mut impl Rng) -> Self {
        loop {
            let n = rng.gen_range(20..=300);
            let p_he = rng.gen_range(0.52..0.95);
            let p_h_he = rng.gen_range(0.2..0.98);
            let p_h_she = rng.gen_range(0.0..p_h_he);
            let he = (n as f64 * p_he).round() as usize;
            let she = n - he;
            let c = AppendixCounts {
                he_handsome: (he as f64 * p_h_he).round() as usize,
                she_handsome: (she as f64 * p_h_she).round() as usize,
                he_sentimental: 0,
                she_sentimental: 0,
            };
            let c = AppendixCounts {
                he_sentimental: he - c.he_handsome,
                she_sentimental: she - c.she_handsome,
                ..c
            };
            if c.satisfies_premise() {
                return c;
            }
        }
    }

    pub fn he(&self) -> usize {
        self.he_handsome + self.he_sentimental
    }

    pub fn she(&self) -> usize {
        self.she_handsome + self.she_sentimental
    }

    /// `P(he) > 1/2` and `P(handsome | he) > P(handsome | she)`.
    pub fn satisfies_premise(&self) -> bool {
        let (he, she) = (self.he(), self.she());
        he > she && she > 0 && self.he_handsome * she > self.she_handsome * he
    }

    pub fn sentences(&self) -> Vec<Sentence> {
        let mut out = Vec::new();
        let mut push = |n: usize, pronoun: &str, adj: &str| {
            for _ in 0..n {
                out.push(Sentence::from_tokenized(&format!("{pronoun} is a {adj} engineer")));
            }
        };
        push(self.he_handsome, "he", "handsome");
        push(self.she_handsome, "she", "handsome");
        push(self.he_sentimental, "he", "sentimental");
        push(self.she_sentimental, "she", "sentimental");
        out
    }
}

/// Raw and symmetrised-corrected X(handsome, engineer) after the full count, score and
/// correct chain.
pub fn appendix_handsome_engineer(counts: &AppendixCounts, weighting: Weighting) -> (f64, f64) {
    let sentences = counts.sentences();
    let vocab = build_vocabulary(&sentences, 1);
    let opts = CountOptions {
        weighting,
        ..CountOptions::default()
    };
    let raw = count_pairs(&sentences, &vocab, &opts).unwrap();
    let seeds = SeedSets::new(vec!["he".into()], vec!["she".into()], 100).unwrap();
    let (scores, _) = compute_word_scores(&raw, &vocab, &seeds, &ScoreOptions::default()).unwrap();
    let sc = count_scored_pairs(&sentences, &vocab, &scores, &opts).unwrap();
    let policy = NeutralizationPolicy::all_but_seeds(vocab.len(), &seeds.resolve(&vocab), true);
    let corrected = correct(&sc, &policy).unwrap();
    let (h, e) = (vocab.id("handsome").unwrap(), vocab.id("engineer").unwrap());
    (sc.collapse().get(h, e), corrected.get(h, e))
}

/// Random GloVe parameters with entries in `[-scale, scale)`.
pub fn random_embeddings(rng: &mut impl Rng, vocab_size: usize, dim: usize, scale: f64) -> EmbeddingSet {
    let n = 2 * vocab_size * dim + 2 * vocab_size;
    let params: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    EmbeddingSet::from_params(vocab_size, dim, &params)
}

pub fn random_matrix(rng: &mut impl Rng, vocab_size: usize) -> birm::cooccur::CooccurrenceMatrix {
    let mut cells = Vec::new();
    for a in 0..vocab_size as u32 {
        for b in 0..vocab_size as u32 {
            if rng.gen_bool(0.6) {
                cells.push(birm::cooccur::Cell {
                    word: a,
                    context: b,
                    weight: rng.gen_range(0.2..250.0),
                });
            }
        }
    }
    birm::cooccur::CooccurrenceMatrix::from_cells(vocab_size, cells).unwrap()
}

/// Largest component-wise relative error between the analytic gradient and central
/// differences of the loss.
pub fn gradient_check(rng: &mut impl Rng) -> f64 {
    let vocab = rng.gen_range(3..=7);
    let dim = rng.gen_range(2..=5);
    let (x_max, alpha) = (rng.gen_range(5.0..100.0), rng.gen_range(0.5..1.0));
    let matrix = random_matrix(rng, vocab);
    let emb = random_embeddings(rng, vocab, dim, 0.5);
    let analytic = gradient(&emb, &matrix, x_max, alpha).params();
    let params = emb.params();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let mut plus = params.clone();
        plus[k] += h;
        let mut minus = params.clone();
        minus[k] -= h;
        let lp = loss(&EmbeddingSet::from_params(vocab, dim, &plus), &matrix, x_max, alpha);
        let lm = loss(&EmbeddingSet::from_params(vocab, dim, &minus), &matrix, x_max, alpha);
        let numeric = (lp - lm) / (2.0 * h);
        let scale = analytic[k].abs().max(numeric.abs());
        let err = if scale < 1e-6 {
            (analytic[k] - numeric).abs()
        } else {
            (analytic[k] - numeric).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}

/// Checks a generated synthetic corpus against the count table written out longhand:
/// stereotype-matched pairs 90/10, cross pairs 30/30, ratio 3 for every word.
pub fn synthetic_table_check(sentences: &[Sentence]) -> Result<(), String> {
    use std::collections::HashMap;
    if sentences.len() != 32_000 {
        return Err(format!("{} sentences", sentences.len()));
    }
    let mut triples: HashMap<(usize, usize, bool), usize> = HashMap::new();
    for s in sentences {
        let t = &s.tokens;
        let ok = t.len() == 5 && (t[0] == "he" || t[0] == "she") && t[1] == "is" && t[2] == "an";
        let adj = t.get(3).and_then(|w| w.strip_prefix("synthadj")).and_then(|d| d.parse::<usize>().ok());
        let noun = t.get(4).and_then(|w| w.strip_prefix("synthnoun")).and_then(|d| d.parse::<usize>().ok());
        let (Some(adj), Some(noun), true) = (adj, noun, ok) else {
            return Err(format!("malformed sentence `{}`", s.to_line()));
        };
        *triples.entry((adj, noun, t[0] == "she")).or_default() += 1;
    }
    let mut he_by_word: HashMap<String, usize> = HashMap::new();
    let mut she_by_word: HashMap<String, usize> = HashMap::new();
    for adj in 0..20 {
        for noun in 0..20 {
            let (he, she) = match (adj < 10, noun < 10) {
                (true, true) => (10, 90),
                (false, false) => (90, 10),
                _ => (30, 30),
            };
            let got = (
                triples.get(&(adj, noun, false)).copied().unwrap_or(0),
                triples.get(&(adj, noun, true)).copied().unwrap_or(0),
            );
            if got != (he, she) {
                return Err(format!("adjective {adj}, noun {noun}: (he, she) = {got:?}, want {:?}", (he, she)));
            }
            for w in [format!("a{adj}"), format!("n{noun}")] {
                *he_by_word.entry(w.clone()).or_default() += he;
                *she_by_word.entry(w).or_default() += she;
            }
        }
    }
    for (w, &he) in &he_by_word {
        let she = she_by_word[w];
        let feminine = w[1..].parse::<usize>().unwrap() < 10;
        let (matching, other) = if feminine { (she, he) } else { (he, she) };
        if matching != 3 * other {
            return Err(format!("{w}: ratio {matching}/{other}"));
        }
    }
    Ok(())
}
