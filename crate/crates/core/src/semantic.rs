//! Word-similarity (Spearman over cosine) and analogy (3CosAdd) evaluation.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::vectors::{cosine, dot, norm, Vectors};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityPair {
    pub word1: String,
    pub word2: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityDataset {
    pub pairs: Vec<SimilarityPair>,
}

impl SimilarityDataset {
    pub fn new(pairs: Vec<SimilarityPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Data("similarity dataset is empty".into()));
        }
        if let Some(p) = pairs.iter().find(|p| !p.score.is_finite()) {
            return Err(Error::Data(format!("non-finite score for {} / {}", p.word1, p.word2)));
        }
        Ok(SimilarityDataset { pairs })
    }

    /// `word1<TAB>word2<TAB>score` lines; blank lines and `#` comments are ignored.
    pub fn read<R: BufRead>(reader: R, context: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(context, i + 1, format!("expected 3 tab-separated fields, found {}", fields.len())));
            }
            let score: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(context, i + 1, format!("bad score `{}`", fields[2])))?;
            if !score.is_finite() {
                return Err(Error::parse(context, i + 1, "score is not finite"));
            }
            pairs.push(SimilarityPair {
                word1: fields[0].trim().to_lowercase(),
                word2: fields[1].trim().to_lowercase(),
                score,
            });
        }
        Self::new(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuestion {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnalogyDataset {
    pub questions: Vec<AnalogyQuestion>,
}

impl AnalogyDataset {
    pub fn new(questions: Vec<AnalogyQuestion>) -> Result<Self> {
        if questions.is_empty() {
            return Err(Error::Data("analogy dataset is empty".into()));
        }
        for q in &questions {
            let s = [&q.a, &q.b, &q.c, &q.d];
            if (0..4).any(|i| (i + 1..4).any(|j| s[i] == s[j])) {
                return Err(Error::Data(format!("analogy `{} {} {} {}` repeats a word", q.a, q.b, q.c, q.d)));
            }
        }
        Ok(AnalogyDataset { questions })
    }

    /// `a b c d` lines; `#` starts a comment, `:` section headers are ignored.
    pub fn read<R: BufRead>(reader: R, context: &str) -> Result<Self> {
        let mut questions = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.split('#').next().unwrap().trim();
            if t.is_empty() || t.starts_with(':') {
                continue;
            }
            let w: Vec<String> = t.split_whitespace().map(str::to_lowercase).collect();
            if w.len() != 4 {
                return Err(Error::parse(context, i + 1, format!("expected 4 words, found {}", w.len())));
            }
            let mut it = w.into_iter();
            let mut next = || it.next().unwrap();
            questions.push(AnalogyQuestion {
                a: next(),
                b: next(),
                c: next(),
                d: next(),
            });
        }
        Self::new(questions).map_err(|e| match e {
            Error::Data(m) => Error::Data(format!("{context}: {m}")),
            e => e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }
}

/// Ranks starting at 1, ties sharing the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Pearson correlation of average ranks. `None` when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    /// Spearman correlation or analogy accuracy.
    pub value: f64,
    pub covered: usize,
    pub skipped: usize,
}

pub fn similarity_eval(ds: &SimilarityDataset, vectors: &Vectors) -> Result<EvalOutcome> {
    let mut predicted = Vec::new();
    let mut human = Vec::new();
    for p in &ds.pairs {
        let (Some(u), Some(v)) = (vectors.get(&p.word1), vectors.get(&p.word2)) else {
            continue;
        };
        // a zero vector carries no direction; treat the pair as uncovered
        let Some(c) = cosine(u, v) else { continue };
        predicted.push(c);
        human.push(p.score);
    }
    let covered = predicted.len();
    if covered < 2 {
        return Err(Error::Data(format!("only {covered} similarity pairs are in vocabulary")));
    }
    let value = spearman(&predicted, &human)
        .ok_or_else(|| Error::Numerical("Spearman correlation undefined for constant rankings".into()))?;
    Ok(EvalOutcome {
        value,
        covered,
        skipped: ds.pairs.len() - covered,
    })
}

fn normalized(vectors: &Vectors) -> Vec<f64> {
    let dim = vectors.dim();
    let mut out = Vec::with_capacity(vectors.len() * dim);
    for i in 0..vectors.len() {
        let row = vectors.row(i);
        let n = norm(row);
        if n > 0.0 {
            out.extend(row.iter().map(|v| v / n));
        } else {
            out.extend_from_slice(row);
        }
    }
    out
}

/// 3CosAdd: the answer is the word (other than `a`, `b`, `c`) maximising
/// `cos(x, b - a + c)` over unit-normalised vectors, ties going to the lowest id.
pub fn analogy_eval(ds: &AnalogyDataset, vectors: &Vectors) -> Result<EvalOutcome> {
    let dim = vectors.dim();
    let unit = normalized(vectors);
    let row = |i: usize| &unit[i * dim..(i + 1) * dim];
    let rows: Vec<[usize; 4]> = ds
        .questions
        .iter()
        .filter_map(|q| {
            Some([
                vectors.id(&q.a)?,
                vectors.id(&q.b)?,
                vectors.id(&q.c)?,
                vectors.id(&q.d)?,
            ])
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Data("no analogy question is fully in vocabulary".into()));
    }
    let correct: usize = rows
        .par_iter()
        .map(|&[a, b, c, d]| {
            let target: Vec<f64> = (0..dim).map(|k| row(b)[k] - row(a)[k] + row(c)[k]).collect();
            let tn = norm(&target);
            let mut best: Option<(usize, f64)> = None;
            for x in 0..vectors.len() {
                if x == a || x == b || x == c {
                    continue;
                }
                let xn = norm(row(x));
                let s = if tn == 0.0 || xn == 0.0 {
                    0.0
                } else {
                    dot(row(x), &target) / (tn * xn)
                };
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((x, s));
                }
            }
            usize::from(best.map(|(x, _)| x) == Some(d))
        })
        .sum();
    Ok(EvalOutcome {
        value: correct as f64 / rows.len() as f64,
        covered: rows.len(),
        skipped: ds.questions.len() - rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(rows: &[(&str, &str, f64)]) -> SimilarityDataset {
        SimilarityDataset::new(
            rows.iter()
                .map(|&(a, b, s)| SimilarityPair {
                    word1: a.into(),
                    word2: b.into(),
                    score: s,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), [2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn perfect_and_reversed() {
        let v = Vectors::from_pairs([
            ("x", vec![1.0, 0.0]),
            ("a", vec![1.0, 0.1]),
            ("b", vec![1.0, 1.0]),
            ("c", vec![0.0, 1.0]),
        ])
        .unwrap();
        let up = sim(&[("x", "a", 9.0), ("x", "b", 5.0), ("x", "c", 1.0)]);
        assert_eq!(similarity_eval(&up, &v).unwrap().value, 1.0);
        let down = sim(&[("x", "a", 1.0), ("x", "b", 5.0), ("x", "c", 9.0)]);
        assert_eq!(similarity_eval(&down, &v).unwrap().value, -1.0);
    }

    #[test]
    fn five_pair_hand_ranked() {
        // cosines against x = (1, 0): a 1, b 1/sqrt2, c 0, d 1/sqrt2, e -1
        let s = 0.5f64.sqrt();
        let v = Vectors::from_pairs([
            ("x", vec![1.0, 0.0]),
            ("a", vec![2.0, 0.0]),
            ("b", vec![1.0, 1.0]),
            ("c", vec![0.0, 3.0]),
            ("d", vec![s, s]),
            ("e", vec![-1.0, 0.0]),
        ])
        .unwrap();
        let ds = sim(&[
            ("x", "a", 3.0),
            ("x", "b", 4.0),
            ("x", "c", 1.0),
            ("x", "d", 2.0),
            ("x", "e", 2.0),
        ]);
        // cosine ranks: e1 c2 b3.5 d3.5 a5 (b and d tie only if cosines are bit-equal)
        let cb = cosine(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        let cd = cosine(&[1.0, 0.0], &[s, s]).unwrap();
        let pred_ranks: [f64; 5] = if cb == cd {
            [5.0, 3.5, 2.0, 3.5, 1.0]
        } else if cb < cd {
            [5.0, 3.0, 2.0, 4.0, 1.0]
        } else {
            [5.0, 4.0, 2.0, 3.0, 1.0]
        };
        // human ranks: a4 b5 c1 d2.5 e2.5
        let human_ranks = [4.0, 5.0, 1.0, 2.5, 2.5];
        let mean = 3.0;
        let num: f64 = pred_ranks.iter().zip(&human_ranks).map(|(p, h)| (p - mean) * (h - mean)).sum();
        let dp: f64 = pred_ranks.iter().map(|p| (p - mean).powi(2)).sum();
        let dh: f64 = human_ranks.iter().map(|h| (h - mean).powi(2)).sum();
        let expected = num / (dp * dh).sqrt();
        let got = similarity_eval(&ds, &v).unwrap();
        approx::assert_abs_diff_eq!(got.value, expected, epsilon = 1e-12);
        assert_eq!((got.covered, got.skipped), (5, 0));
    }

    #[test]
    fn oov_pairs_are_skipped() {
        let v = Vectors::from_pairs([("x", vec![1.0, 0.0]), ("a", vec![1.0, 1.0]), ("b", vec![0.0, 1.0])]).unwrap();
        let ds = sim(&[("x", "a", 2.0), ("x", "b", 1.0), ("x", "zzz", 3.0)]);
        let r = similarity_eval(&ds, &v).unwrap();
        assert_eq!((r.covered, r.skipped), (2, 1));
        let tiny = sim(&[("x", "a", 2.0), ("q", "b", 1.0)]);
        assert!(similarity_eval(&tiny, &v).is_err());
    }

    #[test]
    fn forced_analogy() {
        let a = [1.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0];
        let c = [0.0, 0.0, 1.0];
        let d: Vec<f64> = (0..3).map(|k| b[k] - a[k] + c[k]).collect();
        let v = Vectors::from_pairs([("a", a.to_vec()), ("b", b.to_vec()), ("c", c.to_vec()), ("d", d)]).unwrap();
        let q = |d: &str| AnalogyQuestion {
            a: "a".into(),
            b: "b".into(),
            c: "c".into(),
            d: d.into(),
        };
        let ds = AnalogyDataset::new(vec![q("d")]).unwrap();
        assert_eq!(analogy_eval(&ds, &v).unwrap().value, 1.0);
        let missing = AnalogyDataset::new(vec![q("d"), q("e")]).unwrap();
        let r = analogy_eval(&missing, &v).unwrap();
        assert_eq!((r.covered, r.skipped), (1, 1));
        let none = AnalogyDataset::new(vec![q("e")]).unwrap();
        assert!(analogy_eval(&none, &v).is_err());
    }

    #[test]
    fn parsing() {
        let s = SimilarityDataset::read("# c\nA\tb\t1.5\n\nc\td\t2\n".as_bytes(), "mem").unwrap();
        assert_eq!(s.pairs.len(), 2);
        assert_eq!(s.pairs[0].word1, "a");
        assert!(SimilarityDataset::read("a b 1\n".as_bytes(), "mem").is_err());
        assert!(SimilarityDataset::read("a\tb\tnan\n".as_bytes(), "mem").is_err());
        let a = AnalogyDataset::read(": capitals\nathens greece oslo norway # ok\n".as_bytes(), "mem").unwrap();
        assert_eq!(a.questions[0].d, "norway");
        assert!(AnalogyDataset::read("a b c\n".as_bytes(), "mem").is_err());
        assert!(AnalogyDataset::read("a b a d\n".as_bytes(), "mem").is_err());
    }
}
