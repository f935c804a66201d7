//! Word vectors keyed by token, in the GloVe text format (`token v1 ... vd` per line).

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Vectors {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Vectors {
    pub fn new(dim: usize, words: Vec<String>, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != words.len() * dim {
            return Err(Error::Data(format!(
                "{} values cannot hold {} vectors of dimension {dim}",
                data.len(),
                words.len()
            )));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vector for `{w}`")));
            }
        }
        Ok(Vectors {
            dim,
            words,
            data,
            index,
        })
    }

    /// Builds from `(word, vector)` pairs.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self> {
        let mut words = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (w, v) in pairs {
            let w = w.into();
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Data(format!("vector for `{w}` has dimension {} not {d}", v.len())))
                }
                _ => {}
            }
            words.push(w);
            data.extend(v);
        }
        Self::new(dim.unwrap_or(1), words, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.id(word).map(|i| self.row(i))
    }

    /// Looks up every word, failing with the full list of missing ones.
    pub fn lookup_all<'a, S: AsRef<str>>(&'a self, words: &[S]) -> Result<Vec<&'a [f64]>> {
        let missing: Vec<String> = words
            .iter()
            .filter(|w| !self.contains(w.as_ref()))
            .map(|w| w.as_ref().to_owned())
            .collect();
        if !missing.is_empty() {
            return Err(Error::OutOfVocabulary(missing));
        }
        Ok(words.iter().map(|w| self.get(w.as_ref()).unwrap()).collect())
    }

    /// Applies `f` to every vector in place.
    pub fn map_rows(&mut self, mut f: impl FnMut(usize, &mut [f64])) {
        for (i, row) in self.data.chunks_mut(self.dim).enumerate() {
            f(i, row);
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, word) in self.words.iter().enumerate() {
            w.write_all(word.as_bytes())?;
            for v in self.row(i) {
                // `{}` prints the shortest string that parses back to the same f64
                write!(w, " {v}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(reader: R, context: &str) -> Result<Self> {
        let mut words = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let word = parts.next().unwrap().to_owned();
            let before = data.len();
            for p in parts {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::parse(context, i + 1, format!("bad number `{p}`")))?;
                data.push(v);
            }
            let d = data.len() - before;
            match dim {
                None if d == 0 => return Err(Error::parse(context, i + 1, "vector has no components")),
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(Error::parse(
                        context,
                        i + 1,
                        format!("expected {expected} components, found {d}"),
                    ))
                }
                _ => {}
            }
            words.push(word);
        }
        Self::new(dim.unwrap_or(1), words, data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; `None` when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        None
    } else {
        Some(dot(a, b) / denom)
    }
}
