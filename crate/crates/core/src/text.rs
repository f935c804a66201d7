//! Sentence normalisation and vocabulary construction.
//!
//! Input is line-based: one sentence per line. Each line is lowercased, split on
//! whitespace, punctuation is peeled off the ends of each chunk, and English clitics
//! (`n't`, `'s`, `'re`, `'ve`, `'ll`, `'d`, `'m`) are split from their host word.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

pub const DEFAULT_MIN_SENTENCE_LEN: usize = 5;
pub const DEFAULT_MIN_COUNT: u64 = 5;

const CLITICS: [&str; 7] = ["n't", "'s", "'re", "'ve", "'ll", "'d", "'m"];

/// A normalised sentence: lowercase tokens without whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        Sentence { tokens }
    }

    /// Splits an already-tokenised line on whitespace without normalising it.
    pub fn from_tokenized(line: &str) -> Self {
        Sentence {
            tokens: line.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_line(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizeOptions {
    pub min_sentence_len: usize,
    pub keep_punct: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            min_sentence_len: DEFAULT_MIN_SENTENCE_LEN,
            keep_punct: true,
        }
    }
}

/// Counters collected while normalising a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizeStats {
    pub lines: usize,
    pub invalid_utf8: usize,
    pub too_short: usize,
    pub emitted: usize,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '“' | '”' | '‘' | '«' | '»' | '\u{2014}' | '\u{2013}' | '…' | '¿' | '¡' | '„'
        )
}

fn is_clitic(s: &str) -> bool {
    CLITICS.contains(&s)
}

fn is_all_punct(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_punct)
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    if chunk.is_empty() {
        return;
    }
    if is_clitic(chunk) {
        out.push(chunk.to_owned());
        return;
    }
    let first = chunk.chars().next().unwrap();
    if is_punct(first) {
        out.push(first.to_string());
        split_chunk(&chunk[first.len_utf8()..], out);
        return;
    }
    let last = chunk.chars().next_back().unwrap();
    if is_punct(last) {
        split_chunk(&chunk[..chunk.len() - last.len_utf8()], out);
        out.push(last.to_string());
        return;
    }
    for clitic in CLITICS {
        if chunk.len() > clitic.len() && chunk.ends_with(clitic) {
            split_chunk(&chunk[..chunk.len() - clitic.len()], out);
            out.push(clitic.to_owned());
            return;
        }
    }
    out.push(chunk.to_owned());
}

/// Normalises one line into tokens, without applying the length filter.
pub fn tokenize_line(line: &str, keep_punct: bool) -> Vec<String> {
    let lowered = line.to_lowercase().replace('’', "'");
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        split_chunk(chunk, &mut tokens);
    }
    if !keep_punct {
        tokens.retain(|t| !is_all_punct(t));
    }
    tokens
}

/// Normalises one line, returning `None` when it is shorter than the minimum length.
pub fn normalize_line(line: &str, opts: &NormalizeOptions) -> Option<Sentence> {
    let tokens = tokenize_line(line, opts.keep_punct);
    if tokens.is_empty() || tokens.len() < opts.min_sentence_len {
        None
    } else {
        Some(Sentence { tokens })
    }
}

/// Streams a corpus and calls `sink` for every retained sentence.
///
/// Lines that are not valid UTF-8 are skipped and counted.
pub fn normalize_corpus<R: BufRead>(
    mut reader: R,
    opts: &NormalizeOptions,
    mut sink: impl FnMut(Sentence),
) -> Result<NormalizeStats> {
    let mut stats = NormalizeStats::default();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        stats.lines += 1;
        let line = match std::str::from_utf8(&buf) {
            Ok(l) => l,
            Err(_) => {
                stats.invalid_utf8 += 1;
                continue;
            }
        };
        match normalize_line(line, opts) {
            Some(s) => {
                stats.emitted += 1;
                sink(s)
            }
            None => stats.too_short += 1,
        }
    }
    Ok(stats)
}

/// Convenience wrapper collecting the sentences of [`normalize_corpus`].
pub fn normalize_all<R: BufRead>(reader: R, opts: &NormalizeOptions) -> Result<(Vec<Sentence>, NormalizeStats)> {
    let mut out = Vec::new();
    let stats = normalize_corpus(reader, opts, |s| out.push(s))?;
    Ok((out, stats))
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let s = Sentence::from_tokenized(&line);
        if !s.is_empty() {
            out.push(s);
        }
    }
    Ok(out)
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in sentences {
        writeln!(w, "{}", s.to_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw token counts. Counts from separate shards can be merged in any order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
}

impl TokenCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sentence(&mut self, sentence: &Sentence) {
        for tok in &sentence.tokens {
            match self.counts.get_mut(tok.as_str()) {
                Some(c) => *c += 1,
                None => {
                    self.counts.insert(tok.clone(), 1);
                }
            }
        }
    }

    pub fn merge(&mut self, other: TokenCounts) {
        for (tok, c) in other.counts {
            *self.counts.entry(tok).or_insert(0) += c;
        }
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

impl<'a> FromIterator<&'a Sentence> for TokenCounts {
    fn from_iter<I: IntoIterator<Item = &'a Sentence>>(iter: I) -> Self {
        let mut counts = TokenCounts::new();
        for s in iter {
            counts.add_sentence(s);
        }
        counts
    }
}

/// Word list ordered by descending count, ties broken by token.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<(String, u64)>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_counts(counts: TokenCounts, min_count: u64) -> Self {
        let mut entries: Vec<(String, u64)> = counts
            .counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_sorted(entries)
    }

    fn from_sorted(entries: Vec<(String, u64)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i as u32))
            .collect();
        Vocabulary { entries, index }
    }

    /// Builds a vocabulary from `(token, count)` pairs, re-sorting them canonically.
    pub fn from_entries(mut entries: Vec<(String, u64)>) -> Result<Self> {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Data(format!("duplicate vocabulary token `{}`", w[0].0)));
            }
        }
        Ok(Self::from_sorted(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.entries[id as usize].0
    }

    pub fn count(&self, id: u32) -> u64 {
        self.entries[id as usize].1
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &str, u64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (t, c))| (i as u32, t.as_str(), *c))
    }

    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|(_, c)| c).sum()
    }

    /// Maps tokens to ids, `None` for out-of-vocabulary tokens.
    pub fn encode(&self, sentence: &Sentence) -> Vec<Option<u32>> {
        sentence.tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (t, c) in &self.entries {
            writeln!(w, "{t} {c}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(reader: R, context: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let (tok, count) = match (parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(c), None) if !t.is_empty() => (t, c),
                _ => return Err(Error::parse(context, i + 1, "expected `token count`")),
            };
            let count: u64 = count
                .parse()
                .map_err(|_| Error::parse(context, i + 1, format!("bad count `{count}`")))?;
            entries.push((tok.to_owned(), count));
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }
}

/// Counts tokens over all sentences and keeps those seen at least `min_count` times.
pub fn build_vocabulary<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, min_count: u64) -> Vocabulary {
    Vocabulary::from_counts(sentences.into_iter().collect(), min_count)
}
