//! End-to-end experiment: corpus, vocabulary, scores, counts, correction, training of
//! original and corrected vectors over several seeds, evaluation and report.
//!
//! Every stage writes its outputs into one directory and records their checksums in
//! `manifest.json`. A stage is skipped on a rerun when its fingerprint (configuration
//! hash plus the checksums of its inputs) and its recorded outputs are unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cooccur::{count_pairs, count_scored_pairs, CooccurrenceMatrix, CountOptions, ScoredCooccurrence, Weighting};
use crate::correction::{correct_pairs, report_correction_stats, NeutralizationPolicy, Orientation};
use crate::glove::{train, ExportMode, TrainerConfig};
use crate::report::{aggregate, render_table, render_tsv, Measurement};
use crate::scoring::{compute_word_scores, ScoreOptions, SeedSets};
use crate::semantic::{analogy_eval, similarity_eval, AnalogyDataset, SimilarityDataset};
use crate::synthetic::{self, BackgroundSpec, SyntheticSpec};
use crate::text::{build_vocabulary, normalize_corpus, read_sentences, write_sentences, NormalizeOptions, Vocabulary};
use crate::vectors::Vectors;
use crate::weat::{builtin_tests, ripa_report, weat, WeatOptions, WeatResult, WeatTestSpec};
use crate::wordlists as wl;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";
pub const METHODS: [&str; 2] = ["original", "birm"];

/// Which contexts the correction neutralises.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Neutralize {
    /// Everything except the seed words.
    All,
    /// Nothing: the corrected matrix equals the collapsed one.
    None,
    /// Words listed one per line in a file.
    File(PathBuf),
}

impl FromStr for Neutralize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Neutralize::All,
            "none" => Neutralize::None,
            "" => return Err(Error::InvalidArgument("neutralize needs all, none or a file".into())),
            path => Neutralize::File(PathBuf::from(path)),
        })
    }
}

impl std::fmt::Display for Neutralize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Neutralize::All => f.write_str("all"),
            Neutralize::None => f.write_str("none"),
            Neutralize::File(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub corpus: Option<PathBuf>,
    pub background_sentences: usize,
    pub background_words: usize,
    pub synthetic: bool,
    pub min_sentence_len: usize,
    pub keep_punct: bool,
    pub min_count: u64,
    pub window: usize,
    pub score_window: Option<usize>,
    pub weighting: Weighting,
    pub buckets: u8,
    pub exclude_focal: bool,
    pub seeds: Option<PathBuf>,
    pub c: f64,
    pub seed_magnitude: i64,
    pub smoothing: f64,
    pub neutralize: Neutralize,
    pub symmetrize: bool,
    pub orientation: Orientation,
    pub dim: usize,
    pub epochs: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub export: ExportMode,
    /// 0 trains each run sequentially and reproducibly.
    pub threads: usize,
    pub runs: usize,
    pub seed: u64,
    pub weat_builtin: bool,
    pub weat_synthetic: bool,
    pub weat_specs: Vec<PathBuf>,
    pub ripa: bool,
    pub similarity: Vec<PathBuf>,
    pub analogy: Vec<PathBuf>,
    pub max_exact: u64,
    pub mc_samples: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let trainer = TrainerConfig::default();
        let count = CountOptions::default();
        let score = ScoreOptions::default();
        let weat = WeatOptions::default();
        PipelineConfig {
            corpus: None,
            background_sentences: 100_000,
            background_words: BackgroundSpec::default().content_words,
            synthetic: true,
            min_sentence_len: NormalizeOptions::default().min_sentence_len,
            keep_punct: true,
            min_count: 5,
            window: count.window,
            score_window: None,
            weighting: count.weighting,
            buckets: count.radius,
            exclude_focal: count.exclude_focal,
            seeds: None,
            c: score.c,
            seed_magnitude: crate::scoring::DEFAULT_SEED_MAGNITUDE,
            smoothing: score.smoothing,
            neutralize: Neutralize::All,
            symmetrize: false,
            orientation: Orientation::Both,
            dim: 50,
            epochs: trainer.epochs,
            x_max: trainer.x_max,
            alpha: trainer.alpha,
            learning_rate: trainer.learning_rate,
            export: trainer.export_mode,
            threads: 0,
            runs: 3,
            seed: 0,
            weat_builtin: true,
            weat_synthetic: true,
            weat_specs: Vec::new(),
            ripa: true,
            similarity: Vec::new(),
            analogy: Vec::new(),
            max_exact: weat.max_exact,
            mc_samples: weat.mc_samples,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn parse_paths(value: &str) -> Vec<PathBuf> {
    value
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(PathBuf::from)
        .collect()
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    /// Sets one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "corpus" => self.corpus = opt_path(v),
            "background_sentences" => self.background_sentences = parse_value(key, v)?,
            "background_words" => self.background_words = parse_value(key, v)?,
            "synthetic" => self.synthetic = parse_bool(key, v)?,
            "min_sentence_len" => self.min_sentence_len = parse_value(key, v)?,
            "keep_punct" => self.keep_punct = parse_bool(key, v)?,
            "min_count" => self.min_count = parse_value(key, v)?,
            "window" => self.window = parse_value(key, v)?,
            "score_window" => {
                self.score_window = if v.is_empty() { None } else { Some(parse_value(key, v)?) }
            }
            "weighting" => self.weighting = v.parse()?,
            "buckets" => self.buckets = parse_value(key, v)?,
            "exclude_focal" => self.exclude_focal = parse_bool(key, v)?,
            "seeds" => self.seeds = opt_path(v),
            "c" => self.c = parse_value(key, v)?,
            "seed_magnitude" => self.seed_magnitude = parse_value(key, v)?,
            "smoothing" => self.smoothing = parse_value(key, v)?,
            "neutralize" => self.neutralize = v.parse()?,
            "symmetrize" => self.symmetrize = parse_bool(key, v)?,
            "orientation" => self.orientation = v.parse()?,
            "dim" => self.dim = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "x_max" => self.x_max = parse_value(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "export" => self.export = v.parse()?,
            "threads" => self.threads = parse_value(key, v)?,
            "runs" => self.runs = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "weat_builtin" => self.weat_builtin = parse_bool(key, v)?,
            "weat_synthetic" => self.weat_synthetic = parse_bool(key, v)?,
            "weat_specs" => self.weat_specs = parse_paths(v),
            "ripa" => self.ripa = parse_bool(key, v)?,
            "similarity" => self.similarity = parse_paths(v),
            "analogy" => self.analogy = parse_paths(v),
            "max_exact" => self.max_exact = parse_value(key, v)?,
            "mc_samples" => self.mc_samples = parse_value(key, v)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{assignment}`")))?;
        self.set(k, v)
    }

    /// Reads `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn read<R: BufRead>(reader: R, context: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.split('#').next().unwrap().trim();
            if t.is_empty() {
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::parse(context, i + 1, "expected `key = value`"))?;
            cfg.set(k, v).map_err(|e| Error::parse(context, i + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }

    /// Every key in a fixed order; reading the text back gives the same config.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let entries: Vec<(&str, String)> = vec![
            ("corpus", opt(&self.corpus)),
            ("background_sentences", self.background_sentences.to_string()),
            ("background_words", self.background_words.to_string()),
            ("synthetic", self.synthetic.to_string()),
            ("min_sentence_len", self.min_sentence_len.to_string()),
            ("keep_punct", self.keep_punct.to_string()),
            ("min_count", self.min_count.to_string()),
            ("window", self.window.to_string()),
            ("score_window", self.score_window.map(|w| w.to_string()).unwrap_or_default()),
            ("weighting", self.weighting.to_string()),
            ("buckets", self.buckets.to_string()),
            ("exclude_focal", self.exclude_focal.to_string()),
            ("seeds", opt(&self.seeds)),
            ("c", self.c.to_string()),
            ("seed_magnitude", self.seed_magnitude.to_string()),
            ("smoothing", self.smoothing.to_string()),
            ("neutralize", self.neutralize.to_string()),
            ("symmetrize", self.symmetrize.to_string()),
            ("orientation", self.orientation.to_string()),
            ("dim", self.dim.to_string()),
            ("epochs", self.epochs.to_string()),
            ("x_max", self.x_max.to_string()),
            ("alpha", self.alpha.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("export", self.export.to_string()),
            ("threads", self.threads.to_string()),
            ("runs", self.runs.to_string()),
            ("seed", self.seed.to_string()),
            ("weat_builtin", self.weat_builtin.to_string()),
            ("weat_synthetic", self.weat_synthetic.to_string()),
            ("weat_specs", join_paths(&self.weat_specs)),
            ("ripa", self.ripa.to_string()),
            ("similarity", join_paths(&self.similarity)),
            ("analogy", join_paths(&self.analogy)),
            ("max_exact", self.max_exact.to_string()),
            ("mc_samples", self.mc_samples.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.is_none() && self.background_sentences == 0 && !self.synthetic {
            return Err(Error::InvalidArgument(
                "no input: set corpus, background_sentences or synthetic".into(),
            ));
        }
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        self.count_options().validate()?;
        self.trainer_config(0).validate()?;
        Ok(())
    }

    pub fn count_options(&self) -> CountOptions {
        CountOptions {
            window: self.window,
            score_window: self.score_window,
            weighting: self.weighting,
            radius: self.buckets,
            exclude_focal: self.exclude_focal,
        }
    }

    pub fn trainer_config(&self, seed: u64) -> TrainerConfig {
        TrainerConfig {
            dim: self.dim,
            epochs: self.epochs,
            x_max: self.x_max,
            alpha: self.alpha,
            learning_rate: self.learning_rate,
            seed,
            export_mode: self.export,
            threads: (self.threads > 0).then_some(self.threads),
        }
    }

    pub fn weat_options(&self, seed: u64) -> WeatOptions {
        WeatOptions {
            max_exact: self.max_exact,
            mc_samples: self.mc_samples,
            seed,
        }
    }

    pub fn seed_sets(&self) -> Result<SeedSets> {
        let seeds = match &self.seeds {
            Some(p) => SeedSets::load(p)?,
            None => SeedSets::gender(),
        };
        seeds.with_magnitude(self.seed_magnitude)
    }

    /// Files the run reads besides its own outputs.
    pub fn input_files(&self) -> Vec<PathBuf> {
        let mut files: Vec<PathBuf> = Vec::new();
        files.extend(self.corpus.clone());
        files.extend(self.seeds.clone());
        if let Neutralize::File(p) = &self.neutralize {
            files.push(p.clone());
        }
        files.extend(self.weat_specs.iter().cloned());
        files.extend(self.similarity.iter().cloned());
        files.extend(self.analogy.iter().cloned());
        files
    }
}

/// Seed for the `index`-th draw of a named random stream: the first eight bytes
/// (little-endian) of `sha256(root_le || stream || index_le)`.
pub fn derive_seed(root: u64, stream: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(stream.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub background: u64,
    pub synthetic: u64,
    pub mix: u64,
    pub train: Vec<u64>,
    pub weat: u64,
}

impl RunSeeds {
    pub fn derive(cfg: &PipelineConfig) -> Self {
        RunSeeds {
            background: derive_seed(cfg.seed, "background", 0),
            synthetic: derive_seed(cfg.seed, "synthetic", 0),
            mix: derive_seed(cfg.seed, "mix", 0),
            train: (0..cfg.runs as u64).map(|i| derive_seed(cfg.seed, "train", i)).collect(),
            weat: derive_seed(cfg.seed, "weat", 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub fingerprint: String,
    /// Output path (relative to the run directory) to sha256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub deterministic: bool,
    pub seeds: RunSeeds,
    /// Input path to sha256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Every output file with its checksum.
    pub fn outputs(&self) -> BTreeMap<String, String> {
        self.stages.iter().flat_map(|s| s.outputs.clone()).collect()
    }
}

/// WEAT outcome for one test, method and run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatRecord {
    pub test: String,
    pub method: String,
    pub run: usize,
    pub result: WeatResult,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub measurements: Vec<Measurement>,
    pub weat: Vec<WeatRecord>,
    /// Tests or datasets that could not be evaluated, with the reason.
    pub skipped: Vec<String>,
}

impl Evaluation {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("evaluation serialises");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub evaluation: Evaluation,
    /// Stages that were executed rather than reused.
    pub executed: Vec<String>,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    dir: PathBuf,
    previous: Option<Manifest>,
    manifest: Manifest,
    executed: Vec<String>,
}

impl Runner<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn checksum(&self, rel: &str) -> Result<String> {
        sha256_file(&self.path(rel))
    }

    /// Runs `body` unless the previous manifest already holds identical outputs.
    fn stage(
        &mut self,
        name: &str,
        inputs: &[&str],
        outputs: &[String],
        body: impl FnOnce(&Self) -> Result<()>,
    ) -> Result<()> {
        let wrap = |e: Error| Error::Stage {
            stage: name.to_owned(),
            source: Box::new(e),
        };
        let mut h = Sha256::new();
        h.update(self.manifest.config_hash.as_bytes());
        h.update(name.as_bytes());
        for rel in inputs {
            h.update(rel.as_bytes());
            h.update(self.checksum(rel).map_err(wrap)?.as_bytes());
        }
        for (p, sum) in &self.manifest.inputs {
            h.update(p.as_bytes());
            h.update(sum.as_bytes());
        }
        let fingerprint = hex::encode(h.finalize());

        let reusable = self.previous.as_ref().and_then(|m| m.stage(name)).is_some_and(|rec| {
            rec.fingerprint == fingerprint
                && rec.outputs.len() == outputs.len()
                && outputs.iter().all(|o| {
                    rec.outputs.get(o).is_some_and(|sum| self.checksum(o).ok().as_deref() == Some(sum.as_str()))
                })
        });
        if reusable {
            info!("stage {name}: up to date");
        } else {
            info!("stage {name}: running");
            body(self).map_err(wrap)?;
            self.executed.push(name.to_owned());
        }
        let mut sums = BTreeMap::new();
        for o in outputs {
            sums.insert(o.clone(), self.checksum(o).map_err(wrap)?);
        }
        self.manifest.stages.retain(|s| s.name != name);
        self.manifest.stages.push(StageRecord {
            name: name.to_owned(),
            fingerprint,
            outputs: sums,
        });
        self.manifest.save(&self.path(MANIFEST_FILE))
    }
}

fn vectors_file(method: &str, run: usize) -> String {
    format!("vectors/{method}-{run}.txt")
}

fn load_vocab(runner: &Runner) -> Result<Vocabulary> {
    Vocabulary::load(&runner.path("vocab.txt"))
}

fn stage_corpus(r: &Runner, seeds: &RunSeeds) -> Result<()> {
    let cfg = r.cfg;
    let mut sentences = Vec::new();
    if let Some(path) = &cfg.corpus {
        let opts = NormalizeOptions {
            min_sentence_len: cfg.min_sentence_len,
            keep_punct: cfg.keep_punct,
        };
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let stats = normalize_corpus(BufReader::new(file), &opts, |s| sentences.push(s))?;
        info!(
            "corpus: {} lines, {} kept, {} too short, {} invalid UTF-8",
            stats.lines, stats.emitted, stats.too_short, stats.invalid_utf8
        );
    }
    if cfg.background_sentences > 0 {
        sentences.extend(synthetic::generate_background(&BackgroundSpec {
            sentences: cfg.background_sentences,
            content_words: cfg.background_words,
            seed: seeds.background,
            ..BackgroundSpec::default()
        })?);
    }
    if cfg.synthetic {
        let synth = synthetic::generate(&SyntheticSpec::with_seed(seeds.synthetic))?;
        sentences = synthetic::mix(sentences, synth, seeds.mix);
    }
    if sentences.is_empty() {
        return Err(Error::Data("the corpus has no usable sentences".into()));
    }
    write_sentences(&r.path("corpus.txt"), &sentences)
}

fn stage_counts(r: &Runner) -> Result<()> {
    let cfg = r.cfg;
    let sentences = read_sentences(&r.path("corpus.txt"))?;
    let vocab = load_vocab(r)?;
    let opts = cfg.count_options();
    let raw = count_pairs(&sentences, &vocab, &opts)?;
    raw.save(&r.path("raw.cooc"))?;
    let (scores, report) = compute_word_scores(
        &raw,
        &vocab,
        &cfg.seed_sets()?,
        &ScoreOptions {
            c: cfg.c,
            smoothing: cfg.smoothing,
            seeds_only: false,
        },
    )?;
    info!(
        "scores: {} positive, {} negative, {} zero",
        report.positive, report.negative, report.zero
    );
    scores.save(&vocab, &r.path("scores.tsv"))?;
    let scored = count_scored_pairs(&sentences, &vocab, &scores, &opts)?;
    scored.save(&r.path("scored.cooc"))?;
    scored.collapse().save(&r.path("original.cooc"))
}

/// Policy for the configured neutralisation.
pub fn build_policy(cfg: &PipelineConfig, vocab: &Vocabulary) -> Result<NeutralizationPolicy> {
    let resolved = cfg.seed_sets()?.resolve(vocab);
    match &cfg.neutralize {
        Neutralize::All => Ok(NeutralizationPolicy::all_but_seeds(vocab.len(), &resolved, cfg.symmetrize)),
        Neutralize::None => NeutralizationPolicy::only(vocab.len(), &resolved, [], cfg.symmetrize),
        Neutralize::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut ids = Vec::new();
            for w in text.split_whitespace() {
                match vocab.id(w) {
                    Some(id) => ids.push(id),
                    None => warn!("neutralize list: `{w}` is not in the vocabulary"),
                }
            }
            NeutralizationPolicy::only(vocab.len(), &resolved, ids, cfg.symmetrize)
        }
    }
}

fn stage_birm(r: &Runner) -> Result<()> {
    let vocab = load_vocab(r)?;
    let scored = ScoredCooccurrence::load(&r.path("scored.cooc"), vocab.len())?;
    let policy = build_policy(r.cfg, &vocab)?;
    let corrected = correct_pairs(&scored, &policy, r.cfg.orientation)?;
    corrected.save(&r.path("birm.cooc"))?;
    let stats = report_correction_stats(&scored.collapse(), &corrected)?;
    fs::write(r.path("birm-stats.txt"), stats.to_string()).map_err(|e| Error::io(r.path("birm-stats.txt"), e))
}

fn stage_train(r: &Runner, seeds: &RunSeeds) -> Result<()> {
    let vocab = load_vocab(r)?;
    fs::create_dir_all(r.path("vectors")).map_err(|e| Error::io(r.path("vectors"), e))?;
    for method in METHODS {
        let matrix = CooccurrenceMatrix::load(&r.path(&format!("{method}.cooc")), vocab.len())?;
        let jobs: Vec<(usize, u64)> = seeds.train.iter().copied().enumerate().collect();
        jobs.par_iter()
            .map(|&(run, seed)| {
                let (emb, stats) = train(&matrix, &r.cfg.trainer_config(seed))?;
                info!(
                    "{method} run {run}: final cost {:.6}",
                    stats.epoch_costs.last().copied().unwrap_or(0.0)
                );
                emb.export(&vocab, r.cfg.export)?.save(&r.path(&vectors_file(method, run)))
            })
            .collect::<Result<Vec<()>>>()?;
    }
    Ok(())
}

/// WEAT tests configured for a run, in report order.
pub fn configured_tests(cfg: &PipelineConfig) -> Result<Vec<WeatTestSpec>> {
    let mut tests = Vec::new();
    if cfg.synthetic && cfg.weat_synthetic {
        tests.extend(synthetic::weat_specs(&SyntheticSpec::default()));
    }
    if cfg.weat_builtin {
        tests.extend(builtin_tests());
    }
    for p in &cfg.weat_specs {
        tests.push(WeatTestSpec::load(p)?);
    }
    Ok(tests)
}

/// RIPA targets: the math, art and science words, against the paired gender terms.
fn ripa_words() -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut words = Vec::new();
    for list in [wl::MATH, wl::ART, wl::SCIENCE] {
        for w in list.iter() {
            if !words.iter().any(|x: &String| x == w) {
                words.push(w.to_string());
            }
        }
    }
    (words, wl::to_strings(wl::FEMALE_TERMS), wl::to_strings(wl::MALE_TERMS))
}

fn measurement(test: &str, metric: &str, method: &str, run: usize, value: f64) -> Measurement {
    Measurement {
        test: test.to_owned(),
        metric: metric.to_owned(),
        method: method.to_owned(),
        run,
        value,
    }
}

/// Evaluates every configured test on one vector set.
pub fn evaluate_vectors(
    cfg: &PipelineConfig,
    tests: &[WeatTestSpec],
    vectors: &Vectors,
    method: &str,
    run: usize,
    weat_seed: u64,
    eval: &mut Evaluation,
) -> Result<()> {
    let note_skip = |eval: &mut Evaluation, what: String| {
        if !eval.skipped.contains(&what) {
            warn!("skipped {what}");
            eval.skipped.push(what);
        }
    };
    for t in tests {
        match weat(t, vectors, &cfg.weat_options(weat_seed)) {
            Ok(res) => {
                match res.effect_size {
                    Some(e) => eval.measurements.push(measurement(&t.name, "effect", method, run, e)),
                    None => note_skip(eval, format!("weat {} ({method} run {run}): degenerate effect size", t.name)),
                }
                eval.measurements.push(measurement(&t.name, "p", method, run, res.p_value));
                eval.weat.push(WeatRecord {
                    test: t.name.clone(),
                    method: method.to_owned(),
                    run,
                    result: res,
                });
            }
            Err(Error::OutOfVocabulary(missing)) => {
                note_skip(eval, format!("weat {}: not in vocabulary: {}", t.name, missing.join(" ")))
            }
            Err(e) => return Err(e),
        }
    }
    if cfg.ripa {
        let (words, fem, masc) = ripa_words();
        match ripa_report(&words, &fem, &masc, vectors) {
            Ok(rep) => {
                for row in rep.results {
                    for s in row.scores {
                        eval.measurements.push(measurement(&format!("ripa:{}", row.word), "ripa", method, run, s));
                    }
                }
                if !rep.skipped.is_empty() {
                    note_skip(eval, format!("ripa: not in vocabulary: {}", rep.skipped.join(" ")));
                }
            }
            Err(Error::OutOfVocabulary(missing)) => {
                note_skip(eval, format!("ripa: no attribute pair in vocabulary: {}", missing.join(" ")))
            }
            Err(e) => return Err(e),
        }
    }
    for p in &cfg.similarity {
        let ds = SimilarityDataset::load(p)?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match similarity_eval(&ds, vectors) {
            Ok(o) => eval.measurements.push(measurement(&name, "spearman", method, run, o.value)),
            Err(e) => note_skip(eval, format!("similarity {name}: {e}")),
        }
    }
    for p in &cfg.analogy {
        let ds = AnalogyDataset::load(p)?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        match analogy_eval(&ds, vectors) {
            Ok(o) => eval.measurements.push(measurement(&name, "accuracy", method, run, o.value)),
            Err(e) => note_skip(eval, format!("analogy {name}: {e}")),
        }
    }
    Ok(())
}

fn stage_evaluate(r: &Runner, seeds: &RunSeeds) -> Result<()> {
    let tests = configured_tests(r.cfg)?;
    let mut eval = Evaluation::default();
    for method in METHODS {
        for run in 0..r.cfg.runs {
            let vectors = Vectors::load(&r.path(&vectors_file(method, run)))?;
            evaluate_vectors(r.cfg, &tests, &vectors, method, run, seeds.weat, &mut eval)?;
        }
    }
    eval.save(&r.path("evaluation.json"))
}

fn stage_report(r: &Runner) -> Result<()> {
    let eval = Evaluation::load(&r.path("evaluation.json"))?;
    let rows = aggregate(&eval.measurements);
    let mut text = render_table(&rows);
    if !eval.skipped.is_empty() {
        text.push_str("\nskipped:\n");
        for s in &eval.skipped {
            let _ = writeln!(text, "  {s}");
        }
    }
    fs::write(r.path("report.txt"), text).map_err(|e| Error::io(r.path("report.txt"), e))?;
    fs::write(r.path("report.tsv"), render_tsv(&rows)).map_err(|e| Error::io(r.path("report.tsv"), e))
}

/// Runs (or resumes) the whole experiment in `dir`.
pub fn run_pipeline(cfg: &PipelineConfig, dir: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let config_path = dir.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_text()).map_err(|e| Error::io(&config_path, e))?;

    let mut inputs = BTreeMap::new();
    for p in cfg.input_files() {
        inputs.insert(p.display().to_string(), sha256_file(&p)?);
    }
    let seeds = RunSeeds::derive(cfg);
    let manifest_path = dir.join(MANIFEST_FILE);
    let previous = if manifest_path.exists() {
        match Manifest::load(&manifest_path) {
            Ok(m) => Some(m),
            Err(e) => {
                warn!("ignoring unreadable manifest: {e}");
                None
            }
        }
    } else {
        None
    };
    let mut runner = Runner {
        cfg,
        dir: dir.to_owned(),
        previous,
        manifest: Manifest {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config_hash: cfg.hash(),
            deterministic: cfg.threads == 0,
            seeds: seeds.clone(),
            inputs,
            stages: Vec::new(),
        },
        executed: Vec::new(),
    };

    runner.stage("corpus", &[], &["corpus.txt".into()], |r| stage_corpus(r, &seeds))?;
    runner.stage("vocab", &["corpus.txt"], &["vocab.txt".into()], |r| {
        let sentences = read_sentences(&r.path("corpus.txt"))?;
        build_vocabulary(&sentences, r.cfg.min_count).save(&r.path("vocab.txt"))
    })?;
    let count_outputs: Vec<String> = ["raw.cooc", "scores.tsv", "scored.cooc", "original.cooc"]
        .map(String::from)
        .to_vec();
    runner.stage("counts", &["corpus.txt", "vocab.txt"], &count_outputs, stage_counts)?;
    runner.stage(
        "birm",
        &["vocab.txt", "scored.cooc"],
        &["birm.cooc".into(), "birm-stats.txt".into()],
        stage_birm,
    )?;
    let vector_files: Vec<String> = METHODS
        .iter()
        .flat_map(|m| (0..cfg.runs).map(move |i| vectors_file(m, i)))
        .collect();
    runner.stage(
        "train",
        &["vocab.txt", "original.cooc", "birm.cooc"],
        &vector_files,
        |r| stage_train(r, &seeds),
    )?;
    let vector_inputs: Vec<&str> = vector_files.iter().map(String::as_str).collect();
    runner.stage("evaluate", &vector_inputs, &["evaluation.json".into()], |r| stage_evaluate(r, &seeds))?;
    runner.stage(
        "report",
        &["evaluation.json"],
        &["report.txt".into(), "report.tsv".into()],
        stage_report,
    )?;

    let evaluation = Evaluation::load(&runner.path("evaluation.json"))?;
    Ok(RunSummary {
        dir: dir.to_owned(),
        manifest: runner.manifest,
        evaluation,
        executed: runner.executed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_override("runs=7").unwrap();
        cfg.apply_override("weat_specs = a.txt,b.txt").unwrap();
        cfg.apply_override("neutralize=none").unwrap();
        cfg.apply_override("score_window=4").unwrap();
        let back = PipelineConfig::read(cfg.to_text().as_bytes(), "mem").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(back.weat_specs.len(), 2);
    }

    #[test]
    fn config_errors() {
        let mut cfg = PipelineConfig::default();
        assert!(matches!(cfg.apply_override("nope=1"), Err(Error::InvalidArgument(_))));
        assert!(cfg.apply_override("runs").is_err());
        assert!(cfg.apply_override("runs=x").is_err());
        assert!(PipelineConfig::read("window = 3\nbogus\n".as_bytes(), "mem").is_err());
        cfg.apply_override("runs=0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seeds_are_split_by_stream() {
        assert_eq!(derive_seed(1, "train", 0), derive_seed(1, "train", 0));
        assert_ne!(derive_seed(1, "train", 0), derive_seed(1, "train", 1));
        assert_ne!(derive_seed(1, "train", 0), derive_seed(1, "mix", 0));
        assert_ne!(derive_seed(1, "train", 0), derive_seed(2, "train", 0));
    }
}
