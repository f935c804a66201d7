use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use birm::cooccur::{count_pairs, count_scored_pairs, CooccurrenceMatrix, CountOptions, ScoredCooccurrence, Weighting};
use birm::correction::{correct_pairs, report_correction_stats, Orientation};
use birm::glove::{train, ExportMode, TrainerConfig};
use birm::pipeline::{build_policy, run_pipeline, Evaluation, Neutralize, PipelineConfig};
use birm::report::{aggregate, render_table, render_tsv};
use birm::scoring::{compute_word_scores, ScoreOptions, ScoreTable, SeedSets};
use birm::semantic::{analogy_eval, similarity_eval, AnalogyDataset, SimilarityDataset};
use birm::synthetic::{self, BackgroundSpec, SyntheticSpec};
use birm::text::{build_vocabulary, normalize_corpus, read_sentences, write_sentences, NormalizeOptions, Vocabulary};
use birm::vectors::Vectors;
use birm::weat::{builtin_tests, ripa_report, weat, WeatOptions, WeatTestSpec, DEFAULT_MAX_EXACT, DEFAULT_MC_SAMPLES};
use birm::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

#[derive(Parser)]
#[command(name = "birm", version, about = "Bias-conditioned co-occurrence correction and embedding bias evaluation")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalise raw text into one tokenised sentence per line.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_sentence_len: usize,
        /// Keep punctuation tokens (the default).
        #[arg(long, conflicts_with = "drop_punct")]
        keep_punct: bool,
        #[arg(long)]
        drop_punct: bool,
    },
    /// Count tokens of a preprocessed corpus.
    Vocab {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        min_count: u64,
    },
    /// Score every word from first-pass counts.
    Score {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Seed file with `[A]` and `[B]` sections; the packaged gender sets otherwise.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long, default_value_t = birm::scoring::DEFAULT_C)]
        c: f64,
        #[arg(long, default_value_t = birm::scoring::DEFAULT_SEED_MAGNITUDE)]
        seed_magnitude: i64,
        #[arg(long, default_value_t = birm::scoring::DEFAULT_SMOOTHING)]
        smoothing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count co-occurrences; with `--scores` every cell also carries its bucket.
    Cooccur {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correct scored counts into a plain co-occurrence matrix.
    Birm {
        #[arg(long)]
        scored: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        seeds: Option<PathBuf>,
        /// `all`, `none`, or a file listing the words to neutralise.
        #[arg(long, default_value = "all")]
        neutralize: String,
        #[arg(long)]
        symmetrize: bool,
        #[arg(long, default_value = "both")]
        orientation: String,
        /// Also write per-context change statistics here.
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train vectors on a co-occurrence matrix.
    Train {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 300)]
        dim: usize,
        #[arg(long, default_value_t = 15)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, conflicts_with = "deterministic")]
        threads: Option<usize>,
        /// Single worker, reproducible (the default).
        #[arg(long)]
        deterministic: bool,
        #[arg(long, default_value_t = 100.0)]
        x_max: f64,
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        #[arg(long, default_value = "sum")]
        export: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run WEAT tests.
    EvalWeat {
        #[arg(long)]
        vectors: PathBuf,
        /// Test file with `[X] [Y] [A] [B]` sections (repeatable).
        #[arg(long)]
        spec: Vec<PathBuf>,
        /// Also run the packaged tests.
        #[arg(long)]
        builtin: bool,
        /// Also run the synthetic-word tests.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_EXACT)]
        max_exact: u64,
        #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
        mc_samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// RIPA scores of words against feminine/masculine attribute pairs.
    EvalRipa {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        fem: PathBuf,
        #[arg(long)]
        masc: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Spearman correlation on a word-similarity file.
    EvalSim {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// 3CosAdd accuracy on an analogy file.
    EvalAnalogy {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Write the synthetic stereotype sentences.
    SynthGen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the per-word pronoun ratio table.
        #[arg(long)]
        ratios: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded background corpus to mix the synthetic sentences into.
    SynthBackground {
        #[arg(long, default_value_t = 100_000)]
        sentences: usize,
        #[arg(long, default_value_t = 1500)]
        words: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shuffle a real corpus and synthetic sentences together.
    SynthMix {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run (or resume) the whole experiment.
    Run {
        /// Config file of `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config entry, `key=value` (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the resolved config and exit.
        #[arg(long)]
        print_config: bool,
        #[arg(long, required_unless_present = "print_config")]
        out: Option<PathBuf>,
    },
    /// Min/median/max table over evaluation outputs (run directories or evaluation.json files).
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long, default_value_t = birm::cooccur::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value = "harmonic")]
    weighting: String,
    /// Bucket radius: buckets are -r..=r.
    #[arg(long, default_value_t = 1)]
    buckets: u8,
    /// Radius of the bucket score sum, if different from the window.
    #[arg(long)]
    score_window: Option<usize>,
    #[arg(long)]
    exclude_focal: bool,
}

impl WindowArgs {
    fn options(&self) -> Result<CountOptions> {
        Ok(CountOptions {
            window: self.window,
            score_window: self.score_window,
            weighting: self.weighting.parse::<Weighting>()?,
            radius: self.buckets,
            exclude_focal: self.exclude_focal,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Aligned text table.
    Table,
    /// One machine-readable line per result.
    Line,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_owned(),
            source: e,
        })
}

fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap().trim())
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn seed_sets(path: &Option<PathBuf>) -> Result<SeedSets> {
    match path {
        Some(p) => SeedSets::load(p),
        None => Ok(SeedSets::gender()),
    }
}

fn print_table(headers: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        println!("{}", parts.join("  ").trim_end());
    };
    line(headers.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess {
            input,
            out,
            min_sentence_len,
            keep_punct: _,
            drop_punct,
        } => {
            let opts = NormalizeOptions {
                min_sentence_len,
                keep_punct: !drop_punct,
            };
            let file = File::open(&input).map_err(|e| Error::Io {
                path: input.clone(),
                source: e,
            })?;
            let mut w = create(&out)?;
            let mut write_err = None;
            let stats = normalize_corpus(BufReader::new(file), &opts, |s| {
                if write_err.is_none() {
                    if let Err(e) = writeln!(w, "{}", s.to_line()) {
                        write_err = Some(e);
                    }
                }
            })?;
            if let Some(e) = write_err {
                return Err(Error::Io { path: out, source: e });
            }
            w.flush().map_err(|e| Error::Io { path: out, source: e })?;
            eprintln!(
                "{} lines, {} sentences, {} too short, {} invalid UTF-8",
                stats.lines, stats.emitted, stats.too_short, stats.invalid_utf8
            );
        }
        Command::Vocab { input, out, min_count } => {
            if min_count == 0 {
                return Err(Error::InvalidArgument("--min-count must be at least 1".into()));
            }
            let sentences = read_sentences(&input)?;
            let vocab = build_vocabulary(&sentences, min_count);
            vocab.save(&out)?;
            eprintln!("{} words", vocab.len());
        }
        Command::Score {
            counts,
            vocab,
            seeds,
            c,
            seed_magnitude,
            smoothing,
            out,
        } => {
            let vocab = Vocabulary::load(&vocab)?;
            let raw = CooccurrenceMatrix::load(&counts, vocab.len())?;
            let seeds = seed_sets(&seeds)?.with_magnitude(seed_magnitude)?;
            let opts = ScoreOptions {
                c,
                smoothing,
                seeds_only: false,
            };
            let (table, report) = compute_word_scores(&raw, &vocab, &seeds, &opts)?;
            table.save(&vocab, &out)?;
            eprintln!(
                "{} positive, {} negative, {} zero ({} without seed co-occurrence)",
                report.positive, report.negative, report.zero, report.no_seed_mass
            );
        }
        Command::Cooccur {
            corpus,
            vocab,
            scores,
            window,
            out,
        } => {
            let opts = window.options()?;
            let vocab = Vocabulary::load(&vocab)?;
            let sentences = read_sentences(&corpus)?;
            match scores {
                Some(p) => {
                    let scores = ScoreTable::load(&p, &vocab)?;
                    let sc = count_scored_pairs(&sentences, &vocab, &scores, &opts)?;
                    sc.save(&out)?;
                    eprintln!("{} scored cells", sc.cells().len());
                }
                None => {
                    let m = count_pairs(&sentences, &vocab, &opts)?;
                    m.save(&out)?;
                    eprintln!("{} cells", m.len());
                }
            }
        }
        Command::Birm {
            scored,
            vocab,
            seeds,
            neutralize,
            symmetrize,
            orientation,
            stats,
            out,
        } => {
            let vocab = Vocabulary::load(&vocab)?;
            let sc = ScoredCooccurrence::load(&scored, vocab.len())?;
            let mut cfg = PipelineConfig {
                seeds,
                neutralize: neutralize.parse::<Neutralize>()?,
                symmetrize,
                ..PipelineConfig::default()
            };
            cfg.orientation = orientation.parse::<Orientation>()?;
            let policy = build_policy(&cfg, &vocab)?;
            let corrected = correct_pairs(&sc, &policy, cfg.orientation)?;
            corrected.save(&out)?;
            let summary = report_correction_stats(&sc.collapse(), &corrected)?;
            eprintln!(
                "{} contexts neutralised, {} cells modified",
                policy.neutralized_count(),
                summary.modified_cells
            );
            if let Some(p) = stats {
                std::fs::write(&p, summary.to_string()).map_err(|e| Error::Io { path: p, source: e })?;
            }
        }
        Command::Train {
            counts,
            vocab,
            dim,
            epochs,
            seed,
            threads,
            deterministic: _,
            x_max,
            alpha,
            learning_rate,
            export,
            out,
        } => {
            let vocab = Vocabulary::load(&vocab)?;
            let matrix = CooccurrenceMatrix::load(&counts, vocab.len())?;
            let cfg = TrainerConfig {
                dim,
                epochs,
                x_max,
                alpha,
                learning_rate,
                seed,
                export_mode: export.parse::<ExportMode>()?,
                threads,
            };
            let (emb, stats) = train(&matrix, &cfg)?;
            for (i, c) in stats.epoch_costs.iter().enumerate() {
                info!("epoch {}: cost {c}", i + 1);
            }
            emb.export(&vocab, cfg.export_mode)?.save(&out)?;
        }
        Command::EvalWeat {
            vectors,
            spec,
            builtin,
            synthetic,
            max_exact,
            mc_samples,
            seed,
            format,
        } => {
            let v = Vectors::load(&vectors)?;
            let mut tests = Vec::new();
            if synthetic {
                tests.extend(synthetic::weat_specs(&SyntheticSpec::default()));
            }
            if builtin {
                tests.extend(builtin_tests());
            }
            for p in &spec {
                tests.push(WeatTestSpec::load(p)?);
            }
            if tests.is_empty() {
                return Err(Error::InvalidArgument("give --spec, --builtin or --synthetic".into()));
            }
            let opts = WeatOptions {
                max_exact,
                mc_samples,
                seed,
            };
            let mut rows = Vec::new();
            for t in &tests {
                let r = weat(t, &v, &opts)?;
                match format {
                    Format::Line => println!("{}", r.line(&t.name)),
                    Format::Table => rows.push(vec![
                        t.name.clone(),
                        format!("{:.6}", r.statistic),
                        format!("{:.6e}", r.p_value),
                        format!("{}/{}", r.p_count, r.p_total),
                        r.effect_size.map_or("degenerate".to_owned(), |e| format!("{e:.4}")),
                        r.mode.to_string(),
                    ]),
                }
            }
            if format == Format::Table {
                print_table(&["test", "statistic", "p", "p (exact)", "effect", "mode"], &rows);
            }
        }
        Command::EvalRipa {
            vectors,
            words,
            fem,
            masc,
            format,
        } => {
            let v = Vectors::load(&vectors)?;
            let report = ripa_report(&read_word_list(&words)?, &read_word_list(&fem)?, &read_word_list(&masc)?, &v)?;
            let mut rows = Vec::new();
            for r in &report.results {
                match format {
                    Format::Line => println!("{} {} {} {}", r.word, r.stats.min, r.stats.median, r.stats.max),
                    Format::Table => rows.push(vec![
                        r.word.clone(),
                        format!("{:.4}", r.stats.min),
                        format!("{:.4}", r.stats.median),
                        format!("{:.4}", r.stats.max),
                    ]),
                }
            }
            if format == Format::Table {
                print_table(&["word", "min", "median", "max"], &rows);
            }
            if !report.skipped.is_empty() {
                eprintln!("skipped (not in vocabulary): {}", report.skipped.join(" "));
            }
        }
        Command::EvalSim { vectors, data } => {
            let v = Vectors::load(&vectors)?;
            let ds = SimilarityDataset::load(&data)?;
            let r = similarity_eval(&ds, &v)?;
            println!("spearman {} covered {} skipped {}", r.value, r.covered, r.skipped);
        }
        Command::EvalAnalogy { vectors, data } => {
            let v = Vectors::load(&vectors)?;
            let ds = AnalogyDataset::load(&data)?;
            let r = analogy_eval(&ds, &v)?;
            println!("accuracy {} covered {} skipped {}", r.value, r.covered, r.skipped);
        }
        Command::SynthGen { seed, ratios, out } => {
            let spec = SyntheticSpec::with_seed(seed);
            let sentences = synthetic::generate(&spec)?;
            write_sentences(&out, &sentences)?;
            if ratios {
                let rows: Vec<Vec<String>> = synthetic::stereotype_ratio_check(&sentences, &spec)
                    .into_iter()
                    .map(|r| {
                        vec![
                            r.word.clone(),
                            r.stereotype.to_string(),
                            r.matching.to_string(),
                            r.other.to_string(),
                            format!("{}", r.ratio()),
                            if r.flagged { "FLAGGED".into() } else { "ok".into() },
                        ]
                    })
                    .collect();
                print_table(&["word", "stereotype", "matching", "other", "ratio", "check"], &rows);
            }
            eprintln!("{} sentences", sentences.len());
        }
        Command::SynthBackground {
            sentences,
            words,
            seed,
            out,
        } => {
            let spec = BackgroundSpec {
                sentences,
                content_words: words,
                seed,
                ..BackgroundSpec::default()
            };
            write_sentences(&out, &synthetic::generate_background(&spec)?)?;
        }
        Command::SynthMix { real, synth, seed, out } => {
            let mixed = synthetic::mix(read_sentences(&real)?, read_sentences(&synth)?, seed);
            write_sentences(&out, &mixed)?;
            eprintln!("{} sentences", mixed.len());
        }
        Command::Run {
            config,
            overrides,
            print_config,
            out,
        } => {
            let mut cfg = match &config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            for o in &overrides {
                cfg.apply_override(o)?;
            }
            cfg.validate()?;
            if print_config {
                print!("{}", cfg.to_text());
                return Ok(());
            }
            let out = out.expect("required unless --print-config");
            let summary = run_pipeline(&cfg, &out)?;
            let report = std::fs::read_to_string(out.join("report.txt")).map_err(|e| Error::Io {
                path: out.join("report.txt"),
                source: e,
            })?;
            print!("{report}");
            eprintln!(
                "ran stages: {}",
                if summary.executed.is_empty() {
                    "none (up to date)".to_owned()
                } else {
                    summary.executed.join(", ")
                }
            );
        }
        Command::Report { inputs, format } => {
            let mut measurements = Vec::new();
            for p in &inputs {
                let file = if p.is_dir() { p.join("evaluation.json") } else { p.clone() };
                measurements.extend(Evaluation::load(&file)?.measurements);
            }
            let rows = aggregate(&measurements);
            let text = match format {
                Format::Table => render_table(&rows),
                Format::Line => render_tsv(&rows),
            };
            io::stdout().write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
