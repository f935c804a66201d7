//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use birm::cooccur::{ScoredCooccurrence, Weighting};
use birm::correction::{correct, NeutralizationPolicy};
use birm::glove::{train, TrainerConfig};
use birm::pipeline::{run_pipeline, PipelineConfig};
use birm::synthetic::{generate, SyntheticSpec};
use birm::weat::{weat, weat_from_associations, WeatOptions, WeatTestSpec};
use birm::vectors::Vectors;
use common::*;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn synthetic_reproduction() -> Outcome {
    let runs = 10;
    let mut cfg = PipelineConfig::default();
    for kv in ["background_sentences=100000", "dim=50", "epochs=15", "weat_builtin=false", "ripa=false"] {
        cfg.apply_override(kv).map_err(|e| e.to_string())?;
    }
    cfg.runs = runs;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = run_pipeline(&cfg, dir.path()).map_err(|e| e.to_string())?;
    let tests = [
        ("synthetic-adjectives-gender", 0.4),
        ("synthetic-nouns-gender", 0.4),
        ("synthetic-adjectives-nouns", 0.15),
    ];
    let effects = |test: &str, method: &str| -> Vec<f64> {
        summary
            .evaluation
            .weat
            .iter()
            .filter(|r| r.test == test && r.method == method)
            .map(|r| r.result.effect_size.unwrap_or(0.0))
            .collect()
    };
    let mut detail = Vec::new();
    let mut failures = Vec::new();
    for (test, min_drop) in tests {
        let significant = summary
            .evaluation
            .weat
            .iter()
            .filter(|r| r.test == test && r.method == "original")
            .filter(|r| (r.result.p_count, r.result.p_total) == (1, 184_756) && r.result.effect_size.unwrap_or(0.0) > 1.8)
            .count();
        let (orig, corrected) = (effects(test, "original"), effects(test, "birm"));
        if orig.len() != runs || corrected.len() != runs {
            return Err(format!("{test}: missing runs"));
        }
        let drop = median(orig.clone()) - median(corrected);
        detail.push(format!("{test}: {significant}/{runs} floor, median drop {drop:.3}"));
        if significant < 8 {
            failures.push(format!("{test}: only {significant}/{runs} runs at the floor with effect > 1.8"));
        }
        if drop < min_drop {
            failures.push(format!("{test}: median drop {drop:.3} < {min_drop}"));
        }
    }
    if failures.is_empty() {
        Ok(detail.join("; "))
    } else {
        Err(format!("{} ({})", failures.join("; "), detail.join("; ")))
    }
}

fn example_one() -> Outcome {
    let sc = ScoredCooccurrence::from_cells(
        3,
        1,
        vec![cell(1, 0, -1, 6.0), cell(2, 0, -1, 14.0), cell(1, 0, 1, 1.0), cell(2, 0, 1, 9.0)],
    )
    .map_err(|e| e.to_string())?;
    let policy = NeutralizationPolicy::new(3, [], [0], true).map_err(|e| e.to_string())?;
    let after = correct(&sc, &policy).map_err(|e| e.to_string())?;
    let ratio = after.get(1, 0) / sc.collapse().get(1, 0);
    let exact = rational_correction(&sc, &[0], true)[&(1, 0)] / Q::from_integer(7);
    if exact != Q::new(6, 7) {
        return Err(format!("rational oracle gives {exact}"));
    }
    if (ratio - 6.0 / 7.0).abs() > 1e-12 {
        return Err(format!("ratio {ratio}"));
    }
    Ok(format!("ratio {ratio:.15}"))
}

fn weat_floors() -> Outcome {
    let mut detail = Vec::new();
    for (n, total) in [(8usize, 12_870u64), (10, 184_756)] {
        let names = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let spec = WeatTestSpec::new("sep", names("x", n), names("y", n), names("a", 2), names("b", 2))
            .map_err(|e| e.to_string())?;
        let mut pairs = Vec::new();
        for w in spec.x.iter().chain(&spec.a) {
            pairs.push((w.clone(), vec![1.0, 0.0]));
        }
        for w in spec.y.iter().chain(&spec.b) {
            pairs.push((w.clone(), vec![0.0, 1.0]));
        }
        let v = Vectors::from_pairs(pairs).map_err(|e| e.to_string())?;
        let r = weat(&spec, &v, &WeatOptions::default()).map_err(|e| e.to_string())?;
        if Ratio::new(r.p_count, r.p_total) != Ratio::new(1, total) {
            return Err(format!("{n}+{n}: p = {}/{}", r.p_count, r.p_total));
        }
        let e = r.effect_size.unwrap_or(0.0);
        if (e - 2.0).abs() > 1e-12 {
            return Err(format!("{n}+{n}: effect {e}"));
        }
        detail.push(format!("{n}+{n} p = 1/{total}"));
    }
    let mut s = vec![0.75; 10];
    s.extend([-0.25; 10]);
    let r = weat_from_associations(&s, &WeatOptions::default()).map_err(|e| e.to_string())?;
    let e = r.effect_size.unwrap_or(0.0);
    if (e - 2.0).abs() > 1e-12 {
        return Err(format!("constant groups: effect {e}"));
    }
    detail.push(format!("effect {e}"));
    Ok(detail.join(", "))
}

fn counting_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0c0);
    counting_oracle_suite(&mut rng, 50)?;
    Ok("50 corpora, flat and harmonic".into())
}

fn conservation_and_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    for round in 0..200 {
        let n = rng.gen_range(2..10);
        let radius = rng.gen_range(1..4);
        let sc = random_scored(&mut rng, n, radius);
        let protected: Vec<u32> = (0..n as u32).filter(|_| rng.gen_bool(0.3)).collect();
        let neutral: Vec<u32> = (0..n as u32).filter(|b| !protected.contains(b) && rng.gen_bool(0.8)).collect();
        let policy = NeutralizationPolicy::new(n, protected.clone(), neutral.clone(), rng.gen_bool(0.5))
            .map_err(|e| e.to_string())?;
        let after = correct(&sc, &policy).map_err(|e| e.to_string())?;
        let collapsed = sc.collapse();
        let sums = after.context_sums();
        let marginals = sc.marginals();
        for b in 0..n as u32 {
            let m = marginals.context(b);
            if policy.is_neutralized(b) {
                let rel = (sums[b as usize] - m).abs() / m.max(f64::MIN_POSITIVE);
                worst = worst.max(rel);
                if rel > 1e-9 {
                    return Err(format!("round {round}, context {b}: relative mass error {rel}"));
                }
            }
            let buckets = (-(radius as i8)..=radius as i8)
                .filter(|&x| marginals.context_bucket(b, x) > 0.0)
                .count();
            if !policy.is_neutralized(b) || buckets <= 1 {
                for a in 0..n as u32 {
                    if after.get(a, b) != collapsed.get(a, b) {
                        return Err(format!("round {round}: cell ({a},{b}) changed on an identity context"));
                    }
                }
            }
        }
        // a fully bucket-uniform matrix
        let x = rng.gen_range(-(radius as i8)..=radius as i8);
        let uniform: Vec<_> = sc.cells().iter().map(|c| cell(c.word, c.context, x, c.weight.round().max(1.0))).collect();
        let uniform = ScoredCooccurrence::from_cells(n, radius, uniform).map_err(|e| e.to_string())?;
        let all = NeutralizationPolicy::new(n, [], 0..n as u32, true).map_err(|e| e.to_string())?;
        if correct(&uniform, &all).map_err(|e| e.to_string())? != uniform.collapse() {
            return Err(format!("round {round}: bucket-uniform matrix changed"));
        }
    }
    Ok(format!("200 matrices, worst relative mass error {worst:.1e}"))
}

fn gradient_and_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3d);
    let mut worst: f64 = 0.0;
    for round in 0..10 {
        let err = gradient_check(&mut rng);
        worst = worst.max(err);
        if err > 1e-5 {
            return Err(format!("matrix {round}: relative gradient error {err}"));
        }
    }
    let m = random_matrix(&mut rng, 30);
    let cfg = TrainerConfig {
        dim: 8,
        epochs: 5,
        seed: 11,
        ..TrainerConfig::default()
    };
    let a = train(&m, &cfg).map_err(|e| e.to_string())?;
    let b = train(&m, &cfg).map_err(|e| e.to_string())?;
    if a != b {
        return Err("two deterministic runs differ".into());
    }
    Ok(format!("worst relative gradient error {worst:.1e}; runs identical"))
}

fn appendix_direction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11e);
    for round in 0..20 {
        let counts = AppendixCounts::random(&mut rng);
        if !counts.satisfies_premise() {
            return Err(format!("parameterization {round} violates the premise"));
        }
        let (raw, corrected) = appendix_handsome_engineer(&counts, Weighting::Harmonic);
        if corrected >= raw {
            return Err(format!("{counts:?}: {corrected} >= {raw}"));
        }
    }
    Ok("20 parameterizations decrease".into())
}

fn synthetic_generator() -> Outcome {
    let sentences = generate(&SyntheticSpec::default()).map_err(|e| e.to_string())?;
    synthetic_table_check(&sentences)?;
    Ok(format!("{} sentences, every ratio 3", sentences.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("synthetic stereotype reproduction", synthetic_reproduction),
        ("example 1 gives 6/7", example_one),
        ("WEAT permutation floors and effect size 2", weat_floors),
        ("counting matches brute force", counting_oracle),
        ("correction conserves mass and keeps identity contexts", conservation_and_identity),
        ("gradient check and determinism", gradient_and_determinism),
        ("handsome-engineer direction", appendix_direction),
        ("synthetic generator table", synthetic_generator),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}: {name} [{detail}] ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}: {name} [{why}] ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
