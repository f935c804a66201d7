use birm::vectors::Vectors;
use birm::weat::{
    association, binomial, ripa, ripa_report, weat, weat_from_associations, PValueMode, WeatOptions, WeatTestSpec,
};
use birm::Error;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random vectors for `n + n` targets and `m + m` attributes.
fn random_test(rng: &mut impl Rng, n: usize, m: usize, dim: usize) -> (WeatTestSpec, Vectors) {
    let spec = WeatTestSpec::new("t", names("x", n), names("y", n), names("a", m), names("b", m)).unwrap();
    let pairs: Vec<(String, Vec<f64>)> = spec.words().map(|w| (w.clone(), random_vec(rng, dim))).collect();
    (spec, Vectors::from_pairs(pairs).unwrap())
}

/// Targets sit on the attribute axes: every X association is 1 and every Y association -1.
fn separated(n: usize) -> (WeatTestSpec, Vectors) {
    let spec = WeatTestSpec::new("sep", names("x", n), names("y", n), names("a", 3), names("b", 3)).unwrap();
    let mut pairs = Vec::new();
    for (i, w) in spec.x.iter().chain(&spec.a).enumerate() {
        pairs.push((w.clone(), vec![1.0 + i as f64, 0.0]));
    }
    for (i, w) in spec.y.iter().chain(&spec.b).enumerate() {
        pairs.push((w.clone(), vec![0.0, 0.5 + i as f64]));
    }
    (spec, Vectors::from_pairs(pairs).unwrap())
}

fn exact_opts() -> WeatOptions {
    WeatOptions::default()
}

#[test]
fn association_examples() {
    let w = [1.0, 0.0];
    let a: [&[f64]; 1] = [&[1.0, 0.0]];
    let b: [&[f64]; 1] = [&[0.0, 1.0]];
    assert_eq!(association(&w, &a, &b).unwrap(), 1.0);
    assert_eq!(association(&w, &b, &b).unwrap(), 0.0);
    let c: [&[f64]; 1] = [&[0.0, 3.0]];
    assert_eq!(association(&w, &b, &c).unwrap(), 0.0);
    let zero: [&[f64]; 1] = [&[0.0, 0.0]];
    assert!(matches!(association(&w, &zero, &b), Err(Error::ZeroVector(_))));
}

#[test]
fn separated_eight_and_ten_hit_the_floor() {
    for (n, total) in [(8usize, 12870u64), (10, 184756)] {
        let (spec, v) = separated(n);
        let r = weat(&spec, &v, &exact_opts()).unwrap();
        assert_eq!(r.mode, PValueMode::Exact);
        assert_eq!(Ratio::new(r.p_count, r.p_total), Ratio::new(1, total));
        assert_eq!(r.p_value, 1.0 / total as f64);
        assert_eq!(r.n_partitions_or_samples, total);
        assert!((r.effect_size.unwrap() - 2.0).abs() <= 1e-12);
        assert_eq!(r.statistic, 2.0 * n as f64);
    }
    assert_eq!(binomial(16, 8), Some(12870));
    assert_eq!(binomial(20, 10), Some(184756));
}

#[test]
fn identical_groups_have_zero_effect_and_constant_is_degenerate() {
    let r = weat_from_associations(&[0.1, 0.4, 0.3, 0.4, 0.1, 0.3], &exact_opts()).unwrap();
    assert_eq!(r.effect_size, Some(0.0));
    let r = weat_from_associations(&[0.5; 6], &exact_opts()).unwrap();
    assert_eq!(r.effect_size, None);
    assert!(r.line("t").contains("degenerate"));
    assert_eq!((r.p_count, r.p_total), (20, 20));
}

#[test]
fn out_of_vocabulary_words_are_listed() {
    let (spec, v) = separated(3);
    let mut bad = spec.clone();
    bad.x[0] = "missing1".into();
    bad.b[1] = "missing2".into();
    match weat(&bad, &v, &exact_opts()) {
        Err(Error::OutOfVocabulary(words)) => {
            assert!(words.contains(&"missing1".to_string()) && words.contains(&"missing2".to_string()))
        }
        other => panic!("expected OOV error, got {other:?}"),
    }
}

#[test]
fn monte_carlo_agrees_with_exact_on_six_plus_six() {
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    for trial in 0..5 {
        let s: Vec<f64> = (0..12).map(|i| rng.gen_range(-1.0..1.0) + if i < 6 { 0.3 } else { 0.0 }).collect();
        let exact = weat_from_associations(&s, &exact_opts()).unwrap();
        let mc = weat_from_associations(
            &s,
            &WeatOptions {
                max_exact: 0,
                mc_samples: 200_000,
                seed: trial,
            },
        )
        .unwrap();
        assert_eq!(mc.mode, PValueMode::MonteCarlo);
        assert_eq!(mc.statistic, exact.statistic);
        assert!((mc.p_value - exact.p_value).abs() <= 0.01, "{} vs {}", mc.p_value, exact.p_value);
        assert_eq!(mc.p_total, 200_001);
    }
}

#[test]
fn ripa_examples_and_report() {
    let f = [1.0, 0.0];
    let m = [0.0, 1.0];
    let unit = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()];
    assert!((ripa(&unit, &f, &m).unwrap() - 1.0).abs() <= 1e-15);
    assert_eq!(ripa(&[1.0, 1.0], &f, &m).unwrap(), 0.0);
    assert!((ripa(&[2.0, 0.0], &f, &m).unwrap() - 2f64.sqrt()).abs() <= 1e-15);
    assert!(ripa(&[1.0, 0.0], &f, &f).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words = names("w", 3);
    let fem = names("f", 3);
    let masc = names("m", 2);
    let pairs: Vec<(String, Vec<f64>)> = words
        .iter()
        .chain(&fem)
        .chain(&masc)
        .map(|w| (w.clone(), random_vec(&mut rng, 5)))
        .collect();
    let v = Vectors::from_pairs(pairs).unwrap();
    let mut asked = words.clone();
    asked.push("nope".into());
    let report = ripa_report(&asked, &fem, &masc, &v).unwrap();
    assert_eq!(report.skipped, ["nope"]);
    assert_eq!(report.results.len(), 3);
    for r in &report.results {
        let w = v.get(&r.word).unwrap();
        let mut expected = Vec::new();
        for f in &fem {
            for m in &masc {
                expected.push(ripa(w, v.get(f).unwrap(), v.get(m).unwrap()).unwrap());
            }
        }
        assert_eq!(r.scores, expected);
        assert!(r.stats.min <= r.stats.median && r.stats.median <= r.stats.max);
    }
    let single = ripa_report(&words[..1], &fem[..1], &masc[..1], &v).unwrap();
    let s = &single.results[0].stats;
    assert!(s.min == s.median && s.median == s.max);
}

#[test]
fn spec_file_round_trip() {
    let (spec, _) = separated(2);
    let text = spec.to_file_string();
    let back = WeatTestSpec::read(std::io::Cursor::new(text), "sep").unwrap();
    assert_eq!(back, spec);
    assert!(WeatTestSpec::read(std::io::Cursor::new("[X]\na\n[Y]\nb\nc\n[A]\nd\n[B]\ne\n"), "bad").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn swaps_negate_statistic_and_effect(seed in any::<u64>(), n in 1usize..7, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, v) = random_test(&mut rng, n, m, 6);
        let r = weat(&spec, &v, &exact_opts()).unwrap();
        for other in [spec.swap_targets(), spec.swap_attributes()] {
            let s = weat(&other, &v, &exact_opts()).unwrap();
            prop_assert_eq!(s.statistic, -r.statistic);
            prop_assert_eq!(s.effect_size, r.effect_size.map(|e| -e));
        }
        let both = weat(&spec.swap_targets().swap_attributes(), &v, &exact_opts()).unwrap();
        prop_assert_eq!(both.statistic, r.statistic);
        prop_assert_eq!(both.p_count, r.p_count);
    }

    #[test]
    fn rescaling_vectors_changes_nothing(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (spec, v) = random_test(&mut rng, n, 3, 5);
        let r = weat(&spec, &v, &exact_opts()).unwrap();
        let mut pow2 = v.clone();
        let mut arbitrary = v.clone();
        let k: Vec<i32> = (0..v.len()).map(|_| rng.gen_range(-20..20)).collect();
        let c: Vec<f64> = (0..v.len()).map(|_| rng.gen_range(0.01..100.0)).collect();
        pow2.map_rows(|i, row| row.iter_mut().for_each(|x| *x *= 2f64.powi(k[i])));
        arbitrary.map_rows(|i, row| row.iter_mut().for_each(|x| *x *= c[i]));
        prop_assert_eq!(&weat(&spec, &pow2, &exact_opts()).unwrap(), &r);
        let a = weat(&spec, &arbitrary, &exact_opts()).unwrap();
        prop_assert!((a.statistic - r.statistic).abs() <= 1e-12 * r.statistic.abs().max(1.0));
        if let (Some(x), Some(y)) = (a.effect_size, r.effect_size) {
            prop_assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
        prop_assert_eq!(a.p_count, r.p_count);
    }

    #[test]
    fn exact_p_is_a_rational_above_the_floor(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = weat_from_associations(&s, &exact_opts()).unwrap();
        let c = binomial(2 * n as u64, n as u64).unwrap();
        prop_assert_eq!(r.p_total, c);
        prop_assert!(r.p_count >= 1 && r.p_count <= c);
        prop_assert_eq!(r.p_value, r.p_count as f64 / c as f64);

        let mut swapped = s[n..].to_vec();
        swapped.extend_from_slice(&s[..n]);
        let q = weat_from_associations(&swapped, &exact_opts()).unwrap();
        prop_assert!(Ratio::new(r.p_count, c) + Ratio::new(q.p_count, c) >= Ratio::new(c + 1, c));
    }

    #[test]
    fn effect_size_is_bounded(s in prop::collection::vec(-10.0f64..10.0, 2..24)) {
        prop_assume!(s.len() % 2 == 0);
        let r = weat_from_associations(&s, &WeatOptions { max_exact: 1000, mc_samples: 200, seed: 1 }).unwrap();
        if let Some(e) = r.effect_size {
            prop_assert!(e.abs() <= 2.0 + 1e-12);
        }
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
    }

    #[test]
    fn constant_groups_reach_two(a in -5.0f64..5.0, gap in 0.001f64..5.0, n in 1usize..10) {
        let mut s = vec![a + gap; n];
        s.extend(std::iter::repeat_n(a, n));
        let r = weat_from_associations(&s, &exact_opts()).unwrap();
        prop_assert!((r.effect_size.unwrap() - 2.0).abs() <= 1e-12);
    }
}
