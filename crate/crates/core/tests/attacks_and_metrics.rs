//! Beam and exhaustive attacks against enumeration, and the accuracy metrics built on them.

mod common;

use std::collections::BTreeSet;
use std::path::Path;

use a3t::attack::{exhaustive_attack, hotflip_accuracy, hotflip_beam, survives_hotflip, DEFAULT_SPACE_BUDGET};
use a3t::data::{Dataset, Example};
use a3t::dsl::{load_spec_file, Alphabet, ResourceTables, TransformSpec};
use a3t::eval::{exhaustive_accuracy, normal_accuracy, run_report, EvalConfig, Verdict};
use a3t::nn::{Layer, Model};
use a3t::perturb::{count_plans, enumerate_space, find_matches, oracle_enumerate};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(rng: &mut ChaCha8Rng) -> (TransformSpec, Vec<String>) {
    loop {
        let spec = common::random_spec(rng, false, 2);
        let x = common::random_string(rng, 7);
        if find_matches(&spec, &x).len() <= 10 {
            return (spec, x);
        }
    }
}

fn model(seed: u64) -> Model {
    common::tiny_model(common::letters_vocabulary(), 2, 10, seed, vec![])
}

#[test]
fn full_width_beam_finds_the_exhaustive_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..100 {
        let (spec, x) = instance(&mut rng);
        let m = model(i);
        let y = rng.gen_range(0..2);
        let plans: usize = count_plans(&spec, &x).unwrap().try_into().unwrap();
        let beam = hotflip_beam(&m, &spec, &x, y, plans).unwrap();
        let full = exhaustive_attack(&m, &spec, &x, y, 1, DEFAULT_SPACE_BUDGET).unwrap();
        assert_eq!(beam.worst().loss, full.worst().loss, "{x:?}");
    }
}

#[test]
fn narrow_beams_stay_in_the_space_and_below_the_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for i in 0..150 {
        let (spec, x) = instance(&mut rng);
        let m = model(i);
        let y = rng.gen_range(0..2);
        let oracle = oracle_enumerate(&spec, &x, 12).unwrap();
        let true_max = oracle.strings.iter().map(|z| m.loss(z, y)).fold(f64::NEG_INFINITY, f64::max);
        let beam = hotflip_beam(&m, &spec, &x, y, 2).unwrap();
        assert!(beam.worst().loss <= true_max);
        for pair in beam.candidates.windows(2) {
            assert!(pair[0].loss >= pair[1].loss);
        }
        for c in &beam.candidates {
            assert!(oracle.strings.contains(&c.tokens.to_vec()));
            assert_eq!(c.loss, m.loss(&c.tokens, y));
        }
        let full = exhaustive_attack(&m, &spec, &x, y, 1, DEFAULT_SPACE_BUDGET).unwrap();
        assert_eq!(full.worst().loss, true_max);
    }
}

#[test]
fn exhaustive_attack_returns_the_whole_space_when_k_is_large() {
    let (spec, _) = load_spec_file(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/nice_swap.toml"),
        &ResourceTables::shipped(),
    )
    .unwrap();
    let x = Alphabet::Char.tokenize("This house is nice");
    let vocab = a3t::data::Vocabulary::from_tokens("abcdefghijklmnopqrstuvwxyz ".chars().map(String::from));
    let m = common::tiny_model(vocab, 2, 24, 4, vec![]);
    let r = exhaustive_attack(&m, &spec, &x, 0, 100, DEFAULT_SPACE_BUDGET).unwrap();
    assert_eq!(r.candidates.len(), 6);
    for pair in r.candidates.windows(2) {
        assert!(pair[0].loss >= pair[1].loss);
    }
    let got: BTreeSet<_> = r.candidates.iter().map(|c| c.tokens.clone()).collect();
    let want: BTreeSet<_> = enumerate_space(&spec, &x, None).collect();
    assert_eq!(got, want);
}

#[test]
fn attacks_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for i in 0..20 {
        let (spec, x) = instance(&mut rng);
        let m = model(i);
        assert_eq!(hotflip_beam(&m, &spec, &x, 1, 3).unwrap(), hotflip_beam(&m, &spec, &x, 1, 3).unwrap());
    }
}

fn random_dataset(rng: &mut ChaCha8Rng, spec: &TransformSpec, n: usize) -> Dataset {
    let examples = (0..n)
        .map(|_| loop {
            let x = common::random_string(rng, 7);
            if find_matches(spec, &x).len() <= 10 {
                break Example { tokens: x.into(), label: rng.gen_range(0..2) };
            }
        })
        .collect();
    Dataset::new(Alphabet::Char, 2, examples).unwrap()
}

#[test]
fn metric_ordering_and_independent_recount() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for i in 0..15 {
        let spec = common::random_spec(&mut rng, false, 2);
        let data = random_dataset(&mut rng, &spec, 30);
        let m = model(100 + i);

        let normal = normal_accuracy(&m, &data);
        let hf = hotflip_accuracy(&m, &spec, &data, 3).unwrap();
        let ex = exhaustive_accuracy(&m, &spec, &data, DEFAULT_SPACE_BUDGET);
        assert_eq!(ex.skipped, 0);
        assert!(ex.accuracy <= hf && hf <= normal && normal <= 1.0);

        // Recount without short-circuiting, from the brute-force space.
        let robust = data
            .iter()
            .filter(|e| {
                oracle_enumerate(&spec, &e.tokens, 12)
                    .unwrap()
                    .strings
                    .iter()
                    .all(|z| m.predict(z) == e.label)
            })
            .count();
        assert_eq!(ex.accuracy, robust as f64 / data.len() as f64);

        let survivors = data
            .iter()
            .filter(|e| {
                let r = hotflip_beam(&m, &spec, &e.tokens, e.label, 3).unwrap();
                m.predict(&e.tokens) == e.label && r.candidates.iter().all(|c| m.predict(&c.tokens) == e.label)
            })
            .count();
        assert_eq!(hf, survivors as f64 / data.len() as f64);
    }
}

#[test]
fn zero_budgets_reduce_every_metric_to_normal_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let spec = common::random_spec(&mut rng, false, 2);
    let data = random_dataset(&mut rng, &spec, 40);
    let frozen = spec.map_budgets(|_, _| 0);
    let m = model(7);
    let normal = normal_accuracy(&m, &data);
    assert_eq!(hotflip_accuracy(&m, &frozen, &data, 3).unwrap(), normal);
    assert_eq!(exhaustive_accuracy(&m, &frozen, &data, 10).accuracy, normal);
}

#[test]
fn a_model_that_always_answers_wrong_scores_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let spec = common::random_spec(&mut rng, false, 1);
    let mut data = random_dataset(&mut rng, &spec, 20);
    data.examples.iter_mut().for_each(|e| e.label = 0);
    let mut m = model(8);
    // Class 1 always wins by a wide margin.
    let last = m.layers.len() - 1;
    if let Layer::Linear(l) = &mut m.layers[last] {
        l.weight.iter_mut().for_each(|w| *w = 0.0);
        l.bias = vec![-5.0, 5.0];
    }
    assert_eq!(exhaustive_accuracy(&m, &spec, &data, DEFAULT_SPACE_BUDGET).accuracy, 0.0);
    assert!(!survives_hotflip(&m, &spec, &data.examples[0].tokens, 0, 2).unwrap());
}

#[test]
fn oversized_spaces_are_skipped_not_guessed() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let spec = common::random_spec(&mut rng, false, 2);
    let data = random_dataset(&mut rng, &spec, 20);
    let m = model(9);
    let ex = exhaustive_accuracy(&m, &spec, &data, 1);
    let robust = ex.verdicts.iter().filter(|v| **v == Verdict::Robust).count();
    assert_eq!(ex.evaluated + ex.skipped, data.len());
    assert!(ex.skipped > 0);
    // A budget of one only admits x itself: refuted when x is wrong, skipped otherwise.
    for (v, e) in ex.verdicts.iter().zip(data.iter()) {
        let single = enumerate_space(&spec, &e.tokens, None).count() == 1;
        match v {
            Verdict::Robust => assert!(single),
            Verdict::Refuted { witness } => assert_ne!(m.predict(witness), e.label),
            Verdict::Skipped => assert!(!single),
        }
    }
    assert_eq!(robust + ex.verdicts.iter().filter(|v| matches!(v, Verdict::Refuted { .. })).count(), ex.evaluated);
}

#[test]
fn report_is_reproducible_and_witnesses_hold_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    let spec = common::random_spec(&mut rng, false, 2);
    let data = random_dataset(&mut rng, &spec, 30);
    let m = model(10);
    let config = EvalConfig { beam_k: 3, ..EvalConfig::default() };
    let a = run_report(&m, &spec, &data, &config).unwrap();
    let b = run_report(&m, &spec, &data, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.exhaustive_accuracy <= a.hotflip_accuracy && a.hotflip_accuracy <= a.normal_accuracy);
    for (r, e) in a.per_example.iter().zip(data.iter()) {
        if let Some(w) = &r.witness {
            let z = Alphabet::Char.tokenize(w);
            assert!(enumerate_space(&spec, &e.tokens, None).any(|s| s == z));
            assert_ne!(m.predict(&z), e.label);
        }
        if let Some(plans) = &r.plan_count {
            assert_eq!(plans.parse::<BigUint>().unwrap(), count_plans(&spec, &e.tokens).unwrap());
        }
    }
}
