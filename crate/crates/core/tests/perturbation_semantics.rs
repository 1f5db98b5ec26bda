mod common;

use std::collections::BTreeSet;

use a3t::dsl::{Alphabet, Builtin, ResourceTables, TransformSpec, STOP_WORDS_EXAMPLE};
use a3t::perturb::{
    count_plans, enumerate_space, find_matches, materialize, oracle_enumerate, sample_sequential, sample_sequential_with,
    MatchPlan,
};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Draws `(spec, x)` pairs until one has at most 12 matches.
fn instance(rng: &mut ChaCha8Rng, preserving: bool) -> (TransformSpec, Vec<String>) {
    loop {
        let spec = common::random_spec(rng, preserving, 2);
        let x = common::random_string(rng, 7);
        if find_matches(&spec, &x).len() <= 12 {
            return (spec, x);
        }
    }
}

fn space(spec: &TransformSpec, x: &[String]) -> BTreeSet<Vec<String>> {
    enumerate_space(spec, x, None).map(|z| z.into_vec()).collect()
}

#[test]
fn enumeration_and_counting_agree_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..250 {
        let (spec, x) = instance(&mut rng, false);
        let oracle = oracle_enumerate(&spec, &x, 12).unwrap();
        let listed: Vec<_> = enumerate_space(&spec, &x, None).collect();
        let distinct: BTreeSet<Vec<String>> = listed.iter().map(|z| z.to_vec()).collect();
        assert_eq!(listed.len(), distinct.len(), "duplicates in enumeration");
        assert_eq!(distinct, oracle.strings, "x = {x:?}");
        assert_eq!(count_plans(&spec, &x).unwrap(), BigUint::from(oracle.plan_count));
    }
}

#[test]
fn larger_budgets_never_shrink_the_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (spec, x) = instance(&mut rng, false);
        let bumped: Vec<usize> = spec.rules().iter().map(|_| rng.gen_range(0..=1)).collect();
        let bigger = spec.map_budgets(|i, d| d + bumped[i]);
        assert!(space(&spec, &x).is_subset(&space(&bigger, &x)));
    }
}

#[test]
fn input_is_always_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let (spec, x) = instance(&mut rng, false);
        assert_eq!(enumerate_space(&spec, &x, None).next().unwrap().to_vec(), x);
    }
}

#[test]
fn empty_string_has_a_single_plan() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let spec = common::random_spec(&mut rng, false, 2);
        assert_eq!(count_plans(&spec, &[]).unwrap(), BigUint::from(1u8));
        assert_eq!(space(&spec, &[]), BTreeSet::from([vec![]]));
    }
}

#[test]
fn overlapping_plans_are_rejected() {
    let r = ResourceTables::shipped();
    let spec = TransformSpec::from_rules(Alphabet::Char, [(Builtin::SwapPair.rule(&r).unwrap(), 2)]).unwrap();
    let x = Alphabet::Char.tokenize("abc");
    let m = find_matches(&spec, &x);
    let plan = MatchPlan::new(
        m.iter()
            .map(|&at| a3t::perturb::Application {
                at,
                replacement: vec![x[at.end].clone(), x[at.start].clone()],
            })
            .collect(),
    );
    assert!(materialize(&spec, &x, &plan).is_err());
}

/// Chi-square with 2 degrees of freedom; 13.8 is the 0.001 critical value.
#[test]
fn single_rule_sampler_is_uniform() {
    let r = ResourceTables::shipped();
    let stop = Builtin::DelStop.rule_with(&r, Some(STOP_WORDS_EXAMPLE)).unwrap();
    let spec = TransformSpec::from_rules(Alphabet::Word, [(stop, 1)]).unwrap();
    let x = Alphabet::Word.tokenize("They are at school");
    let outcomes: Vec<_> = enumerate_space(&spec, &x, None).collect();
    assert_eq!(outcomes.len(), 3);
    let mut counts = [0usize; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 10_000;
    for _ in 0..draws {
        let z = sample_sequential_with(&spec, &x, &mut rng);
        counts[outcomes.iter().position(|o| *o == z).expect("sample in space")] += 1;
    }
    let expected = draws as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 13.8, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn sampler_with_zero_budgets_returns_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for seed in 0..20 {
        let (spec, x) = instance(&mut rng, false);
        let frozen = spec.map_budgets(|_, _| 0);
        assert_eq!(sample_sequential(&frozen, &x, seed).to_vec(), x);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampler_is_deterministic(seed in any::<u64>(), spec_seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(spec_seed);
        let (spec, x) = instance(&mut rng, false);
        prop_assert_eq!(sample_sequential(&spec, &x, seed), sample_sequential(&spec, &x, seed));
    }

    #[test]
    fn every_enumerated_string_comes_from_a_valid_plan(spec_seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(spec_seed);
        let (spec, x) = instance(&mut rng, false);
        let oracle = oracle_enumerate(&spec, &x, 12).unwrap();
        for z in enumerate_space(&spec, &x, None) {
            prop_assert!(oracle.strings.contains(&z.to_vec()));
        }
    }

    #[test]
    fn limit_truncates_the_stream(spec_seed in 0u64..10_000, limit in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(spec_seed);
        let (spec, x) = instance(&mut rng, false);
        let all: Vec<_> = enumerate_space(&spec, &x, None).collect();
        let some: Vec<_> = enumerate_space(&spec, &x, Some(limit)).collect();
        prop_assert_eq!(&all[..limit.min(all.len())], &some[..]);
    }
}

