//! Shared generators for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use a3t::data::synthetic::{self, SyntheticConfig};
use a3t::data::{Dataset, Vocabulary};
use a3t::dsl::{
    Alphabet, NamedClass, NamedTable, Replacer, SubstitutionTable, TokenPattern, TokenPredicate, TransformRule,
    TransformSpec,
};
use a3t::nn::{ArchConfig, Model};
use rand::seq::SliceRandom;
use rand::Rng;

pub const LETTERS: [&str; 4] = ["a", "b", "c", "d"];

pub fn random_string<R: Rng>(rng: &mut R, max_len: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| LETTERS.choose(rng).unwrap().to_string()).collect()
}

fn random_table<R: Rng>(rng: &mut R, same_length: bool) -> NamedTable {
    let mut t = SubstitutionTable::new();
    for key in LETTERS {
        if rng.gen_bool(0.6) {
            let n = rng.gen_range(1..=2);
            let values: Vec<String> = (0..n)
                .map(|_| {
                    let len = if same_length { 1 } else { rng.gen_range(1..=2) };
                    (0..len).map(|_| *LETTERS.choose(rng).unwrap()).collect()
                })
                .collect();
            t.insert(key, values);
        }
    }
    NamedTable {
        name: "t".into(),
        table: Arc::new(t),
    }
}

fn random_predicate<R: Rng>(rng: &mut R) -> TokenPredicate {
    match rng.gen_range(0..3) {
        0 => TokenPredicate::AnyToken,
        1 => TokenPredicate::TokenInSet(
            LETTERS.iter().filter(|_| rng.gen_bool(0.5)).map(|s| s.to_string()).collect(),
        ),
        _ => TokenPredicate::TokenClass(NamedClass {
            name: "c".into(),
            tokens: Arc::new(BTreeSet::from([LETTERS.choose(rng).unwrap().to_string()])),
        }),
    }
}

/// A random char-level rule. Length-preserving rules only when `preserving` is set.
pub fn random_rule<R: Rng>(rng: &mut R, index: usize, preserving: bool) -> TransformRule {
    let kinds = if preserving { 2 } else { 5 };
    let (pattern, replacer) = match rng.gen_range(0..kinds) {
        0 => (vec![random_predicate(rng), random_predicate(rng)], Replacer::Swap),
        1 => {
            let t = random_table(rng, true);
            (vec![TokenPredicate::TableKey(t.clone())], Replacer::SubstituteFromTable(t))
        }
        2 => (vec![random_predicate(rng)], Replacer::Delete),
        3 => (vec![random_predicate(rng)], Replacer::DuplicateToken),
        _ => {
            let t = random_table(rng, false);
            if rng.gen_bool(0.5) {
                (vec![TokenPredicate::TableKey(t.clone())], Replacer::InsertFromTable(t))
            } else {
                (vec![TokenPredicate::TableKey(t.clone())], Replacer::SubstituteFromTable(t))
            }
        }
    };
    TransformRule::custom(
        format!("r{index}"),
        Alphabet::Char,
        TokenPattern::new(pattern).unwrap(),
        replacer,
    )
    .unwrap()
}

pub fn random_spec<R: Rng>(rng: &mut R, preserving: bool, max_delta: usize) -> TransformSpec {
    let n = rng.gen_range(1..=3);
    let rules: Vec<(TransformRule, usize)> = (0..n)
        .map(|i| (random_rule(rng, i, preserving), rng.gen_range(0..=max_delta)))
        .collect();
    TransformSpec::from_rules(Alphabet::Char, rules).unwrap()
}

pub fn letters_vocabulary() -> Vocabulary {
    Vocabulary::from_tokens(LETTERS)
}

/// A small random model over `vocab`; parameter count stays well under 5k.
pub fn tiny_model(vocab: Vocabulary, classes: usize, max_len: usize, seed: u64, hidden: Vec<usize>) -> Model {
    let arch = ArchConfig {
        embed_dim: 3,
        kernels: 3,
        width: 3,
        pool: 2,
        hidden,
    };
    Model::new(&arch, Alphabet::Char, vocab, classes, max_len, seed).unwrap()
}

pub fn synthetic_split(examples: usize, seed: u64) -> Dataset {
    synthetic::generate(&SyntheticConfig {
        examples,
        spurious: 0.95,
        seed,
        ..SyntheticConfig::default()
    })
}

pub fn desk_arch() -> ArchConfig {
    ArchConfig {
        embed_dim: 8,
        kernels: 8,
        width: 3,
        pool: 5,
        hidden: vec![],
    }
}

/// `|a − n| ≤ rel·max(|a|, |n|) + abs`.
pub fn close(a: f64, n: f64, rel: f64, abs: f64) -> bool {
    (a - n).abs() <= rel * a.abs().max(n.abs()) + abs
}
