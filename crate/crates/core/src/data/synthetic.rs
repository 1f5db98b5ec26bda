//! A small char-level robustness task with a spurious feature.
//!
//! Strings over `a..j`. The label is 1 when the string holds more `{a, b}` than `{c, d}`.
//! In the training distribution positives mostly use `a` and negatives mostly use `b`, so a
//! classifier can latch onto `a` vs `b` instead of counting. The perturbation space swaps
//! adjacent characters and substitutes keyboard-style neighbours from the pairs
//! `a-b, c-d, e-f, g-h, i-j`; none of these moves change the label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Example, Vocabulary};
use crate::dsl::{Alphabet, Builtin, ResourceTables, SubstitutionTable, TransformSpec};

pub const LETTERS: [&str; 10] = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
pub const ADJACENCY: &str = "pairs";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub examples: usize,
    pub length: usize,
    /// Inclusive range of the minority-group count.
    pub min_count: usize,
    pub max_count: usize,
    /// Probability that an `{a, b}` token follows the label's preferred letter.
    pub spurious: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            examples: 600,
            length: 10,
            min_count: 1,
            max_count: 3,
            spurious: 0.9,
            seed: 0,
        }
    }
}

/// Neighbour table pairing `a-b, c-d, e-f, g-h, i-j`.
pub fn adjacency_table() -> SubstitutionTable {
    let mut t = SubstitutionTable::new();
    for pair in LETTERS.chunks(2) {
        t.insert(pair[0], [pair[1].to_owned()]);
        t.insert(pair[1], [pair[0].to_owned()]);
    }
    t
}

pub fn resources() -> ResourceTables {
    let mut r = ResourceTables::new();
    r.add_table(ADJACENCY, adjacency_table());
    r
}

/// `{(SwapPair, 1), (SubAdj, 1)}` over the pair table.
pub fn spec() -> TransformSpec {
    let r = resources();
    let swap = Builtin::SwapPair.rule(&r).expect("SwapPair needs no resources");
    let sub = Builtin::SubAdj
        .rule_with(&r, Some(ADJACENCY))
        .expect("pair table registered above");
    TransformSpec::from_rules(Alphabet::Char, [(swap, 1), (sub, 1)]).expect("valid rules")
}

pub fn vocabulary() -> Vocabulary {
    Vocabulary::from_tokens(LETTERS)
}

pub fn generate(config: &SyntheticConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut examples = Vec::with_capacity(config.examples);
    for _ in 0..config.examples {
        let label = rng.gen_range(0..2usize);
        let minority = rng.gen_range(config.min_count..=config.max_count);
        let (n_ab, n_cd) = if label == 1 {
            (minority + 1, minority)
        } else {
            (minority, minority + 1)
        };
        let preferred = if label == 1 { "a" } else { "b" };
        let other = if label == 1 { "b" } else { "a" };
        let mut tokens: Vec<String> = Vec::with_capacity(config.length);
        for _ in 0..n_ab {
            let t = if rng.gen_bool(config.spurious) { preferred } else { other };
            tokens.push(t.to_owned());
        }
        for _ in 0..n_cd {
            tokens.push(["c", "d"][rng.gen_range(0..2)].to_owned());
        }
        while tokens.len() < config.length {
            tokens.push(LETTERS[rng.gen_range(4..10)].to_owned());
        }
        tokens.shuffle(&mut rng);
        examples.push(Example {
            tokens: tokens.into(),
            label,
        });
    }
    Dataset::new(Alphabet::Char, 2, examples).expect("labels are 0 or 1")
}

/// True label by counting, independent of how the example was generated.
pub fn label_of(tokens: &[String]) -> usize {
    let ab = tokens.iter().filter(|t| *t == "a" || *t == "b").count();
    let cd = tokens.iter().filter(|t| *t == "c" || *t == "d").count();
    usize::from(ab > cd)
}
