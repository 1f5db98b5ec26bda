//! Draw random perturbations the way random augmentation does.
//!
//! Each rule in turn picks uniformly among the strings of its own space around the current
//! string, and passes the result on. With one rule that is a uniform draw from the space.
//! With several, later rules see earlier rewrites, so some draws land outside the space
//! that applies every rule to the original string at once.

use std::collections::{BTreeMap, BTreeSet};

use a3t::data::synthetic;
use a3t::dsl::{Alphabet, Builtin, ResourceTables, TransformSpec, STOP_WORDS_EXAMPLE};
use a3t::perturb::{enumerate_space, sample_sequential_with};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tally(spec: &TransformSpec, text: &str, draws: usize) {
    let alphabet = spec.alphabet();
    let x = alphabet.tokenize(text);
    let space: BTreeSet<String> = enumerate_space(spec, &x, None).map(|z| z.to_text(alphabet)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..draws {
        *counts.entry(sample_sequential_with(spec, &x, &mut rng).to_text(alphabet)).or_default() += 1;
    }
    println!("`{text}`: {} strings in the space, {draws} draws", space.len());
    for (z, n) in &counts {
        let mark = if space.contains(z) { "" } else { "  (outside the space)" };
        println!("  {z:<20} {:.4}{mark}", *n as f64 / draws as f64);
    }
}

fn main() -> a3t::Result<()> {
    let resources = ResourceTables::shipped();
    let stop = Builtin::DelStop.rule_with(&resources, Some(STOP_WORDS_EXAMPLE))?;
    tally(&TransformSpec::from_rules(Alphabet::Word, [(stop, 1)])?, "They are at school", 10_000);
    tally(&synthetic::spec(), "acbd", 10_000);
    Ok(())
}
