//! Brute-force reference semantics for the perturbation space.
//!
//! Independent of the enumerator: matches are found by trying every span against every rule,
//! then every subset of matches and every combination of replacements is tried, and invalid
//! plans are filtered afterwards. Exponential; only for small instances.

use std::collections::BTreeSet;

use crate::dsl::TransformSpec;
use crate::error::{Error, Result};

/// Upper bound on the number of matches the oracle accepts by default.
pub const DEFAULT_ORACLE_MATCH_BOUND: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSpace {
    pub strings: BTreeSet<Vec<String>>,
    /// Number of valid plans, including the empty plan.
    pub plan_count: u128,
}

struct Found {
    start: usize,
    end: usize,
    rule: usize,
    replacements: Vec<Vec<String>>,
}

pub fn oracle_enumerate(spec: &TransformSpec, x: &[String], max_matches: usize) -> Result<OracleSpace> {
    let limit = spec.prefix_len().map_or(x.len(), |p| p.min(x.len()));
    let mut found = Vec::new();
    for (rule, rb) in spec.rules().iter().enumerate() {
        for start in 0..x.len() {
            for end in start..x.len() {
                if end >= limit {
                    continue;
                }
                let span = &x[start..=end];
                if rb.rule.pattern.matches(span) {
                    found.push(Found {
                        start,
                        end,
                        rule,
                        replacements: rb.rule.replacer.apply(span, rb.rule.alphabet),
                    });
                }
            }
        }
    }
    if found.len() > max_matches {
        return Err(Error::SpaceTooLarge {
            what: "matches for the oracle",
            bound: max_matches as u128,
        });
    }

    let mut strings = BTreeSet::new();
    let mut plan_count = 0u128;
    for mask in 0u64..(1u64 << found.len()) {
        let mut chosen: Vec<&Found> = (0..found.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| &found[i])
            .collect();
        chosen.sort_by_key(|f| f.start);
        let disjoint = chosen.windows(2).all(|w| w[0].end < w[1].start);
        let within_budget = spec
            .rules()
            .iter()
            .enumerate()
            .all(|(j, rb)| chosen.iter().filter(|f| f.rule == j).count() <= rb.delta);
        if !disjoint || !within_budget {
            continue;
        }
        // Odometer over replacement choices.
        let mut choice = vec![0usize; chosen.len()];
        if chosen.iter().any(|f| f.replacements.is_empty()) {
            continue;
        }
        loop {
            let mut y = Vec::new();
            let mut cursor = 0;
            for (f, &c) in chosen.iter().zip(&choice) {
                y.extend_from_slice(&x[cursor..f.start]);
                y.extend(f.replacements[c].iter().cloned());
                cursor = f.end + 1;
            }
            y.extend_from_slice(&x[cursor..]);
            strings.insert(y);
            plan_count += 1;

            let mut k = 0;
            loop {
                if k == choice.len() {
                    break;
                }
                choice[k] += 1;
                if choice[k] < chosen[k].replacements.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() {
                break;
            }
        }
    }
    Ok(OracleSpace { strings, plan_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Alphabet, Builtin, ResourceTables};

    #[test]
    fn empty_string_gives_only_itself() {
        let spec = TransformSpec::from_rules(
            Alphabet::Char,
            [(Builtin::Del.rule(&ResourceTables::new()).unwrap(), 2)],
        )
        .unwrap();
        let o = oracle_enumerate(&spec, &[], 8).unwrap();
        assert_eq!(o.strings, BTreeSet::from([Vec::<String>::new()]));
        assert_eq!(o.plan_count, 1);
    }

    #[test]
    fn match_bound_is_enforced() {
        let spec = TransformSpec::from_rules(
            Alphabet::Char,
            [(Builtin::Del.rule(&ResourceTables::new()).unwrap(), 1)],
        )
        .unwrap();
        let x = Alphabet::Char.tokenize("abcdef");
        assert!(oracle_enumerate(&spec, &x, 3).is_err());
    }
}
