use num_bigint::BigUint;

use super::MatchTable;
use crate::dsl::TransformSpec;
use crate::error::{Error, Result};

/// Default cap on `positions × budget-vectors` DP states.
pub const DEFAULT_STATE_BOUND: u128 = 10_000_000;

/// Number of valid match plans (the empty plan included), without enumerating them.
///
/// Plans, not distinct strings: two plans that happen to produce the same string both count.
pub fn count_plans(spec: &TransformSpec, x: &[String]) -> Result<BigUint> {
    count_plans_with_bound(spec, x, DEFAULT_STATE_BOUND)
}

pub fn count_plans_with_bound(spec: &TransformSpec, x: &[String], state_bound: u128) -> Result<BigUint> {
    let table = MatchTable::build(spec, x);
    let n_rules = spec.rules().len();

    // A rule can never be used more often than it matches.
    let mut caps = vec![0usize; n_rules];
    for m in &table.matches {
        caps[m.rule] += 1;
    }
    for (cap, rb) in caps.iter_mut().zip(spec.rules()) {
        *cap = (*cap).min(rb.delta);
    }

    // Mixed-radix encoding of residual budget vectors.
    let mut strides = vec![1usize; n_rules];
    let mut n_budgets: u128 = 1;
    for j in 0..n_rules {
        strides[j] = n_budgets as usize;
        n_budgets *= caps[j] as u128 + 1;
    }
    let positions = x.len() as u128 + 1;
    if positions.saturating_mul(n_budgets) > state_bound {
        return Err(Error::SpaceTooLarge {
            what: "DP states",
            bound: state_bound,
        });
    }
    let n_budgets = n_budgets as usize;

    let mut by_start: Vec<Vec<usize>> = vec![Vec::new(); x.len()];
    for (i, m) in table.matches.iter().enumerate() {
        by_start[m.start].push(i);
    }

    // ways[pos][b]: plans using only matches that start at or after `pos`, with residual budget b.
    let mut ways: Vec<Vec<BigUint>> = vec![Vec::new(); x.len() + 1];
    ways[x.len()] = vec![BigUint::from(1u32); n_budgets];
    for pos in (0..x.len()).rev() {
        let mut row = ways[pos + 1].clone();
        for (b, slot) in row.iter_mut().enumerate() {
            for &mi in &by_start[pos] {
                let m = table.matches[mi];
                let residual = (b / strides[m.rule]) % (caps[m.rule] + 1);
                if residual == 0 {
                    continue;
                }
                let choices = table.replacements[mi].len() as u32;
                let rest = &ways[m.end + 1][b - strides[m.rule]];
                *slot += rest * choices;
            }
        }
        ways[pos] = row;
    }
    Ok(ways[0][n_budgets - 1].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Alphabet, Builtin, ResourceTables, STOP_WORDS_EXAMPLE};

    #[test]
    fn stop_words_delta_two_has_four_plans() {
        let r = ResourceTables::shipped();
        let rule = Builtin::DelStop.rule_with(&r, Some(STOP_WORDS_EXAMPLE)).unwrap();
        let spec = TransformSpec::from_rules(Alphabet::Word, [(rule, 2)]).unwrap();
        let x = Alphabet::Word.tokenize("They are at school");
        assert_eq!(count_plans(&spec, &x).unwrap(), BigUint::from(4u32));
    }

    #[test]
    fn empty_string_has_one_plan() {
        let r = ResourceTables::shipped();
        let spec = TransformSpec::from_rules(Alphabet::Char, [(Builtin::Del.rule(&r).unwrap(), 3)]).unwrap();
        assert_eq!(count_plans(&spec, &[]).unwrap(), BigUint::from(1u32));
    }

    #[test]
    fn swap_pairs_on_three_chars() {
        // Plans: {}, {(0,1)}, {(1,2)}; the two swaps overlap.
        let spec = TransformSpec::from_rules(
            Alphabet::Char,
            [(Builtin::SwapPair.rule(&ResourceTables::new()).unwrap(), 2)],
        )
        .unwrap();
        let x = Alphabet::Char.tokenize("abc");
        assert_eq!(count_plans(&spec, &x).unwrap(), BigUint::from(3u32));
    }

    #[test]
    fn state_bound_is_enforced() {
        let r = ResourceTables::shipped();
        let spec = TransformSpec::from_rules(Alphabet::Char, [(Builtin::Del.rule(&r).unwrap(), 5)]).unwrap();
        let x = Alphabet::Char.tokenize("abcdefgh");
        assert!(matches!(
            count_plans_with_bound(&spec, &x, 10),
            Err(Error::SpaceTooLarge { .. })
        ));
    }
}
