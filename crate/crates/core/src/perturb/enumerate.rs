use std::collections::HashSet;

use super::{splice, Match, MatchTable};
use crate::dsl::{TokenString, TransformSpec};

/// Lazy stream over the distinct strings of `S(x)`.
///
/// Plans are visited depth-first in lexicographic order of their sorted `(match, replacement)`
/// indices, so the first item is always `x` itself and the order is deterministic.
pub struct SpaceIter {
    x: Vec<String>,
    table: MatchTable,
    budgets: Vec<usize>,
    used: Vec<usize>,
    /// Chosen `(match index, replacement index)` pairs, in match order.
    stack: Vec<(usize, usize)>,
    started: bool,
    done: bool,
    seen: HashSet<TokenString>,
    remaining: Option<usize>,
}

pub fn enumerate_space(spec: &TransformSpec, x: &[String], limit: Option<usize>) -> SpaceIter {
    SpaceIter {
        x: x.to_vec(),
        table: MatchTable::build(spec, x),
        budgets: spec.rules().iter().map(|r| r.delta).collect(),
        used: vec![0; spec.rules().len()],
        stack: Vec::new(),
        started: false,
        done: false,
        seen: HashSet::new(),
        remaining: limit,
    }
}

impl SpaceIter {
    /// First match at or after `from` that can follow the current stack.
    fn next_candidate(&self, from: usize) -> Option<usize> {
        let min_start = self
            .stack
            .last()
            .map_or(0, |&(mi, _)| self.table.matches[mi].end + 1);
        (from..self.table.matches.len()).find(|&i| {
            let m = self.table.matches[i];
            m.start >= min_start && self.used[m.rule] < self.budgets[m.rule]
        })
    }

    fn push(&mut self, mi: usize, ri: usize) {
        self.used[self.table.matches[mi].rule] += 1;
        self.stack.push((mi, ri));
    }

    fn pop(&mut self) -> Option<(usize, usize)> {
        let top = self.stack.pop()?;
        self.used[self.table.matches[top.0].rule] -= 1;
        Some(top)
    }

    /// Moves to the next plan in preorder. Returns false when exhausted.
    fn advance(&mut self) -> bool {
        let from = self.stack.last().map_or(0, |&(mi, _)| mi + 1);
        if let Some(mi) = self.next_candidate(from) {
            self.push(mi, 0);
            return true;
        }
        while let Some((mi, ri)) = self.pop() {
            if ri + 1 < self.table.replacements[mi].len() {
                self.push(mi, ri + 1);
                return true;
            }
            if let Some(next) = self.next_candidate(mi + 1) {
                self.push(next, 0);
                return true;
            }
        }
        false
    }

    fn current(&self) -> TokenString {
        splice(
            &self.x,
            self.stack
                .iter()
                .map(|&(mi, ri)| (self.table.matches[mi], self.table.replacements[mi][ri].as_slice())),
        )
    }
}

impl Iterator for SpaceIter {
    type Item = TokenString;

    fn next(&mut self) -> Option<TokenString> {
        if self.done || self.remaining == Some(0) {
            return None;
        }
        loop {
            if self.started {
                if !self.advance() {
                    self.done = true;
                    return None;
                }
            } else {
                self.started = true;
            }
            let s = self.current();
            if self.seen.insert(s.clone()) {
                if let Some(r) = self.remaining.as_mut() {
                    *r -= 1;
                }
                return Some(s);
            }
        }
    }
}

/// Number of distinct strings in `S(x)`, or `None` if there are more than `limit`.
pub fn count_distinct(spec: &TransformSpec, x: &[String], limit: usize) -> Option<usize> {
    let n = enumerate_space(spec, x, Some(limit.saturating_add(1))).count();
    (n <= limit).then_some(n)
}

/// `T1(x) ∪ ... ∪ Tn(x)`: every string reachable by exactly one application of one rule with
/// a non-zero budget, paired with the application that produced it. May contain duplicates.
pub fn single_application_union(spec: &TransformSpec, x: &[String]) -> Vec<(Match, TokenString)> {
    let table = MatchTable::build(spec, x);
    let mut out = Vec::new();
    for (m, reps) in table.matches.iter().zip(&table.replacements) {
        for r in reps {
            out.push((*m, splice(x, [(*m, r.as_slice())])));
        }
    }
    out
}
