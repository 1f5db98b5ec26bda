//! Perturbation-space semantics.
//!
//! A string `y` is in `S(x)` when it arises from `x` by choosing non-overlapping matches of the
//! rules' patterns, at most `δ_j` of them for rule `j`, and replacing each matched span with one
//! of its rule's replacements. Matches are always found in the original string, so a
//! replacement is never itself rewritten.
//!
//! Spans are 0-based and inclusive on both ends.

mod count;
mod enumerate;
pub mod oracle;
mod sample;

use crate::dsl::{TokenString, TransformSpec};
use crate::error::{Error, Result};

pub use count::{count_plans, count_plans_with_bound, DEFAULT_STATE_BOUND};
pub use enumerate::{count_distinct, enumerate_space, single_application_union, SpaceIter};
pub use oracle::{oracle_enumerate, OracleSpace, DEFAULT_ORACLE_MATCH_BOUND};
pub use sample::{sample_sequential, sample_sequential_with};

/// A span `start..=end` of the input accepted by rule `rule`'s pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub rule: usize,
}

impl Match {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Match) -> bool {
        !(self.end < other.start || other.end < self.start)
    }
}

/// One rewrite: a match and the replacement chosen for it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Application {
    pub at: Match,
    pub replacement: Vec<String>,
}

/// A sorted set of non-overlapping applications. One plan materializes one perturbed string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MatchPlan {
    pub applications: Vec<Application>,
}

impl MatchPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(mut applications: Vec<Application>) -> Self {
        applications.sort_by_key(|a| a.at);
        Self { applications }
    }

    pub fn len(&self) -> usize {
        self.applications.len()
    }

    pub fn is_empty(&self) -> bool {
        self.applications.is_empty()
    }

    /// Applications per rule, indexed like the spec's rules.
    pub fn usage(&self, rules: usize) -> Vec<usize> {
        let mut used = vec![0; rules];
        for a in &self.applications {
            if let Some(u) = used.get_mut(a.at.rule) {
                *u += 1;
            }
        }
        used
    }

    /// Checks every semantic condition: valid matches, order, non-overlap, budgets, and
    /// replacement membership.
    pub fn validate(&self, spec: &TransformSpec, x: &[String]) -> Result<()> {
        let rules = spec.rules();
        for (i, app) in self.applications.iter().enumerate() {
            let m = app.at;
            if m.end < m.start || m.end >= x.len() {
                return Err(Error::InvalidPlan(format!("span {}..={} out of bounds", m.start, m.end)));
            }
            let Some(rb) = rules.get(m.rule) else {
                return Err(Error::InvalidPlan(format!("unknown rule index {}", m.rule)));
            };
            if spec.prefix_len().is_some_and(|p| m.end >= p) {
                return Err(Error::InvalidPlan(format!("span {}..={} outside prefix", m.start, m.end)));
            }
            let span = &x[m.start..=m.end];
            if !rb.rule.pattern.matches(span) {
                return Err(Error::InvalidPlan(format!(
                    "span {}..={} is not a match of `{}`",
                    m.start, m.end, rb.rule.name
                )));
            }
            if !rb.rule.replacements(span).contains(&app.replacement) {
                return Err(Error::InvalidPlan(format!(
                    "replacement {:?} not produced by `{}`",
                    app.replacement, rb.rule.name
                )));
            }
            if i > 0 && self.applications[i - 1].at.end >= m.start {
                return Err(Error::InvalidPlan("applications overlap or are unsorted".into()));
            }
        }
        for (j, used) in self.usage(rules.len()).into_iter().enumerate() {
            if used > rules[j].delta {
                return Err(Error::InvalidPlan(format!(
                    "rule `{}` applied {used} times with budget {}",
                    rules[j].rule.name, rules[j].delta
                )));
            }
        }
        Ok(())
    }
}

/// Every span accepted by some rule, sorted by `(start, end, rule)`.
pub fn find_matches(spec: &TransformSpec, x: &[String]) -> Vec<Match> {
    let limit = spec.prefix_len().map_or(x.len(), |p| p.min(x.len()));
    let mut out = Vec::new();
    for start in 0..limit {
        for (rule, rb) in spec.rules().iter().enumerate() {
            let end = start + rb.rule.pattern.len() - 1;
            if end < limit && rb.rule.pattern.matches(&x[start..=end]) {
                out.push(Match { start, end, rule });
            }
        }
    }
    out.sort();
    out
}

/// Matches paired with their replacement lists; matches without replacements are dropped.
#[derive(Debug, Clone)]
pub(crate) struct MatchTable {
    pub matches: Vec<Match>,
    pub replacements: Vec<Vec<Vec<String>>>,
}

impl MatchTable {
    pub fn build(spec: &TransformSpec, x: &[String]) -> Self {
        let mut matches = Vec::new();
        let mut replacements = Vec::new();
        for m in find_matches(spec, x) {
            if spec.rules()[m.rule].delta == 0 {
                continue;
            }
            let reps = spec.rules()[m.rule].rule.replacements(&x[m.start..=m.end]);
            if !reps.is_empty() {
                matches.push(m);
                replacements.push(reps);
            }
        }
        Self { matches, replacements }
    }
}

/// Splices `plan` into `x` after validating it against `spec`.
pub fn materialize(spec: &TransformSpec, x: &[String], plan: &MatchPlan) -> Result<TokenString> {
    plan.validate(spec, x)?;
    Ok(splice(x, plan.applications.iter().map(|a| (a.at, a.replacement.as_slice()))))
}

/// Splices sorted, non-overlapping `(match, replacement)` pairs into `x` without validation.
pub(crate) fn splice<'a>(x: &[String], apps: impl IntoIterator<Item = (Match, &'a [String])>) -> TokenString {
    let mut out = Vec::with_capacity(x.len() + 4);
    let mut cursor = 0;
    for (m, rep) in apps {
        out.extend_from_slice(&x[cursor..m.start]);
        out.extend_from_slice(rep);
        cursor = m.end + 1;
    }
    out.extend_from_slice(&x[cursor..]);
    TokenString::new(out)
}
