//! Concrete adversaries over a perturbation space.
//!
//! [`hotflip_beam`] grows match plans one application at a time. Children whose
//! replacement keeps the span length are ranked by the first-order estimate
//! `L(cur) + <∇_E L(cur), E(child) − E(cur)>`; length-changing children get a real forward
//! pass since their positions no longer line up. The top `k` children by score survive each
//! round and are re-scored with the true loss. [`exhaustive_attack`] evaluates the whole
//! space.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::dsl::{TokenString, TransformSpec};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::perturb::{enumerate_space, materialize, splice, Application, MatchPlan, MatchTable};

/// Default cap on the number of distinct strings an exhaustive search may visit.
pub const DEFAULT_SPACE_BUDGET: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub tokens: TokenString,
    pub loss: f64,
}

/// Top-k perturbed strings by descending loss, plus search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub candidates: Vec<Candidate>,
    pub nodes_expanded: usize,
    pub forward_passes: usize,
}

impl AttackResult {
    /// The highest-loss candidate. Results always hold at least one.
    pub fn worst(&self) -> &Candidate {
        &self.candidates[0]
    }
}

/// A plan as sorted `(match index, replacement index)` pairs into a [`MatchTable`].
type PlanKey = Vec<(usize, usize)>;

struct Node {
    key: PlanKey,
    tokens: TokenString,
    loss: f64,
    used: Vec<usize>,
}

fn plan_of(table: &MatchTable, key: &PlanKey) -> MatchPlan {
    MatchPlan::new(
        key.iter()
            .map(|&(mi, ri)| Application {
                at: table.matches[mi],
                replacement: table.replacements[mi][ri].clone(),
            })
            .collect(),
    )
}

fn spliced(x: &[String], table: &MatchTable, key: &PlanKey) -> TokenString {
    splice(
        x,
        key.iter()
            .map(|&(mi, ri)| (table.matches[mi], table.replacements[mi][ri].as_slice())),
    )
}

pub fn hotflip_beam(model: &Model, spec: &TransformSpec, x: &[String], label: usize, k: usize) -> Result<AttackResult> {
    if label >= model.classes {
        return Err(Error::Config(format!("label {label} out of range")));
    }
    let k = k.max(1);
    let table = MatchTable::build(spec, x);
    let budgets: Vec<usize> = spec.rules().iter().map(|r| r.delta).collect();
    let embed = |t: &str| model.embedding.row(model.vocab.id(t));

    let root = Node {
        key: Vec::new(),
        tokens: TokenString::new(x.to_vec()),
        loss: model.loss(x, label),
        used: vec![0; budgets.len()],
    };
    let mut forward_passes = 1;
    let mut nodes_expanded = 0;
    let mut pool: Vec<(PlanKey, Candidate)> = vec![(
        Vec::new(),
        Candidate {
            tokens: root.tokens.clone(),
            loss: root.loss,
        },
    )];
    let mut pooled: HashSet<TokenString> = HashSet::from([root.tokens.clone()]);
    let mut beam = vec![root];
    let rounds = spec.total_budget().min(table.matches.len());

    for _ in 0..rounds {
        let mut seen: HashSet<PlanKey> = HashSet::new();
        // (score, exact, key, tokens, used)
        let mut children: Vec<(f64, bool, PlanKey, TokenString, Vec<usize>)> = Vec::new();
        for node in &beam {
            nodes_expanded += 1;
            let mut grad = None;
            for (mi, m) in table.matches.iter().enumerate() {
                if node.used[m.rule] >= budgets[m.rule]
                    || node.key.iter().any(|&(j, _)| j == mi || table.matches[j].overlaps(m))
                {
                    continue;
                }
                // Shift from earlier length-changing applications.
                let offset: isize = node
                    .key
                    .iter()
                    .filter(|&&(j, _)| table.matches[j].start < m.start)
                    .map(|&(j, r)| table.replacements[j][r].len() as isize - table.matches[j].len() as isize)
                    .sum();
                for (ri, rep) in table.replacements[mi].iter().enumerate() {
                    let mut key = node.key.clone();
                    key.push((mi, ri));
                    key.sort_unstable();
                    if !seen.insert(key.clone()) {
                        continue;
                    }
                    let tokens = spliced(x, &table, &key);
                    let mut used = node.used.clone();
                    used[m.rule] += 1;
                    if rep.len() == m.len() {
                        let g = grad.get_or_insert_with(|| model.loss_and_input_grads(&node.tokens, label).2);
                        let mut score = node.loss;
                        for (t, new) in rep.iter().enumerate() {
                            let pos = m.start as isize + t as isize + offset;
                            if pos < 0 || pos as usize >= g.len {
                                continue;
                            }
                            let pos = pos as usize;
                            let (e_new, e_old) = (embed(new), embed(&node.tokens[pos]));
                            score += g
                                .row(pos)
                                .iter()
                                .zip(e_new.iter().zip(e_old))
                                .map(|(gv, (a, b))| gv * (a - b))
                                .sum::<f64>();
                        }
                        children.push((score, false, key, tokens, used));
                    } else {
                        forward_passes += 1;
                        let loss = model.loss(&tokens, label);
                        children.push((loss, true, key, tokens, used));
                    }
                }
            }
        }
        if children.is_empty() {
            break;
        }
        // Stable: ties keep generation order (beam node, position, rule, replacement).
        children.sort_by(|a, b| b.0.total_cmp(&a.0));
        children.truncate(k);
        let mut next = Vec::with_capacity(children.len());
        for (score, exact, key, tokens, used) in children {
            let loss = if exact {
                score
            } else {
                forward_passes += 1;
                model.loss(&tokens, label)
            };
            if pooled.insert(tokens.clone()) {
                pool.push((
                    key.clone(),
                    Candidate {
                        tokens: tokens.clone(),
                        loss,
                    },
                ));
            }
            next.push(Node {
                key,
                tokens,
                loss,
                used,
            });
        }
        next.sort_by(|a, b| b.loss.total_cmp(&a.loss));
        beam = next;
    }

    pool.sort_by(|a, b| b.1.loss.total_cmp(&a.1.loss));
    pool.truncate(k);
    let mut candidates = Vec::with_capacity(pool.len());
    for (key, c) in pool {
        let check = materialize(spec, x, &plan_of(&table, &key))?;
        if check != c.tokens {
            return Err(Error::InvalidPlan("attack produced a string outside the space".into()));
        }
        candidates.push(c);
    }
    Ok(AttackResult {
        candidates,
        nodes_expanded,
        forward_passes,
    })
}

/// Evaluates every string of `S(x)` and returns the `k` with the highest loss.
///
/// Fails with [`Error::SpaceTooLarge`] when the space holds more than `budget` strings.
pub fn exhaustive_attack(
    model: &Model,
    spec: &TransformSpec,
    x: &[String],
    label: usize,
    k: usize,
    budget: usize,
) -> Result<AttackResult> {
    if label >= model.classes {
        return Err(Error::Config(format!("label {label} out of range")));
    }
    let space: Vec<TokenString> = enumerate_space(spec, x, Some(budget.saturating_add(1))).collect();
    if space.len() > budget {
        return Err(Error::SpaceTooLarge {
            what: "strings",
            bound: budget as u128,
        });
    }
    let forward_passes = space.len();
    let mut candidates: Vec<Candidate> = space
        .into_iter()
        .map(|tokens| Candidate {
            loss: model.loss(&tokens, label),
            tokens,
        })
        .collect();
    candidates.sort_by(|a, b| b.loss.total_cmp(&a.loss));
    candidates.truncate(k.max(1));
    Ok(AttackResult {
        candidates,
        nodes_expanded: forward_passes,
        forward_passes,
    })
}

/// True when `x` and every beam candidate are classified as `label`.
pub fn survives_hotflip(model: &Model, spec: &TransformSpec, x: &[String], label: usize, k: usize) -> Result<bool> {
    if model.predict(x) != label {
        return Ok(false);
    }
    let r = hotflip_beam(model, spec, x, label, k)?;
    Ok(r.candidates.iter().all(|c| model.predict(&c.tokens) == label))
}

/// Fraction of examples that survive the beam attack.
pub fn hotflip_accuracy(model: &Model, spec: &TransformSpec, dataset: &Dataset, k: usize) -> Result<f64> {
    let outcomes: Vec<bool> = dataset
        .examples
        .par_iter()
        .map(|e| survives_hotflip(model, spec, &e.tokens, e.label, k))
        .collect::<Result<_>>()?;
    Ok(outcomes.iter().filter(|&&ok| ok).count() as f64 / outcomes.len() as f64)
}
