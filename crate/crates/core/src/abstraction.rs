//! Interval over-approximation of a length-preserving perturbation space in embedding space.
//!
//! For a spec with total budget `Δ = δ1 + ... + δn`, every string reachable by one
//! application of one rule gives a point `E(xi)`. Dilating each displacement by `Δ`,
//! `vi = E(x) + Δ·(E(xi) − E(x))`, yields a hull that contains `E(z)` for every `z` in
//! `S(x)`. The box returned here is the elementwise min/max of `E(x)` and the `vi`.
//!
//! Because `vi` differs from `E(x)` only inside its match, the box at position `p` depends
//! only on the tokens that single applications can put at `p`, which is how
//! [`abstract_space`] computes it. [`HullVertexSet`] builds the vertices explicitly.

use std::collections::BTreeSet;

use crate::data::{EmbeddingTable, Vocabulary};
use crate::dsl::TransformSpec;
use crate::error::{Error, Result};
use crate::perturb::{single_application_union, MatchTable};

/// Elementwise bounds over a `(positions, dim)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTensor {
    pub positions: usize,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub const CONTAINMENT_TOLERANCE: f64 = 1e-6;

impl IntervalTensor {
    pub fn new(positions: usize, dim: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != positions * dim || upper.len() != positions * dim {
            return Err(Error::Shape(format!(
                "interval of {positions}x{dim} needs {} bounds",
                positions * dim
            )));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("interval bounds".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Shape("lower bound above upper bound".into()));
        }
        Ok(Self {
            positions,
            dim,
            lower,
            upper,
        })
    }

    /// The degenerate box `[v, v]`.
    pub fn point(positions: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(positions, dim, values.clone(), values)
    }

    pub fn lower_at(&self, p: usize, k: usize) -> f64 {
        self.lower[p * self.dim + k]
    }

    pub fn upper_at(&self, p: usize, k: usize) -> f64 {
        self.upper[p * self.dim + k]
    }

    /// `lower − tol ≤ point ≤ upper + tol` elementwise, with `tol = 1e-6`.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        self.contains_within(point, CONTAINMENT_TOLERANCE)
    }

    pub fn contains_within(&self, point: &[f64], tol: f64) -> Result<bool> {
        if point.len() != self.lower.len() {
            return Err(Error::Shape(format!(
                "point of {} values against a box of {}",
                point.len(),
                self.lower.len()
            )));
        }
        Ok(point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l - tol <= *v && *v <= *u + tol))
    }

    /// True when `other` lies inside `self` elementwise.
    pub fn encloses(&self, other: &IntervalTensor) -> bool {
        self.lower.len() == other.lower.len()
            && self.lower.iter().zip(&other.lower).all(|(a, b)| a <= b)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a >= b)
    }
}

/// Concatenated embedding rows of `tokens`.
pub fn embed_tokens(tokens: &[String], vocab: &Vocabulary, emb: &EmbeddingTable) -> Vec<f64> {
    tokens.iter().flat_map(|t| emb.row(vocab.id(t)).iter().copied()).collect()
}

/// The explicit dilated hull: the base point and one vertex per single application.
#[derive(Debug, Clone, PartialEq)]
pub struct HullVertexSet {
    pub positions: usize,
    pub dim: usize,
    pub base: Vec<f64>,
    pub vertices: Vec<Vec<f64>>,
    pub dilation: f64,
}

impl HullVertexSet {
    pub fn build(spec: &TransformSpec, x: &[String], vocab: &Vocabulary, emb: &EmbeddingTable) -> Result<Self> {
        check_length_preserving(spec)?;
        let dilation = spec.total_budget() as f64;
        let base = embed_tokens(x, vocab, emb);
        let mut vertices = Vec::new();
        for (m, xi) in single_application_union(spec, x) {
            if xi.len() != x.len() {
                return Err(Error::NotLengthPreserving(spec.rules()[m.rule].rule.name.clone()));
            }
            let e = embed_tokens(&xi, vocab, emb);
            vertices.push(
                base.iter()
                    .zip(&e)
                    .map(|(b, v)| dilate(*b, *v, dilation))
                    .collect(),
            );
        }
        Ok(Self {
            positions: x.len(),
            dim: emb.dim(),
            base,
            vertices,
            dilation,
        })
    }

    pub fn interval(&self) -> IntervalTensor {
        let mut lower = self.base.clone();
        let mut upper = self.base.clone();
        for v in &self.vertices {
            for (i, &value) in v.iter().enumerate() {
                lower[i] = lower[i].min(value);
                upper[i] = upper[i].max(value);
            }
        }
        IntervalTensor {
            positions: self.positions,
            dim: self.dim,
            lower,
            upper,
        }
    }
}

/// `(1 − Δ)·base + Δ·point`, the dilated image of `point` around `base`.
#[inline]
fn dilate(base: f64, point: f64, dilation: f64) -> f64 {
    // Exact for unchanged coordinates, where the formula would only add rounding noise.
    if point == base {
        return base;
    }
    (1.0 - dilation) * base + dilation * point
}

fn check_length_preserving(spec: &TransformSpec) -> Result<()> {
    match spec.rules().iter().find(|rb| !rb.rule.is_length_preserving()) {
        Some(rb) => Err(Error::NotLengthPreserving(rb.rule.name.clone())),
        None => Ok(()),
    }
}

/// An embedding-space box together with which embedding row each bound came from, so
/// gradients of a loss on the box can be routed back to the embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBox {
    pub interval: IntervalTensor,
    pub dilation: f64,
    /// Token id of `x` at each position.
    pub base_ids: Vec<usize>,
    /// Per `(position, dim)`: `None` when the bound is the base value, otherwise the id of
    /// the substituted token whose dilated image attains it.
    pub lower_source: Vec<Option<usize>>,
    pub upper_source: Vec<Option<usize>>,
}

/// The interval box of the dilated hull of `S(x)`.
pub fn abstract_space(spec: &TransformSpec, x: &[String], vocab: &Vocabulary, emb: &EmbeddingTable) -> Result<IntervalTensor> {
    Ok(abstract_space_traced(spec, x, vocab, emb)?.interval)
}

pub fn abstract_space_traced(
    spec: &TransformSpec,
    x: &[String],
    vocab: &Vocabulary,
    emb: &EmbeddingTable,
) -> Result<EmbeddingBox> {
    check_length_preserving(spec)?;
    let dilation = spec.total_budget() as f64;
    let d = emb.dim();
    let base_ids: Vec<usize> = x.iter().map(|t| vocab.id(t)).collect();

    let mut candidates: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); x.len()];
    let table = MatchTable::build(spec, x);
    for (m, reps) in table.matches.iter().zip(&table.replacements) {
        for r in reps {
            if r.len() != m.len() {
                return Err(Error::NotLengthPreserving(spec.rules()[m.rule].rule.name.clone()));
            }
            for (offset, token) in r.iter().enumerate() {
                candidates[m.start + offset].insert(vocab.id(token));
            }
        }
    }

    let n = x.len() * d;
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut lower_source = vec![None; n];
    let mut upper_source = vec![None; n];
    for (p, &a) in base_ids.iter().enumerate() {
        let ea = emb.row(a);
        for k in 0..d {
            let i = p * d + k;
            let (mut lo, mut hi) = (ea[k], ea[k]);
            for &b in &candidates[p] {
                let v = dilate(ea[k], emb.row(b)[k], dilation);
                if v < lo {
                    lo = v;
                    lower_source[i] = Some(b);
                }
                if v > hi {
                    hi = v;
                    upper_source[i] = Some(b);
                }
            }
            lower[i] = lo;
            upper[i] = hi;
        }
    }
    Ok(EmbeddingBox {
        interval: IntervalTensor::new(x.len(), d, lower, upper)?,
        dilation,
        base_ids,
        lower_source,
        upper_source,
    })
}
