//! Interval bound propagation through a [`Model`] and the abstract (worst-case) loss.
//!
//! Affine layers use the center/radius form `c' = W c + b`, `r' = |W| r`; ReLU clamps both
//! bounds; average pooling has non-negative weights and maps bounds directly.

use crate::abstraction::{EmbeddingBox, IntervalTensor};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy, Activation, Grads, Layer, Model, ParamGrad};

#[derive(Debug, Clone, PartialEq)]
pub struct LogitBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LogitBounds {
    /// True when the worst-case logits still rank `label` strictly first.
    pub fn certifies(&self, label: usize) -> bool {
        let w = worst_case_logits(self, label);
        w.iter().enumerate().all(|(j, v)| j == label || *v < w[label])
    }
}

/// Bounds on one layer's input.
#[derive(Debug, Clone, PartialEq)]
struct Bounds {
    lower: Activation,
    upper: Activation,
}

fn to_activations(model: &Model, b: &IntervalTensor) -> Result<Bounds> {
    let d = model.embedding.dim();
    if b.dim != d {
        return Err(Error::Shape(format!("box of dimension {} for embeddings of {d}", b.dim)));
    }
    let n = b.positions.min(model.max_len);
    let mut lower = Activation::zeros(model.max_len, d, n);
    let mut upper = Activation::zeros(model.max_len, d, n);
    lower.data[..n * d].copy_from_slice(&b.lower[..n * d]);
    upper.data[..n * d].copy_from_slice(&b.upper[..n * d]);
    Ok(Bounds { lower, upper })
}

fn center_radius(b: &Bounds) -> (Activation, Activation) {
    let mut c = b.lower.clone();
    let mut r = b.lower.clone();
    for i in 0..c.data.len() {
        let (l, u) = (b.lower.data[i], b.upper.data[i]);
        c.data[i] = (l + u) / 2.0;
        r.data[i] = (u - l) / 2.0;
    }
    (c, r)
}

fn from_center_radius(c: Activation, r: &Activation) -> Bounds {
    let mut lower = c.clone();
    let mut upper = c;
    for i in 0..lower.data.len() {
        lower.data[i] -= r.data[i];
        upper.data[i] += r.data[i];
    }
    Bounds { lower, upper }
}

fn abs(w: &[f64]) -> Vec<f64> {
    w.iter().map(|v| v.abs()).collect()
}

fn signs(w: &[f64]) -> Vec<f64> {
    w.iter().map(|v| if *v > 0.0 { 1.0 } else if *v < 0.0 { -1.0 } else { 0.0 }).collect()
}

fn layer_bounds(layer: &Layer, b: &Bounds) -> Bounds {
    match layer {
        Layer::Conv1d(conv) => {
            let (c, r) = center_radius(b);
            let c2 = conv.apply(&c, &conv.weight, Some(&conv.bias));
            let r2 = conv.apply(&r, &abs(&conv.weight), None);
            from_center_radius(c2, &r2)
        }
        Layer::Linear(lin) => {
            let (c, r) = center_radius(b);
            let c2 = lin.apply(&c, &lin.weight, Some(&lin.bias));
            let r2 = lin.apply(&r, &abs(&lin.weight), None);
            from_center_radius(c2, &r2)
        }
        Layer::Relu | Layer::AvgPool(_) | Layer::Flatten => Bounds {
            lower: layer.forward(&b.lower),
            upper: layer.forward(&b.upper),
        },
    }
}

/// Inputs to every layer followed by the output bounds.
fn trace(model: &Model, input: Bounds) -> Vec<Bounds> {
    let mut out = Vec::with_capacity(model.layers.len() + 1);
    out.push(input);
    for layer in &model.layers {
        let next = layer_bounds(layer, out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

fn finish(last: &Bounds) -> Result<LogitBounds> {
    let lb = LogitBounds {
        lower: last.lower.data.clone(),
        upper: last.upper.data.clone(),
    };
    if lb.lower.iter().chain(&lb.upper).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logit bounds".into()));
    }
    Ok(lb)
}

/// Sound per-class logit bounds for every embedded input inside `input`.
pub fn propagate(model: &Model, input: &IntervalTensor) -> Result<LogitBounds> {
    let mut b = to_activations(model, input)?;
    for layer in &model.layers {
        b = layer_bounds(layer, &b);
    }
    finish(&b)
}

/// The logit vector in the bounds that maximizes cross-entropy against `label`: the lower
/// bound for `label` and the upper bound for every other class.
pub fn worst_case_logits(bounds: &LogitBounds, label: usize) -> Vec<f64> {
    let mut w = bounds.upper.clone();
    w[label] = bounds.lower[label];
    w
}

/// Cross-entropy of the worst-case logits over `input`.
pub fn abstract_loss(model: &Model, input: &IntervalTensor, label: usize) -> Result<f64> {
    check_label(model, label)?;
    let bounds = propagate(model, input)?;
    Ok(cross_entropy(&worst_case_logits(&bounds, label), label).0)
}

fn check_label(model: &Model, label: usize) -> Result<()> {
    if label >= model.classes {
        return Err(Error::Config(format!("label {label} out of range")));
    }
    Ok(())
}

/// Gradients of a scalar with respect to a layer's lower and upper input bounds.
struct BoundGrads {
    lower: Activation,
    upper: Activation,
}

fn layer_backward(layer: &Layer, input: &Bounds, g: BoundGrads, pg: &mut ParamGrad) -> BoundGrads {
    let weight = match layer.parameters() {
        Some((w, _)) => w,
        None => {
            let mut unused = ParamGrad::default();
            return BoundGrads {
                lower: layer.backward(&input.lower, &g.lower, &mut unused),
                upper: layer.backward(&input.upper, &g.upper, &mut unused),
            };
        }
    };
    let (c, r) = center_radius(input);
    // l' = c' - r', u' = c' + r'.
    let mut gc = g.lower.clone();
    let mut gr = g.lower;
    for i in 0..gc.data.len() {
        let (gl, gu) = (gc.data[i], g.upper.data[i]);
        gc.data[i] = gl + gu;
        gr.data[i] = gu - gl;
    }
    let sign = signs(weight);
    let abs_w = abs(weight);
    let (gc_in, gr_in) = match layer {
        Layer::Conv1d(conv) => {
            conv.accumulate(&c, &gc, &mut pg.weight, Some(&mut pg.bias), None);
            conv.accumulate(&r, &gr, &mut pg.weight, None, Some(&sign));
            (conv.transpose(&gc, weight), conv.transpose(&gr, &abs_w))
        }
        Layer::Linear(lin) => {
            lin.accumulate(&c, &gc, &mut pg.weight, Some(&mut pg.bias), None);
            lin.accumulate(&r, &gr, &mut pg.weight, None, Some(&sign));
            (lin.transpose(&gc, weight), lin.transpose(&gr, &abs_w))
        }
        _ => unreachable!("only affine layers have parameters"),
    };
    // c = (l + u)/2, r = (u - l)/2.
    let mut lower = gc_in.clone();
    let mut upper = gc_in;
    for i in 0..lower.data.len() {
        lower.data[i] = (lower.data[i] - gr_in.data[i]) / 2.0;
        upper.data[i] = (upper.data[i] + gr_in.data[i]) / 2.0;
    }
    BoundGrads { lower, upper }
}

/// Abstract loss over `input` and its gradient with respect to every model parameter.
///
/// Embedding gradients are routed through the box's provenance: a bound attained by the
/// dilated image `(1 − Δ)·E[a] + Δ·E[b]` contributes to rows `a` and `b`.
pub fn abstract_loss_and_grads(model: &Model, input: &EmbeddingBox, label: usize) -> Result<(f64, Grads)> {
    check_label(model, label)?;
    let bounds = trace(model, to_activations(model, &input.interval)?);
    let last = finish(bounds.last().expect("non-empty"))?;
    let (loss, g_logits) = cross_entropy(&worst_case_logits(&last, label), label);

    let mut g_lower = vec![0.0; model.classes];
    let mut g_upper = g_logits;
    g_lower[label] = g_upper[label];
    g_upper[label] = 0.0;
    let mut g = BoundGrads {
        lower: Activation::vector(g_lower),
        upper: Activation::vector(g_upper),
    };

    let mut grads = Grads::zeros(model);
    for (i, layer) in model.layers.iter().enumerate().rev() {
        g = layer_backward(layer, &bounds[i], g, &mut grads.layers[i]);
    }

    if model.embedding.trainable {
        let d = model.embedding.dim();
        let n = input.interval.positions.min(model.max_len);
        let delta = input.dilation;
        for p in 0..n {
            let a = input.base_ids[p];
            for k in 0..d {
                let i = p * d + k;
                for (gv, src) in [
                    (g.lower.data[i], input.lower_source[i]),
                    (g.upper.data[i], input.upper_source[i]),
                ] {
                    if gv == 0.0 {
                        continue;
                    }
                    let mut unit = vec![0.0; d];
                    unit[k] = gv;
                    match src {
                        None => grads.add_embedding_row(a, &unit, 1.0),
                        Some(b) => {
                            grads.add_embedding_row(a, &unit, 1.0 - delta);
                            grads.add_embedding_row(b, &unit, delta);
                        }
                    }
                }
            }
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Vocabulary;
    use crate::dsl::Alphabet;
    use crate::nn::{ArchConfig, Linear};

    #[test]
    fn scalar_chain() {
        let affine = Layer::Linear(Linear {
            inputs: 1,
            outputs: 1,
            weight: vec![2.0],
            bias: vec![1.0],
        });
        let mut b = Bounds {
            lower: Activation::vector(vec![-1.0]),
            upper: Activation::vector(vec![1.0]),
        };
        b = layer_bounds(&affine, &b);
        assert_eq!((b.lower.data[0], b.upper.data[0]), (-1.0, 3.0));
        b = layer_bounds(&Layer::Relu, &b);
        assert_eq!((b.lower.data[0], b.upper.data[0]), (0.0, 3.0));
    }

    #[test]
    fn worst_case_vertex() {
        let b = LogitBounds {
            lower: vec![1.0, -1.0],
            upper: vec![2.0, 0.0],
        };
        assert_eq!(worst_case_logits(&b, 0), vec![1.0, 0.0]);
    }

    #[test]
    fn degenerate_box_gives_forward_logits() {
        let arch = ArchConfig {
            embed_dim: 3,
            kernels: 2,
            width: 3,
            pool: 2,
            hidden: vec![4],
        };
        let m = Model::new(&arch, Alphabet::Char, Vocabulary::from_tokens(["a", "b"]), 3, 5, 8).unwrap();
        let x = Alphabet::Char.tokenize("abba");
        let e = crate::abstraction::embed_tokens(&x, &m.vocab, &m.embedding);
        let b = propagate(&m, &IntervalTensor::point(4, 3, e).unwrap()).unwrap();
        assert_eq!(b.lower, m.logits(&x));
        assert_eq!(b.upper, m.logits(&x));
    }
}
