//! Analytic gradients against central finite differences, an independent forward pass, and
//! optimizer behaviour.

mod common;

use a3t::abstraction::{abstract_space, abstract_space_traced};
use a3t::data::{pad_batch, synthetic, EmbeddingTable, Overflow, Vocabulary};
use a3t::dsl::{Alphabet, TransformSpec};
use a3t::ibp::{abstract_loss, abstract_loss_and_grads};
use a3t::nn::{cross_entropy, Adam, ArchConfig, Conv1d, Grads, Layer, Linear, Model};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;
const REL: f64 = 1e-4;
const ABS: f64 = 1e-8;

/// Every scalar parameter as (layer or embedding row, index) with a getter into `Grads`.
enum Slot {
    Weight(usize, usize),
    Bias(usize, usize),
    Embedding(usize, usize),
}

fn slots(model: &Model) -> Vec<Slot> {
    let mut out = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        if let Some((w, b)) = layer.parameters() {
            out.extend((0..w.len()).map(|i| Slot::Weight(l, i)));
            out.extend((0..b.len()).map(|i| Slot::Bias(l, i)));
        }
    }
    if model.embedding.trainable {
        for row in 2..model.embedding.rows() {
            out.extend((0..model.embedding.dim()).map(|k| Slot::Embedding(row, k)));
        }
    }
    out
}

fn param<'a>(model: &'a mut Model, s: &Slot) -> &'a mut f64 {
    match *s {
        Slot::Weight(l, i) => &mut model.layers[l].parameters_mut().unwrap().0[i],
        Slot::Bias(l, i) => &mut model.layers[l].parameters_mut().unwrap().1[i],
        Slot::Embedding(r, k) => &mut model.embedding.row_mut(r)[k],
    }
}

fn analytic(grads: &Grads, s: &Slot) -> f64 {
    match *s {
        Slot::Weight(l, i) => grads.layers[l].weight[i],
        Slot::Bias(l, i) => grads.layers[l].bias[i],
        Slot::Embedding(r, k) => grads.embedding.get(&r).map_or(0.0, |g| g[k]),
    }
}

/// Compares every component; returns the number of mismatches and the worst relative error.
fn check(model: &Model, grads: &Grads, loss: impl Fn(&Model) -> f64) -> (usize, f64) {
    let mut m = model.clone();
    let mut bad = 0;
    let mut worst: f64 = 0.0;
    for s in slots(model) {
        let orig = *param(&mut m, &s);
        *param(&mut m, &s) = orig + STEP;
        let up = loss(&m);
        *param(&mut m, &s) = orig - STEP;
        let down = loss(&m);
        *param(&mut m, &s) = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic(grads, &s);
        if !common::close(a, numeric, REL, ABS) {
            bad += 1;
        }
        let scale = a.abs().max(numeric.abs());
        if scale > 1e-6 {
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    (bad, worst)
}

fn models() -> Vec<Model> {
    let vocab = synthetic::vocabulary();
    let archs = [
        ArchConfig { embed_dim: 4, kernels: 5, width: 3, pool: 2, hidden: vec![] },
        ArchConfig { embed_dim: 6, kernels: 8, width: 5, pool: 3, hidden: vec![12] },
        ArchConfig { embed_dim: 8, kernels: 10, width: 3, pool: 4, hidden: vec![16, 8] },
    ];
    archs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let m = Model::new(a, Alphabet::Char, vocab.clone(), 2 + i % 2, 12, i as u64 + 40).unwrap();
            assert!(m.parameter_count() <= 5_000, "{} parameters", m.parameter_count());
            m
        })
        .collect()
}

fn inputs(seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..3)
        .map(|_| {
            let n = rng.gen_range(4..=12);
            (0..n).map(|_| synthetic::LETTERS[rng.gen_range(0..10)].to_string()).collect()
        })
        .collect()
}

#[test]
fn concrete_loss_gradients_match_finite_differences() {
    for (i, model) in models().iter().enumerate() {
        for x in inputs(i as u64) {
            let y = x.len() % model.classes;
            let (_, grads) = model.loss_and_grads(&x, y);
            let (bad, worst) = check(model, &grads, |m| m.loss(&x, y));
            assert_eq!(bad, 0, "model {i}: worst relative error {worst:e}");
        }
    }
}

#[test]
fn abstract_loss_gradients_match_finite_differences() {
    let spec = synthetic::spec().subset(|_, rb| rb.rule.name == "SubAdj");
    for (i, model) in models().iter().enumerate() {
        for x in inputs(10 + i as u64) {
            let y = x.len() % model.classes;
            let traced = abstract_space_traced(&spec, &x, &model.vocab, &model.embedding).unwrap();
            let (loss, grads) = abstract_loss_and_grads(model, &traced, y).unwrap();
            let boxed = |m: &Model| {
                let b = abstract_space(&spec, &x, &m.vocab, &m.embedding).unwrap();
                abstract_loss(m, &b, y).unwrap()
            };
            assert!((loss - boxed(model)).abs() < 1e-12);
            let (bad, worst) = check(model, &grads, boxed);
            assert_eq!(bad, 0, "model {i}: worst relative error {worst:e}");
        }
    }
}

#[test]
fn batch_gradient_is_the_mean_of_example_gradients() {
    let model = &models()[1];
    let xs = inputs(3);
    let labels: Vec<usize> = xs.iter().map(|x| x.len() % model.classes).collect();
    let ids: Vec<Vec<usize>> = xs.iter().map(|x| model.encode(x)).collect();
    let batch = pad_batch(&ids, model.max_len, Overflow::Reject).unwrap();
    let (loss, grads) = model.batch_loss_and_grads(&batch, &labels).unwrap();
    let mut sum = Grads::zeros(model);
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(&labels) {
        let (l, g) = model.loss_and_grads(x, y);
        total += l;
        sum.add(&g);
    }
    sum.scale(1.0 / xs.len() as f64);
    assert!((loss - total / xs.len() as f64).abs() < 1e-12);
    for (a, b) in grads.layers.iter().zip(&sum.layers) {
        for (u, v) in a.weight.iter().chain(&a.bias).zip(b.weight.iter().chain(&b.bias)) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

/// Plain nested-loop forward pass written from the layer definitions.
fn reference_logits(model: &Model, x: &[String]) -> Vec<f64> {
    let len = x.len().min(model.max_len);
    let mut act: Vec<Vec<f64>> = x[..len].iter().map(|t| model.embedding.row(model.vocab.id(t)).to_vec()).collect();
    let mut flat: Option<Vec<f64>> = None;
    let mut slots = model.max_len;
    for layer in &model.layers {
        match layer {
            Layer::Conv1d(c) => {
                let left = (c.width - 1) / 2;
                act = (0..act.len())
                    .map(|p| {
                        (0..c.outputs)
                            .map(|o| {
                                let mut s = c.bias[o];
                                for t in 0..c.width {
                                    let q = p as isize + t as isize - left as isize;
                                    if q < 0 || q as usize >= act.len() {
                                        continue;
                                    }
                                    for i in 0..c.inputs {
                                        s += c.weight[(o * c.width + t) * c.inputs + i] * act[q as usize][i];
                                    }
                                }
                                s
                            })
                            .collect()
                    })
                    .collect();
            }
            Layer::Relu => match &mut flat {
                Some(v) => v.iter_mut().for_each(|a| *a = a.max(0.0)),
                None => act.iter_mut().flatten().for_each(|a| *a = a.max(0.0)),
            },
            Layer::AvgPool(p) => {
                slots = slots.div_ceil(p.window);
                act = act
                    .chunks(p.window)
                    .map(|w| (0..w[0].len()).map(|c| w.iter().map(|r| r[c]).sum::<f64>() / w.len() as f64).collect())
                    .collect();
            }
            Layer::Flatten => {
                let channels = act.first().map_or(0, Vec::len);
                let mut v = vec![0.0; slots * channels.max(1)];
                for (p, row) in act.iter().enumerate() {
                    v[p * channels..(p + 1) * channels].copy_from_slice(row);
                }
                flat = Some(v);
            }
            Layer::Linear(Linear { inputs, outputs, weight, bias }) => {
                let v = flat.as_ref().unwrap();
                flat = Some((0..*outputs).map(|o| bias[o] + (0..*inputs).map(|i| weight[o * inputs + i] * v[i]).sum::<f64>()).collect());
            }
        }
    }
    flat.unwrap()
}

#[test]
fn forward_pass_matches_a_direct_implementation() {
    for model in models() {
        for x in inputs(20) {
            let got = model.logits(&x);
            let want = reference_logits(&model, &x);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn logits_do_not_depend_on_padding_width() {
    let vocab = synthetic::vocabulary();
    let arch = ArchConfig { embed_dim: 4, kernels: 4, width: 3, pool: 2, hidden: vec![] };
    let x = Alphabet::Char.tokenize("abcde");
    // Same parameters, different padded lengths: only the final layer's width changes and the
    // extra inputs it sees are always zero.
    let short = Model::new(&arch, Alphabet::Char, vocab.clone(), 2, 6, 1).unwrap();
    let mut long = Model::new(&arch, Alphabet::Char, vocab, 2, 10, 1).unwrap();
    long.embedding = short.embedding.clone();
    long.layers[0] = short.layers[0].clone();
    if let (Layer::Linear(s), Layer::Linear(l)) = (&short.layers[4], &mut long.layers[4]) {
        l.bias = s.bias.clone();
        for o in 0..s.outputs {
            for i in 0..l.inputs {
                l.weight[o * l.inputs + i] = if i < s.inputs { s.weight[o * s.inputs + i] } else { 1.0 };
            }
        }
    }
    let (a, b) = (short.logits(&x), long.logits(&x));
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn first_adam_step_moves_each_weight_by_the_learning_rate() {
    let vocab = Vocabulary::from_tokens(["a"]);
    let emb = EmbeddingTable::from_weights(vocab.len(), 1, vec![0.0, 0.0, 1.0], false).unwrap();
    let identity = Layer::Conv1d(Conv1d { inputs: 1, outputs: 1, width: 1, weight: vec![1.0], bias: vec![0.0] });
    let linear = Layer::Linear(Linear { inputs: 1, outputs: 2, weight: vec![0.0, 0.0], bias: vec![0.0, 0.0] });
    let mut model = Model::from_parts(Alphabet::Char, vocab, emb, vec![identity, Layer::Flatten, linear], 2, 1).unwrap();
    let x = Alphabet::Char.tokenize("a");
    let (_, grads) = model.loss_and_grads(&x, 0);
    let mut adam = Adam::new(1e-3);
    adam.step(&mut model, &grads).unwrap();
    let last = model.layers.len() - 1;
    let (w, b) = model.layers[last].parameters().unwrap();
    // Gradient on class 0's weight is negative (it should grow), class 1's positive.
    assert!((w[0] - 1e-3).abs() < 1e-9 && (w[1] + 1e-3).abs() < 1e-9, "{w:?}");
    assert!((b[0] - 1e-3).abs() < 1e-9 && (b[1] + 1e-3).abs() < 1e-9, "{b:?}");
}

#[test]
fn adam_reaches_the_bottom_of_a_bowl() {
    // f(θ) = Σ (θ − t)² over every layer parameter, with gradients handed to the optimizer.
    let mut model = models().remove(1);
    let target = |i: usize| (i % 7) as f64 * 0.1 - 0.3;
    let distance = |m: &Model| -> f64 {
        m.layers
            .iter()
            .filter_map(|l| l.parameters())
            .flat_map(|(w, b)| w.iter().chain(b))
            .enumerate()
            .map(|(i, v)| (v - target(i)).powi(2))
            .sum()
    };
    let start = distance(&model);
    let mut adam = Adam::new(0.01);
    for _ in 0..2_000 {
        let mut g = Grads::zeros(&model);
        let mut i = 0;
        for (layer, pg) in model.layers.iter().zip(g.layers.iter_mut()) {
            if let Some((w, b)) = layer.parameters() {
                for (gv, v) in pg.weight.iter_mut().chain(pg.bias.iter_mut()).zip(w.iter().chain(b)) {
                    *gv = 2.0 * (v - target(i));
                    i += 1;
                }
            }
        }
        adam.step(&mut model, &g).unwrap();
    }
    assert!(distance(&model) < 1e-6 * start, "{start} -> {}", distance(&model));
}

#[test]
fn training_steps_reduce_loss_on_separable_data() {
    let vocab = Vocabulary::from_tokens(["a", "b"]);
    let arch = ArchConfig { embed_dim: 4, kernels: 4, width: 1, pool: 1, hidden: vec![] };
    let mut model = Model::new(&arch, Alphabet::Char, vocab, 2, 1, 5).unwrap();
    let data = [(Alphabet::Char.tokenize("a"), 0), (Alphabet::Char.tokenize("b"), 1)];
    let total = |m: &Model| data.iter().map(|(x, y)| m.loss(x, *y)).sum::<f64>();
    let start = total(&model);
    let mut adam = Adam::new(0.05);
    for _ in 0..300 {
        let mut g = Grads::zeros(&model);
        for (x, y) in &data {
            g.add(&model.loss_and_grads(x, *y).1);
        }
        adam.step(&mut model, &g).unwrap();
    }
    assert!(total(&model) < 0.05 * start, "{start} -> {}", total(&model));
    assert!(data.iter().all(|(x, y)| model.predict(x) == *y));
}

#[test]
fn non_finite_gradients_skip_the_step() {
    let mut model = models().remove(0);
    let before = model.clone();
    let mut g = Grads::zeros(&model);
    g.layers[0].weight[0] = f64::NAN;
    assert!(Adam::new(1e-3).step(&mut model, &g).is_err());
    assert_eq!(model, before);
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let (loss, g) = cross_entropy(&[1.0, 2.0, 3.0], 2);
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    assert!((loss - (z.ln() - 3.0)).abs() < 1e-12);
    assert!((g[0] - 1f64.exp() / z).abs() < 1e-12);
    assert!((g[2] - (3f64.exp() / z - 1.0)).abs() < 1e-12);
}

#[test]
fn spec_without_rules_gives_the_concrete_loss() {
    let model = &models()[0];
    let x = Alphabet::Char.tokenize("abcdefg");
    let b = abstract_space(&TransformSpec::empty(Alphabet::Char), &x, &model.vocab, &model.embedding).unwrap();
    assert!((abstract_loss(model, &b, 1).unwrap() - model.loss(&x, 1)).abs() < 1e-12);
}
