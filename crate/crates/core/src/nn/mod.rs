//! A small convolutional text classifier with exact manual backpropagation.
//!
//! The network is `embedding -> conv1d -> relu -> avgpool -> flatten -> [linear -> relu]* ->
//! linear`. Everything after the embedding only ever sees real positions, so logits do not
//! depend on padding.

mod adam;
mod checkpoint;
mod layers;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, EmbeddingTable, Vocabulary, PAD};
use crate::dsl::Alphabet;
use crate::error::{Error, Result};

pub use adam::Adam;
pub use checkpoint::{load_model, read_model, save_model, write_model, CHECKPOINT_VERSION};
pub use layers::{Activation, AvgPool, Conv1d, Layer, Linear, ParamGrad};

/// Hyperparameters of the default architecture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub embed_dim: usize,
    pub kernels: usize,
    pub width: usize,
    pub pool: usize,
    /// Sizes of extra fully connected ReLU layers before the output layer.
    pub hidden: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            kernels: 16,
            width: 5,
            pool: 5,
            hidden: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub alphabet: Alphabet,
    pub vocab: Vocabulary,
    pub embedding: EmbeddingTable,
    pub layers: Vec<Layer>,
    pub classes: usize,
    pub max_len: usize,
}

/// Gradients for every parameter of a [`Model`]. Embedding rows are stored sparsely.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grads {
    pub embedding: BTreeMap<usize, Vec<f64>>,
    pub layers: Vec<ParamGrad>,
}

impl Grads {
    pub fn zeros(model: &Model) -> Self {
        Self {
            embedding: BTreeMap::new(),
            layers: model.layers.iter().map(Layer::zero_grad).collect(),
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (id, row) in &other.embedding {
            let dst = self.embedding.entry(*id).or_insert_with(|| vec![0.0; row.len()]);
            for (a, b) in dst.iter_mut().zip(row) {
                *a += b;
            }
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add(b);
        }
    }

    /// `self += f * other`.
    pub fn add_scaled(&mut self, other: &Grads, f: f64) {
        let mut o = other.clone();
        o.scale(f);
        self.add(&o);
    }

    pub fn scale(&mut self, f: f64) {
        self.embedding.values_mut().flatten().for_each(|v| *v *= f);
        self.layers.iter_mut().for_each(|l| l.scale(f));
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.values().flatten().all(|v| v.is_finite())
            && self
                .layers
                .iter()
                .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Adds `g` (a gradient with respect to the embedded input) onto the rows of `ids`.
    pub fn scatter_embedding(&mut self, ids: &[usize], g: &Activation) {
        for (p, &id) in ids.iter().enumerate().take(g.len) {
            self.add_embedding_row(id, g.row(p), 1.0);
        }
    }

    pub fn add_embedding_row(&mut self, id: usize, g: &[f64], f: f64) {
        if id == PAD {
            return;
        }
        let dst = self.embedding.entry(id).or_insert_with(|| vec![0.0; g.len()]);
        for (a, b) in dst.iter_mut().zip(g) {
            *a += f * b;
        }
    }
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl Model {
    /// A randomly initialized model with the default layer stack.
    pub fn new(
        arch: &ArchConfig,
        alphabet: Alphabet,
        vocab: Vocabulary,
        classes: usize,
        max_len: usize,
        seed: u64,
    ) -> Result<Self> {
        let embedding = EmbeddingTable::random(vocab.len(), arch.embed_dim, seed ^ 0x9e37_79b9_7f4a_7c15);
        Self::with_embedding(arch, alphabet, vocab, embedding, classes, max_len, seed)
    }

    pub fn with_embedding(
        arch: &ArchConfig,
        alphabet: Alphabet,
        vocab: Vocabulary,
        embedding: EmbeddingTable,
        classes: usize,
        max_len: usize,
        seed: u64,
    ) -> Result<Self> {
        if arch.kernels == 0 || arch.width == 0 || arch.pool == 0 || arch.embed_dim == 0 {
            return Err(Error::Config("architecture sizes must be positive".into()));
        }
        if embedding.dim() != arch.embed_dim {
            return Err(Error::Config(format!(
                "embedding dimension {} differs from architecture's {}",
                embedding.dim(),
                arch.embed_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = arch.embed_dim;
        let mut layers = vec![
            Layer::Conv1d(Conv1d {
                inputs: d,
                outputs: arch.kernels,
                width: arch.width,
                weight: uniform(&mut rng, arch.kernels * arch.width * d, 1.0 / ((arch.width * d) as f64).sqrt()),
                bias: vec![0.0; arch.kernels],
            }),
            Layer::Relu,
            Layer::AvgPool(AvgPool { window: arch.pool }),
            Layer::Flatten,
        ];
        let mut width = max_len.div_ceil(arch.pool) * arch.kernels;
        for &h in arch.hidden.iter().chain(std::iter::once(&classes)) {
            layers.push(Layer::Linear(Linear {
                inputs: width,
                outputs: h,
                weight: uniform(&mut rng, h * width, 1.0 / (width as f64).sqrt()),
                bias: vec![0.0; h],
            }));
            layers.push(Layer::Relu);
            width = h;
        }
        layers.pop();
        Self::from_parts(alphabet, vocab, embedding, layers, classes, max_len)
    }

    /// Assembles a model, checking that the layer shapes chain and end in `classes` logits.
    pub fn from_parts(
        alphabet: Alphabet,
        vocab: Vocabulary,
        embedding: EmbeddingTable,
        layers: Vec<Layer>,
        classes: usize,
        max_len: usize,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if max_len == 0 {
            return Err(Error::Config("max_len must be positive".into()));
        }
        if embedding.rows() != vocab.len() {
            return Err(Error::Shape(format!(
                "embedding has {} rows for a vocabulary of {}",
                embedding.rows(),
                vocab.len()
            )));
        }
        if !layers.first().is_some_and(Layer::is_affine) {
            return Err(Error::Shape("the layer after the embedding must be affine".into()));
        }
        let mut shape = (max_len, embedding.dim());
        for (i, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(shape.0, shape.1)
                .ok_or_else(|| Error::Shape(format!("layer {i} ({}) does not fit its input {shape:?}", layer.name())))?;
            if let Some((w, b)) = layer.parameters() {
                if w.iter().chain(b).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("parameters of layer {i}")));
                }
            }
        }
        if !matches!(layers.last(), Some(Layer::Linear(_))) || shape != (1, classes) {
            return Err(Error::Shape(format!(
                "network must end in a linear layer with {classes} outputs, ends with {shape:?}"
            )));
        }
        Ok(Self {
            alphabet,
            vocab,
            embedding,
            layers,
            classes,
            max_len,
        })
    }

    pub fn parameter_count(&self) -> usize {
        let emb = if self.embedding.trainable {
            self.embedding.weights.len()
        } else {
            0
        };
        emb + self.layers.iter().map(Layer::parameter_count).sum::<usize>()
    }

    /// Token ids for a surface string, cut to `max_len`.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().take(self.max_len).map(|t| self.vocab.id(t)).collect()
    }

    /// Embedded input of shape `(max_len, d)` with `len = ids.len()`.
    pub fn embed(&self, ids: &[usize]) -> Activation {
        let d = self.embedding.dim();
        let n = ids.len().min(self.max_len);
        let mut x = Activation::zeros(self.max_len, d, n);
        for (p, &id) in ids.iter().take(n).enumerate() {
            x.data[p * d..(p + 1) * d].copy_from_slice(self.embedding.row(id));
        }
        x
    }

    /// Layer inputs followed by the final output.
    pub fn trace(&self, x: Activation) -> Vec<Activation> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    pub fn forward_embedded(&self, x: &Activation) -> Vec<f64> {
        let mut a = x.clone();
        for layer in &self.layers {
            a = layer.forward(&a);
        }
        a.data
    }

    pub fn logits_ids(&self, ids: &[usize]) -> Vec<f64> {
        self.forward_embedded(&self.embed(ids))
    }

    pub fn logits(&self, tokens: &[String]) -> Vec<f64> {
        self.logits_ids(&self.encode(tokens))
    }

    /// Logits for each row of a padded batch.
    pub fn forward(&self, batch: &Batch) -> Result<Vec<Vec<f64>>> {
        if batch.max_len != self.max_len {
            return Err(Error::Shape(format!(
                "batch padded to {}, model expects {}",
                batch.max_len, self.max_len
            )));
        }
        Ok((0..batch.len())
            .map(|i| self.logits_ids(&batch.ids[i][..batch.length(i)]))
            .collect())
    }

    pub fn predict(&self, tokens: &[String]) -> usize {
        argmax(&self.logits(tokens))
    }

    pub fn loss(&self, tokens: &[String], label: usize) -> f64 {
        cross_entropy(&self.logits(tokens), label).0
    }

    /// Back-propagates a logit gradient through the layers given a forward trace.
    /// Returns the gradient with respect to the embedded input.
    pub fn backward(&self, trace: &[Activation], g_logits: &[f64], grads: &mut Grads) -> Activation {
        let mut g = Activation::vector(g_logits.to_vec());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            g = layer.backward(&trace[i], &g, &mut grads.layers[i]);
        }
        g
    }

    /// Loss, parameter gradients and the gradient with respect to the embedded input.
    pub fn loss_and_input_grads(&self, tokens: &[String], label: usize) -> (f64, Grads, Activation) {
        let ids = self.encode(tokens);
        let trace = self.trace(self.embed(&ids));
        let (loss, g_logits) = cross_entropy(trace.last().map_or(&[][..], |a| &a.data), label);
        let mut grads = Grads::zeros(self);
        let g_in = self.backward(&trace, &g_logits, &mut grads);
        if self.embedding.trainable {
            grads.scatter_embedding(&ids, &g_in);
        }
        (loss, grads, g_in)
    }

    pub fn loss_and_grads(&self, tokens: &[String], label: usize) -> (f64, Grads) {
        let (loss, grads, _) = self.loss_and_input_grads(tokens, label);
        (loss, grads)
    }

    /// Mean cross-entropy over a padded batch and its gradient.
    pub fn batch_loss_and_grads(&self, batch: &Batch, labels: &[usize]) -> Result<(f64, Grads)> {
        if labels.len() != batch.len() || batch.is_empty() {
            return Err(Error::Shape(format!("{} labels for a batch of {}", labels.len(), batch.len())));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::Config(format!("label {y} out of range")));
        }
        if batch.max_len != self.max_len {
            return Err(Error::Shape("batch padded to the wrong length".into()));
        }
        let mut total = 0.0;
        let mut grads = Grads::zeros(self);
        for (i, &y) in labels.iter().enumerate() {
            let ids = &batch.ids[i][..batch.length(i)];
            let trace = self.trace(self.embed(ids));
            let (loss, g_logits) = cross_entropy(&trace[trace.len() - 1].data, y);
            let mut g = Grads::zeros(self);
            let g_in = self.backward(&trace, &g_logits, &mut g);
            if self.embedding.trainable {
                g.scatter_embedding(ids, &g_in);
            }
            total += loss;
            grads.add(&g);
        }
        let n = labels.len() as f64;
        grads.scale(1.0 / n);
        Ok((total / n, grads))
    }
}
