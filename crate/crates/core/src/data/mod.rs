//! Vocabularies, embedding tables, labelled datasets and batch padding.

pub mod synthetic;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsl::{Alphabet, TokenString};
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token to id mapping. Ids 0 and 1 are reserved for padding and unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the two special ids.
    pub fn new() -> Self {
        Self {
            tokens: vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()],
            ids: HashMap::new(),
        }
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.insert(t);
        }
        v
    }

    /// Adds `token` if absent and returns its id.
    pub fn insert(&mut self, token: impl Into<String>) -> usize {
        let token = token.into();
        if let Some(&id) = self.ids.get(&token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.clone());
        self.ids.insert(token, id);
        id
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Number of ids, specials included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 2
    }

    /// Ordinary tokens in id order.
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.tokens[2..].iter().map(String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// A `(vocab, dim)` row-major embedding matrix. Row [`PAD`] is zero and never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: usize,
    dim: usize,
    pub weights: Vec<f64>,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Rows drawn from uniform(-0.1, 0.1), pad row zeroed.
    pub fn random(rows: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights: Vec<f64> = (0..rows * dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
        weights[..dim.min(rows * dim)].iter_mut().for_each(|w| *w = 0.0);
        Self {
            rows,
            dim,
            weights,
            trainable: true,
        }
    }

    pub fn from_weights(rows: usize, dim: usize, weights: Vec<f64>, trainable: bool) -> Result<Self> {
        if weights.len() != rows * dim {
            return Err(Error::Shape(format!(
                "embedding needs {rows}x{dim} values, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("embedding weights".into()));
        }
        let mut table = Self {
            rows,
            dim,
            weights,
            trainable,
        };
        table.weights[..dim.min(rows * dim)].iter_mut().for_each(|w| *w = 0.0);
        Ok(table)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.weights[id * self.dim..(id + 1) * self.dim]
    }

    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.weights[id * self.dim..(id + 1) * self.dim]
    }
}

/// Reads word vectors (`token v1 ... vd` per line) for the tokens of `vocab`.
///
/// Tokens missing from the file keep their seeded random initialization. The table is
/// returned frozen; callers that want to fine-tune set `trainable`.
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary, seed: u64) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut dim = None;
    let mut found: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::data(path, i + 1, format!("bad float: {e}")))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::data(
                    path,
                    i + 1,
                    format!("expected {d} values, found {}", values.len()),
                ))
            }
            _ => {}
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(path, i + 1, "non-finite value"));
        }
        if let Some(id) = vocab.get(token) {
            found.push((id, values));
        }
    }
    let dim = dim.ok_or_else(|| Error::data(path, 0, "no vectors in file"))?;
    let mut table = EmbeddingTable::random(vocab.len(), dim, seed);
    for (id, values) in found {
        table.row_mut(id).copy_from_slice(&values);
    }
    table.trainable = false;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Example {
    pub tokens: TokenString,
    pub label: usize,
}

/// Labelled token strings, stored unpadded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub alphabet: Alphabet,
    pub classes: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(alphabet: Alphabet, classes: usize, examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Config("dataset has no examples".into()));
        }
        if let Some(e) = examples.iter().find(|e| e.label >= classes) {
            return Err(Error::Config(format!("label {} out of range for {classes} classes", e.label)));
        }
        Ok(Self {
            alphabet,
            classes,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    /// Every token occurring in the dataset, in first-seen order.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::from_tokens(self.examples.iter().flat_map(|e| e.tokens.iter().cloned()))
    }
}

/// Reads `label<TAB>text` lines. Texts are tokenized and cut to `max_len` tokens.
pub fn load_dataset(path: impl AsRef<Path>, alphabet: Alphabet, classes: usize, max_len: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::data(path, i + 1, "expected `label<TAB>text`"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::data(path, i + 1, format!("bad label `{label}`")))?;
        if label >= classes {
            return Err(Error::data(
                path,
                i + 1,
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        examples.push(Example {
            tokens: alphabet.tokenize(body).truncated(max_len),
            label,
        });
    }
    if examples.is_empty() {
        return Err(Error::data(path, 0, "no examples"));
    }
    Ok(Dataset {
        alphabet,
        classes,
        examples,
    })
}

/// Writes a dataset back out in the format [`load_dataset`] reads.
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for e in &dataset.examples {
        out.push_str(&format!("{}\t{}\n", e.label, e.tokens.to_text(dataset.alphabet)));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// What [`pad_batch`] does with a sequence longer than `max_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overflow {
    Truncate,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub max_len: usize,
    pub ids: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of real positions in row `i`.
    pub fn length(&self, i: usize) -> usize {
        self.mask[i].iter().filter(|&&m| m).count()
    }
}

/// Right-pads id sequences with [`PAD`] to `max_len`, marking real positions in the mask.
pub fn pad_batch<S: AsRef<[usize]>>(sequences: &[S], max_len: usize, overflow: Overflow) -> Result<Batch> {
    let mut ids = Vec::with_capacity(sequences.len());
    let mut mask = Vec::with_capacity(sequences.len());
    for s in sequences {
        let s = s.as_ref();
        if s.len() > max_len && overflow == Overflow::Reject {
            return Err(Error::Shape(format!("sequence of length {} exceeds {max_len}", s.len())));
        }
        let n = s.len().min(max_len);
        let mut row = s[..n].to_vec();
        row.resize(max_len, PAD);
        let mut m = vec![true; n];
        m.resize(max_len, false);
        ids.push(row);
        mask.push(m);
    }
    Ok(Batch { max_len, ids, mask })
}
