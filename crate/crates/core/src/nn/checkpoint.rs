//! Line-oriented text checkpoints.
//!
//! ```text
//! a3t-model 1
//! alphabet char
//! classes 2
//! max_len 20
//! vocab 3
//! "a"
//! "b"
//! "c"
//! embedding 5 8 trainable
//! <5*8 floats>
//! layers 5
//! conv1d 8 16 5
//! <weights>
//! <bias>
//! relu
//! avgpool 5
//! flatten
//! linear 64 2
//! <weights>
//! <bias>
//! end
//! ```
//!
//! Floats are written with 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{AvgPool, Conv1d, Layer, Linear, Model};
use crate::data::{EmbeddingTable, Vocabulary};
use crate::dsl::Alphabet;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "a3t-model";

fn floats(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.8e}");
    }
    out.push('\n');
}

pub fn write_model(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {CHECKPOINT_VERSION}");
    let _ = writeln!(out, "alphabet {}", model.alphabet);
    let _ = writeln!(out, "classes {}", model.classes);
    let _ = writeln!(out, "max_len {}", model.max_len);
    let tokens: Vec<&str> = model.vocab.tokens().collect();
    let _ = writeln!(out, "vocab {}", tokens.len());
    for t in tokens {
        let _ = writeln!(out, "{}", serde_json::to_string(t).expect("strings serialize"));
    }
    let e = &model.embedding;
    let _ = writeln!(
        out,
        "embedding {} {} {}",
        e.rows(),
        e.dim(),
        if e.trainable { "trainable" } else { "frozen" }
    );
    floats(&mut out, &e.weights);
    let _ = writeln!(out, "layers {}", model.layers.len());
    for layer in &model.layers {
        match layer {
            Layer::Conv1d(c) => {
                let _ = writeln!(out, "conv1d {} {} {}", c.inputs, c.outputs, c.width);
                floats(&mut out, &c.weight);
                floats(&mut out, &c.bias);
            }
            Layer::Relu => out.push_str("relu\n"),
            Layer::AvgPool(p) => {
                let _ = writeln!(out, "avgpool {}", p.window);
            }
            Layer::Flatten => out.push_str("flatten\n"),
            Layer::Linear(l) => {
                let _ = writeln!(out, "linear {} {}", l.inputs, l.outputs);
                floats(&mut out, &l.weight);
                floats(&mut out, &l.bias);
            }
        }
    }
    out.push_str("end\n");
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str> {
        let (i, l) = self
            .lines
            .next()
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        self.line = i + 1;
        Ok(l)
    }

    /// Next line split into a keyword and its arguments; the keyword must equal `key`.
    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>> {
        let l = self.next()?;
        let mut parts = l.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            _ => Err(bad(self.line, format!("expected `{key}`"))),
        }
    }

    /// A `key N` line.
    fn count(&mut self, key: &str) -> Result<usize> {
        let args = self.keyed(key)?;
        self.number(args.first())
    }

    fn number(&self, s: Option<&&str>) -> Result<usize> {
        s.and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(self.line, "expected a non-negative integer"))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let l = self.next()?;
        let v = l
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(self.line, e))?;
        if v.len() != n {
            return Err(bad(self.line, format!("expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }
}

/// Parses a checkpoint. With `expected_classes`, a model for a different class count is
/// rejected.
pub fn read_model(text: &str, expected_classes: Option<usize>) -> Result<Model> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        line: 0,
    };
    let header = r.keyed(MAGIC)?;
    let version = r.number(header.first())?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let alphabet: Alphabet = r
        .keyed("alphabet")?
        .first()
        .ok_or_else(|| bad(r.line, "missing alphabet"))?
        .parse()
        .map_err(|_| bad(r.line, "bad alphabet"))?;
    let classes = r.count("classes")?;
    if let Some(expected) = expected_classes {
        if expected != classes {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {classes} classes, expected {expected}"
            )));
        }
    }
    let max_len = r.count("max_len")?;
    let n_tokens = r.count("vocab")?;
    let mut vocab = Vocabulary::new();
    for _ in 0..n_tokens {
        let l = r.next()?;
        let t: String = serde_json::from_str(l).map_err(|e| bad(r.line, e))?;
        vocab.insert(t);
    }
    let e = r.keyed("embedding")?;
    let (rows, dim) = (r.number(e.first())?, r.number(e.get(1))?);
    let trainable = match e.get(2) {
        Some(&"trainable") => true,
        Some(&"frozen") => false,
        _ => return Err(bad(r.line, "expected `trainable` or `frozen`")),
    };
    let weights = r.floats(rows * dim)?;
    let embedding = EmbeddingTable::from_weights(rows, dim, weights, trainable)?;

    let n_layers = r.count("layers")?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let l = r.next()?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        let layer = match parts.first().copied() {
            Some("conv1d") => {
                let (inputs, outputs, width) =
                    (r.number(parts.get(1))?, r.number(parts.get(2))?, r.number(parts.get(3))?);
                let weight = r.floats(inputs * outputs * width)?;
                let bias = r.floats(outputs)?;
                Layer::Conv1d(Conv1d {
                    inputs,
                    outputs,
                    width,
                    weight,
                    bias,
                })
            }
            Some("relu") => Layer::Relu,
            Some("avgpool") => Layer::AvgPool(AvgPool {
                window: r.number(parts.get(1))?,
            }),
            Some("flatten") => Layer::Flatten,
            Some("linear") => {
                let (inputs, outputs) = (r.number(parts.get(1))?, r.number(parts.get(2))?);
                let weight = r.floats(inputs * outputs)?;
                let bias = r.floats(outputs)?;
                Layer::Linear(Linear {
                    inputs,
                    outputs,
                    weight,
                    bias,
                })
            }
            _ => return Err(bad(r.line, format!("unknown layer `{l}`"))),
        };
        layers.push(layer);
    }
    if r.next()?.trim() != "end" {
        return Err(bad(r.line, "expected `end`"));
    }
    Model::from_parts(alphabet, vocab, embedding, layers, classes, max_len)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>, expected_classes: Option<usize>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_model(&text, expected_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ArchConfig;

    fn model() -> Model {
        let arch = ArchConfig {
            embed_dim: 4,
            kernels: 3,
            width: 3,
            pool: 2,
            hidden: vec![5],
        };
        Model::new(&arch, Alphabet::Char, Vocabulary::from_tokens(["a", " ", "\""]), 3, 6, 9).unwrap()
    }

    #[test]
    fn round_trip_preserves_logits() {
        let m = model();
        let back = read_model(&write_model(&m), None).unwrap();
        let x = Alphabet::Char.tokenize("a \"a");
        for (a, b) in m.logits(&x).iter().zip(back.logits(&x)) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert_eq!(back.vocab, m.vocab);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let text = write_model(&model());
        let cut = &text[..text.len() - 5];
        assert!(read_model(cut, None).is_err());
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let text = write_model(&model());
        assert!(read_model(&text, Some(2)).is_err());
        assert!(read_model(&text, Some(3)).is_ok());
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let text = write_model(&model()).replacen("a3t-model 1", "a3t-model 7", 1);
        assert!(matches!(read_model(&text, None), Err(Error::Checkpoint(_))));
    }
}
