//! Accuracy metrics, certification and evaluation reports.

use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::abstraction::abstract_space;
use crate::attack::{survives_hotflip, DEFAULT_SPACE_BUDGET};
use crate::data::Dataset;
use crate::dsl::{print_spec, Alphabet, TokenString, TransformSpec};
use crate::error::Result;
use crate::ibp::propagate;
use crate::nn::{write_model, Model};
use crate::perturb::{count_distinct, count_plans, enumerate_space};

/// Outcome of checking one example against its whole perturbation space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    /// Every string in the space is classified correctly.
    Robust,
    /// A misclassified string of the space.
    Refuted { witness: TokenString },
    /// The space holds more strings than the budget allows and no error was found first.
    Skipped,
}

impl Verdict {
    pub fn kind(&self) -> &'static str {
        match self {
            Verdict::Robust => "ROBUST",
            Verdict::Refuted { .. } => "REFUTED",
            Verdict::Skipped => "SKIPPED",
        }
    }
}

/// Streams `S(x)` and stops at the first misclassified string.
pub fn exhaustive_verdict(model: &Model, spec: &TransformSpec, x: &[String], label: usize, budget: usize) -> Verdict {
    let mut seen = 0usize;
    for z in enumerate_space(spec, x, Some(budget.saturating_add(1))) {
        seen += 1;
        if seen > budget {
            return Verdict::Skipped;
        }
        if model.predict(&z) != label {
            return Verdict::Refuted { witness: z };
        }
    }
    Verdict::Robust
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveAccuracy {
    /// Robust examples over examples that were not skipped.
    pub accuracy: f64,
    pub verdicts: Vec<Verdict>,
    pub evaluated: usize,
    pub skipped: usize,
}

pub fn exhaustive_accuracy(model: &Model, spec: &TransformSpec, dataset: &Dataset, budget: usize) -> ExhaustiveAccuracy {
    let verdicts: Vec<Verdict> = dataset
        .examples
        .par_iter()
        .map(|e| exhaustive_verdict(model, spec, &e.tokens, e.label, budget))
        .collect();
    let skipped = verdicts.iter().filter(|v| **v == Verdict::Skipped).count();
    let robust = verdicts.iter().filter(|v| **v == Verdict::Robust).count();
    let evaluated = verdicts.len() - skipped;
    ExhaustiveAccuracy {
        accuracy: if evaluated == 0 {
            0.0
        } else {
            robust as f64 / evaluated as f64
        },
        verdicts,
        evaluated,
        skipped,
    }
}

pub fn normal_accuracy(model: &Model, dataset: &Dataset) -> f64 {
    let correct = dataset
        .examples
        .par_iter()
        .filter(|e| model.predict(&e.tokens) == e.label)
        .count();
    correct as f64 / dataset.len() as f64
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Certificate {
    Certified,
    Refuted { witness: TokenString },
    Unknown,
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Certificate::Certified => "CERTIFIED",
            Certificate::Refuted { .. } => "REFUTED",
            Certificate::Unknown => "UNKNOWN",
        })
    }
}

/// Tries interval bounds first (length-preserving specs only), then full enumeration within
/// `budget`.
pub fn certify(model: &Model, spec: &TransformSpec, x: &[String], label: usize, budget: usize) -> Result<Certificate> {
    if spec.is_length_preserving() {
        let b = abstract_space(spec, x, &model.vocab, &model.embedding)?;
        if propagate(model, &b)?.certifies(label) {
            return Ok(Certificate::Certified);
        }
    }
    Ok(match exhaustive_verdict(model, spec, x, label, budget) {
        Verdict::Robust => Certificate::Certified,
        Verdict::Refuted { witness } => Certificate::Refuted { witness },
        Verdict::Skipped => Certificate::Unknown,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalConfig {
    pub beam_k: usize,
    pub space_budget: usize,
    /// Largest space whose distinct strings are counted for the statistics.
    pub count_limit: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            beam_k: 10,
            space_budget: DEFAULT_SPACE_BUDGET,
            count_limit: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleReport {
    pub index: usize,
    pub label: usize,
    pub prediction: usize,
    pub normal_correct: bool,
    pub hotflip_correct: bool,
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    /// Number of match plans, as a decimal string; absent when the DP bound was exceeded.
    pub plan_count: Option<String>,
    /// Distinct strings in the space; absent above the count limit.
    pub distinct_strings: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub normal_seconds: f64,
    pub hotflip_seconds: f64,
    pub exhaustive_seconds: f64,
    pub statistics_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub config_hash: String,
    pub examples: usize,
    pub normal_accuracy: f64,
    pub hotflip_accuracy: f64,
    pub exhaustive_accuracy: f64,
    pub exhaustive_evaluated: usize,
    pub exhaustive_skipped: usize,
    pub per_example: Vec<ExampleReport>,
    #[serde(skip)]
    pub timings: PhaseTimings,
}

/// Wall-clock timings are not part of a report's identity.
impl PartialEq for EvalReport {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.config_hash == other.config_hash
            && self.examples == other.examples
            && self.normal_accuracy == other.normal_accuracy
            && self.hotflip_accuracy == other.hotflip_accuracy
            && self.exhaustive_accuracy == other.exhaustive_accuracy
            && self.exhaustive_evaluated == other.exhaustive_evaluated
            && self.exhaustive_skipped == other.exhaustive_skipped
            && self.per_example == other.per_example
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the printed spec, the evaluation settings and the model checkpoint.
pub fn config_hash(model: &Model, spec: &TransformSpec, config: &EvalConfig) -> String {
    let mut h = Sha256::new();
    h.update(print_spec(spec).as_bytes());
    h.update(serde_json::to_string(config).expect("config serializes").as_bytes());
    h.update(write_model(model).as_bytes());
    hex(&h.finalize())
}

fn text(tokens: &[String], alphabet: Alphabet) -> String {
    alphabet.join(tokens)
}

/// Normal, HotFlip and exhaustive accuracy with per-example detail.
///
/// Panics if an example is robust but fails the attack, or survives the attack but is
/// misclassified: either would mean a metric is computed over the wrong set.
pub fn run_report(model: &Model, spec: &TransformSpec, dataset: &Dataset, config: &EvalConfig) -> Result<EvalReport> {
    let mut timings = PhaseTimings::default();

    let t = Instant::now();
    let predictions: Vec<usize> = dataset.examples.par_iter().map(|e| model.predict(&e.tokens)).collect();
    timings.normal_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let hotflip: Vec<bool> = dataset
        .examples
        .par_iter()
        .map(|e| survives_hotflip(model, spec, &e.tokens, e.label, config.beam_k))
        .collect::<Result<_>>()?;
    timings.hotflip_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let exhaustive = exhaustive_accuracy(model, spec, dataset, config.space_budget);
    timings.exhaustive_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let stats: Vec<(Option<String>, Option<usize>)> = dataset
        .examples
        .par_iter()
        .map(|e| {
            (
                count_plans(spec, &e.tokens).ok().map(|c| c.to_string()),
                count_distinct(spec, &e.tokens, config.count_limit),
            )
        })
        .collect();
    timings.statistics_seconds = t.elapsed().as_secs_f64();

    let mut per_example = Vec::with_capacity(dataset.len());
    for (i, e) in dataset.examples.iter().enumerate() {
        let normal_correct = predictions[i] == e.label;
        let verdict = &exhaustive.verdicts[i];
        assert!(
            *verdict != Verdict::Robust || hotflip[i],
            "example {i} is robust but fails the attack"
        );
        assert!(!hotflip[i] || normal_correct, "example {i} survives the attack but is misclassified");
        per_example.push(ExampleReport {
            index: i,
            label: e.label,
            prediction: predictions[i],
            normal_correct,
            hotflip_correct: hotflip[i],
            verdict: verdict.kind(),
            witness: match verdict {
                Verdict::Refuted { witness } => Some(text(witness, dataset.alphabet)),
                _ => None,
            },
            plan_count: stats[i].0.clone(),
            distinct_strings: stats[i].1,
        });
    }
    let n = dataset.len() as f64;
    let report = EvalReport {
        seed: config.seed,
        config_hash: config_hash(model, spec, config),
        examples: dataset.len(),
        normal_accuracy: per_example.iter().filter(|r| r.normal_correct).count() as f64 / n,
        hotflip_accuracy: per_example.iter().filter(|r| r.hotflip_correct).count() as f64 / n,
        exhaustive_accuracy: exhaustive.accuracy,
        exhaustive_evaluated: exhaustive.evaluated,
        exhaustive_skipped: exhaustive.skipped,
        per_example,
        timings,
    };
    if report.exhaustive_skipped == 0 {
        assert!(report.exhaustive_accuracy <= report.hotflip_accuracy);
    }
    Ok(report)
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary.
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("seed         {}\n", self.seed));
        s.push_str(&format!("config hash  {}\n", self.config_hash));
        s.push_str(&format!("examples     {}\n", self.examples));
        s.push_str("metric        accuracy  seconds\n");
        s.push_str(&format!(
            "normal        {:>8.4}  {:>7.3}\n",
            self.normal_accuracy, self.timings.normal_seconds
        ));
        s.push_str(&format!(
            "hotflip       {:>8.4}  {:>7.3}\n",
            self.hotflip_accuracy, self.timings.hotflip_seconds
        ));
        s.push_str(&format!(
            "exhaustive    {:>8.4}  {:>7.3}\n",
            self.exhaustive_accuracy, self.timings.exhaustive_seconds
        ));
        if self.exhaustive_skipped > 0 {
            s.push_str(&format!(
                "skipped      {} of {} examples exceeded the space budget\n",
                self.exhaustive_skipped, self.examples
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic, Example};
    use crate::nn::ArchConfig;

    fn setup() -> (Model, Dataset) {
        let arch = ArchConfig {
            embed_dim: 4,
            kernels: 3,
            width: 3,
            pool: 2,
            hidden: vec![],
        };
        let m = Model::new(&arch, Alphabet::Char, synthetic::vocabulary(), 2, 10, 3).unwrap();
        let d = synthetic::generate(&synthetic::SyntheticConfig {
            examples: 12,
            length: 6,
            ..Default::default()
        });
        (m, d)
    }

    #[test]
    fn zero_budget_metrics_coincide() {
        let (m, d) = setup();
        let spec = synthetic::spec().map_budgets(|_, _| 0);
        let r = run_report(&m, &spec, &d, &EvalConfig::default()).unwrap();
        assert_eq!(r.normal_accuracy, r.hotflip_accuracy);
        assert_eq!(r.normal_accuracy, r.exhaustive_accuracy);
    }

    #[test]
    fn wrong_constant_model_scores_zero() {
        let (mut m, _) = setup();
        for l in &mut m.layers {
            if let Some((w, b)) = l.parameters_mut() {
                w.fill(0.0);
                b.fill(0.0);
            }
        }
        if let Some((_, b)) = m.layers.last_mut().and_then(|l| l.parameters_mut()) {
            b[0] = 1.0;
        }
        let d = Dataset::new(
            Alphabet::Char,
            2,
            vec![Example {
                tokens: Alphabet::Char.tokenize("abc"),
                label: 1,
            }],
        )
        .unwrap();
        let e = exhaustive_accuracy(&m, &synthetic::spec(), &d, 1000);
        assert_eq!(e.accuracy, 0.0);
    }

    #[test]
    fn report_ignores_timings_in_equality() {
        let (m, d) = setup();
        let a = run_report(&m, &synthetic::spec(), &d, &EvalConfig::default()).unwrap();
        let mut b = a.clone();
        b.timings.hotflip_seconds += 1.0;
        assert_eq!(a, b);
    }
}
