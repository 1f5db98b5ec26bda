//! Training: normal, random augmentation, HotFlip augmentation, A3T with HotFlip or
//! exhaustive search for the augmented part, and abstraction only.
//!
//! In the A3T modes the spec is split into an augmentation part `S_aug`, searched
//! concretely for the top-k candidates, and an abstraction part `S_abs`, over-approximated
//! by an interval box around each candidate. The per-example objective is
//! `(1 − λ)·L(x) + λ·max_z abstract_loss(abstract(S_abs, z))` with `λ` rising linearly
//! during a warm-up phase.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abstraction::abstract_space_traced;
use crate::attack::{exhaustive_attack, hotflip_beam, DEFAULT_SPACE_BUDGET};
use crate::data::{Dataset, Vocabulary};
use crate::dsl::{Builtin, TokenString, TransformSpec};
use crate::error::{Error, Result};
use crate::ibp::abstract_loss_and_grads;
use crate::nn::{argmax, cross_entropy, Adam, Grads, Model};
use crate::perturb::sample_sequential_with;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Normal,
    RandomAug,
    HotflipAug,
    A3tHotflip,
    A3tSearch,
    AbstractionOnly,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Normal,
        Mode::RandomAug,
        Mode::HotflipAug,
        Mode::A3tHotflip,
        Mode::A3tSearch,
        Mode::AbstractionOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::RandomAug => "random-aug",
            Mode::HotflipAug => "hotflip-aug",
            Mode::A3tHotflip => "a3t-hotflip",
            Mode::A3tSearch => "a3t-search",
            Mode::AbstractionOnly => "abstraction-only",
        }
    }

    /// Whether the objective is blended with the curriculum weight λ.
    pub fn uses_lambda(self) -> bool {
        matches!(self, Mode::A3tHotflip | Mode::A3tSearch | Mode::AbstractionOnly)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown training mode `{s}`")))
    }
}

/// Where a rule is explored: by concrete search or by abstraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Aug,
    Abs,
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aug" => Ok(Side::Aug),
            "abs" => Ok(Side::Abs),
            _ => Err(Error::Config(format!("expected `aug` or `abs`, found `{s}`"))),
        }
    }
}

/// The usual assignment: substitutions are abstracted, everything else is searched.
/// Custom rules are abstracted when they are length-preserving.
pub fn default_assignment(spec: &TransformSpec) -> Vec<Side> {
    spec.rules()
        .iter()
        .map(|rb| match rb.rule.builtin {
            Some(Builtin::SubAdj | Builtin::SubSyn) => Side::Abs,
            Some(_) => Side::Aug,
            None if rb.rule.is_length_preserving() => Side::Abs,
            None => Side::Aug,
        })
        .collect()
}

/// Parses `name=aug,name=abs`. Rules not mentioned keep their [`default_assignment`].
pub fn parse_assignment(spec: &TransformSpec, text: &str) -> Result<Vec<Side>> {
    let mut sides = default_assignment(spec);
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, side) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected `rule=aug|abs`, found `{item}`")))?;
        let i = spec
            .rule_index(name.trim())
            .ok_or_else(|| Error::Config(format!("no rule named `{}` in the spec", name.trim())))?;
        sides[i] = side.trim().parse()?;
    }
    Ok(sides)
}

/// Splits `spec` into `(S_aug, S_abs)` with budgets preserved.
pub fn split_spec(spec: &TransformSpec, assignment: &[Side]) -> Result<(TransformSpec, TransformSpec)> {
    if assignment.len() != spec.rules().len() {
        return Err(Error::Config(format!(
            "assignment covers {} rules, spec has {}",
            assignment.len(),
            spec.rules().len()
        )));
    }
    let aug = spec.subset(|i, _| assignment[i] == Side::Aug);
    let abs = spec.subset(|i, _| assignment[i] == Side::Abs);
    if let Some(rb) = abs.rules().iter().find(|rb| !rb.rule.is_length_preserving()) {
        return Err(Error::NotLengthPreserving(rb.rule.name.clone()));
    }
    Ok((aug, abs))
}

/// Linear ramp of λ from `start` to `end` over the first `warm_fraction` of the epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub start: f64,
    pub end: f64,
    pub warm_fraction: f64,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        Self {
            start: 0.0,
            end: 1.0,
            warm_fraction: 0.5,
        }
    }
}

impl LambdaSchedule {
    pub fn constant(value: f64) -> Self {
        Self {
            start: value,
            end: value,
            warm_fraction: 0.0,
        }
    }

    /// Number of epochs in the ramp, the last of which uses `end`.
    pub fn warm_epochs(&self, epochs: usize) -> usize {
        ((self.warm_fraction * epochs as f64).ceil() as usize).clamp(1, epochs.max(1))
    }

    pub fn value(&self, epoch: usize, epochs: usize) -> f64 {
        let warm = self.warm_epochs(epochs);
        if warm <= 1 || epoch + 1 >= warm {
            return self.end;
        }
        self.start + (self.end - self.start) * epoch as f64 / (warm - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub spec: TransformSpec,
    /// One side per rule of `spec`; ignored outside the A3T modes.
    pub assignment: Vec<Side>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: LambdaSchedule,
    pub augment_k: usize,
    pub beam_k: usize,
    pub seed: u64,
    pub patience: usize,
    /// Largest `S_aug(x)` the search variant enumerates before falling back to the beam.
    pub space_budget: usize,
}

impl TrainConfig {
    pub fn new(mode: Mode, spec: TransformSpec) -> Self {
        let assignment = default_assignment(&spec);
        Self {
            mode,
            spec,
            assignment,
            epochs: 30,
            batch_size: 32,
            lr: 1e-3,
            lambda: LambdaSchedule::default(),
            augment_k: 2,
            beam_k: 2,
            seed: 0,
            patience: 5,
            space_budget: DEFAULT_SPACE_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        let l = &self.lambda;
        if ![l.start, l.end].iter().all(|v| (0.0..=1.0).contains(v)) || !(0.0..=1.0).contains(&l.warm_fraction) {
            return Err(Error::Config("lambda values and warm fraction must lie in [0, 1]".into()));
        }
        if self.augment_k == 0 || self.beam_k == 0 {
            return Err(Error::Config("augment_k and beam_k must be positive".into()));
        }
        self.splits().map(|_| ())
    }

    /// `(S_aug, S_abs)` for this mode.
    pub fn splits(&self) -> Result<(TransformSpec, TransformSpec)> {
        match self.mode {
            Mode::AbstractionOnly => split_spec(&self.spec, &vec![Side::Abs; self.spec.rules().len()]),
            _ => split_spec(&self.spec, &self.assignment),
        }
    }
}

/// Components of one example's objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObjectiveParts {
    pub total: f64,
    pub normal: f64,
    pub adversarial: f64,
}

/// Everything the per-example objective needs besides the model.
pub struct Objective<'a> {
    pub mode: Mode,
    pub spec: &'a TransformSpec,
    pub aug: TransformSpec,
    pub abs: TransformSpec,
    pub augment_k: usize,
    pub beam_k: usize,
    pub space_budget: usize,
}

impl<'a> Objective<'a> {
    pub fn new(config: &'a TrainConfig) -> Result<Self> {
        let (aug, abs) = config.splits()?;
        Ok(Self {
            mode: config.mode,
            spec: &config.spec,
            aug,
            abs,
            augment_k: config.augment_k,
            beam_k: config.beam_k,
            space_budget: config.space_budget,
        })
    }

    /// The A3T candidates `augment_k(S_aug, x)`.
    fn candidates(&self, model: &Model, x: &[String], y: usize) -> Result<Vec<TokenString>> {
        let result = match self.mode {
            Mode::A3tSearch => match exhaustive_attack(model, &self.aug, x, y, self.augment_k, self.space_budget) {
                Err(Error::SpaceTooLarge { .. }) => hotflip_beam(model, &self.aug, x, y, self.augment_k)?,
                r => r?,
            },
            _ => hotflip_beam(model, &self.aug, x, y, self.augment_k)?,
        };
        Ok(result.candidates.into_iter().map(|c| c.tokens).collect())
    }

    /// Objective value and, when `with_grads`, its gradient. `sample_rng` drives the random
    /// augmentation mode only.
    pub fn evaluate(
        &self,
        model: &Model,
        x: &[String],
        y: usize,
        lambda: f64,
        sample_rng: &mut ChaCha8Rng,
        with_grads: bool,
    ) -> Result<(ObjectiveParts, Option<Grads>)> {
        let concrete = |z: &[String]| -> (f64, Option<Grads>) {
            if with_grads {
                let (l, g) = model.loss_and_grads(z, y);
                (l, Some(g))
            } else {
                (model.loss(z, y), None)
            }
        };
        let (normal, g_normal) = concrete(x);
        let sum = |a: Option<Grads>, b: Option<Grads>, fa: f64, fb: f64| -> Option<Grads> {
            match (a, b) {
                (Some(mut a), Some(b)) => {
                    a.scale(fa);
                    a.add_scaled(&b, fb);
                    Some(a)
                }
                _ => None,
            }
        };
        let parts = |total, adversarial| ObjectiveParts {
            total,
            normal,
            adversarial,
        };
        match self.mode {
            Mode::Normal => Ok((parts(normal, 0.0), g_normal)),
            Mode::RandomAug | Mode::HotflipAug => {
                let z = if self.mode == Mode::RandomAug {
                    sample_sequential_with(self.spec, x, sample_rng)
                } else {
                    hotflip_beam(model, self.spec, x, y, self.beam_k)?.worst().tokens.clone()
                };
                let (adv, g_adv) = concrete(&z);
                Ok((parts(normal + adv, adv), sum(g_normal, g_adv, 1.0, 1.0)))
            }
            Mode::A3tHotflip | Mode::A3tSearch | Mode::AbstractionOnly => {
                let candidates = if self.mode == Mode::AbstractionOnly {
                    vec![TokenString::new(x.to_vec())]
                } else {
                    self.candidates(model, x, y)?
                };
                let mut best: Option<(f64, Option<Grads>)> = None;
                for z in &candidates {
                    let b = abstract_space_traced(&self.abs, z, &model.vocab, &model.embedding)?;
                    let (l, g) = if with_grads {
                        let (l, g) = abstract_loss_and_grads(model, &b, y)?;
                        (l, Some(g))
                    } else {
                        (crate::ibp::abstract_loss(model, &b.interval, y)?, None)
                    };
                    if best.as_ref().map_or(true, |(bl, _)| l > *bl) {
                        best = Some((l, g));
                    }
                }
                let (adv, g_adv) = best.expect("candidates always include one string");
                let total = (1.0 - lambda) * normal + lambda * adv;
                Ok((parts(total, adv), sum(g_normal, g_adv, 1.0 - lambda, lambda)))
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub train_objective: f64,
    pub train_normal_loss: f64,
    pub train_adversarial_loss: f64,
    pub val_objective: f64,
    pub val_accuracy: f64,
    /// Whether this epoch's model became the returned checkpoint.
    pub best: bool,
    pub skipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// The checkpoint with the best validation objective.
    pub model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// The log as JSON lines.
    pub fn log_lines(&self) -> String {
        self.log
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }
}

/// Deterministic per-(epoch, example) generator, independent of thread scheduling.
fn example_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Mean objective and accuracy over a dataset, without gradients.
pub fn evaluate_objective(objective: &Objective<'_>, model: &Model, data: &Dataset, lambda: f64, seed: u64) -> Result<(ObjectiveParts, f64)> {
    let results: Vec<(ObjectiveParts, bool)> = data
        .examples
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut rng = example_rng(seed ^ 0x5eed, usize::MAX >> 32, i);
            let (p, _) = objective.evaluate(model, &e.tokens, e.label, lambda, &mut rng, false)?;
            Ok((p, argmax(&model.logits(&e.tokens)) == e.label))
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let mut mean = ObjectiveParts::default();
    for (p, _) in &results {
        mean.total += p.total;
        mean.normal += p.normal;
        mean.adversarial += p.adversarial;
    }
    mean.total /= n;
    mean.normal /= n;
    mean.adversarial /= n;
    let acc = results.iter().filter(|(_, ok)| *ok).count() as f64 / n;
    Ok((mean, acc))
}

/// Tokens of the given datasets followed by every token the spec's tables can write, so
/// substituted tokens get their own embedding rows instead of `<unk>`.
pub fn training_vocabulary<'a>(spec: &TransformSpec, datasets: impl IntoIterator<Item = &'a Dataset>) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for d in datasets {
        for e in &d.examples {
            for t in e.tokens.iter() {
                vocab.insert(t.clone());
            }
        }
    }
    let alphabet = spec.alphabet();
    for rb in spec.rules() {
        let Some(named) = rb.rule.replacer.table() else {
            continue;
        };
        for (key, values) in named.table.iter() {
            for text in std::iter::once(key).chain(values.iter().map(String::as_str)) {
                for t in alphabet.tokenize(text).iter() {
                    vocab.insert(t.clone());
                }
            }
        }
    }
    vocab
}

/// Trains `model` on `train`, early-stopping on the mode's objective over `validation`.
///
/// In modes that use λ, early stopping and checkpoint selection start once λ has reached its
/// final value; before that the monitored objective is not comparable across epochs.
pub fn train(config: &TrainConfig, mut model: Model, train: &Dataset, validation: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    if train.classes != model.classes || validation.classes != model.classes {
        return Err(Error::Config(format!(
            "model has {} classes, data has {}",
            model.classes, train.classes
        )));
    }
    let objective = Objective::new(config)?;
    let mut adam = Adam::new(config.lr);
    let warm_end = config.lambda.warm_epochs(config.epochs) - 1;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        let lambda = if config.mode.uses_lambda() {
            config.lambda.value(epoch, config.epochs)
        } else {
            0.0
        };
        let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle.set_stream(u64::MAX - epoch as u64);
        order.shuffle(&mut shuffle);

        let mut totals = ObjectiveParts::default();
        let mut skipped = 0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(ObjectiveParts, Grads)> = batch
                .par_iter()
                .map(|&i| {
                    let e = &train.examples[i];
                    let mut rng = example_rng(config.seed, epoch, i);
                    let (p, g) = objective.evaluate(&model, &e.tokens, e.label, lambda, &mut rng, true)?;
                    if !p.total.is_finite() {
                        return Err(Error::NonFinite(format!("training objective at epoch {epoch}, example {i}")));
                    }
                    Ok((p, g.expect("gradients requested")))
                })
                .collect::<Result<_>>()?;
            let mut grads = Grads::zeros(&model);
            for (p, g) in &results {
                totals.total += p.total;
                totals.normal += p.normal;
                totals.adversarial += p.adversarial;
                grads.add(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            match adam.step(&mut model, &grads) {
                Ok(()) => {}
                Err(Error::NonFinite(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        let n = train.len() as f64;
        let (val, val_accuracy) = evaluate_objective(&objective, &model, validation, lambda, config.seed)?;

        let eligible = !config.mode.uses_lambda() || epoch >= warm_end;
        let mut improved = false;
        if eligible {
            if best.as_ref().map_or(true, |(b, _, _)| val.total < *b) {
                best = Some((val.total, epoch, model.clone()));
                since_best = 0;
                improved = true;
            } else {
                since_best += 1;
            }
        }
        log.push(EpochRecord {
            epoch,
            lambda,
            train_objective: totals.total / n,
            train_normal_loss: totals.normal / n,
            train_adversarial_loss: totals.adversarial / n,
            val_objective: val.total,
            val_accuracy,
            best: improved,
            skipped_steps: skipped,
        });
        if eligible && since_best >= config.patience {
            break;
        }
    }
    let (_, best_epoch, model) = match best {
        Some(b) => b,
        None => (f64::NAN, log.len().saturating_sub(1), model),
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

/// The A3T objective for one example with explicit splits, for direct use and testing.
#[allow(clippy::too_many_arguments)]
pub fn adversarial_loss_a3t(
    model: &Model,
    aug: &TransformSpec,
    abs: &TransformSpec,
    x: &[String],
    y: usize,
    lambda: f64,
    k: usize,
    search: bool,
) -> Result<f64> {
    let objective = Objective {
        mode: if search { Mode::A3tSearch } else { Mode::A3tHotflip },
        spec: aug,
        aug: aug.clone(),
        abs: abs.clone(),
        augment_k: k,
        beam_k: k,
        space_budget: DEFAULT_SPACE_BUDGET,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(objective.evaluate(model, x, y, lambda, &mut rng, false)?.0.total)
}

/// Plain cross-entropy, exposed for comparisons against the objectives above.
pub fn normal_loss(model: &Model, x: &[String], y: usize) -> f64 {
    cross_entropy(&model.logits(x), y).0
}
