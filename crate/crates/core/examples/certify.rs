//! Certify examples with interval bound propagation, before and after abstract training.
//!
//! A certificate holds for every string in the perturbation space at once. When the bounds
//! are too loose the check falls back to enumerating the space.

use a3t::data::synthetic::{self, SyntheticConfig};
use a3t::dsl::Alphabet;
use a3t::eval::{certify, Certificate};
use a3t::ibp::propagate;
use a3t::abstraction::abstract_space;
use a3t::nn::{ArchConfig, Model};
use a3t::train::{train, Mode, TrainConfig};

fn main() -> a3t::Result<()> {
    let data = |examples, seed| {
        synthetic::generate(&SyntheticConfig {
            examples,
            spurious: 0.95,
            seed,
            ..SyntheticConfig::default()
        })
    };
    let (train_set, val_set, test_set) = (data(300, 11), data(60, 12), data(100, 13));
    // Swaps change positions, so only substitutions are abstracted here.
    let spec = synthetic::spec().subset(|_, rb| rb.rule.name == "SubAdj");
    let arch = ArchConfig {
        embed_dim: 8,
        kernels: 8,
        width: 3,
        pool: 5,
        hidden: vec![],
    };
    let initial = Model::new(&arch, Alphabet::Char, synthetic::vocabulary(), 2, 10, 0)?;

    for mode in [Mode::Normal, Mode::AbstractionOnly] {
        let mut config = TrainConfig::new(mode, spec.clone());
        config.epochs = 10;
        config.lr = 0.005;
        let model = train(&config, initial.clone(), &train_set, &val_set)?.model;

        let (mut by_bounds, mut certified, mut refuted) = (0, 0, 0);
        for e in test_set.iter() {
            let b = abstract_space(&spec, &e.tokens, &model.vocab, &model.embedding)?;
            if propagate(&model, &b)?.certifies(e.label) {
                by_bounds += 1;
            }
            match certify(&model, &spec, &e.tokens, e.label, 10_000)? {
                Certificate::Certified => certified += 1,
                Certificate::Refuted { .. } => refuted += 1,
                Certificate::Unknown => {}
            }
        }
        println!(
            "{mode}: {by_bounds} certified by bounds alone, {certified} certified overall, {refuted} refuted, of {}",
            test_set.len()
        );
    }
    Ok(())
}
