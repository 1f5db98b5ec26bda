//! Attack a briefly trained classifier with the gradient-guided beam search and compare the
//! loss it finds with the true worst case from enumeration.

use a3t::attack::{exhaustive_attack, hotflip_beam, DEFAULT_SPACE_BUDGET};
use a3t::data::synthetic::{self, SyntheticConfig};
use a3t::dsl::Alphabet;
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
    let (train_set, val_set, test_set) = (data(300, 1), data(60, 2), data(10, 3));
    let spec = synthetic::spec();
    let arch = ArchConfig {
        embed_dim: 8,
        kernels: 8,
        width: 3,
        pool: 5,
        hidden: vec![],
    };
    let model = Model::new(&arch, Alphabet::Char, synthetic::vocabulary(), 2, 10, 0)?;
    let mut config = TrainConfig::new(Mode::Normal, spec.clone());
    config.epochs = 8;
    config.lr = 0.005;
    let model = train(&config, model, &train_set, &val_set)?.model;

    for e in test_set.iter() {
        let beam = hotflip_beam(&model, &spec, &e.tokens, e.label, 4)?;
        let full = exhaustive_attack(&model, &spec, &e.tokens, e.label, 1, DEFAULT_SPACE_BUDGET)?;
        let worst = beam.worst();
        println!(
            "{} -> {}  beam loss {:.4} (flips: {})  true max {:.4}  forward passes {} vs {}",
            e.tokens.to_text(Alphabet::Char),
            worst.tokens.to_text(Alphabet::Char),
            worst.loss,
            model.predict(&worst.tokens) != e.label,
            full.worst().loss,
            beam.forward_passes,
            full.forward_passes,
        );
    }
    Ok(())
}
