//! Train with A3T: swaps are searched with the beam attack, substitutions are abstracted,
//! and λ ramps up over the first half of training. The result is checkpointed and reloaded.

use a3t::data::synthetic::{self, SyntheticConfig};
use a3t::dsl::Alphabet;
use a3t::nn::{load_model, save_model, ArchConfig, Model};
use a3t::train::{parse_assignment, train, LambdaSchedule, Mode, TrainConfig};

fn main() -> a3t::Result<()> {
    let data = |examples, seed| {
        synthetic::generate(&SyntheticConfig {
            examples,
            spurious: 0.95,
            seed,
            ..SyntheticConfig::default()
        })
    };
    let (train_set, val_set) = (data(500, 21), data(100, 22));
    let spec = synthetic::spec();

    let mut config = TrainConfig::new(Mode::A3tHotflip, spec.clone());
    config.assignment = parse_assignment(&spec, "SwapPair=aug,SubAdj=abs")?;
    config.epochs = 12;
    config.batch_size = 16;
    config.lr = 0.005;
    config.lambda = LambdaSchedule {
        start: 0.0,
        end: 1.0,
        warm_fraction: 0.5,
    };
    let arch = ArchConfig {
        embed_dim: 8,
        kernels: 8,
        width: 3,
        pool: 5,
        hidden: vec![],
    };
    let model = Model::new(&arch, Alphabet::Char, synthetic::vocabulary(), 2, 10, config.seed)?;
    println!("{} parameters", model.parameter_count());

    let outcome = train(&config, model, &train_set, &val_set)?;
    print!("{}", outcome.log_lines());
    println!("best epoch {}", outcome.best_epoch);

    let path = std::env::temp_dir().join("a3t-example-model.txt");
    save_model(&outcome.model, &path)?;
    let reloaded = load_model(&path, Some(2))?;
    let agree = val_set
        .iter()
        .filter(|e| reloaded.predict(&e.tokens) == outcome.model.predict(&e.tokens))
        .count();
    println!("reloaded from {}: {agree}/{} predictions unchanged", path.display(), val_set.len());
    Ok(())
}
