//! Compare training modes on the synthetic task by exhaustive accuracy, averaged over seeds.
//!
//! ```text
//! cargo run --release --example synthetic_robustness -- 5
//! ```
//!
//! The training data carries a spurious letter preference that perturbations break, so a
//! normally trained model scores well on clean inputs but poorly on whole perturbation spaces.

use std::time::Instant;

use a3t::data::synthetic::{self, SyntheticConfig};
use a3t::dsl::Alphabet;
use a3t::eval::{exhaustive_accuracy, normal_accuracy};
use a3t::nn::{ArchConfig, Model};
use a3t::train::{train, Mode, TrainConfig};

fn main() -> a3t::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let spec = synthetic::spec();
    let arch = ArchConfig {
        embed_dim: 8,
        kernels: 8,
        width: 3,
        pool: 5,
        hidden: vec![],
    };
    let start = Instant::now();
    println!("{:<12} {:>8} {:>11}", "mode", "normal", "exhaustive");
    for mode in [Mode::Normal, Mode::RandomAug, Mode::HotflipAug, Mode::A3tSearch, Mode::A3tHotflip] {
        let (mut clean, mut robust) = (0.0, 0.0);
        for seed in 0..seeds {
            let data = |examples, offset| {
                synthetic::generate(&SyntheticConfig {
                    examples,
                    spurious: 0.95,
                    seed: seed * 3 + offset,
                    ..SyntheticConfig::default()
                })
            };
            let (train_set, val_set, test_set) = (data(500, 100), data(100, 101), data(300, 102));
            let model = Model::new(&arch, Alphabet::Char, synthetic::vocabulary(), 2, 10, seed)?;
            let mut config = TrainConfig::new(mode, spec.clone());
            config.epochs = 20;
            config.batch_size = 16;
            config.lr = 0.005;
            config.seed = seed;
            let model = train(&config, model, &train_set, &val_set)?.model;
            clean += normal_accuracy(&model, &test_set);
            robust += exhaustive_accuracy(&model, &spec, &test_set, 100_000).accuracy;
        }
        let n = seeds as f64;
        println!("{:<12} {:>8.3} {:>11.3}", mode.as_str(), clean / n, robust / n);
    }
    println!("{seeds} seeds in {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
