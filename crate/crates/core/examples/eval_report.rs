//! Full evaluation report: normal, beam-attack and exhaustive accuracy with per-example
//! verdicts, as a table and as JSON.

use a3t::data::synthetic::{self, SyntheticConfig};
use a3t::dsl::Alphabet;
use a3t::eval::{run_report, EvalConfig};
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
    let (train_set, val_set, test_set) = (data(300, 31), data(60, 32), data(50, 33));
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

    let report = run_report(&model, &spec, &test_set, &EvalConfig::default())?;
    print!("{}", report.table());
    for e in report.per_example.iter().filter(|e| e.witness.is_some()).take(5) {
        println!(
            "example {} (label {}) refuted by {}",
            e.index,
            e.label,
            e.witness.as_deref().unwrap_or_default()
        );
    }
    let json = report.to_json();
    println!("json report: {} bytes", json.len());
    Ok(())
}
