//! Writes the synthetic task to disk so the `a3t` binary can be driven by hand:
//!
//! ```text
//! cargo run --release --example synthetic_files -- /tmp/synth
//! a3t --spec /tmp/synth/spec.toml train --data /tmp/synth/train.tsv --val /tmp/synth/val.tsv \
//!     --out /tmp/synth/model.txt --max-len 10 --embed-dim 8 --kernels 8 --width 3 --lr 0.005
//! a3t --spec /tmp/synth/spec.toml eval --model /tmp/synth/model.txt --data /tmp/synth/test.tsv
//! ```

use std::fs;
use std::path::PathBuf;

use a3t::data::save_dataset;
use a3t::data::synthetic::{self, SyntheticConfig};
use a3t::dsl::print_spec;

fn main() -> a3t::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "synthetic".into()).into();
    fs::create_dir_all(&dir).map_err(|e| a3t::Error::Config(format!("{}: {e}", dir.display())))?;

    let split = |examples, seed| {
        synthetic::generate(&SyntheticConfig {
            examples,
            spurious: 0.95,
            seed,
            ..SyntheticConfig::default()
        })
    };
    save_dataset(&split(500, 100), dir.join("train.tsv"))?;
    save_dataset(&split(100, 101), dir.join("val.tsv"))?;
    save_dataset(&split(300, 102), dir.join("test.tsv"))?;

    let mut table = String::new();
    for (key, values) in synthetic::adjacency_table().iter() {
        table.push_str(&format!("{key}\t{}\n", values.join(",")));
    }
    let spec = format!(
        "{}\n[resources.tables]\n{} = \"{}.tsv\"\n",
        print_spec(&synthetic::spec()),
        synthetic::ADJACENCY,
        synthetic::ADJACENCY
    );
    let write = |name: &str, text: &str| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| a3t::Error::Config(format!("{}: {e}", path.display())))
    };
    write(&format!("{}.tsv", synthetic::ADJACENCY), &table)?;
    write("spec.toml", &spec)?;
    println!("wrote train/val/test splits, spec and pair table to {}", dir.display());
    Ok(())
}
