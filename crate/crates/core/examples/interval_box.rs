//! The interval box around a perturbation space in embedding space, and a check that every
//! concrete perturbation's embedding falls inside it.

use a3t::abstraction::{abstract_space, embed_tokens};
use a3t::data::{synthetic, EmbeddingTable};
use a3t::dsl::Alphabet;
use a3t::perturb::enumerate_space;

fn main() -> a3t::Result<()> {
    let spec = synthetic::spec().map_budgets(|_, _| 2);
    let vocab = synthetic::vocabulary();
    let emb = EmbeddingTable::random(vocab.len(), 2, 3);
    let x = Alphabet::Char.tokenize("aceg");

    let b = abstract_space(&spec, &x, &vocab, &emb)?;
    for p in 0..b.positions {
        let dims: Vec<String> = (0..b.dim)
            .map(|k| format!("[{:+.3}, {:+.3}]", b.lower_at(p, k), b.upper_at(p, k)))
            .collect();
        println!("{}  {}", x[p], dims.join("  "));
    }

    let mut inside = 0;
    let mut total = 0;
    for z in enumerate_space(&spec, &x, None) {
        total += 1;
        if b.contains(&embed_tokens(&z, &vocab, &emb))? {
            inside += 1;
        }
    }
    println!("{inside}/{total} perturbed strings embed inside the box");
    Ok(())
}
