//! Build a word-level spec from TOML, then enumerate and count its perturbation space.
//!
//! ```text
//! cargo run --example perturbation_space
//! ```

use a3t::dsl::{parse_spec, Alphabet, ResourceTables, SubstitutionTable};
use a3t::perturb::{count_plans, enumerate_space, find_matches};

const SPEC: &str = r#"
alphabet = "word"

[[rules]]
name = "DelStop"
builtin = "DelStop"
delta = 1

[[rules]]
name = "Dup"
builtin = "Dup"
delta = 1

[[rules]]
name = "SubSyn"
builtin = "SubSyn"
table = "synonyms"
delta = 1
"#;

fn main() -> a3t::Result<()> {
    let mut synonyms = SubstitutionTable::new();
    synonyms.insert("movie", ["film", "picture"]);
    synonyms.insert("great", ["fine"]);
    let mut resources = ResourceTables::shipped();
    resources.add_table("synonyms", synonyms);

    let spec = parse_spec(SPEC, &resources)?;
    let x = Alphabet::Word.tokenize("a great movie to see");

    println!("matches:");
    for m in find_matches(&spec, &x) {
        println!("  {:8} tokens {}..={}", spec.rules()[m.rule].rule.name, m.start, m.end);
    }

    let space: Vec<_> = enumerate_space(&spec, &x, None).collect();
    println!("{} match plans, {} distinct strings", count_plans(&spec, &x)?, space.len());
    for z in &space {
        println!("  {}", z.to_text(Alphabet::Word));
    }
    Ok(())
}
