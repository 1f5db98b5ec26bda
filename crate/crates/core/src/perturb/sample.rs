use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::enumerate_space;
use crate::dsl::{TokenString, TransformSpec};

/// Random-augmentation sampler: for each rule in order, draws uniformly from the distinct
/// strings of that single rule's space over the current string and feeds the draw forward.
pub fn sample_sequential(spec: &TransformSpec, x: &[String], seed: u64) -> TokenString {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_sequential_with(spec, x, &mut rng)
}

pub fn sample_sequential_with<R: Rng + ?Sized>(spec: &TransformSpec, x: &[String], rng: &mut R) -> TokenString {
    let mut current = TokenString::new(x.to_vec());
    for (i, _) in spec.rules().iter().enumerate() {
        let single = spec.subset(|j, _| j == i);
        let space: Vec<TokenString> = enumerate_space(&single, &current, None).collect();
        let pick = rng.gen_range(0..space.len());
        current = space.into_iter().nth(pick).expect("space contains the input");
    }
    current
}
