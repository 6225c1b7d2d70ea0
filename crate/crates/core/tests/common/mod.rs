#![allow(dead_code)]

use std::path::PathBuf;

use detox_core::{Language, ParallelPair};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

const NEUTRAL: &[&str] = &[
    "mo", "ri", "ile", "oja", "ọjọ́", "lọ", "wá", "sí", "ní", "àti", "ẹ̀kọ́", "ọmọ", "ìlú", "owó",
    "iṣẹ́", "ounjẹ", "ọ̀rẹ́", "bàbá", "ìyá", "ọ̀nà", "òjò", "ìwé", "ojú", "ọkàn",
];
const TOXIC: &[&str] = &["asiwèrè", "òpònú", "ìkà", "aláìmọ̀kan", "dìndìnrìn", "ọ̀bùn", "olè"];
const POLITE: &[&str] = &["jọ̀wọ́", "ẹ ṣé", "ìrètí", "àlàáfíà", "ìmọ̀"];

/// A Yorùbá-flavoured synthetic parallel corpus: each toxic side carries at
/// least one insult token (with probability `signal`), each rewrite swaps
/// insults for polite words. Noise makes the task imperfectly separable.
pub fn synthetic_corpus(pairs: usize, signal: f64, seed: u64) -> Vec<ParallelPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pairs);
    let mut seen = std::collections::HashSet::new();
    while out.len() < pairs {
        let len = rng.gen_range(3..=7);
        let mut toxic: Vec<&str> = (0..len).map(|_| *NEUTRAL.choose(&mut rng).unwrap()).collect();
        let mut detox = toxic.clone();
        if rng.gen_bool(signal) {
            let pos = rng.gen_range(0..=toxic.len());
            toxic.insert(pos, TOXIC.choose(&mut rng).unwrap());
            detox.insert(pos, POLITE.choose(&mut rng).unwrap());
        } else {
            let pos = rng.gen_range(0..detox.len());
            detox[pos] = NEUTRAL.choose(&mut rng).unwrap();
        }
        let toxic = toxic.join(" ");
        let detox = detox.join(" ");
        if toxic == detox || !seen.insert(detox_core::normalizer::normalize_text(&toxic)) {
            continue;
        }
        out.push(ParallelPair::new(&toxic, &detox, Language::Yoruba).unwrap());
    }
    out
}
