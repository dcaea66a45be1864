//! Shared inputs for the criterion benches under `benches/`.

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Deterministic pseudo-sentences of `words` tokens drawn from a small vocabulary.
pub fn sentence(seed: usize, words: usize) -> String {
    const VOCAB: [&str; 12] = [
        "the", "cat", "sat", "on", "a", "mat", "while", "dogs", "ran", "past", "red", "doors",
    ];
    (0..words)
        .map(|i| VOCAB[(seed.wrapping_mul(31) + i * 7 + i * i) % VOCAB.len()])
        .collect::<Vec<_>>()
        .join(" ")
}
