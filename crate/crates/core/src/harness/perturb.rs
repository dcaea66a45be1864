//! Butter Fingers: random keyboard-adjacent misspellings.
//!
//! Each ASCII letter is independently replaced, with probability `rate`, by
//! a uniformly chosen physical neighbor on a QWERTY keyboard. Case is kept;
//! every other character passes through untouched.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RATE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub rate: f64,
    pub seed: u64,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        PerturbSpec {
            rate: DEFAULT_RATE,
            seed: 0,
        }
    }
}

impl PerturbSpec {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("perturbation rate {rate} must be in [0, 1]")));
        }
        Ok(PerturbSpec { rate, seed })
    }
}

/// Neighbors of each lowercase letter, `a` through `z`. Same-row keys plus
/// the two touching keys in the rows above and below on a staggered layout.
const ADJACENT: [&str; 26] = [
    "qwsz",   // a
    "vghn",   // b
    "xdfv",   // c
    "serfcx", // d
    "wrsd",   // e
    "drtgvc", // f
    "ftyhbv", // g
    "gyujnb", // h
    "uojk",   // i
    "huikmn", // j
    "jiolm",  // k
    "kop",    // l
    "njk",    // m
    "bhjm",   // n
    "ipkl",   // o
    "ol",     // p
    "wa",     // q
    "etdf",   // r
    "awedxz", // s
    "ryfg",   // t
    "yihj",   // u
    "cfgb",   // v
    "qeas",   // w
    "zsdc",   // x
    "tugh",   // y
    "asx",    // z
];

/// QWERTY neighbors of `c` (lowercase), or `None` for non-letters.
pub fn neighbors(c: char) -> Option<&'static str> {
    let lower = c.to_ascii_lowercase();
    lower
        .is_ascii_lowercase()
        .then(|| ADJACENT[(lower as u8 - b'a') as usize])
}

pub fn butter_fingers(text: &str, spec: &PerturbSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    text.chars()
        .map(|c| {
            let Some(options) = neighbors(c) else {
                return c;
            };
            if !rng.gen_bool(spec.rate) {
                return c;
            }
            let pick = options.as_bytes()[rng.gen_range(0..options.len())] as char;
            if c.is_ascii_uppercase() {
                pick.to_ascii_uppercase()
            } else {
                pick
            }
        })
        .collect()
}
