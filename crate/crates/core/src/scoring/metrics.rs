//! Text metrics. Every metric maps `(prediction, references)` into `[0, 1]`
//! and takes the maximum over references.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    ExactMatch,
    Contains,
    TokenF1,
    SetMatch,
    Bleu,
}

impl MetricId {
    pub const ALL: [MetricId; 5] = [
        MetricId::ExactMatch,
        MetricId::Contains,
        MetricId::TokenF1,
        MetricId::SetMatch,
        MetricId::Bleu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricId::ExactMatch => "exact_match",
            MetricId::Contains => "contains",
            MetricId::TokenF1 => "token_f1",
            MetricId::SetMatch => "set_match",
            MetricId::Bleu => "bleu",
        }
    }
}

impl std::str::FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        MetricId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidTask(format!("metric: unknown identifier {s:?}")))
    }
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

/// Lowercase, collapse whitespace runs to single spaces, trim, and strip any
/// trailing run of `.,;:!?` (and whitespace exposed by stripping it).
pub fn normalize(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| TRAILING_PUNCT.contains(&c) || c.is_whitespace())
        .to_owned()
}

fn tokens(normalized: &str) -> Vec<&str> {
    normalized.split_whitespace().collect()
}

fn best_over<F: Fn(&str) -> f64>(references: &[String], f: F) -> f64 {
    references.iter().map(|r| f(r)).fold(0.0, f64::max)
}

pub fn exact_match(prediction: &str, references: &[String]) -> f64 {
    let p = normalize(prediction);
    best_over(references, |r| if normalize(r) == p { 1.0 } else { 0.0 })
}

pub fn contains(prediction: &str, references: &[String]) -> f64 {
    let p = normalize(prediction);
    best_over(references, |r| if p.contains(&normalize(r)) { 1.0 } else { 0.0 })
}

fn counts<'a>(items: &[&'a str]) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for t in items {
        *m.entry(*t).or_insert(0) += 1;
    }
    m
}

/// Token F1 for one reference: `2 * overlap / (|pred| + |ref|)`, with the
/// overlap counted as a multiset intersection.
fn token_f1_single(pred: &[&str], reference: &[&str]) -> f64 {
    if pred.is_empty() && reference.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let rc = counts(reference);
    let overlap: usize = counts(pred)
        .iter()
        .map(|(t, n)| (*n).min(rc.get(t).copied().unwrap_or(0)))
        .sum();
    2.0 * overlap as f64 / (pred.len() + reference.len()) as f64
}

pub fn token_f1(prediction: &str, references: &[String]) -> f64 {
    let p = normalize(prediction);
    let pt = tokens(&p);
    best_over(references, |r| {
        let r = normalize(r);
        token_f1_single(&pt, &tokens(&r))
    })
}

fn items(text: &str) -> BTreeSet<String> {
    text.split(',').map(normalize).filter(|s| !s.is_empty()).collect()
}

/// Jaccard similarity of the comma-separated item sets.
pub fn set_match(prediction: &str, references: &[String]) -> f64 {
    let p = items(prediction);
    best_over(references, |r| {
        let r = items(r);
        let union = p.union(&r).count();
        if union == 0 {
            return 1.0;
        }
        p.intersection(&r).count() as f64 / union as f64
    })
}

pub const BLEU_ORDER: usize = 4;

fn ngram_counts<'a, 'b>(toks: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Combines clipped n-gram matches and totals into add-one smoothed BLEU-4
/// with brevity penalty. Shared by the metric and its test oracle so both
/// perform the same floating point operations.
pub fn bleu_from_counts(matches: &[usize; BLEU_ORDER], totals: &[usize; BLEU_ORDER], cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        return if ref_len == 0 { 1.0 } else { 0.0 };
    }
    let mut log_sum = 0.0;
    for n in 0..BLEU_ORDER {
        let p = (matches[n] as f64 + 1.0) / (totals[n] as f64 + 1.0);
        log_sum += p.ln();
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * (log_sum / BLEU_ORDER as f64).exp()
}

fn bleu_single(cand: &[&str], reference: &[&str]) -> f64 {
    let mut matches = [0usize; BLEU_ORDER];
    let mut totals = [0usize; BLEU_ORDER];
    for n in 1..=BLEU_ORDER {
        let cc = ngram_counts(cand, n);
        let rc = ngram_counts(reference, n);
        totals[n - 1] = cand.len().saturating_sub(n - 1);
        matches[n - 1] = cc.iter().map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0))).sum();
    }
    bleu_from_counts(&matches, &totals, cand.len(), reference.len())
}

pub fn bleu(prediction: &str, references: &[String]) -> f64 {
    let p = normalize(prediction);
    let pt = tokens(&p);
    best_over(references, |r| {
        let r = normalize(r);
        bleu_single(&pt, &tokens(&r))
    })
}

/// Scores one prediction. `references` must be nonempty; an empty list
/// scores 0.
pub fn score_pair(prediction: &str, references: &[String], metric: MetricId) -> f64 {
    let raw = match metric {
        MetricId::ExactMatch => exact_match(prediction, references),
        MetricId::Contains => contains(prediction, references),
        MetricId::TokenF1 => token_f1(prediction, references),
        MetricId::SetMatch => set_match(prediction, references),
        MetricId::Bleu => bleu(prediction, references),
    };
    raw.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn refs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Cat.  "), "cat");
        assert_eq!(normalize("A  b\t\nC!?"), "a b c");
        assert_eq!(normalize("a. ."), "a");
        assert_eq!(normalize("e.g. this"), "e.g. this");
    }

    #[test]
    fn exact_match_normalizes() {
        assert_eq!(score_pair("Cat.", &refs(&["cat"]), MetricId::ExactMatch), 1.0);
        assert_eq!(score_pair("dog", &refs(&["cat"]), MetricId::ExactMatch), 0.0);
        assert_eq!(score_pair("", &refs(&[""]), MetricId::ExactMatch), 1.0);
    }

    #[test]
    fn contains_substring() {
        assert_eq!(score_pair("Das ist ein Haus.", &refs(&["haus"]), MetricId::Contains), 1.0);
        assert_eq!(score_pair("Das ist", &refs(&["haus"]), MetricId::Contains), 0.0);
    }

    #[test]
    fn token_f1_hand_case() {
        let f1 = score_pair("a b c", &refs(&["b c d"]), MetricId::TokenF1);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn token_f1_multiset() {
        // pred "a a", ref "a": overlap 1, P = 1/2, R = 1, F1 = 2/3.
        let f1 = score_pair("a a", &refs(&["a"]), MetricId::TokenF1);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(score_pair("", &refs(&["a"]), MetricId::TokenF1), 0.0);
    }

    #[test]
    fn set_match_jaccard() {
        let s = score_pair("frog, cat, lion", &refs(&["cat, lion, whale, frog"]), MetricId::SetMatch);
        assert!((s - 0.75).abs() < 1e-12);
        assert_eq!(score_pair("", &refs(&["cat"]), MetricId::SetMatch), 0.0);
    }

    #[test]
    fn bleu_self_match_and_empty() {
        for x in ["a", "the cat", "the quick brown fox jumps"] {
            assert_eq!(score_pair(x, &refs(&[x]), MetricId::Bleu), 1.0, "{x}");
        }
        assert_eq!(score_pair("", &refs(&["cat"]), MetricId::Bleu), 0.0);
        let partial = score_pair("the cat sat", &refs(&["the cat sat on the mat"]), MetricId::Bleu);
        assert!(partial > 0.0 && partial < 1.0);
    }

    #[test]
    fn multi_reference_takes_max() {
        assert_eq!(score_pair("zero", &refs(&["0", "zero"]), MetricId::ExactMatch), 1.0);
    }

    #[test]
    fn metric_ids_parse() {
        for m in MetricId::ALL {
            assert_eq!(m.name().parse::<MetricId>().unwrap(), m);
        }
        assert!("bertscore".parse::<MetricId>().is_err());
    }
}
