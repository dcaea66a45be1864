//! Task data model: demonstration pairs, prompts, candidates and splits.
//!
//! A task file is JSON:
//!
//! ```json
//! {
//!   "name": "first_word_letter",
//!   "metric": "exact_match",
//!   "examples": [{ "input": "cat", "outputs": ["c"] }],
//!   "prompts": [{ "text": "Extract the first letter of the input word.", "label": "best" }]
//! }
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::MetricId;

/// One (input, acceptable outputs) demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemoPair {
    pub input: String,
    pub outputs: Vec<String>,
}

impl DemoPair {
    pub fn new(input: impl Into<String>, outputs: impl IntoIterator<Item = impl Into<String>>) -> Self {
        DemoPair {
            input: input.into(),
            outputs: outputs.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityLabel {
    Best,
    Medium,
    Worst,
    Unlabeled,
}

impl Default for QualityLabel {
    fn default() -> Self {
        QualityLabel::Unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanPrompt {
    pub text: String,
    #[serde(default)]
    pub label: QualityLabel,
}

/// A benchmark task.
///
/// `metric` is kept as the raw identifier from the task file so that an
/// unknown metric shows up as a validation violation instead of a parse error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub metric: String,
    pub examples: Vec<DemoPair>,
    #[serde(default, rename = "prompts", skip_serializing_if = "Vec::is_empty")]
    pub human_prompts: Vec<HumanPrompt>,
}

/// A single broken invariant of a [`TaskSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl TaskSpec {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// `None` when the metric identifier is unknown.
    pub fn metric_id(&self) -> Option<MetricId> {
        self.metric.parse().ok()
    }

    /// Loads and validates in one go; any violation becomes an error.
    pub fn load_valid(path: impl AsRef<Path>) -> Result<Self> {
        let task = Self::load(path)?;
        task.ensure_valid()?;
        Ok(task)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_task(self);
        if report.is_empty() {
            Ok(())
        } else {
            let joined: Vec<String> = report.iter().map(ToString::to_string).collect();
            Err(Error::InvalidTask(joined.join("; ")))
        }
    }
}

/// Checks every task invariant and reports the broken ones. An empty report
/// means the task is well formed.
pub fn validate_task(task: &TaskSpec) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut violate = |field: String, rule: &str| {
        report.push(Violation {
            field,
            rule: rule.to_owned(),
        })
    };
    if task.name.trim().is_empty() {
        violate("name".into(), "nonempty violated");
    }
    if task.metric_id().is_none() {
        violate("metric".into(), "unknown identifier");
    }
    if task.examples.is_empty() {
        violate("examples".into(), "length ≥ 1 violated");
    }
    for (i, pair) in task.examples.iter().enumerate() {
        if pair.outputs.is_empty() {
            violate(format!("examples[{i}].outputs"), "length ≥ 1 violated");
        }
    }
    for (i, prompt) in task.human_prompts.iter().enumerate() {
        if prompt.text.is_empty() {
            violate(format!("prompts[{i}].text"), "nonempty violated");
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptOrigin {
    Human,
    Empty,
    Generated,
    Edited,
}

/// A task prompt. Text may only be empty for [`PromptOrigin::Empty`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PromptRepr")]
pub struct Prompt {
    text: String,
    origin: PromptOrigin,
}

#[derive(Deserialize)]
struct PromptRepr {
    text: String,
    origin: PromptOrigin,
}

impl TryFrom<PromptRepr> for Prompt {
    type Error = Error;

    fn try_from(repr: PromptRepr) -> Result<Self> {
        Prompt::new(repr.text, repr.origin)
    }
}

impl Prompt {
    pub fn new(text: impl Into<String>, origin: PromptOrigin) -> Result<Self> {
        let text = text.into();
        if text.is_empty() && origin != PromptOrigin::Empty {
            return Err(Error::InvalidPrompt(format!(
                "empty text requires origin=empty, got {origin:?}"
            )));
        }
        Ok(Prompt { text, origin })
    }

    pub fn empty() -> Self {
        Prompt {
            text: String::new(),
            origin: PromptOrigin::Empty,
        }
    }

    pub fn human(text: impl Into<String>) -> Result<Self> {
        Self::new(text, PromptOrigin::Human)
    }

    pub fn edited(text: impl Into<String>) -> Result<Self> {
        Self::new(text, PromptOrigin::Edited)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn origin(&self) -> PromptOrigin {
        self.origin
    }
}

/// A score in `[0, 1]`. Construction clamps.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Score(f64);

impl Score {
    pub const ZERO: Score = Score(0.0);
    pub const ONE: Score = Score(1.0);

    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            Score(0.0)
        } else {
            Score(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for Score {
    fn from(v: f64) -> Self {
        Score::new(v)
    }
}

impl From<Score> for f64 {
    fn from(s: Score) -> f64 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

/// A prompt together with its evaluation and lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub prompt: Prompt,
    pub score: Option<Score>,
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default)]
    pub parent_critique_ids: Vec<String>,
}

impl CandidateRecord {
    pub fn root(prompt: Prompt) -> Self {
        CandidateRecord {
            id: "p0".to_owned(),
            prompt,
            score: None,
            iteration: 0,
            parent_id: None,
            parent_critique_ids: Vec::new(),
        }
    }

    pub fn with_score(mut self, score: Score) -> Self {
        self.score = Some(score);
        self
    }

    pub fn score_value(&self) -> f64 {
        self.score.map(Score::value).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "val" => Ok(SplitKind::Val),
            "test" => Ok(SplitKind::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }
}

/// Train/val/test ratios. Must be nonnegative and sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.4,
            val: 0.3,
            test: 0.3,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Self {
        SplitRatios { train, val, test }
    }

    fn check(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidRatios(format!("{all:?} must be nonnegative")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(format!("{all:?} must sum to 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<DemoPair>,
    pub val: Vec<DemoPair>,
    pub test: Vec<DemoPair>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn get(&self, kind: SplitKind) -> &[DemoPair] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    /// Inputs that occur in the test split and nowhere else.
    pub fn test_only_inputs(&self) -> BTreeSet<&str> {
        let seen: BTreeSet<&str> = self
            .train
            .iter()
            .chain(&self.val)
            .map(|p| p.input.as_str())
            .collect();
        self.test
            .iter()
            .map(|p| p.input.as_str())
            .filter(|i| !seen.contains(i))
            .collect()
    }
}

/// Seeded partition of the task examples into train/val/test.
///
/// Val and test get `floor(ratio * n)` examples and the remainder goes to
/// train. A bucket with a nonzero ratio never ends up empty.
pub fn make_split(task: &TaskSpec, ratios: SplitRatios, seed: u64) -> Result<SplitSpec> {
    ratios.check()?;
    let n = task.examples.len();
    let nonzero = [ratios.train, ratios.val, ratios.test]
        .iter()
        .filter(|r| **r > 0.0)
        .count();
    if n < nonzero {
        return Err(Error::InsufficientExamples {
            available: n,
            buckets: nonzero,
        });
    }

    let alloc = |r: f64| -> usize {
        let size = (r * n as f64 + 1e-9).floor() as usize;
        if r > 0.0 {
            size.max(1)
        } else {
            size
        }
    };
    let mut val_n = alloc(ratios.val);
    let mut test_n = alloc(ratios.test);
    let min_train = usize::from(ratios.train > 0.0);
    // Rounding guards above can overshoot only by the bumped buckets.
    while val_n + test_n + min_train > n {
        if test_n >= val_n && test_n > 1 {
            test_n -= 1;
        } else if val_n > 1 {
            val_n -= 1;
        } else {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let pick = |idx: &[usize]| idx.iter().map(|&i| task.examples[i].clone()).collect::<Vec<_>>();
    let (val_idx, rest) = order.split_at(val_n);
    let (test_idx, train_idx) = rest.split_at(test_n);
    Ok(SplitSpec {
        train: pick(train_idx),
        val: pick(val_idx),
        test: pick(test_idx),
        seed,
    })
}
