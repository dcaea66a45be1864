//! Experiment harness: initial-prompt settings, end-to-end runs with
//! artifacts, final test evaluation and report emission.

pub mod artifact;
pub mod perturb;
pub mod report;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::context::Context;
use crate::error::{Error, Result};
use crate::gateway::{CacheKey, RequestTag, ResponseCache};
use crate::optimizer::{eval_subset, pace_optimize, RunFailure};
use crate::scoring::{score_prompt, MetricId, ScoreReport};
use crate::task::{make_split, Prompt, QualityLabel, Score, SplitKind, SplitSpec, TaskSpec};

use artifact::{
    ArtifactFooter, ArtifactHeader, ArtifactWriter, BackendDescriptor, Experiment, RunArtifact, RunStatus,
    SCHEMA_VERSION,
};
use perturb::{butter_fingers, PerturbSpec, DEFAULT_RATE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSetting {
    Best,
    Medium,
    Worst,
    ButterFingers,
    Empty,
    Literal(String),
}

impl InitialSetting {
    pub fn name(&self) -> &str {
        match self {
            InitialSetting::Best => "best",
            InitialSetting::Medium => "medium",
            InitialSetting::Worst => "worst",
            InitialSetting::ButterFingers => "butter_fingers",
            InitialSetting::Empty => "empty",
            InitialSetting::Literal(_) => "literal",
        }
    }
}

impl std::str::FromStr for InitialSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "best" => Ok(InitialSetting::Best),
            "medium" => Ok(InitialSetting::Medium),
            "worst" => Ok(InitialSetting::Worst),
            "butter_fingers" => Ok(InitialSetting::ButterFingers),
            "empty" => Ok(InitialSetting::Empty),
            other => Err(Error::Config(format!(
                "unknown setting {other:?} (expected best, medium, worst, butter_fingers or empty)"
            ))),
        }
    }
}

/// How a human prompt was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectionBasis {
    Label,
    Singleton,
    /// Measured ranking: `(prompt index, score)` sorted ascending.
    Ranked(Vec<(usize, Score)>),
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub prompt: Prompt,
    pub source_index: Option<usize>,
    pub basis: SelectionBasis,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rank {
    Best,
    Medium,
    Worst,
}

impl Rank {
    fn label(self) -> QualityLabel {
        match self {
            Rank::Best => QualityLabel::Best,
            Rank::Medium => QualityLabel::Medium,
            Rank::Worst => QualityLabel::Worst,
        }
    }

    fn pick(self, m: usize) -> usize {
        match self {
            Rank::Worst => 0,
            Rank::Medium => (m - 1) / 2,
            Rank::Best => m - 1,
        }
    }
}

fn pick_human(rank: Rank, task: &TaskSpec, split: &SplitSpec, config: &RunConfig, ctx: &Context) -> Result<Selection> {
    let prompts = &task.human_prompts;
    if prompts.is_empty() {
        return Err(Error::NoHumanPrompts);
    }
    let chosen = |i: usize, basis| -> Result<Selection> {
        Ok(Selection {
            prompt: Prompt::human(prompts[i].text.clone())?,
            source_index: Some(i),
            basis,
        })
    };
    if prompts.len() == 1 {
        return chosen(0, SelectionBasis::Singleton);
    }
    if let Some(i) = prompts.iter().position(|p| p.label == rank.label()) {
        return chosen(i, SelectionBasis::Label);
    }
    let metric = metric_of(task)?;
    let eval_pairs = eval_subset(split, config)?;
    let reports = prompts
        .iter()
        .map(|p| score_prompt(&Prompt::human(p.text.clone())?, &eval_pairs, metric, ctx))
        .collect::<Result<Vec<_>>>()?;
    let mut ranked: Vec<(usize, Score)> = reports.iter().map(|r| r.mean).enumerate().collect();
    ranked.sort_by(|a, b| a.1.value().total_cmp(&b.1.value()));
    let i = ranked[rank.pick(ranked.len())].0;
    chosen(i, SelectionBasis::Ranked(ranked))
}

fn metric_of(task: &TaskSpec) -> Result<MetricId> {
    task.metric_id()
        .ok_or_else(|| Error::InvalidTask(format!("metric: unknown identifier {:?}", task.metric)))
}

/// Chooses the starting prompt for a run. Stored quality labels win over
/// measured rankings; rankings are computed on the same validation subset
/// the optimizer scores candidates on.
pub fn select_initial_prompt(
    task: &TaskSpec,
    setting: &InitialSetting,
    split: &SplitSpec,
    config: &RunConfig,
    ctx: &Context,
) -> Result<Selection> {
    let rank = match setting {
        InitialSetting::Empty => {
            return Ok(Selection {
                prompt: Prompt::empty(),
                source_index: None,
                basis: SelectionBasis::NotApplicable,
            })
        }
        InitialSetting::Literal(text) => {
            return Ok(Selection {
                prompt: Prompt::human(text.clone())?,
                source_index: None,
                basis: SelectionBasis::NotApplicable,
            })
        }
        InitialSetting::Best => Rank::Best,
        InitialSetting::Worst => Rank::Worst,
        InitialSetting::Medium | InitialSetting::ButterFingers => Rank::Medium,
    };
    let mut selection = pick_human(rank, task, split, config, ctx)?;
    if *setting == InitialSetting::ButterFingers {
        let spec = PerturbSpec::new(DEFAULT_RATE, config.seed)?;
        selection.prompt = Prompt::human(butter_fingers(selection.prompt.text(), &spec))?;
    }
    Ok(selection)
}

/// Scores a prompt on the full test split.
pub fn evaluate_final(prompt: &Prompt, split: &SplitSpec, metric: MetricId, ctx: &Context) -> Result<ScoreReport> {
    if split.test.is_empty() {
        return Err(Error::SplitEmpty("test"));
    }
    score_prompt(prompt, &split.test, metric, ctx)
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub task: TaskSpec,
    pub setting: InitialSetting,
    pub config: RunConfig,
    pub backend: BackendDescriptor,
    pub out_dir: PathBuf,
}

/// Runs one experiment end to end and returns the artifact read back from
/// disk. A run that fails after the header is written still gets a footer
/// with status `failed`.
pub fn run_experiment(plan: &ExperimentPlan, ctx: &Context) -> Result<RunArtifact> {
    let task = &plan.task;
    let config = &plan.config;
    task.ensure_valid()?;
    config.validate()?;
    let metric = metric_of(task)?;
    let split = make_split(task, config.split, config.seed)?;
    let selection = select_initial_prompt(task, &plan.setting, &split, config, ctx)?;
    let p0 = selection.prompt;

    let header = ArtifactHeader {
        schema_version: SCHEMA_VERSION,
        experiment: Experiment {
            task: task.name.clone(),
            metric,
            setting: plan.setting.name().to_owned(),
            initial_prompt: p0.clone(),
            seed: config.seed,
            config: config.clone(),
            template_hashes: ctx.templates.hashes(),
            split_sizes: [split.train.len(), split.val.len(), split.test.len()],
        },
        backend: plan.backend.clone(),
    };
    let mut writer = ArtifactWriter::create(&plan.out_dir, &header)?;
    let result = {
        let mut append = |r: &crate::optimizer::IterationRecord| writer.append(r);
        pace_optimize(p0.clone(), task, &split, config, ctx, &mut append)
    };

    let outcome = match result {
        Ok(o) => o,
        Err(RunFailure { error, iterations }) => {
            let last = iterations.last().map(|r| r.incumbent_after.clone());
            let footer = ArtifactFooter {
                status: RunStatus::Failed,
                error: Some(error.to_string()),
                final_prompt: last.as_ref().map_or_else(|| p0.clone(), |c| c.prompt.clone()),
                final_candidate_id: last.as_ref().map_or_else(|| "p0".to_owned(), |c| c.id.clone()),
                iterations: iterations.len(),
                converged: false,
                initial_val_score: iterations.first().and_then(|r| r.incumbent_before.score),
                final_val_score: last.and_then(|c| c.score),
                initial_test: None,
                final_test: None,
            };
            writer.finish(&footer)?;
            return Err(error);
        }
    };

    let finish_failed = |writer: ArtifactWriter, error: Error| -> Result<RunArtifact> {
        let footer = ArtifactFooter {
            status: RunStatus::Failed,
            error: Some(error.to_string()),
            final_prompt: outcome.best.prompt.clone(),
            final_candidate_id: outcome.best.id.clone(),
            iterations: outcome.iterations.len(),
            converged: outcome.converged,
            initial_val_score: outcome.initial.score,
            final_val_score: outcome.best.score,
            initial_test: None,
            final_test: None,
        };
        writer.finish(&footer)?;
        Err(error)
    };
    let final_test = match evaluate_final(&outcome.best.prompt, &split, metric, ctx) {
        Ok(r) => r,
        Err(e) => return finish_failed(writer, e),
    };
    let initial_test = if outcome.best.prompt == p0 {
        final_test.clone()
    } else {
        match evaluate_final(&p0, &split, metric, ctx) {
            Ok(r) => r,
            Err(e) => return finish_failed(writer, e),
        }
    };
    let footer = ArtifactFooter {
        status: RunStatus::Completed,
        error: None,
        final_prompt: outcome.best.prompt.clone(),
        final_candidate_id: outcome.best.id.clone(),
        iterations: outcome.iterations.len(),
        converged: outcome.converged,
        initial_val_score: outcome.initial.score,
        final_val_score: outcome.best.score,
        initial_test: Some(initial_test),
        final_test: Some(final_test),
    };
    let dir = writer.finish(&footer)?;
    RunArtifact::load(dir)
}

/// One optimization call that carried a held-out test input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Leak {
    pub iteration: usize,
    pub tag: RequestTag,
    pub fingerprint: CacheKey,
    pub input: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IsolationReport {
    pub scanned: usize,
    pub leaks: Vec<Leak>,
}

impl IsolationReport {
    pub fn is_clean(&self) -> bool {
        self.leaks.is_empty()
    }
}

/// Scans every actor, critic and update call of a run for test inputs.
/// A pair drawn from the test split is a leak; so is any call whose text
/// holds `Input: <x>,` for an input that occurs only in the test split.
pub fn audit_test_isolation(artifact: &RunArtifact, split: &SplitSpec) -> IsolationReport {
    let test_inputs = split.test_only_inputs();
    let needles: Vec<(String, &str)> = test_inputs.iter().map(|x| (format!("Input: {x},"), *x)).collect();
    let mut report = IsolationReport::default();
    for record in &artifact.records {
        for action in &record.actions {
            if action.pair.split == SplitKind::Test {
                report.leaks.push(Leak {
                    iteration: record.index,
                    tag: action.call.tag,
                    fingerprint: action.call.fingerprint.clone(),
                    input: action.pair.pair.input.clone(),
                });
            }
        }
        for call in record.optimization_calls() {
            report.scanned += 1;
            for (needle, input) in &needles {
                if call.content.contains(needle.as_str()) {
                    report.leaks.push(Leak {
                        iteration: record.index,
                        tag: call.tag,
                        fingerprint: call.fingerprint.clone(),
                        input: (*input).to_owned(),
                    });
                }
            }
        }
    }
    report
}

/// Referenced response fingerprints that are absent from `cache`.
pub fn missing_from_cache(artifact: &RunArtifact, cache: &ResponseCache) -> BTreeSet<CacheKey> {
    artifact
        .referenced_fingerprints()
        .into_iter()
        .filter(|k| !cache.contains(k))
        .collect()
}

/// Recreates the split a recorded run used.
pub fn split_for(artifact: &RunArtifact, task: &TaskSpec) -> Result<SplitSpec> {
    let config = &artifact.header.experiment.config;
    make_split(task, config.split, config.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RequestSettings;
    use crate::gateway::{Gateway, MockRule, MockScript};
    use crate::task::{DemoPair, HumanPrompt};
    use crate::templates::TemplateSet;

    fn sum_task(labels: bool) -> TaskSpec {
        let texts = [
            ("Write the sum of the two numbers.", QualityLabel::Worst),
            ("sum the numbers in the input.", QualityLabel::Medium),
            (
                "You are given two numbers as input. Apply the + operator to them and output the answer.",
                QualityLabel::Best,
            ),
        ];
        TaskSpec {
            name: "sum".into(),
            metric: "exact_match".into(),
            examples: (0..10).map(|i| DemoPair::new(format!("{i} {i}"), [format!("{}", 2 * i)])).collect(),
            human_prompts: texts
                .iter()
                .map(|(t, l)| HumanPrompt {
                    text: (*t).into(),
                    label: if labels { *l } else { QualityLabel::Unlabeled },
                })
                .collect(),
        }
    }

    fn ctx(rules: Vec<MockRule>) -> Context {
        let script = MockScript::new(rules, Some("x".into()));
        Context::new(Gateway::mock(script), TemplateSet::default(), RequestSettings::default(), 2).unwrap()
    }

    #[test]
    fn worst_by_label() {
        let task = sum_task(true);
        let config = RunConfig::default();
        let split = make_split(&task, config.split, 0).unwrap();
        let s = select_initial_prompt(&task, &InitialSetting::Worst, &split, &config, &ctx(vec![])).unwrap();
        assert_eq!(s.prompt.text(), "Write the sum of the two numbers.");
        assert_eq!(s.basis, SelectionBasis::Label);
    }

    #[test]
    fn ranking_without_labels() {
        let task = sum_task(false);
        let config = RunConfig::default();
        let split = make_split(&task, config.split, 0).unwrap();
        // The prompt mentioning "+" answers correctly; "input" gets half right.
        let c = ctx(vec![
            MockRule::new(None, r"operator[\s\S]*Input: (\d+) (\d+),", "${1}${2}").unwrap(),
            MockRule::new(None, r"in the input[\s\S]*Input: ([02468]) ", "bad").unwrap(),
        ]);
        let best = select_initial_prompt(&task, &InitialSetting::Best, &split, &config, &c).unwrap();
        assert!(best.prompt.text().contains("operator"));
        let again = select_initial_prompt(&task, &InitialSetting::Best, &split, &config, &c).unwrap();
        assert_eq!(best, again);
        let worst = select_initial_prompt(&task, &InitialSetting::Worst, &split, &config, &c).unwrap();
        assert!(matches!(worst.basis, SelectionBasis::Ranked(ref r) if r.len() == 3));
    }

    #[test]
    fn empty_and_singleton() {
        let mut task = sum_task(false);
        let config = RunConfig::default();
        let split = make_split(&task, config.split, 0).unwrap();
        let c = ctx(vec![]);
        let e = select_initial_prompt(&task, &InitialSetting::Empty, &split, &config, &c).unwrap();
        assert_eq!(e.prompt, Prompt::empty());
        task.human_prompts.truncate(1);
        for s in [InitialSetting::Best, InitialSetting::Medium, InitialSetting::Worst] {
            let got = select_initial_prompt(&task, &s, &split, &config, &c).unwrap();
            assert_eq!(got.source_index, Some(0));
        }
        task.human_prompts.clear();
        let err = select_initial_prompt(&task, &InitialSetting::Medium, &split, &config, &c).unwrap_err();
        assert_eq!(err.to_string(), "no human prompts in task");
    }

    #[test]
    fn butter_fingers_perturbs_medium() {
        let task = sum_task(true);
        let config = RunConfig::default();
        let split = make_split(&task, config.split, 0).unwrap();
        let s = select_initial_prompt(&task, &InitialSetting::ButterFingers, &split, &config, &ctx(vec![])).unwrap();
        let medium = "sum the numbers in the input.";
        assert_eq!(s.prompt.text().len(), medium.len());
        assert_ne!(s.prompt.text(), medium);
    }

    #[test]
    fn final_eval_requires_test_pairs() {
        let split = SplitSpec {
            train: vec![DemoPair::new("a", ["a"])],
            val: vec![DemoPair::new("b", ["b"])],
            test: vec![],
            seed: 0,
        };
        let err = evaluate_final(&Prompt::empty(), &split, MetricId::ExactMatch, &ctx(vec![])).unwrap_err();
        assert_eq!(err.to_string(), "split empty: test");
    }
}
