//! The actor-critic editing loop.
//!
//! One iteration samples `n` training pairs, lets `n` actors execute the
//! incumbent prompt on them, has `n` critics compare each prediction with
//! the ground truth, and asks the update role to rewrite the prompt from the
//! aggregated critiques. Candidates are scored on a fixed, seeded subset of
//! the validation split and replace the incumbent only when strictly better.

mod baseline;
mod seeds;

pub use baseline::{resample_baseline, ResampleOutcome};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::context::{collect_ordered, CallRecord, Context};
use crate::error::{Error, Result};
use crate::gateway::RequestTag;
use crate::scoring::{score_prompt, MetricId, ScoreReport};
use crate::task::{CandidateRecord, DemoPair, Prompt, SplitKind, SplitSpec, TaskSpec};
use crate::templates::{extract_prompt, number_items, render_actor, render_critic, render_update_slot};

use seeds::{rng_for, Purpose};

/// A demonstration pair together with where it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPair {
    pub split: SplitKind,
    pub index: usize,
    pub pair: DemoPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorAction {
    pub agent_index: usize,
    pub pair: SampledPair,
    pub action: String,
    pub call: CallRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critique {
    pub id: String,
    pub agent_index: usize,
    pub text: String,
    pub call: CallRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueBatch {
    pub iteration: usize,
    pub critiques: Vec<Critique>,
}

impl CritiqueBatch {
    pub fn texts(&self) -> Vec<String> {
        self.critiques.iter().map(|c| c.text.clone()).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.critiques.iter().map(|c| c.id.clone()).collect()
    }
}

/// One update call: which ordering of the feedback it saw and what it
/// produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateCall {
    pub candidate: usize,
    pub ordering: Vec<usize>,
    pub call: CallRecord,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub candidate_id: String,
    pub report: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub mode: Mode,
    pub sampled_pairs: Vec<SampledPair>,
    pub actions: Vec<ActorAction>,
    pub critiques: Option<CritiqueBatch>,
    pub update_calls: Vec<UpdateCall>,
    pub candidates: Vec<CandidateRecord>,
    pub evaluations: Vec<Evaluation>,
    pub incumbent_before: CandidateRecord,
    pub incumbent_after: CandidateRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl IterationRecord {
    pub fn improved(&self) -> bool {
        self.incumbent_after.score_value() > self.incumbent_before.score_value()
    }

    /// Every model call made while optimizing, in a stable order. Scoring
    /// calls are excluded; they carry the `eval` tag.
    pub fn optimization_calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.actions
            .iter()
            .map(|a| &a.call)
            .chain(self.critiques.iter().flat_map(|b| b.critiques.iter().map(|c| &c.call)))
            .chain(self.update_calls.iter().map(|u| &u.call))
    }
}

/// Executes the prompt on one input.
pub fn act(prompt: &Prompt, pair: &SampledPair, agent_index: usize, ctx: &Context) -> Result<ActorAction> {
    let request = ctx.request(RequestTag::Actor, render_actor(prompt, &pair.pair.input, &ctx.templates));
    let (action, call) = ctx
        .call(request)
        .map_err(|source| Error::Actor { agent_index, source })?;
    Ok(ActorAction {
        agent_index,
        pair: pair.clone(),
        action,
        call,
    })
}

/// Asks the critic for advice on one actor prediction. Refuses test pairs.
pub fn criticize(prompt: &Prompt, action: &ActorAction, iteration: usize, ctx: &Context) -> Result<Critique> {
    let agent_index = action.agent_index;
    if action.pair.split == SplitKind::Test {
        return Err(Error::CriticLeak { agent_index });
    }
    let request = ctx.request(
        RequestTag::Critic,
        render_critic(prompt, &action.pair.pair.input, &action.action, &action.pair.pair.outputs, &ctx.templates),
    );
    let (text, call) = ctx
        .call(request)
        .map_err(|source| Error::Critic { agent_index, source })?;
    Ok(Critique {
        id: format!("i{iteration}-c{agent_index}"),
        agent_index,
        text,
        call,
    })
}

/// What goes into the advice slot of the update template.
#[derive(Debug, Clone)]
pub enum Feedback {
    /// Items numbered as `"<label> i: ..."`, reordered per candidate.
    Numbered { label: &'static str, items: Vec<String> },
    /// Empty slot: the update call only paraphrases.
    Empty,
}

impl Feedback {
    fn len(&self) -> usize {
        match self {
            Feedback::Numbered { items, .. } => items.len(),
            Feedback::Empty => 0,
        }
    }

    fn slot(&self, ordering: &[usize]) -> String {
        match self {
            Feedback::Numbered { label, items } => {
                let ordered: Vec<String> = ordering.iter().map(|&i| items[i].clone()).collect();
                number_items(label, &ordered)
            }
            Feedback::Empty => String::new(),
        }
    }
}

/// Feedback orderings for `k` candidates: the first keeps input order, the
/// others are seeded shuffles rotated by the candidate index, redrawn a few
/// times to avoid repeating an earlier ordering.
fn candidate_orderings(n: usize, k: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let identity: Vec<usize> = (0..n).collect();
    let mut out = vec![identity.clone()];
    for j in 1..k {
        let mut chosen = None;
        for _ in 0..16 {
            let mut perm = identity.clone();
            perm.shuffle(rng);
            if n > 0 {
                perm.rotate_left(j % n);
            }
            if !out.contains(&perm) {
                chosen = Some(perm);
                break;
            }
        }
        out.push(chosen.unwrap_or_else(|| {
            let mut perm = identity.clone();
            if n > 0 {
                perm.rotate_left(j % n);
            }
            perm
        }));
    }
    out
}

#[derive(Debug, Clone)]
pub struct UpdateOutcome {
    /// Distinct new prompts, each with the index of the call that made it.
    pub candidates: Vec<(usize, Prompt)>,
    pub calls: Vec<UpdateCall>,
    pub warnings: Vec<String>,
}

/// Produces up to `k` rewritten prompts from `feedback`, one update call per
/// candidate. Candidates equal to the current prompt or to an earlier
/// candidate are dropped.
pub fn generate_candidates(
    prompt: &Prompt,
    feedback: &Feedback,
    k: usize,
    seed: u64,
    iteration: usize,
    ctx: &Context,
) -> Result<UpdateOutcome> {
    if k == 0 {
        return Err(Error::Config("candidates_per_iter must be ≥ 1".into()));
    }
    let mut rng = rng_for(seed, iteration, Purpose::Orderings);
    let orderings = candidate_orderings(feedback.len(), k, &mut rng);

    let mut requests = Vec::with_capacity(k);
    for (j, ordering) in orderings.iter().enumerate() {
        let content = render_update_slot(prompt, &feedback.slot(ordering), &ctx.templates);
        let mut request = ctx.request(RequestTag::Update, content);
        // Repeated inputs get distinct sample indices so they stay distinct
        // cache entries.
        request.sample_index = orderings[..j].iter().filter(|o| *o == ordering).count() as u32;
        if j > 0 {
            if let Some(t) = ctx.settings.update_temperature {
                request.temperature = t;
            }
        }
        requests.push(request);
    }

    let results = ctx.fan_out(&requests, |j, request| {
        ctx.call(request.clone()).map_err(|source| Error::Update { candidate: j, source })
    });
    let responses = collect_ordered(results)?;

    let mut calls = Vec::with_capacity(k);
    let mut candidates: Vec<(usize, Prompt)> = Vec::new();
    let mut warnings = Vec::new();
    let mut extracted_any = false;
    for (j, ((response, call), ordering)) in responses.into_iter().zip(orderings).enumerate() {
        match extract_prompt(&response) {
            Ok(p) => {
                extracted_any = true;
                let duplicate = p.text() == prompt.text() || candidates.iter().any(|(_, c)| c.text() == p.text());
                if !duplicate {
                    candidates.push((j, p));
                }
            }
            Err(e) => warnings.push(format!("candidate {}: {e}", j + 1)),
        }
        calls.push(UpdateCall {
            candidate: j,
            ordering,
            call,
            response,
        });
    }
    if !extracted_any {
        return Err(Error::NoUpdatedPrompt);
    }
    Ok(UpdateOutcome {
        candidates,
        calls,
        warnings,
    })
}

/// Rewrites `prompt` from a critique batch into up to `k` candidates.
pub fn update_prompt(prompt: &Prompt, batch: &CritiqueBatch, k: usize, seed: u64, ctx: &Context) -> Result<UpdateOutcome> {
    if batch.critiques.is_empty() {
        return Err(Error::NoCritiques);
    }
    let feedback = Feedback::Numbered {
        label: "Advice",
        items: batch.texts(),
    };
    generate_candidates(prompt, &feedback, k, seed, batch.iteration, ctx)
}

/// Transcript line fed to the update call when critics are disabled.
pub fn transcript(action: &ActorAction) -> String {
    format!(
        "Input: {}, Prediction: {}, Ground Truth: {}",
        action.pair.pair.input,
        action.action,
        action.pair.pair.outputs.join(crate::templates::REFERENCE_JOIN)
    )
}

/// The seeded val subset every prompt of a run is scored on.
pub fn eval_subset(split: &SplitSpec, config: &RunConfig) -> Result<Vec<DemoPair>> {
    if split.val.is_empty() {
        return Err(Error::SplitEmpty("val"));
    }
    if split.val.len() <= config.eval_subset_size {
        return Ok(split.val.clone());
    }
    let mut rng = rng_for(config.seed, 0, Purpose::EvalSubset);
    let mut picked = index::sample(&mut rng, split.val.len(), config.eval_subset_size).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| split.val[i].clone()).collect())
}

fn sample_train(split: &SplitSpec, config: &RunConfig, iteration: usize, warnings: &mut Vec<String>) -> Result<Vec<SampledPair>> {
    let train = &split.train;
    if train.is_empty() {
        return Err(Error::SplitEmpty("train"));
    }
    let n = config.n_agents;
    let mut rng = rng_for(config.seed, iteration, Purpose::Sample);
    let indices: Vec<usize> = if train.len() >= n {
        index::sample(&mut rng, train.len(), n).into_vec()
    } else {
        warnings.push(format!(
            "train split has {} pairs for {n} agents; sampling with replacement",
            train.len()
        ));
        (0..n).map(|_| rng.gen_range(0..train.len())).collect()
    };
    Ok(indices
        .into_iter()
        .map(|index| SampledPair {
            split: SplitKind::Train,
            index,
            pair: train[index].clone(),
        })
        .collect())
}

/// One iteration of the loop starting from a scored incumbent.
pub fn pace_step(
    incumbent: &CandidateRecord,
    iteration: usize,
    split: &SplitSpec,
    config: &RunConfig,
    metric: MetricId,
    ctx: &Context,
) -> Result<IterationRecord> {
    if incumbent.score.is_none() {
        return Err(Error::Config("incumbent must be scored before a step".into()));
    }
    let eval_pairs = eval_subset(split, config)?;
    let prompt = &incumbent.prompt;
    let mut warnings = Vec::new();

    let (sampled_pairs, actions) = if config.mode == Mode::NoActorCritic {
        (Vec::new(), Vec::new())
    } else {
        let sampled = sample_train(split, config, iteration, &mut warnings)?;
        let results = ctx.fan_out(&sampled, |i, pair| act(prompt, pair, i + 1, ctx));
        let actions = collect_ordered(results)?;
        (sampled, actions)
    };

    let (critiques, feedback) = match config.mode {
        Mode::Full => {
            let results = ctx.fan_out(&actions, |_, action| criticize(prompt, action, iteration, ctx));
            let batch = CritiqueBatch {
                iteration,
                critiques: collect_ordered(results)?,
            };
            let feedback = Feedback::Numbered {
                label: "Advice",
                items: batch.texts(),
            };
            (Some(batch), feedback)
        }
        Mode::NoCritic => (
            None,
            Feedback::Numbered {
                label: "Prediction",
                items: actions.iter().map(transcript).collect(),
            },
        ),
        Mode::NoActorCritic => (None, Feedback::Empty),
    };

    let outcome = generate_candidates(prompt, &feedback, config.candidates_per_iter, config.seed, iteration, ctx)?;
    warnings.extend(outcome.warnings);
    let critique_ids = critiques.as_ref().map(CritiqueBatch::ids).unwrap_or_default();

    let reports = collect_ordered(ctx.fan_out(&outcome.candidates, |_, (_, p)| {
        score_prompt(p, &eval_pairs, metric, ctx)
    }))?;

    let mut candidates = Vec::with_capacity(reports.len());
    let mut evaluations = Vec::with_capacity(reports.len());
    for ((j, prompt), report) in outcome.candidates.into_iter().zip(reports) {
        let record = CandidateRecord {
            id: format!("i{}-k{}", iteration + 1, j + 1),
            prompt,
            score: Some(report.mean),
            iteration: iteration + 1,
            parent_id: Some(incumbent.id.clone()),
            parent_critique_ids: critique_ids.clone(),
        };
        evaluations.push(Evaluation {
            candidate_id: record.id.clone(),
            report,
        });
        candidates.push(record);
    }

    let mut best = incumbent;
    for c in &candidates {
        if c.score_value() > best.score_value() {
            best = c;
        }
    }
    let incumbent_after = best.clone();

    Ok(IterationRecord {
        index: iteration,
        mode: config.mode,
        sampled_pairs,
        actions,
        critiques,
        update_calls: outcome.calls,
        candidates,
        evaluations,
        incumbent_before: incumbent.clone(),
        incumbent_after,
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub initial: CandidateRecord,
    pub initial_report: ScoreReport,
    pub best: CandidateRecord,
    pub iterations: Vec<IterationRecord>,
    /// True when the loop stopped before `max_iters` for lack of improvement.
    pub converged: bool,
}

/// A run that failed partway. Completed iterations are kept.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    #[source]
    pub error: Error,
    pub iterations: Vec<IterationRecord>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure {
            error,
            iterations: Vec::new(),
        }
    }
}

/// Runs the loop from `p0` until an iteration fails to improve the
/// incumbent or `max_iters` is reached. `on_iteration` sees each record as
/// soon as it is complete.
pub fn pace_optimize(
    p0: Prompt,
    task: &TaskSpec,
    split: &SplitSpec,
    config: &RunConfig,
    ctx: &Context,
    on_iteration: &mut dyn FnMut(&IterationRecord) -> Result<()>,
) -> std::result::Result<RunOutcome, RunFailure> {
    config.validate()?;
    let metric = task
        .metric_id()
        .ok_or_else(|| Error::InvalidTask(format!("metric: unknown identifier {:?}", task.metric)))?;
    let eval_pairs = eval_subset(split, config)?;
    let initial_report = score_prompt(&p0, &eval_pairs, metric, ctx)?;
    let initial = CandidateRecord::root(p0).with_score(initial_report.mean);

    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut incumbent = initial.clone();
    let mut converged = false;
    for t in 0..config.max_iters {
        let step = pace_step(&incumbent, t, split, config, metric, ctx).and_then(|record| {
            on_iteration(&record)?;
            Ok(record)
        });
        let record = match step {
            Ok(r) => r,
            Err(error) => return Err(RunFailure { error, iterations }),
        };
        let improved = record.improved();
        incumbent = record.incumbent_after.clone();
        iterations.push(record);
        if !improved {
            converged = t + 1 < config.max_iters;
            break;
        }
    }
    Ok(RunOutcome {
        initial,
        initial_report,
        best: incumbent,
        iterations,
        converged,
    })
}
