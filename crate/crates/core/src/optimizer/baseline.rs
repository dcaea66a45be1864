//! Paraphrase-only resampling: `k` update calls with an empty advice slot,
//! no execution feedback. The same selection rule as the main loop.

use serde::{Deserialize, Serialize};

use super::{generate_candidates, Feedback, UpdateCall};
use crate::context::{collect_ordered, Context};
use crate::error::Result;
use crate::scoring::{score_prompt, MetricId};
use crate::task::{CandidateRecord, DemoPair, Prompt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleOutcome {
    pub initial: CandidateRecord,
    /// Scored candidates, best first. Ties keep generation order.
    pub ranked: Vec<CandidateRecord>,
    pub best: CandidateRecord,
    pub calls: Vec<UpdateCall>,
}

pub fn resample_baseline(
    p0: Prompt,
    k: usize,
    eval_pairs: &[DemoPair],
    metric: MetricId,
    seed: u64,
    ctx: &Context,
) -> Result<ResampleOutcome> {
    let initial_report = score_prompt(&p0, eval_pairs, metric, ctx)?;
    let initial = CandidateRecord::root(p0).with_score(initial_report.mean);
    let outcome = generate_candidates(&initial.prompt, &Feedback::Empty, k, seed, 0, ctx)?;

    let reports = collect_ordered(ctx.fan_out(&outcome.candidates, |_, (_, p)| {
        score_prompt(p, eval_pairs, metric, ctx)
    }))?;
    let mut ranked: Vec<CandidateRecord> = outcome
        .candidates
        .into_iter()
        .zip(reports)
        .map(|((j, prompt), report)| CandidateRecord {
            id: format!("r-k{}", j + 1),
            prompt,
            score: Some(report.mean),
            iteration: 1,
            parent_id: Some(initial.id.clone()),
            parent_critique_ids: Vec::new(),
        })
        .collect();

    let mut best = &initial;
    for c in &ranked {
        if c.score_value() > best.score_value() {
            best = c;
        }
    }
    let best = best.clone();
    ranked.sort_by(|a, b| b.score_value().total_cmp(&a.score_value()));
    Ok(ResampleOutcome {
        initial,
        ranked,
        best,
        calls: outcome.calls,
    })
}
