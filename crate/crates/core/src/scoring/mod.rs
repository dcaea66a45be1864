//! Prompt scoring: run the actor template over an evaluation set and average
//! the per-pair metric.

mod metrics;

pub use metrics::{
    bleu, bleu_from_counts, contains, exact_match, normalize, score_pair, set_match, token_f1, MetricId, BLEU_ORDER,
};

use serde::{Deserialize, Serialize};

use crate::context::Context;
use crate::error::{Error, Result};
use crate::gateway::{CacheKey, RequestTag};
use crate::task::{DemoPair, Prompt, Score};
use crate::templates::render_actor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub index: usize,
    pub score: Score,
    pub prediction: String,
    pub fingerprint: CacheKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: MetricId,
    pub mean: Score,
    pub n_pairs: usize,
    pub per_pair: Vec<PairScore>,
}

impl ScoreReport {
    pub fn from_pairs(metric: MetricId, per_pair: Vec<PairScore>) -> Self {
        let n = per_pair.len();
        let mean = if n == 0 {
            0.0
        } else {
            per_pair.iter().map(|p| p.score.value()).sum::<f64>() / n as f64
        };
        ScoreReport {
            metric,
            mean: Score::new(mean),
            n_pairs: n,
            per_pair,
        }
    }
}

/// Executes `prompt` on every pair and scores the completions. Calls run on
/// the context's worker pool; the report keeps input order.
pub fn score_prompt(prompt: &Prompt, eval_pairs: &[DemoPair], metric: MetricId, ctx: &Context) -> Result<ScoreReport> {
    if eval_pairs.is_empty() {
        return Err(Error::SplitEmpty("evaluation set"));
    }
    let results = ctx.fan_out(eval_pairs, |index, pair| {
        let request = ctx.request(RequestTag::Eval, render_actor(prompt, &pair.input, &ctx.templates));
        let fingerprint = request.cache_key();
        let response = ctx
            .gateway
            .complete(&request)
            .map_err(|source| Error::Scoring { pair_index: index, source })?;
        Ok(PairScore {
            index,
            score: Score::new(score_pair(&response.content, &pair.outputs, metric)),
            prediction: response.content,
            fingerprint,
        })
    });
    let per_pair = crate::context::collect_ordered(results)?;
    Ok(ScoreReport::from_pairs(metric, per_pair))
}
