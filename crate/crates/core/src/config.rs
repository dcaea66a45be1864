//! Run configuration. Defaults reproduce the reference setup: four agents,
//! two candidates per iteration, a single iteration, greedy decoding with
//! `top_p = 1` and a 512 token budget.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{MessageRole, RequestTag};
use crate::task::SplitRatios;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Actors, critics and update.
    #[default]
    Full,
    /// Update sees the raw actor transcripts instead of critiques.
    NoCritic,
    /// Update paraphrases the instruction with an empty advice slot.
    NoActorCritic,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "no_critic" => Ok(Mode::NoCritic),
            "no_actor_critic" => Ok(Mode::NoActorCritic),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Settings that end up inside every [`ChatRequest`](crate::gateway::ChatRequest)
/// and therefore inside every cache fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestSettings {
    pub model: String,
    /// Per-role model override. Roles not listed use `model`.
    pub tag_models: BTreeMap<RequestTag, String>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub role: MessageRole,
    /// When set, update calls for the second and later candidates use this
    /// temperature instead of `temperature`.
    pub update_temperature: Option<f64>,
}

impl Default for RequestSettings {
    fn default() -> Self {
        RequestSettings {
            model: "gpt-3.5-turbo".to_owned(),
            tag_models: BTreeMap::new(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 512,
            role: MessageRole::User,
            update_temperature: None,
        }
    }
}

impl RequestSettings {
    pub fn model_for(&self, tag: RequestTag) -> &str {
        self.tag_models.get(&tag).map(String::as_str).unwrap_or(&self.model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.is_empty() {
            return Err(Error::Config("model must be nonempty".into()));
        }
        let temps = std::iter::once(self.temperature).chain(self.update_temperature);
        for t in temps {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("temperature {t} must be ≥ 0")));
            }
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_agents: usize,
    pub candidates_per_iter: usize,
    pub max_iters: usize,
    /// Cap on the number of val pairs each candidate is scored on.
    pub eval_subset_size: usize,
    pub seed: u64,
    pub mode: Mode,
    pub split: SplitRatios,
    /// Upper bound on concurrent backend calls.
    pub parallelism: usize,
    pub request: RequestSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_agents: 4,
            candidates_per_iter: 2,
            max_iters: 1,
            eval_subset_size: 20,
            seed: 0,
            mode: Mode::Full,
            split: SplitRatios::default(),
            parallelism: 8,
            request: RequestSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_agents", self.n_agents),
            ("candidates_per_iter", self.candidates_per_iter),
            ("max_iters", self.max_iters),
            ("eval_subset_size", self.eval_subset_size),
            ("parallelism", self.parallelism),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be ≥ 1")));
            }
        }
        self.request.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.n_agents, c.candidates_per_iter, c.max_iters), (4, 2, 1));
        assert_eq!(c.request.temperature, 0.0);
        assert_eq!(c.request.top_p, 1.0);
        assert_eq!(c.request.max_tokens, 512);
        assert_eq!(c.mode, Mode::Full);
        c.validate().unwrap();
    }

    #[test]
    fn zero_agents_rejected() {
        let c = RunConfig {
            n_agents: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"max_iters": 3, "mode": "no_critic"}"#).unwrap();
        assert_eq!(c.max_iters, 3);
        assert_eq!(c.mode, Mode::NoCritic);
        assert_eq!(c.n_agents, 4);
    }

    #[test]
    fn tag_model_override() {
        let mut s = RequestSettings::default();
        s.tag_models.insert(RequestTag::Critic, "critic-model".into());
        assert_eq!(s.model_for(RequestTag::Critic), "critic-model");
        assert_eq!(s.model_for(RequestTag::Actor), "gpt-3.5-turbo");
    }
}
