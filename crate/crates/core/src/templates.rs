//! Actor, critic and update templates.
//!
//! The defaults are transcribed character for character, including the
//! trailing commas and the missing space after `instruction:`. Substitution
//! is single pass: placeholder-looking text inside a substituted value is
//! never expanded again.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::task::{Prompt, PromptOrigin};

pub const TASK_INSTRUCTION: &str = "[TASK_INSTRUCTION]";
pub const INPUT: &str = "[INPUT]";
pub const PREDICTION: &str = "[PREDICTION]";
pub const GROUNDTRUTH: &str = "[GROUNDTRUTH]";
pub const CRITICAL_ADVICES: &str = "[Critical_Advices]";

const ALL_PLACEHOLDERS: [&str; 5] = [TASK_INSTRUCTION, INPUT, PREDICTION, GROUNDTRUTH, CRITICAL_ADVICES];
const ACTOR_SLOTS: [&str; 2] = [TASK_INSTRUCTION, INPUT];
const CRITIC_SLOTS: [&str; 4] = [TASK_INSTRUCTION, INPUT, PREDICTION, GROUNDTRUTH];
const UPDATE_SLOTS: [&str; 2] = [TASK_INSTRUCTION, CRITICAL_ADVICES];

pub const DEFAULT_ACTOR: &str = "Instruction: [TASK_INSTRUCTION],\nInput: [INPUT],\nOutput:";

pub const DEFAULT_CRITIC: &str = "I gave you an instruction:[TASK_INSTRUCTION]. Based on this instruction they \
produced the following input-prediction pairs and the corresponding ground truth:\nInput: [INPUT],\n\
Prediction: [PREDICTION],\nGround Truth: [GROUNDTRUTH],\nAccording to Input, Prediction, and Ground Truth, \
give the critical advice on how to improve the instruction:";

pub const DEFAULT_UPDATE: &str = "I gave you an instruction:[TASK_INSTRUCTION]. Based on the instruction they \
produced the following critical advices: [Critical_Advices]. Taking these critical advices into consideration, \
the improved instruction was:";

/// Separator used when a pair has more than one reference output.
pub const REFERENCE_JOIN: &str = " | ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub actor: String,
    pub critic: String,
    pub update: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            actor: DEFAULT_ACTOR.to_owned(),
            critic: DEFAULT_CRITIC.to_owned(),
            update: DEFAULT_UPDATE.to_owned(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    actor: Option<String>,
    critic: Option<String>,
    update: Option<String>,
}

/// SHA-256 of each template, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateHashes {
    pub actor: String,
    pub critic: String,
    pub update: String,
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl TemplateSet {
    /// Applies an override file on top of the defaults. Missing keys keep
    /// the default template.
    pub fn from_overrides_json(text: &str) -> Result<Self> {
        let o: Overrides = serde_json::from_str(text).map_err(|e| Error::Template(e.to_string()))?;
        let d = TemplateSet::default();
        let set = TemplateSet {
            actor: o.actor.unwrap_or(d.actor),
            critic: o.critic.unwrap_or(d.critic),
            update: o.update.unwrap_or(d.update),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn load_overrides(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_overrides_json(&text)
    }

    /// Each template must contain every slot its renderer fills and no
    /// placeholder belonging to another renderer.
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, &str, &[&str]); 3] = [
            ("actor", &self.actor, &ACTOR_SLOTS),
            ("critic", &self.critic, &CRITIC_SLOTS),
            ("update", &self.update, &UPDATE_SLOTS),
        ];
        for (name, template, slots) in checks {
            for p in ALL_PLACEHOLDERS {
                let present = template.contains(p);
                let wanted = slots.contains(&p);
                if wanted && !present {
                    return Err(Error::Template(format!("{name} template is missing {p}")));
                }
                if present && !wanted {
                    return Err(Error::Template(format!("{name} template must not contain {p}")));
                }
            }
        }
        Ok(())
    }

    pub fn hashes(&self) -> TemplateHashes {
        TemplateHashes {
            actor: sha256_hex(&self.actor),
            critic: sha256_hex(&self.critic),
            update: sha256_hex(&self.update),
        }
    }
}

/// Replaces each `(placeholder, value)` occurrence in one left-to-right scan.
fn substitute(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + slots.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(pos) = rest.find('[') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        match slots.iter().find(|(p, _)| tail.starts_with(p)) {
            Some((p, value)) => {
                out.push_str(value);
                rest = &tail[p.len()..];
            }
            None => {
                out.push('[');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn render_actor(prompt: &Prompt, input: &str, templates: &TemplateSet) -> String {
    substitute(&templates.actor, &[(TASK_INSTRUCTION, prompt.text()), (INPUT, input)])
}

pub fn render_critic(
    prompt: &Prompt,
    input: &str,
    prediction: &str,
    ground_truth: &[String],
    templates: &TemplateSet,
) -> String {
    let truth = ground_truth.join(REFERENCE_JOIN);
    substitute(
        &templates.critic,
        &[
            (TASK_INSTRUCTION, prompt.text()),
            (INPUT, input),
            (PREDICTION, prediction),
            (GROUNDTRUTH, &truth),
        ],
    )
}

/// Numbers `items` as `"<label> 1: ...\n<label> 2: ..."`.
pub fn number_items(label: &str, items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{label} {}: {c}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_update(prompt: &Prompt, critiques: &[String], templates: &TemplateSet) -> Result<String> {
    if critiques.is_empty() {
        return Err(Error::NoCritiques);
    }
    Ok(render_update_slot(prompt, &number_items("Advice", critiques), templates))
}

/// Update rendering with a caller-built advice slot. The ablation modes use
/// this to feed transcripts, or nothing, in place of critiques.
pub fn render_update_slot(prompt: &Prompt, advice_slot: &str, templates: &TemplateSet) -> String {
    substitute(
        &templates.update,
        &[(TASK_INSTRUCTION, prompt.text()), (CRITICAL_ADVICES, advice_slot)],
    )
}

const LABEL: &str = "improved instruction:";

fn strip_label(s: &str) -> Option<&str> {
    let head = s.get(..LABEL.len())?;
    head.eq_ignore_ascii_case(LABEL).then(|| &s[LABEL.len()..])
}

fn strip_quotes(s: &str) -> Option<&str> {
    (s.len() >= 2 && s.starts_with('"') && s.ends_with('"')).then(|| &s[1..s.len() - 1])
}

/// Pulls the new instruction out of an update completion.
pub fn extract_prompt(update_response: &str) -> Result<Prompt> {
    let mut text = update_response.trim();
    let mut unquoted = false;
    if let Some(inner) = strip_quotes(text) {
        text = inner.trim();
        unquoted = true;
    }
    if let Some(rest) = strip_label(text) {
        text = rest.trim();
    }
    if !unquoted {
        if let Some(inner) = strip_quotes(text) {
            text = inner.trim();
        }
    }
    if text.is_empty() {
        return Err(Error::EmptyUpdatedPrompt);
    }
    Prompt::new(text, PromptOrigin::Edited)
}
