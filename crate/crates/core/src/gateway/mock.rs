//! Scripted backend.
//!
//! A mock script is a JSON array. Each element is either a rule
//!
//! ```json
//! { "tag": "actor", "pattern": "Input: (\\w+)", "response": "$1!" }
//! ```
//!
//! or a fallback `{ "default": "..." }`. Rules are tried in file order
//! against the request content; the first match wins and its response is
//! expanded with the regex captures (`$1`, `${name}`, `$$` for a literal
//! dollar). `tag` may be a single tag, a list of tags, or omitted to match
//! any tag. An optional `sample` restricts a rule to one sample index.

use std::path::Path;

use regex::Regex;
use serde::Deserialize;

use super::{ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, RequestTag, ResponseSource};

#[derive(Deserialize)]
#[serde(untagged)]
enum TagSpec {
    One(RequestTag),
    Many(Vec<RequestTag>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Default {
        default: String,
    },
    Rule {
        #[serde(default)]
        tag: Option<TagSpec>,
        pattern: String,
        response: String,
        #[serde(default)]
        sample: Option<u32>,
    },
}

#[derive(Debug, Clone)]
pub struct MockRule {
    tags: Option<Vec<RequestTag>>,
    pattern: Regex,
    response: String,
    sample: Option<u32>,
}

impl MockRule {
    pub fn new(tags: Option<Vec<RequestTag>>, pattern: &str, response: impl Into<String>) -> Result<Self, GatewayError> {
        let pattern = Regex::new(pattern).map_err(|e| GatewayError::MockScript(e.to_string()))?;
        Ok(MockRule {
            tags,
            pattern,
            response: response.into(),
            sample: None,
        })
    }

    pub fn for_sample(mut self, sample: u32) -> Self {
        self.sample = Some(sample);
        self
    }

    fn respond(&self, request: &ChatRequest, content: &str) -> Option<String> {
        if let Some(tags) = &self.tags {
            if !tags.contains(&request.tag) {
                return None;
            }
        }
        if self.sample.is_some_and(|s| s != request.sample_index) {
            return None;
        }
        let caps = self.pattern.captures(content)?;
        let mut out = String::new();
        caps.expand(&self.response, &mut out);
        Some(out)
    }
}

/// Parsed, compiled mock script. Read-only after construction.
#[derive(Debug, Clone, Default)]
pub struct MockScript {
    rules: Vec<MockRule>,
    default: Option<String>,
}

impl MockScript {
    pub fn new(rules: Vec<MockRule>, default: Option<String>) -> Self {
        MockScript { rules, default }
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let entries: Vec<Entry> = serde_json::from_str(text).map_err(|e| GatewayError::MockScript(e.to_string()))?;
        let mut script = MockScript::default();
        for entry in entries {
            match entry {
                Entry::Default { default } => {
                    if script.default.is_some() {
                        return Err(GatewayError::MockScript("more than one default rule".into()));
                    }
                    script.default = Some(default);
                }
                Entry::Rule {
                    tag,
                    pattern,
                    response,
                    sample,
                } => {
                    let tags = tag.map(|t| match t {
                        TagSpec::One(t) => vec![t],
                        TagSpec::Many(ts) => ts,
                    });
                    let mut rule = MockRule::new(tags, &pattern, response)?;
                    rule.sample = sample;
                    script.rules.push(rule);
                }
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::MockScript(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn respond(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let content = request.content();
        let text = self
            .rules
            .iter()
            .find_map(|r| r.respond(request, &content))
            .or_else(|| self.default.clone())
            .ok_or_else(|| GatewayError::MockUnmatched {
                tag: request.tag,
                excerpt: content.chars().take(120).collect(),
            })?;
        Ok(ChatResponse {
            content: text,
            finish_reason: FinishReason::Stop,
            source: ResponseSource::Mock,
        })
    }
}

pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        MockBackend { script }
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.script.respond(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn actor(content: &str) -> ChatRequest {
        ChatRequest::new(RequestTag::Actor, "m", content)
    }

    #[test]
    fn first_rule_match() {
        let script = MockScript::from_json(r#"[{"tag":"actor","pattern":"Input: cat","response":"c"}]"#).unwrap();
        let r = script.respond(&actor("Instruction: x,\nInput: cat,\nOutput:")).unwrap();
        assert_eq!(r.content, "c");
        assert_eq!(r.source, ResponseSource::Mock);
    }

    #[test]
    fn capture_substitution() {
        let script = MockScript::from_json(r#"[{"pattern":"Input: (\\w+)","response":"$1!"}]"#).unwrap();
        assert_eq!(script.respond(&actor("Input: sum")).unwrap().content, "sum!");
    }

    #[test]
    fn earlier_rule_wins() {
        let script = MockScript::from_json(
            r#"[{"pattern":"Input","response":"first"},{"pattern":"Input: cat","response":"second"}]"#,
        )
        .unwrap();
        assert_eq!(script.respond(&actor("Input: cat")).unwrap().content, "first");
    }

    #[test]
    fn tag_filter_and_default() {
        let script = MockScript::from_json(
            r#"[{"tag":["critic","update"],"pattern":".","response":"advice"},{"default":"fallback"}]"#,
        )
        .unwrap();
        assert_eq!(script.respond(&actor("x")).unwrap().content, "fallback");
        let critic = ChatRequest::new(RequestTag::Critic, "m", "x");
        assert_eq!(script.respond(&critic).unwrap().content, "advice");
    }

    #[test]
    fn unmatched_without_default_errors() {
        let script = MockScript::from_json(r#"[{"tag":"critic","pattern":".","response":"a"}]"#).unwrap();
        let err = script.respond(&actor("x")).unwrap_err();
        assert!(err.to_string().starts_with("mock unmatched request"));
    }

    #[test]
    fn sample_filter() {
        let script = MockScript::from_json(
            r#"[{"pattern":".","sample":2,"response":"third"},{"pattern":".","response":"other"}]"#,
        )
        .unwrap();
        let mut req = actor("x");
        assert_eq!(script.respond(&req).unwrap().content, "other");
        req.sample_index = 2;
        assert_eq!(script.respond(&req).unwrap().content, "third");
    }

    #[test]
    fn bad_scripts_rejected() {
        assert!(MockScript::from_json(r#"[{"pattern":"(","response":"x"}]"#).is_err());
        assert!(MockScript::from_json(r#"[{"default":"a"},{"default":"b"}]"#).is_err());
        assert!(MockScript::from_json(r#"{"rules":[]}"#).is_err());
    }

    #[test]
    fn deterministic() {
        let script = MockScript::from_json(r#"[{"pattern":"(\\d+)","response":"n=$1"}]"#).unwrap();
        let req = actor("value 42");
        assert_eq!(script.respond(&req).unwrap(), script.respond(&req).unwrap());
    }
}
