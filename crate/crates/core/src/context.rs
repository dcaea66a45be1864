use rayon::prelude::*;

use crate::config::RequestSettings;
use crate::error::{Error, Result};
use crate::gateway::{CacheKey, ChatRequest, Gateway, GatewayError, Message, RequestTag};
use crate::templates::TemplateSet;

/// Everything a model call needs: the backend, the templates and the
/// decoding settings, plus a bounded worker pool for fan-outs.
pub struct Context {
    pub gateway: Gateway,
    pub templates: TemplateSet,
    pub settings: RequestSettings,
    pool: rayon::ThreadPool,
}

/// One issued call as it appears in run artifacts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CallRecord {
    pub tag: RequestTag,
    pub fingerprint: CacheKey,
    pub content: String,
}

impl Context {
    pub fn new(gateway: Gateway, templates: TemplateSet, settings: RequestSettings, parallelism: usize) -> Result<Self> {
        settings.validate()?;
        templates.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism.max(1))
            .thread_name(|i| format!("pace-worker-{i}"))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Context {
            gateway,
            templates,
            settings,
            pool,
        })
    }

    pub fn request(&self, tag: RequestTag, content: String) -> ChatRequest {
        ChatRequest {
            model: self.settings.model_for(tag).to_owned(),
            messages: vec![Message {
                role: self.settings.role,
                content,
            }],
            temperature: self.settings.temperature,
            top_p: self.settings.top_p,
            max_tokens: self.settings.max_tokens,
            tag,
            sample_index: 0,
        }
    }

    /// Sends `request` and returns the completion text with the call record.
    pub fn call(&self, request: ChatRequest) -> std::result::Result<(String, CallRecord), GatewayError> {
        let response = self.gateway.complete(&request)?;
        let record = CallRecord {
            tag: request.tag,
            fingerprint: request.cache_key(),
            content: request.content(),
        };
        Ok((response.content, record))
    }

    /// Maps `f` over `items` on the worker pool. Output order follows input
    /// order no matter which call finishes first.
    pub fn fan_out<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(usize, &T) -> R + Sync + Send,
    {
        self.pool
            .install(|| items.par_iter().enumerate().map(|(i, item)| f(i, item)).collect())
    }
}

/// First error in input order, or all values.
pub(crate) fn collect_ordered<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}
