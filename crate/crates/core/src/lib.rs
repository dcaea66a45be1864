//! PACE: prompt editing with an actor-critic loop.
//!
//! The crate covers task data and splits, a chat-completion gateway with
//! live, replay and scripted mock backends, the three role templates,
//! text metrics, the optimization loop and an experiment harness.

pub mod config;
pub mod context;
pub mod error;
pub mod gateway;
pub mod harness;
pub mod optimizer;
pub mod scoring;
pub mod task;
pub mod templates;

pub use config::{Mode, RequestSettings, RunConfig};
pub use context::{CallRecord, Context};
pub use error::{Error, ErrorKind, Result};
pub use gateway::{
    BackendConfig, BackendKind, CacheKey, ChatRequest, ChatResponse, Gateway, GatewayError, MockScript, RequestTag,
    ResponseCache,
};
pub use harness::artifact::RunArtifact;
pub use harness::perturb::{butter_fingers, PerturbSpec};
pub use harness::report::{emit_report, ReportFormat};
pub use harness::{evaluate_final, run_experiment, select_initial_prompt, ExperimentPlan, InitialSetting};
pub use optimizer::{pace_optimize, pace_step, IterationRecord, RunOutcome};
pub use scoring::{score_prompt, MetricId, ScoreReport};
pub use task::{make_split, CandidateRecord, DemoPair, Prompt, Score, SplitKind, SplitRatios, SplitSpec, TaskSpec};
pub use templates::TemplateSet;
