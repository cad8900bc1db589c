//! Reasoning-aware diagnosis pipeline.
//!
//! The crate turns tabular patient features into textual descriptions,
//! renders clinical chain-of-thought prompts, drives chat-completion
//! backends (live, record/replay, or a deterministic mock), parses the
//! rationale and diagnosis out of the completions, exports distillation
//! datasets, computes accuracy/precision/recall tables, and hosts the
//! clinician review workflow used to score rationales.
//!
//! Module map:
//!
//! - [`cohort`]: patient records, ingestion, splits, synthetic cohorts
//! - [`textualize`]: atrophy thresholds and patient descriptions
//! - [`prompts`]: candidate / rationalization / diagnosis prompt rendering
//! - [`llm`]: completion backends and the record/replay cache
//! - [`parse`]: rationale and diagnosis extraction
//! - [`runner`]: rationalization and diagnosis campaigns, distillation export
//! - [`eval`]: metrics, subsampling, review sampling
//! - [`review`]: clinician review sessions and the HTTP API

pub mod cohort;
pub mod eval;
pub mod jsonl;
pub mod llm;
pub mod parse;
pub mod prompts;
pub mod review;
pub mod runner;
pub mod textualize;

pub use cohort::{Cohort, CohortSource, Diagnosis, PatientRecord, RegionName, Sex};
pub use eval::{ConfusionMatrix, MetricsReport};
pub use llm::{Backend, Completion, CompletionRequest};
pub use parse::{MatchKind, ParsedOutput, Prediction};
pub use prompts::{Exemplar, PromptBundle, PromptMode};
pub use runner::{DistillTriplet, PredictionSet};
pub use textualize::{AtrophyLevel, PatientDescription, ThresholdTable};
