//! Zero-shot image and video quality scoring over candidate-token logits.
//!
//! The pipeline asks a multimodal language model (through a pluggable
//! [`backend`]) for the logits of a handful of tone words ("good",
//! "average", "poor", ...) at the token position following a fixed quality
//! prompt, turns those logits into a scalar quality score ([`scoring`]),
//! and evaluates predictions against mean opinion scores with rank
//! correlations ([`metrics`]). [`pipeline`] wires the pieces into the
//! score / evaluate / ablate / record commands exposed by the CLI.

pub mod backend;
pub mod dataset;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod scoring;

pub use backend::{BackendConfig, BackendError, BackendKind, LogitQuery, WordLogitRecord};
pub use dataset::{FramePlan, MediaItem, MediaKind, MediaManifest};
pub use metrics::{CorrelationReport, PairedSample};
pub use pipeline::{RunConfig, RunError};
pub use prompts::{PromptTemplate, ScoringMode, Tone, TonePromptSet};
pub use scoring::{FrameLogitSeries, QualityScore, ScoreWeights, ToneLogits, ToneProbabilities};
