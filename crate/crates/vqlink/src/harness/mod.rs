//! End-to-end simulation harness: link configuration, the full
//! transmit/receive pipeline, and Monte-Carlo sweeps.

pub mod config;
pub mod pipeline;
pub mod sweep;

pub use config::{ChannelKind, PipelineConfig, TransportMode};
pub use pipeline::{build_artifacts, run_sentence, LinkArtifacts, SentenceOutcome};
pub use sweep::{records_to_csv, run_sweep, run_trial, summarize, TrialRecord};
