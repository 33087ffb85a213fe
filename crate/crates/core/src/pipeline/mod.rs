//! Manifest-driven orchestration: dataset synthesis, separation, source
//! selection, transcription and scoring, with JSON reports.
//!
//! Voice activity detection and diarisation are not performed here; a
//! [`SessionManifest`] supplies speaker-labelled utterances instead.

mod config;
mod manifest;
mod run;
mod synth;
mod transcriber;

pub use config::{PipelineConfig, SelectionConfig, SynthConfig, TranscriberConfig};
pub use manifest::{ManifestUtterance, SessionManifest};
pub use run::{
    evaluate, evaluate_sessions, external_embeddings, run_pipeline, run_pipeline_files, score_session, select_sessions,
    separate_session, separate_utterance, session_embeddings, Aggregate, CpWerSummary, EvaluationAggregate,
    EvaluationReport, ModelSummary, RunReport, SessionReport, SessionScore, ToolInfo, UtteranceReport,
    REPORT_SCHEMA_VERSION,
};
pub use synth::{synth, Dataset, MomEntry, PitEntry, DATASET_FORMAT};
pub use transcriber::{build_transcriber, BankEntry, CommandTranscriber, MatchingTranscriber, TranscriberBank};
