use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::{ManifestUtterance, SessionManifest};
use super::transcriber::build_transcriber;
use crate::error::{Error, Result};
use crate::masking::Activation;
use crate::metrics::{
    cpwer_us_hungarian, cpwer_us_with, wer, CpWerOptions, CpWerResult, SessionHypothesis, SessionTranscript,
    SpeakerPair, Transcript, MAX_ENUMERATED_SPEAKERS,
};
use crate::selection::{
    iterative_select, oracle_select, selection_accuracy, EmbeddingTable, SelectionResult, SeparatedUtterance,
    SpectralEmbedder, Transcriber,
};
use crate::separator::Model;
use crate::signal::{read_wav, write_wav};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n_masks: usize,
    pub activation: Activation,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpWerSummary {
    pub value: f64,
    pub errors: usize,
    pub reference_words: usize,
    pub mapping: Vec<SpeakerPair>,
}

impl From<CpWerResult> for CpWerSummary {
    fn from(r: CpWerResult) -> Self {
        CpWerSummary {
            value: r.cpwer,
            errors: r.errors,
            reference_words: r.reference_words,
            mapping: r.mapping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceReport {
    pub utterance_id: String,
    pub speaker_label: String,
    pub start_s: f64,
    pub duration_s: Option<f64>,
    pub selected_source: Option<usize>,
    pub oracle_source: Option<usize>,
    pub hypothesis: Option<String>,
    pub reference: Option<String>,
    pub wer: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    /// Sorted by utterance id.
    pub utterances: Vec<UtteranceReport>,
    pub selection_accuracy: Option<f64>,
    pub cpwer_us: Option<CpWerSummary>,
    /// Session-level problems, such as a selection or scoring failure.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub sessions: usize,
    pub utterances: usize,
    pub failed_utterances: usize,
    /// Mean over utterances that have a WER.
    pub mean_wer: Option<f64>,
    /// Mean over sessions that have a score.
    pub mean_cpwer_us: Option<f64>,
    pub mean_selection_accuracy: Option<f64>,
}

impl Aggregate {
    pub fn from_sessions(sessions: &[SessionReport]) -> Self {
        let utts = || sessions.iter().flat_map(|s| &s.utterances);
        Aggregate {
            sessions: sessions.len(),
            utterances: utts().count(),
            failed_utterances: utts().filter(|u| u.error.is_some()).count(),
            mean_wer: mean(utts().filter_map(|u| u.wer)),
            mean_cpwer_us: mean(sessions.iter().filter_map(|s| s.cpwer_us.as_ref().map(|c| c.value))),
            mean_selection_accuracy: mean(sessions.iter().filter_map(|s| s.selection_accuracy)),
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    /// Wall-clock time of the run; the only field that varies between identical runs.
    pub generated_at_unix_s: u64,
    pub config: PipelineConfig,
    pub model: ModelSummary,
    /// Sorted by session id.
    pub sessions: Vec<SessionReport>,
    pub aggregate: Aggregate,
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_report(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

impl RunReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_report(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Loads and separates one manifest utterance.
pub fn separate_utterance(
    manifest: &SessionManifest,
    utt: &ManifestUtterance,
    model: &Model,
) -> Result<SeparatedUtterance> {
    let mixture = read_wav(manifest.resolve(&utt.audio_path))?;
    let sources = model.separate(&mixture)?;
    SeparatedUtterance::new(&utt.utterance_id, &utt.speaker_label, mixture, sources)
}

/// Separates every utterance of `manifest` in id order, keeping failures.
pub fn separate_session(
    manifest: &SessionManifest,
    model: &Model,
) -> Vec<(ManifestUtterance, Result<SeparatedUtterance>)> {
    let mut utts = manifest.utterances.clone();
    utts.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    utts.into_iter()
        .map(|u| {
            let sep = separate_utterance(manifest, &u, model).and_then(|s| {
                if let Some(dir) = &manifest.sources_dir {
                    let dir = manifest.resolve(dir);
                    std::fs::create_dir_all(&dir)?;
                    for (k, w) in s.sources.iter().enumerate() {
                        write_wav(w, dir.join(format!("{}_s{k}.wav", s.utterance_id)))?;
                    }
                }
                Ok(s)
            });
            (u, sep)
        })
        .collect()
}

/// The embedding file named by the configuration, if any.
pub fn external_embeddings(config: &PipelineConfig) -> Result<Option<EmbeddingTable>> {
    config
        .selection
        .embeddings
        .as_ref()
        .map(EmbeddingTable::load)
        .transpose()
}

/// Embeddings for one session's utterances: looked up in `external` or
/// computed with the built-in embedder, then optionally centered.
pub fn session_embeddings(
    separated: &[SeparatedUtterance],
    config: &PipelineConfig,
    external: Option<&EmbeddingTable>,
) -> Result<EmbeddingTable> {
    let table = match external {
        Some(t) => {
            let mut sub = EmbeddingTable::new();
            for u in separated {
                let id = &u.utterance_id;
                sub.insert(id, None, t.get(id, None)?.clone())?;
                for k in 0..u.sources.len() {
                    sub.insert(id, Some(k), t.get(id, Some(k))?.clone())?;
                }
            }
            sub
        }
        None => EmbeddingTable::compute(
            separated,
            &SpectralEmbedder {
                stft: config.stft,
                ..SpectralEmbedder::default()
            },
        )?,
    };
    Ok(if config.selection.center_embeddings {
        table.centered()
    } else {
        table
    })
}

fn select(
    separated: &[SeparatedUtterance],
    config: &PipelineConfig,
    external: Option<&EmbeddingTable>,
) -> Result<SelectionResult> {
    let table = session_embeddings(separated, config, external)?;
    iterative_select(
        separated,
        &table,
        config.selection.iterations,
        config.selection.outlier_fraction,
    )
}

/// Session-level cpWER-us; falls back to the assignment solver past the
/// enumeration cap.
pub fn score_session(
    hyp: &SessionHypothesis,
    reference: &SessionHypothesis,
    options: CpWerOptions,
) -> Result<CpWerResult> {
    if reference.speakers.len() > MAX_ENUMERATED_SPEAKERS {
        cpwer_us_hungarian(hyp, reference, options)
    } else {
        cpwer_us_with(hyp, reference, options)
    }
}

fn run_session(
    manifest: &SessionManifest,
    model: &Model,
    config: &PipelineConfig,
    external: Option<&EmbeddingTable>,
    transcriber: &dyn Transcriber,
) -> SessionReport {
    let mut errors = Vec::new();
    let mut reports = Vec::new();
    let mut separated = Vec::new();
    for (u, sep) in separate_session(manifest, model) {
        let mut r = UtteranceReport {
            utterance_id: u.utterance_id.clone(),
            speaker_label: u.speaker_label.clone(),
            start_s: u.start_s,
            duration_s: None,
            selected_source: None,
            oracle_source: None,
            hypothesis: None,
            reference: u.reference_text.as_deref().map(|t| Transcript::from_text(t).text()),
            wer: None,
            error: None,
        };
        match sep {
            Ok(s) => {
                r.duration_s = Some(s.duration_s);
                separated.push(s);
            }
            Err(e) => r.error = Some(e.to_string()),
        }
        reports.push(r);
    }

    let report_of = |id: &str, reports: &[UtteranceReport]| -> usize {
        reports
            .iter()
            .position(|r| r.utterance_id == id)
            .expect("every separated utterance has a report")
    };

    let selection = if separated.is_empty() {
        None
    } else {
        match select(&separated, config, external) {
            Ok(s) => Some(s),
            Err(e) => {
                errors.push(format!("selection failed: {e}"));
                None
            }
        }
    };

    let mut hypothesis = SessionHypothesis::default();
    if let Some(sel) = &selection {
        for s in &separated {
            let i = report_of(&s.utterance_id, &reports);
            let k = sel.choices[&s.utterance_id];
            reports[i].selected_source = Some(k);
            match transcriber.transcribe(&s.sources[k]) {
                Ok(t) => {
                    if let Some(reference) = &reports[i].reference {
                        reports[i].wer = wer(&t, &Transcript::from_text(reference)).ok();
                    }
                    reports[i].hypothesis = Some(t.text());
                    hypothesis.push(&s.speaker_label, manifest_start(manifest, &s.utterance_id), t);
                }
                Err(e) => reports[i].error = Some(format!("transcription failed: {e}")),
            }
        }
    }

    let refs: BTreeMap<String, Transcript> = manifest
        .utterances
        .iter()
        .filter_map(|u| {
            u.reference_text
                .as_ref()
                .map(|t| (u.utterance_id.clone(), Transcript::from_text(t)))
        })
        .collect();
    let fully_referenced = !manifest.utterances.is_empty() && refs.len() == manifest.utterances.len();

    let mut accuracy = None;
    if let (Some(sel), true) = (&selection, fully_referenced) {
        match oracle_select(&separated, &refs, transcriber) {
            Ok(oracle) => {
                for (id, &k) in &oracle.choices {
                    let i = report_of(id, &reports);
                    reports[i].oracle_source = Some(k);
                }
                accuracy = selection_accuracy(sel, &oracle, &separated).ok();
            }
            Err(e) => errors.push(format!("oracle selection failed: {e}")),
        }
    }

    let mut cpwer = None;
    if fully_referenced {
        let mut reference = SessionHypothesis::default();
        for u in &manifest.utterances {
            reference.push(&u.speaker_label, u.start_s, refs[&u.utterance_id].clone());
        }
        match score_session(&hypothesis, &reference, config.scoring) {
            Ok(r) => cpwer = Some(r.into()),
            Err(e) => errors.push(format!("cpWER-us failed: {e}")),
        }
    }

    SessionReport {
        session_id: manifest.session_id.clone(),
        utterances: reports,
        selection_accuracy: accuracy,
        cpwer_us: cpwer,
        errors,
    }
}

fn manifest_start(manifest: &SessionManifest, id: &str) -> f64 {
    manifest
        .utterances
        .iter()
        .find(|u| u.utterance_id == id)
        .map_or(0.0, |u| u.start_s)
}

fn sorted_unique(manifests: &[SessionManifest]) -> Result<Vec<&SessionManifest>> {
    let mut order: Vec<&SessionManifest> = manifests.iter().collect();
    order.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    if let Some(w) = order.windows(2).find(|w| w[0].session_id == w[1].session_id) {
        return Err(Error::invalid(format!("duplicate session id {}", w[0].session_id)));
    }
    Ok(order)
}

fn assemble(config: &PipelineConfig, model: &Model, sessions: Vec<SessionReport>) -> RunReport {
    log::info!("processed {} sessions", sessions.len());
    RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: ToolInfo::current(),
        generated_at_unix_s: unix_now(),
        config: config.clone(),
        model: ModelSummary {
            n_masks: model.head.n_masks,
            activation: model.head.activation,
            hidden: model.head.b1.len(),
        },
        aggregate: Aggregate::from_sessions(&sessions),
        sessions,
    }
}

/// Separates, selects, transcribes and scores every session. Per-utterance
/// and per-session failures are recorded in the report; only invalid
/// configuration or a duplicate session id fails the run. Embeddings come
/// from `external` when given, otherwise from the built-in embedder.
pub fn run_pipeline(
    manifests: &[SessionManifest],
    model: &Model,
    config: &PipelineConfig,
    external: Option<&EmbeddingTable>,
    transcriber: &dyn Transcriber,
) -> Result<RunReport> {
    config.validate()?;
    let sessions = sorted_unique(manifests)?
        .into_iter()
        .map(|m| run_session(m, model, config, external, transcriber))
        .collect();
    Ok(assemble(config, model, sessions))
}

/// [`run_pipeline`] from files, with the embedding source and transcriber
/// built from `config`. A default matching transcriber looks for its bank
/// next to each manifest.
pub fn run_pipeline_files(
    manifest_path: impl AsRef<Path>,
    checkpoint_path: impl AsRef<Path>,
    config: &PipelineConfig,
) -> Result<RunReport> {
    config.validate()?;
    let manifests = SessionManifest::load_all(&manifest_path)?;
    let model = Model::load(checkpoint_path)?;
    let external = external_embeddings(config)?;
    let sessions = sorted_unique(&manifests)?
        .into_iter()
        .map(|m| match build_transcriber(&config.transcriber, &m.base_dir) {
            Ok(t) => run_session(m, &model, config, external.as_ref(), t.as_ref()),
            Err(e) => unavailable_session(m, &format!("transcriber unavailable: {e}")),
        })
        .collect();
    Ok(assemble(config, &model, sessions))
}

fn unavailable_session(manifest: &SessionManifest, message: &str) -> SessionReport {
    let mut utterances: Vec<UtteranceReport> = manifest
        .utterances
        .iter()
        .map(|u| UtteranceReport {
            utterance_id: u.utterance_id.clone(),
            speaker_label: u.speaker_label.clone(),
            start_s: u.start_s,
            duration_s: None,
            selected_source: None,
            oracle_source: None,
            hypothesis: None,
            reference: u.reference_text.as_deref().map(|t| Transcript::from_text(t).text()),
            wer: None,
            error: Some(message.to_string()),
        })
        .collect();
    utterances.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    SessionReport {
        session_id: manifest.session_id.clone(),
        utterances,
        selection_accuracy: None,
        cpwer_us: None,
        errors: vec![message.to_string()],
    }
}

/// Selections per session, without transcription or scoring.
pub fn select_sessions(
    manifests: &[SessionManifest],
    model: &Model,
    config: &PipelineConfig,
) -> Result<BTreeMap<String, SelectionResult>> {
    let external = external_embeddings(config)?;
    let mut out = BTreeMap::new();
    for m in manifests {
        let separated = separate_session(m, model)
            .into_iter()
            .map(|(_, s)| s)
            .collect::<Result<Vec<_>>>()?;
        if separated.is_empty() {
            continue;
        }
        out.insert(m.session_id.clone(), select(&separated, config, external.as_ref())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    pub cpwer_us: CpWerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationAggregate {
    pub sessions: usize,
    pub mean_cpwer_us: Option<f64>,
    pub errors: usize,
    pub reference_words: usize,
    /// Total errors over total reference words.
    pub pooled_cpwer_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub tool: ToolInfo,
    pub options: CpWerOptions,
    pub sessions: Vec<SessionScore>,
    pub aggregate: EvaluationAggregate,
}

impl EvaluationReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_report(path.as_ref(), self)
    }
}

/// Scores hypothesis sessions against references by session id. A reference
/// session with no hypothesis counts as all deletions; a hypothesis session
/// with no reference is an error.
pub fn evaluate_sessions(
    hyps: &[SessionTranscript],
    refs: &[SessionTranscript],
    options: CpWerOptions,
) -> Result<EvaluationReport> {
    let mut by_id: BTreeMap<&str, &SessionTranscript> = BTreeMap::new();
    for h in hyps {
        if by_id.insert(&h.session_id, h).is_some() {
            return Err(Error::invalid(format!("duplicate hypothesis session {}", h.session_id)));
        }
    }
    let mut refs_sorted: Vec<&SessionTranscript> = refs.iter().collect();
    refs_sorted.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    if refs_sorted.windows(2).any(|w| w[0].session_id == w[1].session_id) {
        return Err(Error::invalid("duplicate reference session id"));
    }
    if let Some(extra) = by_id.keys().find(|id| !refs.iter().any(|r| r.session_id == **id)) {
        return Err(Error::invalid(format!("hypothesis session {extra} has no reference")));
    }
    let mut sessions = Vec::with_capacity(refs_sorted.len());
    for r in refs_sorted {
        let hyp = by_id
            .get(r.session_id.as_str())
            .map(|h| h.to_hypothesis())
            .unwrap_or_default();
        let score = score_session(&hyp, &r.to_hypothesis(), options)
            .map_err(|e| Error::invalid(format!("session {}: {e}", r.session_id)))?;
        sessions.push(SessionScore {
            session_id: r.session_id.clone(),
            cpwer_us: score.into(),
        });
    }
    let errors = sessions.iter().map(|s| s.cpwer_us.errors).sum();
    let reference_words: usize = sessions.iter().map(|s| s.cpwer_us.reference_words).sum();
    Ok(EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: ToolInfo::current(),
        options,
        aggregate: EvaluationAggregate {
            sessions: sessions.len(),
            mean_cpwer_us: mean(sessions.iter().map(|s| s.cpwer_us.value)),
            errors,
            reference_words,
            pooled_cpwer_us: (reference_words > 0).then(|| errors as f64 / reference_words as f64),
        },
        sessions,
    })
}

pub fn evaluate(
    hyp_path: impl AsRef<Path>,
    ref_path: impl AsRef<Path>,
    options: CpWerOptions,
) -> Result<EvaluationReport> {
    evaluate_sessions(
        &SessionTranscript::load_all(hyp_path)?,
        &SessionTranscript::load_all(ref_path)?,
        options,
    )
}
