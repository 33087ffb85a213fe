//! Choosing which separated source carries the labelled speaker.
//!
//! Every utterance is separated into several sources, only one of which
//! belongs to the speaker the diariser assigned. [`iterative_select`] picks
//! that source by comparing speaker embeddings against a per-speaker average
//! that is refined over a few passes. [`oracle_select`] gives the
//! transcript-based upper bound and [`selection_accuracy`] compares the two.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{wer, Transcript};
use crate::signal::{StftConfig, Waveform};

/// Energy floor inside the log of [`SpectralEmbedder`]; a silent input embeds
/// to `ln(EMBEDDING_FLOOR)` in every band.
pub const EMBEDDING_FLOOR: f64 = 1e-8;

const EMBEDDING_FILE_FORMAT: &str = "tfsep-embeddings";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding has no dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite values"));
        }
        Ok(Embedding(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Embedding) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Cosine similarity; 0 when either side has zero norm.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return 0.0;
        }
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum::<f64>() / denom
    }

    fn mean<'a>(items: impl IntoIterator<Item = &'a Embedding>) -> Embedding {
        let mut acc: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for e in items {
            if acc.is_empty() {
                acc = vec![0.0; e.dim()];
            }
            acc.iter_mut().zip(&e.0).for_each(|(a, v)| *a += v);
            n += 1;
        }
        acc.iter_mut().for_each(|a| *a /= n as f64);
        Embedding(acc)
    }
}

pub trait Embedder {
    fn embed(&self, wave: &Waveform) -> Result<Embedding>;
}

/// Time-averaged power in mel-spaced bands, on a log scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEmbedder {
    pub stft: StftConfig,
    pub bands: usize,
}

impl Default for SpectralEmbedder {
    fn default() -> Self {
        SpectralEmbedder {
            stft: StftConfig::default(),
            bands: 40,
        }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

impl SpectralEmbedder {
    /// Half-open FFT-bin ranges of each band; every band gets at least one bin.
    fn band_edges(&self, sample_rate: u32) -> Vec<(usize, usize)> {
        let bins = self.stft.freq_bins();
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edge = |k: usize| {
            let hz = mel_to_hz(top * k as f64 / self.bands as f64);
            ((hz / nyquist) * (bins - 1) as f64).round() as usize
        };
        let mut out = Vec::with_capacity(self.bands);
        let mut lo = 0;
        for k in 0..self.bands {
            let hi = if k + 1 == self.bands {
                bins
            } else {
                edge(k + 1).max(lo + 1).min(bins)
            };
            let lo_clamped = lo.min(bins - 1);
            out.push((lo_clamped, hi.max(lo_clamped + 1)));
            lo = hi;
        }
        out
    }
}

impl Embedder for SpectralEmbedder {
    fn embed(&self, wave: &Waveform) -> Result<Embedding> {
        self.stft.validate()?;
        if wave.is_empty() {
            return Err(Error::invalid("cannot embed an empty waveform"));
        }
        if self.bands == 0 || self.bands > self.stft.freq_bins() {
            return Err(Error::invalid(format!(
                "band count {} must be in 1..={}",
                self.bands,
                self.stft.freq_bins()
            )));
        }
        let n = self.stft.window_len;
        let mut samples = wave.samples().to_vec();
        if samples.len() < n {
            samples.resize(n, 0.0);
        }
        let frames = 1 + (samples.len() - n) / self.stft.hop;
        let window = self.stft.window();
        let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
        let mut power = vec![0.0; self.stft.freq_bins()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            let start = t * self.stft.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(samples[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p += b.norm_sqr() / frames as f64;
            }
        }
        let values = self
            .band_edges(wave.sample_rate())
            .into_iter()
            .map(|(lo, hi)| {
                let e = power[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                (EMBEDDING_FLOOR + e).ln()
            })
            .collect();
        Embedding::new(values)
    }
}

/// One diarised utterance together with its separation outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedUtterance {
    pub utterance_id: String,
    pub speaker_label: String,
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
    pub duration_s: f64,
}

impl SeparatedUtterance {
    /// Duration is taken from the mixture.
    pub fn new(
        utterance_id: impl Into<String>,
        speaker_label: impl Into<String>,
        mixture: Waveform,
        sources: Vec<Waveform>,
    ) -> Result<Self> {
        let utt = SeparatedUtterance {
            utterance_id: utterance_id.into(),
            speaker_label: speaker_label.into(),
            duration_s: mixture.duration_s(),
            mixture,
            sources,
        };
        utt.validate()?;
        Ok(utt)
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.utterance_id;
        if self.sources.len() < 2 {
            return Err(Error::invalid(format!("utterance {id}: needs at least 2 sources")));
        }
        let len = self.sources[0].len();
        if self.sources.iter().any(|s| s.len() != len) {
            return Err(Error::invalid(format!("utterance {id}: sources differ in length")));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::invalid(format!("utterance {id}: duration must be positive")));
        }
        Ok(())
    }
}

/// Where the selection loop gets its embeddings from.
pub trait EmbeddingProvider {
    fn mixture(&self, utt: &SeparatedUtterance) -> Result<Embedding>;
    fn source(&self, utt: &SeparatedUtterance, index: usize) -> Result<Embedding>;
}

impl<E: Embedder> EmbeddingProvider for E {
    fn mixture(&self, utt: &SeparatedUtterance) -> Result<Embedding> {
        self.embed(&utt.mixture)
    }

    fn source(&self, utt: &SeparatedUtterance, index: usize) -> Result<Embedding> {
        let wave = utt
            .sources
            .get(index)
            .ok_or_else(|| Error::invalid(format!("utterance {}: no source {index}", utt.utterance_id)))?;
        self.embed(wave)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub utterance_id: String,
    /// `None` for the unseparated mixture.
    pub source: Option<usize>,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingFile {
    format: String,
    dim: usize,
    entries: Vec<EmbeddingEntry>,
}

/// Precomputed embeddings keyed by utterance and source, for plugging in an
/// external embedder.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    dim: Option<usize>,
    entries: HashMap<(String, Option<usize>), Embedding>,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, utterance_id: &str, source: Option<usize>, emb: Embedding) -> Result<()> {
        match self.dim {
            Some(d) if d != emb.dim() => {
                return Err(Error::invalid(format!(
                    "embedding for {utterance_id} has dimension {}, table uses {d}",
                    emb.dim()
                )))
            }
            _ => self.dim = Some(emb.dim()),
        }
        self.entries.insert((utterance_id.to_string(), source), emb);
        Ok(())
    }

    pub fn get(&self, utterance_id: &str, source: Option<usize>) -> Result<&Embedding> {
        self.entries
            .get(&(utterance_id.to_string(), source))
            .ok_or_else(|| match source {
                Some(k) => Error::invalid(format!("no embedding for {utterance_id} source {k}")),
                None => Error::invalid(format!("no mixture embedding for {utterance_id}")),
            })
    }

    /// Fills a table by running `embedder` over every mixture and source.
    pub fn compute(utts: &[SeparatedUtterance], embedder: &impl Embedder) -> Result<Self> {
        let mut table = Self::new();
        for u in utts {
            table.insert(&u.utterance_id, None, embedder.embed(&u.mixture)?)?;
            for (k, s) in u.sources.iter().enumerate() {
                table.insert(&u.utterance_id, Some(k), embedder.embed(s)?)?;
            }
        }
        Ok(table)
    }

    /// Copy with the mean over all entries subtracted from each entry, which
    /// removes spectral structure shared by every recording in the table.
    pub fn centered(&self) -> Self {
        let all: Vec<&Embedding> = self.entries.values().collect();
        if all.is_empty() {
            return self.clone();
        }
        // Sum in key order so the result does not depend on hash order.
        let mut keys: Vec<&(String, Option<usize>)> = self.entries.keys().collect();
        keys.sort();
        let mean = Embedding::mean(keys.iter().map(|k| &self.entries[*k]));
        let entries = self
            .entries
            .iter()
            .map(|(k, e)| {
                let v = e.0.iter().zip(&mean.0).map(|(a, m)| a - m).collect();
                (k.clone(), Embedding(v))
            })
            .collect();
        EmbeddingTable { dim: self.dim, entries }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut entries: Vec<EmbeddingEntry> = self
            .entries
            .iter()
            .map(|((id, source), e)| EmbeddingEntry {
                utterance_id: id.clone(),
                source: *source,
                values: e.values().to_vec(),
            })
            .collect();
        entries.sort_by(|a, b| (&a.utterance_id, a.source).cmp(&(&b.utterance_id, b.source)));
        let file = EmbeddingFile {
            format: EMBEDDING_FILE_FORMAT.into(),
            dim: self.dim.unwrap_or(0),
            entries,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: EmbeddingFile = serde_json::from_str(text)?;
        if file.format != EMBEDDING_FILE_FORMAT {
            return Err(Error::format(format!("unexpected format tag {:?}", file.format)));
        }
        let mut table = Self::new();
        for e in file.entries {
            if e.values.len() != file.dim {
                return Err(Error::format(format!(
                    "entry {} has {} values, header says {}",
                    e.utterance_id,
                    e.values.len(),
                    file.dim
                )));
            }
            if table.entries.contains_key(&(e.utterance_id.clone(), e.source)) {
                return Err(Error::format(format!("duplicate entry for {}", e.utterance_id)));
            }
            table.insert(&e.utterance_id, e.source, Embedding::new(e.values)?)?;
        }
        Ok(table)
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn mixture(&self, utt: &SeparatedUtterance) -> Result<Embedding> {
        self.get(&utt.utterance_id, None).cloned()
    }

    fn source(&self, utt: &SeparatedUtterance, index: usize) -> Result<Embedding> {
        self.get(&utt.utterance_id, Some(index)).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Chosen source index per utterance id.
    pub choices: BTreeMap<String, usize>,
    /// Average embedding each speaker's choices were scored against on the last pass.
    pub speaker_means: BTreeMap<String, Embedding>,
    pub iterations_run: usize,
}

fn check_utterances(utts: &[SeparatedUtterance]) -> Result<()> {
    if utts.is_empty() {
        return Err(Error::invalid("no utterances to select from"));
    }
    let mut seen = std::collections::HashSet::new();
    for u in utts {
        u.validate()?;
        if !seen.insert(u.utterance_id.as_str()) {
            return Err(Error::invalid(format!("duplicate utterance id {}", u.utterance_id)));
        }
    }
    Ok(())
}

/// Mean of `members` after dropping the `floor(fraction * n)` farthest from
/// the full mean, always keeping one. Equal distances drop the lower index first.
fn trimmed_mean(current: &[Embedding], members: &[usize], outlier_fraction: f64) -> Embedding {
    let full = Embedding::mean(members.iter().map(|&i| &current[i]));
    let n = members.len();
    let drop = ((outlier_fraction * n as f64).floor() as usize).min(n - 1);
    if drop == 0 {
        return full;
    }
    let mut ranked: Vec<(f64, usize)> = members.iter().map(|&i| (current[i].distance(&full), i)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Embedding::mean(ranked[drop..].iter().map(|&(_, i)| &current[i]))
}

/// Index of the largest cosine similarity to `target`; ties keep the lowest index.
fn most_similar(candidates: &[Embedding], target: &Embedding) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, c) in candidates.iter().enumerate() {
        let s = c.cosine(target);
        if s > best.1 {
            best = (k, s);
        }
    }
    best.0
}

/// Picks one source per utterance by cosine similarity to its speaker's
/// trimmed-mean embedding.
///
/// The first pass averages mixture embeddings; each further pass averages the
/// embeddings of the previously chosen sources, so `iterations` extra passes
/// are run after the initial one. Outliers are re-estimated on every pass.
pub fn iterative_select(
    utts: &[SeparatedUtterance],
    provider: &(impl EmbeddingProvider + ?Sized),
    iterations: usize,
    outlier_fraction: f64,
) -> Result<SelectionResult> {
    check_utterances(utts)?;
    if !(0.0..1.0).contains(&outlier_fraction) {
        return Err(Error::invalid(format!(
            "outlier fraction {outlier_fraction} not in [0, 1)"
        )));
    }
    let mut current = Vec::with_capacity(utts.len());
    let mut candidates = Vec::with_capacity(utts.len());
    for u in utts {
        current.push(provider.mixture(u)?);
        let embs = (0..u.sources.len())
            .map(|k| provider.source(u, k))
            .collect::<Result<Vec<_>>>()?;
        candidates.push(embs);
    }
    let dim = current[0].dim();
    if current
        .iter()
        .chain(candidates.iter().flatten())
        .any(|e| e.dim() != dim)
    {
        return Err(Error::invalid("embeddings differ in dimension"));
    }

    let mut speakers: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, u) in utts.iter().enumerate() {
        speakers.entry(&u.speaker_label).or_default().push(i);
    }

    let mut choice = vec![0; utts.len()];
    let mut means = BTreeMap::new();
    for _pass in 0..=iterations {
        means.clear();
        for (&label, members) in &speakers {
            let mean = trimmed_mean(&current, members, outlier_fraction);
            for &i in members {
                choice[i] = most_similar(&candidates[i], &mean);
            }
            means.insert(label.to_string(), mean);
        }
        for (i, c) in choice.iter().enumerate() {
            current[i] = candidates[i][*c].clone();
        }
    }

    Ok(SelectionResult {
        choices: utts
            .iter()
            .zip(&choice)
            .map(|(u, &c)| (u.utterance_id.clone(), c))
            .collect(),
        speaker_means: means,
        iterations_run: iterations,
    })
}

pub trait Transcriber {
    fn transcribe(&self, wave: &Waveform) -> Result<Transcript>;
}

/// Per utterance, the source whose transcription has the lowest WER against
/// the reference; ties keep the lowest index.
pub fn oracle_select(
    utts: &[SeparatedUtterance],
    references: &BTreeMap<String, Transcript>,
    transcriber: &(impl Transcriber + ?Sized),
) -> Result<SelectionResult> {
    check_utterances(utts)?;
    let mut choices = BTreeMap::new();
    for u in utts {
        let reference = references
            .get(&u.utterance_id)
            .ok_or_else(|| Error::invalid(format!("no reference transcript for {}", u.utterance_id)))?;
        let mut best = (0, f64::INFINITY);
        for (k, s) in u.sources.iter().enumerate() {
            let w = wer(&transcriber.transcribe(s)?, reference)?;
            if w < best.1 {
                best = (k, w);
            }
        }
        choices.insert(u.utterance_id.clone(), best.0);
    }
    Ok(SelectionResult {
        choices,
        speaker_means: BTreeMap::new(),
        iterations_run: 0,
    })
}

/// Fraction of total duration on which `est` and `oracle` chose the same source.
pub fn selection_accuracy(est: &SelectionResult, oracle: &SelectionResult, utts: &[SeparatedUtterance]) -> Result<f64> {
    let ids: Vec<&String> = utts.iter().map(|u| &u.utterance_id).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    sorted.dedup();
    let same_ids = |r: &SelectionResult| r.choices.keys().eq(sorted.iter().copied());
    if sorted.len() != ids.len() || !same_ids(est) || !same_ids(oracle) {
        return Err(Error::invalid("selection results cover different utterances"));
    }
    let (mut matched, mut total) = (0.0, 0.0);
    for u in utts {
        if !(u.duration_s > 0.0 && u.duration_s.is_finite()) {
            return Err(Error::invalid(format!(
                "utterance {}: duration must be positive",
                u.utterance_id
            )));
        }
        total += u.duration_s;
        if est.choices[&u.utterance_id] == oracle.choices[&u.utterance_id] {
            matched += u.duration_s;
        }
    }
    Ok(matched / total)
}
