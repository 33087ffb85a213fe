use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::CpWerOptions;
use crate::separator::{FeatureConfig, TrainConfig};
use crate::signal::StftConfig;

/// Everything a run needs besides its inputs. Echoed verbatim into reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; see [`PipelineConfig::with_seed`].
    pub seed: u64,
    pub stft: StftConfig,
    pub features: FeatureConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub selection: SelectionConfig,
    pub transcriber: TranscriberConfig,
    pub scoring: CpWerOptions,
}

impl PipelineConfig {
    /// Reads TOML or JSON, chosen by file extension (`.json` is JSON, anything else TOML).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
        .map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!(" (line {line})")
                })
                .unwrap_or_default();
            Error::format(format!("{}{at}", e.message()))
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Sets the master seed and derives the training and scheduler seeds from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self.train.scheduler.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.synth.validate()?;
        let f = self.selection.outlier_fraction;
        if !(0.0..1.0).contains(&f) {
            return Err(Error::invalid(format!("selection.outlier_fraction {f} not in [0, 1)")));
        }
        if self.features.n_layers == 0 || self.features.dim == 0 {
            return Err(Error::invalid("features need at least one layer and one dimension"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of synthetic speakers; each fixture speaker owns its own band.
    pub speakers: usize,
    /// Supervised two-speaker mixtures with references.
    pub pit_mixtures: usize,
    /// Mixtures of mixtures for unsupervised training.
    pub mom_records: usize,
    pub clip_s: f64,
    pub snr_db: (f64, f64),
    pub sessions: usize,
    pub utterances_per_speaker: usize,
    pub utterance_s: f64,
    /// Target-to-interferer ratio of each overlapped session utterance.
    pub overlap_snr_db: f64,
    pub gap_s: f64,
    /// One WAV per speaker to cut clips from; empty uses the built-in generator.
    pub source_wavs: Vec<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            speakers: 2,
            pit_mixtures: 10,
            mom_records: 4,
            clip_s: 0.5,
            snr_db: (-5.0, 5.0),
            sessions: 1,
            utterances_per_speaker: 3,
            utterance_s: 1.0,
            overlap_snr_db: 5.0,
            gap_s: 0.25,
            source_wavs: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speakers < 2 {
            return Err(Error::invalid("synth.speakers must be at least 2"));
        }
        if !self.source_wavs.is_empty() && self.source_wavs.len() != self.speakers {
            return Err(Error::invalid(format!(
                "synth.source_wavs lists {} files for {} speakers",
                self.source_wavs.len(),
                self.speakers
            )));
        }
        for (name, v) in [("clip_s", self.clip_s), ("utterance_s", self.utterance_s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("synth.{name} must be positive")));
            }
        }
        if !(self.gap_s >= 0.0 && self.gap_s.is_finite()) {
            return Err(Error::invalid("synth.gap_s must be non-negative"));
        }
        let (lo, hi) = self.snr_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || !self.overlap_snr_db.is_finite() {
            return Err(Error::invalid("synth SNR settings must be finite with lo <= hi"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub iterations: usize,
    pub outlier_fraction: f64,
    /// Precomputed embedding file; when absent the built-in spectral embedder is used.
    pub embeddings: Option<PathBuf>,
    /// Subtract the session mean from every embedding before selection.
    pub center_embeddings: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            iterations: 2,
            outlier_fraction: 0.6,
            embeddings: None,
            center_embeddings: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TranscriberConfig {
    /// Looks a waveform up in a bank of clean recordings with known text.
    Matching {
        /// Defaults to `transcriber_bank.json` next to the session manifest.
        #[serde(default)]
        bank: Option<PathBuf>,
        #[serde(default = "default_min_si_snr_db")]
        min_si_snr_db: f64,
    },
    /// Runs `program args... <wav path>` and reads the transcript from stdout.
    Command {
        program: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

fn default_min_si_snr_db() -> f64 {
    5.0
}

impl Default for TranscriberConfig {
    fn default() -> Self {
        TranscriberConfig::Matching {
            bank: None,
            min_si_snr_db: default_min_si_snr_db(),
        }
    }
}
