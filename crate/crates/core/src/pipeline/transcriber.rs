use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::config::TranscriberConfig;
use crate::error::{Error, Result};
use crate::metrics::{si_snr_slices, Transcript};
use crate::selection::Transcriber;
use crate::signal::{read_wav, write_wav, Waveform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    /// Relative paths resolve against the bank file's directory.
    pub audio_path: PathBuf,
    pub text: String,
}

/// Clean recordings with known transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriberBank {
    pub entries: Vec<BankEntry>,
}

impl TranscriberBank {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| match Error::from(e) {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Mock recognizer: returns the text of the bank recording that best matches
/// the input by SI-SNR over their common prefix, or nothing when no match
/// reaches `min_si_snr_db`. Ties keep the earlier bank entry.
#[derive(Debug, Clone)]
pub struct MatchingTranscriber {
    entries: Vec<(Waveform, Transcript)>,
    pub min_si_snr_db: f64,
}

impl MatchingTranscriber {
    pub fn new(entries: Vec<(Waveform, Transcript)>, min_si_snr_db: f64) -> Self {
        MatchingTranscriber { entries, min_si_snr_db }
    }

    pub fn from_bank(path: impl AsRef<Path>, min_si_snr_db: f64) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let entries = TranscriberBank::load(path)?
            .entries
            .into_iter()
            .map(|e| Ok((read_wav(base.join(&e.audio_path))?, Transcript::from_text(&e.text))))
            .collect::<Result<_>>()?;
        Ok(Self::new(entries, min_si_snr_db))
    }
}

impl Transcriber for MatchingTranscriber {
    fn transcribe(&self, wave: &Waveform) -> Result<Transcript> {
        let mut best: Option<(f64, &Transcript)> = None;
        for (reference, text) in &self.entries {
            let n = wave.len().min(reference.len());
            // Silent or mismatched candidates simply cannot match.
            let Ok(score) = si_snr_slices(&wave.samples()[..n], &reference.samples()[..n]) else {
                continue;
            };
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, text));
            }
        }
        Ok(match best {
            Some((score, text)) if score >= self.min_si_snr_db => text.clone(),
            _ => Transcript::default(),
        })
    }
}

/// Runs an external recognizer once per waveform: the audio is written to a
/// temporary WAV whose path is appended to `args`, and stdout is the transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandTranscriber {
    pub program: String,
    pub args: Vec<String>,
}

impl Transcriber for CommandTranscriber {
    fn transcribe(&self, wave: &Waveform) -> Result<Transcript> {
        let file = tempfile::Builder::new().suffix(".wav").tempfile()?;
        write_wav(wave, file.path())?;
        let out = Command::new(&self.program).args(&self.args).arg(file.path()).output()?;
        if !out.status.success() {
            return Err(Error::invalid(format!(
                "{} exited with {}: {}",
                self.program,
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(Transcript::from_text(&String::from_utf8_lossy(&out.stdout)))
    }
}

/// Builds the configured transcriber; a matching transcriber without an
/// explicit bank uses `transcriber_bank.json` in `manifest_dir`.
pub fn build_transcriber(cfg: &TranscriberConfig, manifest_dir: &Path) -> Result<Box<dyn Transcriber>> {
    Ok(match cfg {
        TranscriberConfig::Matching { bank, min_si_snr_db } => {
            let path = bank
                .clone()
                .unwrap_or_else(|| manifest_dir.join("transcriber_bank.json"));
            Box::new(MatchingTranscriber::from_bank(path, *min_si_snr_db)?)
        }
        TranscriberConfig::Command { program, args } => Box::new(CommandTranscriber {
            program: program.clone(),
            args: args.clone(),
        }),
    })
}
