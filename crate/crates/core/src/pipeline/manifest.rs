use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One diarised segment of a session recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestUtterance {
    pub utterance_id: String,
    pub speaker_label: String,
    pub start_s: f64,
    /// Relative paths resolve against the manifest's directory.
    pub audio_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
}

/// Speaker-labelled utterances of one session, standing in for the output of
/// voice activity detection and diarisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub session_id: String,
    pub utterances: Vec<ManifestUtterance>,
    /// Where separated sources are written, if anywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<SessionManifest>),
    One(SessionManifest),
}

impl SessionManifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for u in &self.utterances {
            if !seen.insert(u.utterance_id.as_str()) {
                return Err(Error::invalid(format!(
                    "session {}: duplicate utterance id {}",
                    self.session_id, u.utterance_id
                )));
            }
            if !u.start_s.is_finite() {
                return Err(Error::invalid(format!(
                    "utterance {}: start time is not finite",
                    u.utterance_id
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Reads a file holding one manifest or an array of them.
    pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<SessionManifest>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut out = Self::parse_all(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        for m in &mut out {
            m.base_dir = base.clone();
        }
        Ok(out)
    }

    pub fn parse_all(text: &str) -> Result<Vec<SessionManifest>> {
        serde_json::from_str::<serde_json::Value>(text)?;
        let parsed = match serde_json::from_str::<OneOrMany>(text) {
            Ok(OneOrMany::Many(v)) => v,
            Ok(OneOrMany::One(m)) => vec![m],
            Err(_) => {
                // Untagged matching hides the location; retry each layout for it.
                let one = serde_json::from_str::<SessionManifest>(text).err();
                let many = serde_json::from_str::<Vec<SessionManifest>>(text).err();
                let trimmed = text.trim_start();
                return Err(match (trimmed.starts_with('['), many, one) {
                    (true, Some(e), _) | (false, _, Some(e)) => e.into(),
                    _ => Error::format("unrecognized manifest layout"),
                });
            }
        };
        let mut ids = HashSet::new();
        for m in &parsed {
            m.validate()?;
            if !ids.insert(m.session_id.clone()) {
                return Err(Error::invalid(format!("duplicate session id {}", m.session_id)));
            }
        }
        Ok(parsed)
    }
}
