//! Writes a self-contained dataset: supervised mixtures, mixtures of
//! mixtures, and overlapped meeting sessions with a transcription bank.
//!
//! Layout under the output directory:
//!
//! ```text
//! dataset.json
//! pit/mix_000.wav  pit/mix_000_s0.wav  pit/mix_000_s1.wav ...
//! mom/mom_000.wav  mom/mom_000_m0.wav  mom/mom_000_m1.wav ...
//! session_000/manifest.json  references.json  transcriber_bank.json
//! session_000/utt_000.wav ...  session_000/bank/utt_000_target.wav ...
//! ```

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SynthConfig;
use super::manifest::{ManifestUtterance, SessionManifest};
use super::transcriber::{BankEntry, TranscriberBank};
use crate::error::{Error, Result};
use crate::fixtures::{pseudo_speech, voices};
use crate::metrics::{SessionTranscript, TranscriptEntry};
use crate::separator::TrainRecord;
use crate::signal::{make_mom, mix_at_snr, read_wav, write_wav, Waveform, SAMPLE_RATE};

pub const DATASET_FORMAT: &str = "tfsep-dataset";

const VOCABULARY: &[&str] = &[
    "the", "meeting", "starts", "at", "nine", "please", "send", "report", "before", "lunch", "we", "need", "more",
    "time", "budget", "looks", "fine", "next", "week", "project", "design", "review", "agree", "with", "that", "plan",
    "remote", "control", "button", "price", "market", "idea",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitEntry {
    pub mixture: PathBuf,
    pub sources: Vec<PathBuf>,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomEntry {
    pub mom: PathBuf,
    pub mixtures: [PathBuf; 2],
    pub snr_db: f64,
}

/// Index of a synthesized dataset; paths are relative to the index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub format: String,
    pub seed: u64,
    pub sample_rate: u32,
    pub pit: Vec<PitEntry>,
    pub mom: Vec<MomEntry>,
    pub sessions: Vec<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut d: Dataset = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if d.format != DATASET_FORMAT {
            return Err(Error::format(format!(
                "{}: unexpected format tag {:?}",
                path.display(),
                d.format
            )));
        }
        d.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(d)
    }

    fn read(&self, rel: &Path) -> Result<Waveform> {
        read_wav(self.base_dir.join(rel))
    }

    /// Training records; MoM records are included only when `with_mixit` is set.
    pub fn train_records(&self, with_mixit: bool) -> Result<Vec<TrainRecord>> {
        let mut out = Vec::new();
        for e in &self.pit {
            let sources = e.sources.iter().map(|p| self.read(p)).collect::<Result<_>>()?;
            out.push(TrainRecord::Pit {
                mixture: self.read(&e.mixture)?,
                sources,
            });
        }
        if with_mixit {
            for e in &self.mom {
                out.push(TrainRecord::MixIt {
                    mom: self.read(&e.mom)?,
                    mixtures: [self.read(&e.mixtures[0])?, self.read(&e.mixtures[1])?],
                });
            }
        }
        Ok(out)
    }

    pub fn session_paths(&self) -> Vec<PathBuf> {
        self.sessions.iter().map(|p| self.base_dir.join(p)).collect()
    }
}

/// Produces speaker clips, either from the built-in generator or by cutting
/// excerpts out of per-speaker recordings.
enum ClipSource {
    Fixture,
    Recordings(Vec<Waveform>),
}

impl ClipSource {
    fn new(cfg: &SynthConfig) -> Result<Self> {
        if cfg.source_wavs.is_empty() {
            return Ok(ClipSource::Fixture);
        }
        cfg.source_wavs
            .iter()
            .map(read_wav)
            .collect::<Result<_>>()
            .map(ClipSource::Recordings)
    }

    fn clip(&self, speaker: usize, n_speakers: usize, len: usize, rng: &mut ChaCha8Rng) -> Result<Waveform> {
        let seed = rng.random();
        match self {
            ClipSource::Fixture => Ok(pseudo_speech(&voices(n_speakers)[speaker], len, seed)),
            ClipSource::Recordings(waves) => {
                let w = &waves[speaker];
                if w.len() < len {
                    return Err(Error::invalid(format!(
                        "recording for speaker {speaker} has {} samples, clips need {len}",
                        w.len()
                    )));
                }
                let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..=w.len() - len);
                Waveform::new(w.samples()[start..start + len].to_vec(), w.sample_rate())
            }
        }
    }
}

fn samples_for(seconds: f64) -> usize {
    (seconds * SAMPLE_RATE as f64).round() as usize
}

fn two_speakers(n: usize, rng: &mut ChaCha8Rng) -> (usize, usize) {
    let pick = sample(rng, n, 2);
    (pick.index(0), pick.index(1))
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(4..=8);
    (0..n)
        .map(|_| VOCABULARY[rng.random_range(0..VOCABULARY.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Synthesizes the dataset into `out_dir` and returns its index, which is
/// also written to `out_dir/dataset.json`.
pub fn synth(cfg: &SynthConfig, seed: u64, out_dir: impl AsRef<Path>) -> Result<Dataset> {
    cfg.validate()?;
    let out = out_dir.as_ref();
    let clips = ClipSource::new(cfg)?;
    let n_spk = cfg.speakers;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip_len = samples_for(cfg.clip_s);

    std::fs::create_dir_all(out.join("pit"))?;
    let mut pit = Vec::with_capacity(cfg.pit_mixtures);
    for i in 0..cfg.pit_mixtures {
        let (a, b) = two_speakers(n_spk, &mut rng);
        let sa = clips.clip(a, n_spk, clip_len, &mut rng)?;
        let sb = clips.clip(b, n_spk, clip_len, &mut rng)?;
        let snr_db = rng.random_range(cfg.snr_db.0..=cfg.snr_db.1);
        let (mix, sb) = mix_at_snr(&sa, &sb, snr_db)?;
        let sa = sa.truncated(mix.len());
        let stem = format!("pit/mix_{i:03}");
        let entry = PitEntry {
            mixture: format!("{stem}.wav").into(),
            sources: vec![format!("{stem}_s0.wav").into(), format!("{stem}_s1.wav").into()],
            snr_db,
        };
        write_wav(&mix, out.join(&entry.mixture))?;
        write_wav(&sa, out.join(&entry.sources[0]))?;
        write_wav(&sb, out.join(&entry.sources[1]))?;
        pit.push(entry);
    }

    std::fs::create_dir_all(out.join("mom"))?;
    let mut mom = Vec::with_capacity(cfg.mom_records);
    for i in 0..cfg.mom_records {
        let (a, b) = two_speakers(n_spk, &mut rng);
        let m1 = clips.clip(a, n_spk, clip_len, &mut rng)?;
        let m2 = clips.clip(b, n_spk, clip_len, &mut rng)?;
        let rec = make_mom(&m1, &m2, cfg.snr_db, rng.random())?;
        let stem = format!("mom/mom_{i:03}");
        let entry = MomEntry {
            mom: format!("{stem}.wav").into(),
            mixtures: [format!("{stem}_m0.wav").into(), format!("{stem}_m1.wav").into()],
            snr_db: rec.snr_db,
        };
        write_wav(&rec.mom, out.join(&entry.mom))?;
        write_wav(&rec.sources[0], out.join(&entry.mixtures[0]))?;
        write_wav(&rec.sources[1], out.join(&entry.mixtures[1]))?;
        mom.push(entry);
    }

    let mut sessions = Vec::with_capacity(cfg.sessions);
    for s in 0..cfg.sessions {
        let session_id = format!("session_{s:03}");
        synth_session(cfg, &clips, &session_id, &out.join(&session_id), &mut rng)?;
        sessions.push(PathBuf::from(&session_id).join("manifest.json"));
    }

    let dataset = Dataset {
        format: DATASET_FORMAT.into(),
        seed,
        sample_rate: SAMPLE_RATE,
        pit,
        mom,
        sessions,
        base_dir: out.to_path_buf(),
    };
    write_json(&out.join("dataset.json"), &dataset)?;
    Ok(dataset)
}

/// Speakers take turns; every utterance has another speaker talking over it.
fn synth_session(
    cfg: &SynthConfig,
    clips: &ClipSource,
    session_id: &str,
    dir: &Path,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    std::fs::create_dir_all(dir.join("bank"))?;
    let n_spk = cfg.speakers;
    let len = samples_for(cfg.utterance_s);
    let mut utterances = Vec::new();
    let mut references = Vec::new();
    let mut bank = Vec::new();
    let mut start_s = 0.0;
    for i in 0..n_spk * cfg.utterances_per_speaker {
        let speaker = i % n_spk;
        let interferer = (speaker + rng.random_range(1..n_spk)) % n_spk;
        let target = clips.clip(speaker, n_spk, len, rng)?;
        let other = clips.clip(interferer, n_spk, len, rng)?;
        let (mix, other) = mix_at_snr(&target, &other, cfg.overlap_snr_db)?;
        let text = sentence(rng);
        let other_text = sentence(rng);

        let id = format!("utt_{i:03}");
        let audio_path = PathBuf::from(format!("{id}.wav"));
        write_wav(&mix, dir.join(&audio_path))?;
        for (suffix, wave, words) in [("target", &target, &text), ("interferer", &other, &other_text)] {
            let p = PathBuf::from(format!("bank/{id}_{suffix}.wav"));
            write_wav(wave, dir.join(&p))?;
            bank.push(BankEntry {
                audio_path: p,
                text: words.clone(),
            });
        }
        let label = format!("spk{speaker}");
        references.push(TranscriptEntry {
            speaker: label.clone(),
            start_s,
            text: text.clone(),
        });
        utterances.push(ManifestUtterance {
            utterance_id: id,
            speaker_label: label,
            start_s,
            audio_path,
            reference_text: Some(text),
        });
        start_s += cfg.utterance_s + cfg.gap_s;
    }
    let manifest = SessionManifest {
        session_id: session_id.into(),
        utterances,
        sources_dir: None,
        base_dir: dir.to_path_buf(),
    };
    manifest.save(dir.join("manifest.json"))?;
    write_json(
        &dir.join("references.json"),
        &SessionTranscript {
            session_id: session_id.into(),
            entries: references,
        },
    )?;
    TranscriberBank { entries: bank }.save(dir.join("transcriber_bank.json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            pit_mixtures: 3,
            mom_records: 2,
            clip_s: 0.1,
            utterances_per_speaker: 2,
            utterance_s: 0.1,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn layout_and_records() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth(&small(), 5, dir.path()).unwrap();
        assert_eq!(d.pit.len(), 3);
        assert_eq!(d.mom.len(), 2);
        let loaded = Dataset::load(dir.path().join("dataset.json")).unwrap();
        assert_eq!(loaded, d);
        assert_eq!(loaded.train_records(false).unwrap().len(), 3);
        assert_eq!(loaded.train_records(true).unwrap().len(), 5);
        let m = &SessionManifest::load_all(&loaded.session_paths()[0]).unwrap()[0];
        assert_eq!(m.utterances.len(), 4);
        let bank = TranscriberBank::load(dir.path().join("session_000/transcriber_bank.json")).unwrap();
        assert_eq!(bank.entries.len(), 8);
    }

    #[test]
    fn recordings_are_cut_into_clips() {
        let dir = tempfile::tempdir().unwrap();
        let mut paths = Vec::new();
        for k in 0..2 {
            let p = dir.path().join(format!("spk{k}.wav"));
            write_wav(&pseudo_speech(&voices(2)[k], 4000, k as u64), &p).unwrap();
            paths.push(p);
        }
        let cfg = SynthConfig {
            source_wavs: paths.clone(),
            ..small()
        };
        let out = dir.path().join("out");
        synth(&cfg, 1, &out).unwrap();
        let too_long = SynthConfig {
            source_wavs: paths,
            clip_s: 1.0,
            ..small()
        };
        assert!(synth(&too_long, 1, dir.path().join("out2")).is_err());
    }

    #[test]
    fn missing_recording_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            source_wavs: vec!["/nonexistent/a.wav".into(), "/nonexistent/b.wav".into()],
            ..small()
        };
        assert!(matches!(synth(&cfg, 1, dir.path()), Err(Error::Io(_))));
    }
}
