use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tfsep::pipeline::{
    evaluate, run_pipeline_files, select_sessions, separate_session, synth, Dataset, PipelineConfig, SessionManifest,
};
use tfsep::separator::{train, Model};
use tfsep::signal::write_wav;

/// Mask-based speech separation, speaker-consistent source selection and
/// meeting transcription scoring.
#[derive(Parser)]
#[command(name = "tfsep", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long, env = "TFSEP_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => PipelineConfig::default(),
        };
        Ok(match self.seed {
            Some(s) => cfg.with_seed(s),
            None => cfg,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (training mixtures, mixtures of mixtures, sessions).
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train a separator on a synthesized dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset index written by `synth`.
        #[arg(long)]
        dataset: PathBuf,
        /// Where to write the trained checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional directory for the per-step loss trace.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Separate every utterance of a manifest into WAV files.
    Separate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Separate and pick the labelled speaker's source for each utterance.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write selections here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score hypothesis session transcripts against references with cpWER-us.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "hyp")]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Separate, select, transcribe and score; writes `report.json`.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, out_dir } => {
            let cfg = common.load()?;
            let d = synth(&cfg.synth, cfg.seed, &out_dir)?;
            println!(
                "wrote {} mixtures, {} mixtures of mixtures and {} sessions to {}",
                d.pit.len(),
                d.mom.len(),
                d.sessions.len(),
                out_dir.display()
            );
        }
        Command::Train {
            common,
            dataset,
            checkpoint,
            out_dir,
        } => {
            let cfg = common.load()?;
            let data = Dataset::load(&dataset).with_context(|| format!("loading {}", dataset.display()))?;
            let records = data.train_records(cfg.train.scheduler.mixit_probability > 0.0)?;
            log::info!("training on {} records for {} steps", records.len(), cfg.train.steps);
            let outcome = train(&records, &cfg.train, cfg.stft, cfg.features)?;
            outcome.model.save(&checkpoint)?;
            if let Some(dir) = out_dir {
                write_json(&dir.join("loss_trace.json"), &outcome.loss_trace)?;
            }
            let first = outcome.loss_trace.first().map_or(f64::NAN, |e| e.loss);
            let last = outcome.loss_trace.last().map_or(f64::NAN, |e| e.loss);
            println!(
                "batch loss {first:.4} -> {last:.4}; checkpoint {}",
                checkpoint.display()
            );
        }
        Command::Separate {
            checkpoint,
            manifest,
            out_dir,
        } => {
            let model = Model::load(&checkpoint)?;
            let mut failed = 0;
            for m in SessionManifest::load_all(&manifest)? {
                let dir = out_dir.join(&m.session_id);
                std::fs::create_dir_all(&dir)?;
                for (u, sep) in separate_session(&m, &model) {
                    match sep {
                        Ok(s) => {
                            for (k, w) in s.sources.iter().enumerate() {
                                write_wav(w, dir.join(format!("{}_s{k}.wav", u.utterance_id)))?;
                            }
                        }
                        Err(e) => {
                            failed += 1;
                            log::error!("{}: {e}", u.utterance_id);
                        }
                    }
                }
            }
            if failed > 0 {
                bail!("{failed} utterances could not be separated");
            }
        }
        Command::Select {
            common,
            checkpoint,
            manifest,
            out,
        } => {
            let cfg = common.load()?;
            let model = Model::load(&checkpoint)?;
            let selections = select_sessions(&SessionManifest::load_all(&manifest)?, &model, &cfg)?;
            match out {
                Some(p) => write_json(&p, &selections)?,
                None => println!("{}", serde_json::to_string_pretty(&selections)?),
            }
        }
        Command::Evaluate {
            common,
            hyp,
            reference,
            out,
        } => {
            let cfg = common.load()?;
            let report = evaluate(&hyp, &reference, cfg.scoring)?;
            for s in &report.sessions {
                println!(
                    "{}\tcpWER-us {:.4} ({}/{})",
                    s.session_id, s.cpwer_us.value, s.cpwer_us.errors, s.cpwer_us.reference_words
                );
            }
            if let Some(mean) = report.aggregate.mean_cpwer_us {
                println!("mean\tcpWER-us {mean:.4}");
            }
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
        }
        Command::Pipeline {
            common,
            checkpoint,
            manifest,
            out_dir,
        } => {
            let cfg = common.load()?;
            let report = run_pipeline_files(&manifest, &checkpoint, &cfg)?;
            let path = out_dir.join("report.json");
            report.save(&path)?;
            let a = &report.aggregate;
            println!(
                "{} sessions, {} utterances ({} failed); report {}",
                a.sessions,
                a.utterances,
                a.failed_utterances,
                path.display()
            );
            if let Some(c) = a.mean_cpwer_us {
                println!("mean cpWER-us {c:.4}");
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TFSEP_LOG", "warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
