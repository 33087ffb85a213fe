//! Deterministic band-limited pseudo-speech.
//!
//! Each synthetic speaker owns a disjoint frequency band and a pitch. An
//! utterance is a harmonic series on a slowly wobbling pitch, shaped by a
//! single formant-like envelope inside the band and a syllable-rate
//! amplitude envelope. Everything is a function of the seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::signal::{Waveform, SAMPLE_RATE};

/// Target RMS of every generated utterance.
pub const FIXTURE_RMS: f64 = 0.05;

const LOWEST_HZ: f64 = 150.0;
const HIGHEST_HZ: f64 = 7000.0;
/// Fraction of each speaker's slot occupied by its band; the rest is a guard gap.
const BAND_FILL: f64 = 0.75;
const PITCH_WOBBLE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Voice {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub f0_hz: f64,
}

/// `n` voices with non-overlapping bands tiling 150 Hz .. 7 kHz.
pub fn voices(n: usize) -> Vec<Voice> {
    let slot = (HIGHEST_HZ - LOWEST_HZ) / n.max(1) as f64;
    (0..n)
        .map(|k| {
            let lo = LOWEST_HZ + k as f64 * slot;
            Voice {
                band_lo_hz: lo,
                band_hi_hz: lo + BAND_FILL * slot,
                f0_hz: 110.0 + 45.0 * k as f64,
            }
        })
        .collect()
}

/// `len` samples of pseudo-speech for `voice`, scaled to [`FIXTURE_RMS`].
pub fn pseudo_speech(voice: &Voice, len: usize, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = SAMPLE_RATE as f64;
    let f0 = voice.f0_hz * rng.random_range(0.95..1.05);
    let wobble_hz = rng.random_range(0.4..1.2);
    let wobble_phase = rng.random_range(0.0..2.0 * PI);
    let syllable_hz = rng.random_range(3.0..5.0);
    let syllable_phase = rng.random_range(0.0..2.0 * PI);
    let centre = rng.random_range(voice.band_lo_hz..voice.band_hi_hz);
    let width = 0.35 * (voice.band_hi_hz - voice.band_lo_hz);

    // Harmonics whose whole wobble range stays inside the band.
    let harmonics: Vec<(f64, f64, f64)> = (1..)
        .map(|h| h as f64)
        .take_while(|h| h * f0 * (1.0 - PITCH_WOBBLE) < voice.band_hi_hz)
        .filter(|h| {
            h * f0 * (1.0 - PITCH_WOBBLE) > voice.band_lo_hz && h * f0 * (1.0 + PITCH_WOBBLE) < voice.band_hi_hz
        })
        .map(|h| {
            let formant = (-((h * f0 - centre) / width).powi(2)).exp();
            let amp = (0.3 + formant) * rng.random_range(0.6..1.0);
            (h, amp, rng.random_range(0.0..2.0 * PI))
        })
        .collect();

    let mut phase = 0.0;
    let mut samples = Vec::with_capacity(len);
    for i in 0..len {
        let t = i as f64 / fs;
        let pitch = f0 * (1.0 + PITCH_WOBBLE * (2.0 * PI * wobble_hz * t + wobble_phase).sin());
        phase += 2.0 * PI * pitch / fs;
        let env = 0.6 + 0.4 * (2.0 * PI * syllable_hz * t + syllable_phase).sin();
        let v: f64 = harmonics.iter().map(|(h, a, p)| a * (h * phase + p).sin()).sum();
        samples.push(env * v);
    }
    let rms = (samples.iter().map(|s| s * s).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        samples.iter_mut().for_each(|s| *s *= FIXTURE_RMS / rms);
    }
    Waveform::new(samples, SAMPLE_RATE).expect("finite synthetic samples")
}
