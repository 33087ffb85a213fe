//! Waveforms, WAV I/O, STFT/iSTFT, and SNR-controlled mixing.
//!
//! All processing runs at [`SAMPLE_RATE`]. The STFT uses full windows only
//! (no padding), so a signal of `len` samples yields
//! `1 + (len - window_len) / hop` frames.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pipeline sample rate in Hz. Inputs at any other rate are rejected.
pub const SAMPLE_RATE: u32 = 16_000;

/// Window-sum values at or below this are treated as zero by [`istft`].
const WINDOW_SUM_FLOOR: f64 = 1e-10;

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Waveform {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power `E[x^2]`; zero for an empty signal.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn truncated(&self, len: usize) -> Waveform {
        Waveform {
            samples: self.samples[..len.min(self.samples.len())].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Elementwise sum over the common prefix of both signals.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::invalid(format!(
                "sample rate mismatch: {} vs {}",
                self.sample_rate, other.sample_rate
            )));
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect();
        Ok(Waveform {
            samples,
            sample_rate: self.sample_rate,
        })
    }
}

/// Reads a mono (or first-channel) WAV file in PCM16 or float32 encoding.
///
/// PCM16 samples are scaled by `1/32768`, so 32767 reads as `32767/32768`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::format(format!(
            "{}: sample rate {} Hz unsupported (expected {SAMPLE_RATE})",
            path.display(),
            spec.sample_rate
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::format(format!(
                "{}: unsupported encoding {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    let samples = interleaved.into_iter().step_by(channels).collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono 32-bit float WAV. [`read_wav`] inverts it bit-exactly for
/// samples representable in `f32`.
pub fn write_wav(wave: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &wave.samples {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 400-sample Hann window, 160-sample hop (25 ms / 10 ms at 16 kHz).
    fn default() -> Self {
        StftConfig {
            window_len: 400,
            hop: 160,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len {
            return Err(Error::invalid(format!(
                "need 0 < hop <= window_len, got hop={} window_len={}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    pub fn freq_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Frames produced for a signal of `len` samples, `None` if shorter than one window.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.window_len).then(|| 1 + (len - self.window_len) / self.hop)
    }

    /// Periodic window of length `window_len`.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len as f64;
        match self.window {
            WindowKind::Hann => (0..self.window_len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
                .collect(),
        }
    }

    /// Output sample range `[start, end)` of an iSTFT over `frames` frames that
    /// is covered by every frame a steady-state signal would contribute.
    pub fn interior(&self, frames: usize) -> std::ops::Range<usize> {
        let start = self.window_len - self.hop;
        let end = frames * self.hop;
        start..end.max(start)
    }
}

/// Complex T-F matrix of shape `(frames, freq_bins)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub hop: usize,
    pub window_len: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn freq_bins(&self) -> usize {
        self.bins.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.bins.dim()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.norm())
    }

    /// Same framing metadata, new bins.
    pub fn with_bins(&self, bins: Array2<Complex64>) -> Spectrogram {
        Spectrogram {
            bins,
            hop: self.hop,
            window_len: self.window_len,
            sample_rate: self.sample_rate,
        }
    }
}

pub fn stft(wave: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let frames = cfg.frame_count(wave.len()).ok_or_else(|| {
        Error::invalid(format!(
            "signal of {} samples is shorter than one {}-sample window",
            wave.len(),
            cfg.window_len
        ))
    })?;
    let n = cfg.window_len;
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut bins = Array2::<Complex64>::zeros((frames, cfg.freq_bins()));
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for t in 0..frames {
        let seg = &wave.samples()[t * cfg.hop..t * cfg.hop + n];
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (dst, src) in bins.row_mut(t).iter_mut().zip(&buf) {
            *dst = *src;
        }
    }
    Ok(Spectrogram {
        bins,
        hop: cfg.hop,
        window_len: n,
        sample_rate: wave.sample_rate(),
    })
}

/// Weighted overlap-add inverse normalized by the squared-window sum.
///
/// Output length is `(frames - 1) * hop + window_len`. Samples whose window
/// sum vanishes (only possible at the outer edges for Hann) are set to zero.
pub fn istft(spec: &Spectrogram, cfg: &StftConfig) -> Result<Waveform> {
    cfg.validate()?;
    if spec.window_len != cfg.window_len || spec.hop != cfg.hop {
        return Err(Error::invalid(format!(
            "spectrogram framing {}/{} does not match config {}/{}",
            spec.window_len, spec.hop, cfg.window_len, cfg.hop
        )));
    }
    if spec.freq_bins() != cfg.freq_bins() {
        return Err(Error::invalid(format!(
            "expected {} frequency bins, got {}",
            cfg.freq_bins(),
            spec.freq_bins()
        )));
    }
    let n = cfg.window_len;
    let frames = spec.frames();
    if frames == 0 {
        return Waveform::new(Vec::new(), spec.sample_rate);
    }
    let out_len = (frames - 1) * cfg.hop + n;
    let window = cfg.window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let mut out = vec![0.0; out_len];
    let mut wsum = vec![0.0; out_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let half = cfg.freq_bins();
    for t in 0..frames {
        let row = spec.bins.row(t);
        for k in 0..half {
            buf[k] = row[k];
        }
        for k in half..n {
            buf[k] = row[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            out[start + i] += window[i] * buf[i].re / n as f64;
            wsum[start + i] += window[i] * window[i];
        }
    }
    let interior = cfg.interior(frames);
    for (i, (o, &w)) in out.iter_mut().zip(&wsum).enumerate() {
        if w > WINDOW_SUM_FLOOR {
            *o /= w;
        } else if interior.contains(&i) {
            return Err(Error::numeric(format!("zero window sum at interior sample {i}")));
        } else {
            *o = 0.0;
        }
    }
    Waveform::new(out, spec.sample_rate)
}

fn check_mixable(a: &Waveform, b: &Waveform) -> Result<usize> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::invalid(format!(
            "sample rate mismatch: {} vs {}",
            a.sample_rate(),
            b.sample_rate()
        )));
    }
    Ok(a.len().min(b.len()))
}

/// Mixes `a` with `b` rescaled so that `10 log10(P_a / P_gb) = snr_db`,
/// where `P` is the full-signal mean power. Both inputs are truncated to the
/// shorter length first. Returns `(a + g b, g b)`.
pub fn mix_at_snr(a: &Waveform, b: &Waveform, snr_db: f64) -> Result<(Waveform, Waveform)> {
    let len = check_mixable(a, b)?;
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let a = a.truncated(len);
    let b = b.truncated(len);
    let (pa, pb) = (a.mean_power(), b.mean_power());
    if pa == 0.0 || pb == 0.0 {
        return Err(Error::invalid("cannot mix a zero-energy signal at a target SNR"));
    }
    let gain = (pa / (pb * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled_b = b.scaled(gain);
    let mixture = a.add(&scaled_b)?;
    Ok((mixture, scaled_b))
}

/// A mixture of mixtures together with the two constituents it sums.
#[derive(Debug, Clone, PartialEq)]
pub struct MomRecord {
    pub mom: Waveform,
    pub sources: [Waveform; 2],
    pub snr_db: f64,
}

/// Builds a mixture of mixtures at an SNR drawn uniformly from `snr_range`.
pub fn make_mom(mix1: &Waveform, mix2: &Waveform, snr_range: (f64, f64), rng_seed: u64) -> Result<MomRecord> {
    let (lo, hi) = snr_range;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::invalid(format!("bad SNR range ({lo}, {hi})")));
    }
    let snr_db = if lo == hi {
        lo
    } else {
        ChaCha8Rng::seed_from_u64(rng_seed).random_range(lo..=hi)
    };
    let (mom, scaled) = mix_at_snr(mix1, mix2, snr_db)?;
    let first = mix1.truncated(mom.len());
    Ok(MomRecord {
        mom,
        sources: [first, scaled],
        snr_db,
    })
}
