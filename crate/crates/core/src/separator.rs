//! Trainable mask estimator: multi-resolution spectral features merged by a
//! learned weighted sum, upsampled to the STFT frame rate by nearest
//! interpolation, and mapped to T-F masks by a one-hidden-layer MLP.
//!
//! Gradients are derived by hand (see [`loss_and_grads`]) and the optimizer is
//! plain SGD, so training is bitwise deterministic for a fixed seed.

use std::path::Path;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{activate_masks, apply_mask, psm_target, Activation, MaskSet, PsmTarget};
use crate::objectives::{loss_grad, next_batch_kind, BatchKind, Objective, Reduction, SchedulerConfig};
use crate::signal::{istft, stft, Spectrogram, StftConfig, Waveform};

const CHECKPOINT_FORMAT: &str = "tfsep-checkpoint";
const FEATURES_FORMAT: &str = "tfsep-features";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_layers: usize,
    pub dim: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { n_layers: 3, dim: 40 }
    }
}

/// Per-layer feature matrices `(frames_l, dim)` with their frame strides in samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub layers: Vec<Array2<f64>>,
    pub strides: Vec<usize>,
}

impl FeatureStack {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.len() != self.strides.len() {
            return Err(Error::invalid(
                "feature stack needs one stride per layer and at least one layer",
            ));
        }
        let dim = self.layers[0].ncols();
        if self.layers.iter().any(|l| l.ncols() != dim || l.nrows() == 0) {
            return Err(Error::invalid(
                "feature layers must be non-empty and share one dimension",
            ));
        }
        if self.strides.contains(&0) {
            return Err(Error::invalid("feature strides must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.layers[0].ncols()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = FeatureFile {
            format: FEATURES_FORMAT.into(),
            version: FILE_VERSION,
            strides: self.strides.clone(),
            layers: self.layers.iter().map(MatrixRecord::from).collect(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: FeatureFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        check_header(&file.format, file.version, FEATURES_FORMAT)?;
        let stack = FeatureStack {
            layers: file.layers.into_iter().map(Array2::try_from).collect::<Result<_>>()?,
            strides: file.strides,
        };
        stack.validate()?;
        Ok(stack)
    }
}

/// Source of per-layer features for a waveform.
pub trait FeatureExtractor {
    fn extract(&self, wave: &Waveform) -> Result<FeatureStack>;
}

/// Deterministic spectral stand-in for a pretrained encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFeatures {
    pub stft: StftConfig,
    pub config: FeatureConfig,
}

impl FeatureExtractor for SpectralFeatures {
    fn extract(&self, wave: &Waveform) -> Result<FeatureStack> {
        extract_features(wave, &self.stft, &self.config)
    }
}

/// Builds an `n_layers` stack from `log(1 + |Y|)`.
///
/// Layer 0 averages the log-magnitude over `dim` contiguous, equal-width
/// frequency bands, at the STFT hop. Each further layer halves the frame
/// rate by averaging consecutive frame pairs of the layer below.
pub fn extract_features(wave: &Waveform, stft_cfg: &StftConfig, cfg: &FeatureConfig) -> Result<FeatureStack> {
    if cfg.n_layers == 0 || cfg.dim == 0 || cfg.dim > stft_cfg.freq_bins() {
        return Err(Error::invalid(format!(
            "feature config needs n_layers >= 1 and 1 <= dim <= {}",
            stft_cfg.freq_bins()
        )));
    }
    let spec = stft(wave, stft_cfg)?;
    let logmag = spec.magnitude().mapv(f64::ln_1p);
    let base = logmag.dot(&band_projection(spec.freq_bins(), cfg.dim));
    let mut layers = vec![base];
    let mut strides = vec![stft_cfg.hop];
    for l in 1..cfg.n_layers {
        let prev = &layers[l - 1];
        let frames = prev.nrows().div_ceil(2);
        let mut next = Array2::<f64>::zeros((frames, cfg.dim));
        for t in 0..frames {
            let rows = prev.slice(s![2 * t..(2 * t + 2).min(prev.nrows()), ..]);
            next.row_mut(t).assign(&rows.mean_axis(Axis(0)).expect("non-empty"));
        }
        layers.push(next);
        strides.push(strides[l - 1] * 2);
    }
    Ok(FeatureStack { layers, strides })
}

/// `(bins, dim)` matrix averaging equal-width contiguous bin ranges.
fn band_projection(bins: usize, dim: usize) -> Array2<f64> {
    let mut p = Array2::<f64>::zeros((bins, dim));
    for k in 0..dim {
        let lo = k * bins / dim;
        let hi = (k + 1) * bins / dim;
        for b in lo..hi {
            p[[b, k]] = 1.0 / (hi - lo) as f64;
        }
    }
    p
}

/// Source row for target frame `t`: `round(t * target_stride / stride)`,
/// rounding half to even, clamped to the last row. Computed in integers.
fn nearest_source_row(t: usize, target_stride: usize, stride: usize, rows: usize) -> usize {
    let num = t * target_stride;
    let (q, r) = (num / stride, num % stride);
    let rounded = match (2 * r).cmp(&stride) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q % 2),
    };
    rounded.min(rows - 1)
}

pub fn interpolate_nearest(
    layer: &Array2<f64>,
    stride: usize,
    target_frames: usize,
    target_stride: usize,
) -> Result<Array2<f64>> {
    if target_stride == 0 || stride < target_stride {
        return Err(Error::invalid(format!(
            "cannot interpolate stride {stride} down to {target_stride}"
        )));
    }
    if layer.nrows() == 0 {
        return Err(Error::invalid("cannot interpolate an empty layer"));
    }
    let mut out = Array2::<f64>::zeros((target_frames, layer.ncols()));
    for t in 0..target_frames {
        let src = nearest_source_row(t, target_stride, stride, layer.nrows());
        out.row_mut(t).assign(&layer.row(src));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeWeights {
    pub logits: Vec<f64>,
}

impl MergeWeights {
    pub fn uniform(n_layers: usize) -> Self {
        MergeWeights {
            logits: vec![0.0; n_layers],
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        let max = self.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

/// Every layer interpolated to `target_frames` rows at `target_stride`.
pub fn interpolate_stack(stack: &FeatureStack, target_frames: usize, target_stride: usize) -> Result<Vec<Array2<f64>>> {
    stack.validate()?;
    stack
        .layers
        .iter()
        .zip(&stack.strides)
        .map(|(l, &s)| interpolate_nearest(l, s, target_frames, target_stride))
        .collect()
}

fn weighted_sum(layers: &[Array2<f64>], weights: &[f64]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(layers[0].dim());
    for (l, &w) in layers.iter().zip(weights) {
        out.scaled_add(w, l);
    }
    out
}

/// `sum_l softmax(w)_l * interpolate_nearest(layer_l)`.
pub fn merge_layers(
    stack: &FeatureStack,
    weights: &MergeWeights,
    target_frames: usize,
    target_stride: usize,
) -> Result<Array2<f64>> {
    if weights.logits.len() != stack.layers.len() || weights.logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid(format!(
            "{} finite merge logits required, got {}",
            stack.layers.len(),
            weights.logits.len()
        )));
    }
    let layers = interpolate_stack(stack, target_frames, target_stride)?;
    Ok(weighted_sum(&layers, &weights.weights()))
}

/// Per-frame MLP producing `n_masks * freq_bins` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub n_masks: usize,
    pub activation: Activation,
}

impl MaskHeadParams {
    pub fn zeros(dim: usize, hidden: usize, n_masks: usize, freq_bins: usize, activation: Activation) -> Self {
        MaskHeadParams {
            w1: Array2::zeros((dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, n_masks * freq_bins)),
            b2: Array1::zeros(n_masks * freq_bins),
            n_masks,
            activation,
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` weights, zero biases.
    pub fn random(
        dim: usize,
        hidden: usize,
        n_masks: usize,
        freq_bins: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(dim, hidden, n_masks, freq_bins, activation);
        let a1 = 1.0 / (dim as f64).sqrt();
        p.w1.mapv_inplace(|_| rng.random_range(-a1..a1));
        let a2 = 1.0 / (hidden as f64).sqrt();
        p.w2.mapv_inplace(|_| rng.random_range(-a2..a2));
        p
    }

    pub fn freq_bins(&self) -> usize {
        self.b2.len() / self.n_masks
    }

    pub fn validate(&self) -> Result<()> {
        let (dim, hidden) = self.w1.dim();
        let ok = self.n_masks >= 2
            && dim > 0
            && self.b1.len() == hidden
            && self.w2.nrows() == hidden
            && self.w2.ncols() == self.b2.len()
            && self.b2.len().is_multiple_of(self.n_masks)
            && !self.b2.is_empty();
        if !ok {
            return Err(Error::invalid("inconsistent mask head parameter shapes"));
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::numeric("non-finite mask head parameter"));
        }
        Ok(())
    }
}

struct HeadForward {
    hidden: Array2<f64>,
    logits: Vec<Array2<f64>>,
}

fn head_forward(features: &Array2<f64>, params: &MaskHeadParams) -> Result<HeadForward> {
    if features.ncols() != params.w1.nrows() {
        return Err(Error::invalid(format!(
            "feature dim {} does not match head input dim {}",
            features.ncols(),
            params.w1.nrows()
        )));
    }
    let hidden = (features.dot(&params.w1) + &params.b1).mapv(f64::tanh);
    let z = hidden.dot(&params.w2) + &params.b2;
    let bins = params.freq_bins();
    let logits = (0..params.n_masks)
        .map(|k| z.slice(s![.., k * bins..(k + 1) * bins]).to_owned())
        .collect();
    Ok(HeadForward { hidden, logits })
}

/// `activation(tanh(x W1 + b1) W2 + b2)`, split into `n_masks` masks per frame.
pub fn estimate_masks(features: &Array2<f64>, params: &MaskHeadParams) -> Result<MaskSet> {
    params.validate()?;
    let fwd = head_forward(features, params)?;
    activate_masks(&fwd.logits, params.activation)
}

/// Everything needed to run the separator: framing, features, and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub stft: StftConfig,
    pub features: FeatureConfig,
    pub merge: MergeWeights,
    pub head: MaskHeadParams,
}

impl Model {
    pub fn extractor(&self) -> SpectralFeatures {
        SpectralFeatures {
            stft: self.stft,
            config: self.features,
        }
    }

    pub fn masks(&self, mixture: &Spectrogram, stack: &FeatureStack) -> Result<MaskSet> {
        let merged = merge_layers(stack, &self.merge, mixture.frames(), self.stft.hop)?;
        estimate_masks(&merged, &self.head)
    }

    /// Separates `wave` into `n_masks` waveforms of length `(frames-1)*hop + window_len`.
    ///
    /// Samples outside the fully overlapped range are zeroed: there the
    /// window-sum is tiny and masked frames no longer cancel, so dividing
    /// by it would blow up.
    pub fn separate(&self, wave: &Waveform) -> Result<Vec<Waveform>> {
        let stack = self.extractor().extract(wave)?;
        self.separate_with_features(wave, &stack)
    }

    pub fn separate_with_features(&self, wave: &Waveform, stack: &FeatureStack) -> Result<Vec<Waveform>> {
        let spec = stft(wave, &self.stft)?;
        let masks = self.masks(&spec, stack)?;
        let interior = self.stft.interior(spec.frames());
        masks
            .masks()
            .iter()
            .map(|m| {
                let mut samples = istft(&apply_mask(m, &spec)?, &self.stft)?.into_samples();
                for (i, s) in samples.iter_mut().enumerate() {
                    if !interior.contains(&i) {
                        *s = 0.0;
                    }
                }
                Waveform::new(samples, wave.sample_rate())
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: FILE_VERSION,
            stft: self.stft,
            features: self.features,
            merge_logits: self.merge.logits.clone(),
            n_masks: self.head.n_masks,
            activation: self.head.activation,
            w1: (&self.head.w1).into(),
            b1: self.head.b1.to_vec(),
            w2: (&self.head.w2).into(),
            b2: self.head.b2.to_vec(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        check_header(&file.format, file.version, CHECKPOINT_FORMAT)?;
        let model = Model {
            stft: file.stft,
            features: file.features,
            merge: MergeWeights {
                logits: file.merge_logits,
            },
            head: MaskHeadParams {
                w1: file.w1.try_into()?,
                b1: Array1::from(file.b1),
                w2: file.w2.try_into()?,
                b2: Array1::from(file.b2),
                n_masks: file.n_masks,
                activation: file.activation,
            },
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.head.validate()?;
        if self.merge.logits.len() != self.features.n_layers {
            return Err(Error::invalid("merge logits do not match the layer count"));
        }
        if self.head.w1.nrows() != self.features.dim || self.head.freq_bins() != self.stft.freq_bins() {
            return Err(Error::invalid(
                "mask head shape does not match the feature or STFT config",
            ));
        }
        Ok(())
    }
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected || version != FILE_VERSION {
        return Err(Error::format(format!(
            "expected {expected} v{FILE_VERSION}, found {format} v{version}"
        )));
    }
    Ok(())
}

/// Row-major matrix with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Array2<f64>> for MatrixRecord {
    fn from(m: &Array2<f64>) -> Self {
        MatrixRecord {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }
}

impl TryFrom<MatrixRecord> for Array2<f64> {
    type Error = Error;

    fn try_from(r: MatrixRecord) -> Result<Self> {
        Array2::from_shape_vec((r.rows, r.cols), r.data).map_err(|e| Error::format(format!("matrix record: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    stft: StftConfig,
    features: FeatureConfig,
    merge_logits: Vec<f64>,
    n_masks: usize,
    activation: Activation,
    w1: MatrixRecord,
    b1: Vec<f64>,
    w2: MatrixRecord,
    b2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FeatureFile {
    format: String,
    version: u32,
    strides: Vec<usize>,
    layers: Vec<MatrixRecord>,
}

/// One training example prepared for repeated gradient evaluation.
#[derive(Debug, Clone)]
pub struct Example {
    /// Feature layers already interpolated to the spectrogram frame rate.
    pub layers: Vec<Array2<f64>>,
    pub mixture: Spectrogram,
    pub targets: Vec<PsmTarget>,
    pub objective: Objective,
}

impl Example {
    /// Supervised example. Targets are padded with all-zero (silent) sources
    /// up to `n_masks`.
    pub fn pit(mixture: &Waveform, sources: &[Waveform], extractor: &SpectralFeatures, n_masks: usize) -> Result<Self> {
        if sources.is_empty() || sources.len() > n_masks {
            return Err(Error::invalid(format!(
                "{} reference sources for {n_masks} masks",
                sources.len()
            )));
        }
        Self::build(mixture, sources, extractor, Objective::Pit, Some(n_masks))
    }

    /// Unsupervised example from a mixture of mixtures and its constituents.
    pub fn mixit(mom: &Waveform, mixtures: &[Waveform], extractor: &SpectralFeatures) -> Result<Self> {
        Self::build(mom, mixtures, extractor, Objective::MixIt, None)
    }

    fn build(
        input: &Waveform,
        refs: &[Waveform],
        extractor: &SpectralFeatures,
        objective: Objective,
        pad_to: Option<usize>,
    ) -> Result<Self> {
        let mixture = stft(input, &extractor.stft)?;
        let mut targets = refs
            .iter()
            .map(|r| {
                if r.len() != input.len() {
                    return Err(Error::invalid("reference length differs from input length"));
                }
                psm_target(&stft(r, &extractor.stft)?, &mixture)
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(n) = pad_to {
            while targets.len() < n {
                targets.push(PsmTarget {
                    values: Array2::zeros(mixture.shape()),
                });
            }
        }
        let stack = extractor.extract(input)?;
        let layers = interpolate_stack(&stack, mixture.frames(), extractor.stft.hop)?;
        Ok(Example {
            layers,
            mixture,
            targets,
            objective,
        })
    }
}

/// Gradients of the per-bin mean loss with respect to every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub merge: Vec<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ModelGrads {
    fn zeros_like(model: &Model) -> Self {
        ModelGrads {
            merge: vec![0.0; model.merge.logits.len()],
            w1: Array2::zeros(model.head.w1.dim()),
            b1: Array1::zeros(model.head.b1.len()),
            w2: Array2::zeros(model.head.w2.dim()),
            b2: Array1::zeros(model.head.b2.len()),
        }
    }

    fn add_scaled(&mut self, other: &ModelGrads, scale: f64) {
        for (a, b) in self.merge.iter_mut().zip(&other.merge) {
            *a += scale * b;
        }
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
    }
}

/// Per-bin mean loss of `example` under `model` and its analytic gradient,
/// backpropagated through the activation, the MLP, and the merge softmax.
pub fn loss_and_grads(model: &Model, example: &Example) -> Result<(f64, ModelGrads)> {
    let alpha = model.merge.weights();
    if alpha.len() != example.layers.len() {
        return Err(Error::invalid("merge logits do not match example layers"));
    }
    let x = weighted_sum(&example.layers, &alpha);
    let head = &model.head;
    let fwd = head_forward(&x, head)?;
    let lg = loss_grad(
        &fwd.logits,
        head.activation,
        &example.mixture,
        &example.targets,
        example.objective,
        Reduction::MeanPerBin,
    )?;
    let bins = head.freq_bins();
    let mut dz = Array2::<f64>::zeros((x.nrows(), head.b2.len()));
    for (k, g) in lg.logit_grads.iter().enumerate() {
        dz.slice_mut(s![.., k * bins..(k + 1) * bins]).assign(g);
    }
    let dw2 = fwd.hidden.t().dot(&dz);
    let db2 = dz.sum_axis(Axis(0));
    let dh = dz.dot(&head.w2.t());
    let da = dh * fwd.hidden.mapv(|h| 1.0 - h * h);
    let dw1 = x.t().dot(&da);
    let db1 = da.sum_axis(Axis(0));
    let dx = da.dot(&head.w1.t());
    let dalpha: Vec<f64> = example.layers.iter().map(|l| (&dx * l).sum()).collect();
    let mean: f64 = alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
    let merge = alpha.iter().zip(&dalpha).map(|(a, d)| a * (d - mean)).collect();
    Ok((
        lg.loss,
        ModelGrads {
            merge,
            w1: dw1,
            b1: db1,
            w2: dw2,
            b2: db2,
        },
    ))
}

/// Training data: supervised mixtures with references, or mixtures of mixtures.
#[derive(Debug, Clone)]
pub enum TrainRecord {
    Pit { mixture: Waveform, sources: Vec<Waveform> },
    MixIt { mom: Waveform, mixtures: [Waveform; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub n_masks: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub activation: Activation,
    pub scheduler: SchedulerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::supervised()
    }
}

impl TrainConfig {
    /// Two sigmoid masks, PIT batches only.
    pub fn supervised() -> Self {
        TrainConfig {
            steps: 2000,
            learning_rate: 0.05,
            seed: 0,
            n_masks: 2,
            hidden: 32,
            batch_size: 4,
            activation: Activation::Sigmoid,
            scheduler: SchedulerConfig {
                mixit_probability: 0.0,
                rng_seed: 0,
            },
        }
    }

    /// Four softmax masks, MixIT on 80% of steps.
    pub fn semi_supervised() -> Self {
        TrainConfig {
            n_masks: 4,
            activation: Activation::Softmax,
            scheduler: SchedulerConfig::default(),
            ..Self::supervised()
        }
    }

    fn validate(&self) -> Result<()> {
        let p = self.scheduler.mixit_probability;
        if self.n_masks < 2 || self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::invalid("need n_masks >= 2, hidden >= 1, batch_size >= 1"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("MixIT probability {p} outside [0, 1]")));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub kind: BatchKind,
    /// Mean per-bin loss of the batch, measured before the update.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub loss_trace: Vec<TraceEntry>,
}

/// Prepares examples once; reused by [`train_examples`] and [`mean_loss`].
pub fn prepare_examples(records: &[TrainRecord], extractor: &SpectralFeatures, n_masks: usize) -> Result<Vec<Example>> {
    records
        .iter()
        .map(|r| match r {
            TrainRecord::Pit { mixture, sources } => Example::pit(mixture, sources, extractor, n_masks),
            TrainRecord::MixIt { mom, mixtures } => Example::mixit(mom, mixtures, extractor),
        })
        .collect()
}

/// Randomly initialized model for `cfg` (seeded by `cfg.seed`).
pub fn init_model(cfg: &TrainConfig, stft_cfg: StftConfig, features: FeatureConfig) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Model {
        stft: stft_cfg,
        features,
        merge: MergeWeights::uniform(features.n_layers),
        head: MaskHeadParams::random(
            features.dim,
            cfg.hidden,
            cfg.n_masks,
            stft_cfg.freq_bins(),
            cfg.activation,
            &mut rng,
        ),
    }
}

pub fn train(
    records: &[TrainRecord],
    cfg: &TrainConfig,
    stft_cfg: StftConfig,
    features: FeatureConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let extractor = SpectralFeatures {
        stft: stft_cfg,
        config: features,
    };
    let examples = prepare_examples(records, &extractor, cfg.n_masks)?;
    train_examples(&examples, init_model(cfg, stft_cfg, features), cfg)
}

/// Plain SGD from `model` over prepared examples.
pub fn train_examples(examples: &[Example], mut model: Model, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pit: Vec<&Example> = examples.iter().filter(|e| e.objective == Objective::Pit).collect();
    let mixit: Vec<&Example> = examples.iter().filter(|e| e.objective == Objective::MixIt).collect();
    if pit.is_empty() && mixit.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    // Batch sampling has its own stream so it is independent of initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let kind = if mixit.is_empty() {
            BatchKind::Pit
        } else if pit.is_empty() {
            BatchKind::MixIt
        } else {
            next_batch_kind(&cfg.scheduler, step as u64)
        };
        let pool = if kind == BatchKind::Pit { &pit } else { &mixit };
        let mut grads = ModelGrads::zeros_like(&model);
        let mut loss = 0.0;
        let scale = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            let ex = pool[rng.random_range(0..pool.len())];
            let (l, g) = loss_and_grads(&model, ex).map_err(|e| Error::Training {
                step,
                message: e.to_string(),
            })?;
            loss += scale * l;
            grads.add_scaled(&g, scale);
        }
        if !loss.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("loss became {loss}"),
            });
        }
        trace.push(TraceEntry { step, kind, loss });
        apply_update(&mut model, &grads, cfg.learning_rate);
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}

fn apply_update(model: &mut Model, grads: &ModelGrads, lr: f64) {
    if lr == 0.0 {
        return;
    }
    for (p, g) in model.merge.logits.iter_mut().zip(&grads.merge) {
        *p -= lr * g;
    }
    model.head.w1.scaled_add(-lr, &grads.w1);
    model.head.b1.scaled_add(-lr, &grads.b1);
    model.head.w2.scaled_add(-lr, &grads.w2);
    model.head.b2.scaled_add(-lr, &grads.b2);
}

/// Mean per-bin loss over all examples.
pub fn mean_loss(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::invalid("no examples"));
    }
    let mut total = 0.0;
    for ex in examples {
        total += loss_and_grads(model, ex)?.0;
    }
    Ok(total / examples.len() as f64)
}
