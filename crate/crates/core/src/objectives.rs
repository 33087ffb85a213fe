//! Permutation-invariant and mixture-invariant losses over phase-sensitive
//! targets, their gradients with respect to mask logits, and the
//! semi-supervised batch scheduler.
//!
//! Both losses are squared Frobenius errors between masked mixture
//! magnitudes `M_i * |Y|` and phase-sensitive targets. PIT pairs outputs with
//! targets one-to-one; MixIT sums groups of outputs and matches each group to
//! one constituent mixture of a mixture of mixtures. Every minimum is taken
//! by exhaustive enumeration in lexicographic order, so ties always resolve
//! to the lexicographically smallest choice.

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{all_assignments, lex_permutations};
use crate::error::{Error, Result};
use crate::masking::{activate_masks, check_same_shape, Activation, MaskSet, PsmTarget};
use crate::signal::Spectrogram;

/// Largest source count accepted for permutation enumeration (8! = 40320).
pub const MAX_PERMUTATION_SOURCES: usize = 8;
/// Largest remix table accepted (`N_mix ^ N_out`).
pub const MAX_REMIX_ASSIGNMENTS: usize = 1 << 16;

/// Output index `i` is paired with target `mapping[i]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Permutation(pub Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }
}

/// Output index `i` is remixed into mixture `assignment[i]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RemixAssignment(pub Vec<usize>);

impl RemixAssignment {
    /// Output indices grouped by the mixture they are assigned to.
    pub fn groups(&self, n_mix: usize) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); n_mix];
        for (i, &j) in self.0.iter().enumerate() {
            groups[j].push(i);
        }
        groups
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Plain squared Frobenius norm, summed over all T-F bins.
    Sum,
    /// Sum divided by `frames * freq_bins`.
    MeanPerBin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<C> {
    pub loss: f64,
    pub best: C,
    /// Every enumerated choice with its loss, in lexicographic order.
    pub per_choice: Vec<(C, f64)>,
    pub reduction: Reduction,
}

impl<C> LossReport<C> {
    /// Rescales a `Sum` report to `MeanPerBin` for a grid of `bins` T-F cells.
    pub fn mean_per_bin(mut self, bins: usize) -> Self {
        if self.reduction == Reduction::Sum {
            let scale = 1.0 / bins as f64;
            self.loss *= scale;
            for (_, l) in &mut self.per_choice {
                *l *= scale;
            }
            self.reduction = Reduction::MeanPerBin;
        }
        self
    }
}

fn pick_min<C: Clone>(per_choice: Vec<(C, f64)>) -> Result<LossReport<C>> {
    let mut best: Option<(usize, f64)> = None;
    for (k, (_, l)) in per_choice.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::numeric("non-finite loss"));
        }
        if best.is_none_or(|(_, b)| *l < b) {
            best = Some((k, *l));
        }
    }
    let (k, loss) = best.ok_or_else(|| Error::invalid("nothing to enumerate"))?;
    Ok(LossReport {
        loss,
        best: per_choice[k].0.clone(),
        per_choice,
        reduction: Reduction::Sum,
    })
}

fn check_inputs(masks: &[Array2<f64>], mixture: &Spectrogram, targets: &[PsmTarget]) -> Result<()> {
    let shape = check_same_shape(masks)?;
    if shape != mixture.shape() {
        return Err(Error::invalid(format!(
            "mask shape {shape:?} differs from mixture shape {:?}",
            mixture.shape()
        )));
    }
    if targets.is_empty() {
        return Err(Error::invalid("no targets"));
    }
    if let Some(t) = targets.iter().find(|t| t.values.dim() != shape) {
        return Err(Error::invalid(format!(
            "target shape {:?} differs from mask shape {shape:?}",
            t.values.dim()
        )));
    }
    Ok(())
}

fn masked_magnitudes(masks: &[Array2<f64>], mag: &Array2<f64>) -> Vec<Array2<f64>> {
    masks.iter().map(|m| m * mag).collect()
}

fn sq_dist(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y) * (x - y))
}

/// Permutation-invariant loss `min_phi sum_i ||M_i |Y| - T_phi(i)||_F^2`.
pub fn pit_loss(masks: &MaskSet, mixture: &Spectrogram, targets: &[PsmTarget]) -> Result<LossReport<Permutation>> {
    pit_loss_raw(masks.masks(), mixture, targets)
}

fn pit_loss_raw(
    masks: &[Array2<f64>],
    mixture: &Spectrogram,
    targets: &[PsmTarget],
) -> Result<LossReport<Permutation>> {
    check_inputs(masks, mixture, targets)?;
    let n = masks.len();
    if targets.len() != n {
        return Err(Error::invalid(format!("{n} masks but {} targets", targets.len())));
    }
    if n > MAX_PERMUTATION_SOURCES {
        return Err(Error::invalid(format!(
            "{n} sources exceeds the enumeration cap of {MAX_PERMUTATION_SOURCES}"
        )));
    }
    let est = masked_magnitudes(masks, &mixture.magnitude());
    let pair: Vec<Vec<f64>> = est
        .iter()
        .map(|e| targets.iter().map(|t| sq_dist(e, &t.values)).collect())
        .collect();
    let per_choice = lex_permutations(n)
        .into_iter()
        .map(|p| {
            let loss = p.iter().enumerate().map(|(i, &j)| pair[i][j]).sum();
            (Permutation(p), loss)
        })
        .collect();
    pick_min(per_choice)
}

fn remix_estimates(est: &[Array2<f64>], assignment: &[usize], n_mix: usize) -> Vec<Array2<f64>> {
    let mut sums = vec![Array2::<f64>::zeros(est[0].dim()); n_mix];
    for (e, &j) in est.iter().zip(assignment) {
        sums[j] += e;
    }
    sums
}

/// Mixture-invariant loss over every assignment of outputs to constituent
/// mixtures (including assignments that leave a mixture empty).
pub fn mixit_loss(
    masks: &MaskSet,
    mom: &Spectrogram,
    mixture_targets: &[PsmTarget],
) -> Result<LossReport<RemixAssignment>> {
    mixit_loss_raw(masks.masks(), mom, mixture_targets)
}

fn mixit_loss_raw(
    masks: &[Array2<f64>],
    mom: &Spectrogram,
    mixture_targets: &[PsmTarget],
) -> Result<LossReport<RemixAssignment>> {
    check_inputs(masks, mom, mixture_targets)?;
    let (n_out, n_mix) = (masks.len(), mixture_targets.len());
    if n_out < n_mix {
        return Err(Error::invalid(format!("{n_out} outputs cannot cover {n_mix} mixtures")));
    }
    let table = (n_mix as f64).powi(n_out as i32);
    if table > MAX_REMIX_ASSIGNMENTS as f64 {
        return Err(Error::invalid(format!(
            "{n_mix}^{n_out} remixes exceeds the enumeration cap of {MAX_REMIX_ASSIGNMENTS}"
        )));
    }
    let est = masked_magnitudes(masks, &mom.magnitude());
    let per_choice = all_assignments(n_out, n_mix)
        .into_iter()
        .map(|a| {
            let loss = remix_estimates(&est, &a, n_mix)
                .iter()
                .zip(mixture_targets)
                .map(|(s, t)| sq_dist(s, &t.values))
                .sum();
            (RemixAssignment(a), loss)
        })
        .collect();
    pick_min(per_choice)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Pit,
    MixIt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Choice {
    Permutation(Permutation),
    Remix(RemixAssignment),
}

/// Loss value, the minimizing choice, and the gradient of the loss with
/// respect to each mask's logits at that (fixed) choice.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub choice: Choice,
    pub reduction: Reduction,
    pub logit_grads: Vec<Array2<f64>>,
}

/// Evaluates the chosen objective on `activation(logits)` and backpropagates
/// through the best permutation or remix, held fixed.
pub fn loss_grad(
    logits: &[Array2<f64>],
    activation: Activation,
    mixture: &Spectrogram,
    targets: &[PsmTarget],
    mode: Objective,
    reduction: Reduction,
) -> Result<LossGrad> {
    let masks = activate_masks(logits, activation)?;
    let masks = masks.masks();
    let mag = mixture.magnitude();
    let (frames, bins) = mixture.shape();
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::MeanPerBin => 1.0 / (frames * bins) as f64,
    };
    let est = masked_magnitudes(masks, &mag);
    // Residual of the estimate each output contributes to.
    let (loss, choice, residuals) = match mode {
        Objective::Pit => {
            let report = pit_loss_raw(masks, mixture, targets)?;
            let res: Vec<Array2<f64>> = report
                .best
                .0
                .iter()
                .enumerate()
                .map(|(i, &j)| &est[i] - &targets[j].values)
                .collect();
            (report.loss, Choice::Permutation(report.best), res)
        }
        Objective::MixIt => {
            let report = mixit_loss_raw(masks, mixture, targets)?;
            let sums = remix_estimates(&est, &report.best.0, targets.len());
            let group_res: Vec<Array2<f64>> = sums.iter().zip(targets).map(|(s, t)| s - &t.values).collect();
            let res = report.best.0.iter().map(|&j| group_res[j].clone()).collect();
            (report.loss, Choice::Remix(report.best), res)
        }
    };
    // dL/dM_i = 2 * residual_i * |Y|
    let mask_grads: Vec<Array2<f64>> = residuals.iter().map(|r| r * &mag * (2.0 * scale)).collect();
    let logit_grads = backprop_activation(masks, &mask_grads, activation);
    if logit_grads.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite gradient"));
    }
    Ok(LossGrad {
        loss: loss * scale,
        choice,
        reduction,
        logit_grads,
    })
}

/// Chain rule from mask gradients to logit gradients.
pub fn backprop_activation(
    masks: &[Array2<f64>],
    mask_grads: &[Array2<f64>],
    activation: Activation,
) -> Vec<Array2<f64>> {
    match activation {
        Activation::Sigmoid => masks
            .iter()
            .zip(mask_grads)
            .map(|(m, g)| Zip::from(m).and(g).map_collect(|&m, &g| g * m * (1.0 - m)))
            .collect(),
        Activation::Softmax => {
            let mut weighted = Array2::<f64>::zeros(masks[0].dim());
            for (m, g) in masks.iter().zip(mask_grads) {
                weighted += &(m * g);
            }
            masks
                .iter()
                .zip(mask_grads)
                .map(|(m, g)| m * &(g - &weighted))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub mixit_probability: f64,
    pub rng_seed: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            mixit_probability: 0.8,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BatchKind {
    MixIt,
    Pit,
}

/// Decides whether training step `step` draws a MixIT or a PIT batch.
/// Each `(seed, step)` pair reads its own ChaCha stream, so decisions do not
/// depend on call order.
pub fn next_batch_kind(cfg: &SchedulerConfig, step: u64) -> BatchKind {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(step);
    if rng.random::<f64>() < cfg.mixit_probability {
        BatchKind::MixIt
    } else {
        BatchKind::Pit
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::Activation;
    use num_complex::Complex64;
    use rand::Rng;

    fn spec(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Spectrogram {
        Spectrogram {
            bins: Array2::from_shape_fn(shape, |_| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }),
            hop: 160,
            window_len: 400,
            sample_rate: 16_000,
        }
    }

    fn mats(rng: &mut ChaCha8Rng, n: usize, shape: (usize, usize), lo: f64, hi: f64) -> Vec<Array2<f64>> {
        (0..n)
            .map(|_| Array2::from_shape_fn(shape, |_| rng.random_range(lo..hi)))
            .collect()
    }

    fn targets(rng: &mut ChaCha8Rng, n: usize, shape: (usize, usize)) -> Vec<PsmTarget> {
        mats(rng, n, shape, -1.0, 2.0)
            .into_iter()
            .map(|values| PsmTarget { values })
            .collect()
    }

    /// Loss evaluated from scratch for one explicit permutation.
    fn direct_pit(masks: &[Array2<f64>], y: &Spectrogram, t: &[PsmTarget], p: &[usize]) -> f64 {
        let mag = y.magnitude();
        p.iter()
            .enumerate()
            .map(|(i, &j)| {
                let d = &masks[i] * &mag - &t[j].values;
                d.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn exact_targets_give_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = spec(&mut rng, (4, 5));
        let masks = activate_masks(&mats(&mut rng, 2, (4, 5), -2.0, 2.0), Activation::Sigmoid).unwrap();
        let mag = y.magnitude();
        let t: Vec<PsmTarget> = masks.masks().iter().map(|m| PsmTarget { values: m * &mag }).collect();
        let r = pit_loss(&masks, &y, &t).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.best, Permutation::identity(2));

        let swapped = vec![t[1].clone(), t[0].clone()];
        let r2 = pit_loss(&masks, &y, &swapped).unwrap();
        assert_eq!(r2.loss, 0.0);
        assert_eq!(r2.best, Permutation(vec![1, 0]));
    }

    #[test]
    fn pit_matches_brute_force_n3() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = spec(&mut rng, (6, 7));
        let logits = mats(&mut rng, 3, (6, 7), -3.0, 3.0);
        let masks = activate_masks(&logits, Activation::Softmax).unwrap();
        let t = targets(&mut rng, 3, (6, 7));
        let r = pit_loss(&masks, &y, &t).unwrap();
        assert_eq!(r.per_choice.len(), 6);
        let mut best = (f64::INFINITY, vec![]);
        for p in [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
            let l = direct_pit(masks.masks(), &y, &t, &p);
            if l < best.0 {
                best = (l, p.to_vec());
            }
        }
        assert!((r.loss - best.0).abs() <= 1e-12 * best.0);
        assert_eq!(r.best.0, best.1);
    }

    #[test]
    fn pit_rejects_bad_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = spec(&mut rng, (2, 2));
        let masks = activate_masks(&mats(&mut rng, 2, (2, 2), 0.0, 1.0), Activation::Sigmoid).unwrap();
        assert!(pit_loss(&masks, &y, &targets(&mut rng, 3, (2, 2))).is_err());
        assert!(pit_loss(&masks, &y, &targets(&mut rng, 2, (2, 3))).is_err());
        let big = activate_masks(&mats(&mut rng, 9, (1, 1), 0.0, 1.0), Activation::Softmax).unwrap();
        let y1 = spec(&mut rng, (1, 1));
        assert!(pit_loss(&big, &y1, &targets(&mut rng, 9, (1, 1))).is_err());
    }

    #[test]
    fn mixit_enumerates_all_remixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = spec(&mut rng, (3, 4));
        let masks = activate_masks(&mats(&mut rng, 4, (3, 4), -2.0, 2.0), Activation::Softmax).unwrap();
        let t = targets(&mut rng, 2, (3, 4));
        let r = mixit_loss(&masks, &y, &t).unwrap();
        assert_eq!(r.per_choice.len(), 16);
        let min = r.per_choice.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.loss, min);
    }

    #[test]
    fn mixit_constructed_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = spec(&mut rng, (3, 4));
        let masks = activate_masks(&mats(&mut rng, 4, (3, 4), -2.0, 2.0), Activation::Softmax).unwrap();
        let mag = y.magnitude();
        let m = masks.masks();
        let t = vec![
            PsmTarget {
                values: &(&m[0] * &mag) + &(&m[1] * &mag),
            },
            PsmTarget {
                values: &(&m[2] * &mag) + &(&m[3] * &mag),
            },
        ];
        let r = mixit_loss(&masks, &y, &t).unwrap();
        assert_eq!(r.loss, 0.0);
        assert_eq!(r.best, RemixAssignment(vec![0, 0, 1, 1]));
        assert_eq!(r.best.groups(2), vec![vec![0, 1], vec![2, 3]]);
    }

    #[test]
    fn mixit_label_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = spec(&mut rng, (5, 6));
        let masks = activate_masks(&mats(&mut rng, 4, (5, 6), -2.0, 2.0), Activation::Sigmoid).unwrap();
        let t = targets(&mut rng, 2, (5, 6));
        let swapped = vec![t[1].clone(), t[0].clone()];
        let a = mixit_loss(&masks, &y, &t).unwrap();
        let b = mixit_loss(&masks, &y, &swapped).unwrap();
        assert!((a.loss - b.loss).abs() <= 1e-12 * a.loss);
        let flipped: Vec<usize> = a.best.0.iter().map(|j| 1 - j).collect();
        assert_eq!(b.best.0, flipped);
        for (choice, loss) in &a.per_choice {
            let f: Vec<usize> = choice.0.iter().map(|j| 1 - j).collect();
            let other = b.per_choice.iter().find(|c| c.0 .0 == f).unwrap().1;
            assert!((loss - other).abs() <= 1e-12 * loss.max(1e-300));
        }
    }

    #[test]
    fn mixit_rejects_too_few_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = spec(&mut rng, (2, 2));
        let masks = activate_masks(&mats(&mut rng, 2, (2, 2), 0.0, 1.0), Activation::Softmax).unwrap();
        assert!(matches!(
            mixit_loss(&masks, &y, &targets(&mut rng, 3, (2, 2))),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn mixit_square_case_contains_pit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = spec(&mut rng, (4, 4));
        let masks = activate_masks(&mats(&mut rng, 3, (4, 4), -2.0, 2.0), Activation::Sigmoid).unwrap();
        let t = targets(&mut rng, 3, (4, 4));
        let pit = pit_loss(&masks, &y, &t).unwrap();
        let mix = mixit_loss(&masks, &y, &t).unwrap();
        // A bijective remix assigns output i to target p[i], same as PIT.
        for (perm, loss) in &pit.per_choice {
            let remix = mix.per_choice.iter().find(|c| c.0 .0 == perm.0).unwrap().1;
            assert!((loss - remix).abs() <= 1e-12 * loss);
        }
        assert!(mix.loss <= pit.loss);
    }

    #[test]
    fn homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = spec(&mut rng, (4, 5));
        let masks = activate_masks(&mats(&mut rng, 4, (4, 5), -2.0, 2.0), Activation::Softmax).unwrap();
        let t = targets(&mut rng, 4, (4, 5));
        let c = 2.5;
        let yc = y.with_bins(y.bins.mapv(|v| v * c));
        let tc: Vec<_> = t.iter().map(|t| PsmTarget { values: &t.values * c }).collect();
        let a = pit_loss(&masks, &y, &t).unwrap().loss;
        let b = pit_loss(&masks, &yc, &tc).unwrap().loss;
        assert!((b - c * c * a).abs() <= 1e-10 * b);
        let a = mixit_loss(&masks, &y, &t[..2]).unwrap().loss;
        let b = mixit_loss(&masks, &yc, &tc[..2]).unwrap().loss;
        assert!((b - c * c * a).abs() <= 1e-10 * b);
    }

    #[test]
    fn gradient_zero_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let y = spec(&mut rng, (3, 3));
        let logits = mats(&mut rng, 2, (3, 3), -2.0, 2.0);
        let masks = activate_masks(&logits, Activation::Sigmoid).unwrap();
        let mag = y.magnitude();
        let t: Vec<PsmTarget> = masks.masks().iter().map(|m| PsmTarget { values: m * &mag }).collect();
        let g = loss_grad(&logits, Activation::Sigmoid, &y, &t, Objective::Pit, Reduction::Sum).unwrap();
        assert_eq!(g.loss, 0.0);
        assert!(g.logit_grads.iter().flatten().all(|&v| v == 0.0));
    }

    fn check_fd(mode: Objective, activation: Activation, n_out: usize, n_tgt: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = (3, 4);
        let y = spec(&mut rng, shape);
        let logits = mats(&mut rng, n_out, shape, -1.5, 1.5);
        let t = targets(&mut rng, n_tgt, shape);
        let g = loss_grad(&logits, activation, &y, &t, mode, Reduction::Sum).unwrap();
        let loss_at = |l: &[Array2<f64>]| loss_grad(l, activation, &y, &t, mode, Reduction::Sum).unwrap().loss;
        let h = 1e-5;
        for k in 0..n_out {
            for idx in 0..shape.0 * shape.1 {
                let pos = (idx / shape.1, idx % shape.1);
                let mut plus = logits.clone();
                plus[k][pos] += h;
                let mut minus = logits.clone();
                minus[k][pos] -= h;
                let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
                let an = g.logit_grads[k][pos];
                assert!(
                    (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-3),
                    "{mode:?}/{activation:?} mask {k} {pos:?}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            check_fd(Objective::Pit, Activation::Sigmoid, 2, 2, seed);
            check_fd(Objective::Pit, Activation::Softmax, 3, 3, seed);
            check_fd(Objective::MixIt, Activation::Sigmoid, 4, 2, seed);
            check_fd(Objective::MixIt, Activation::Softmax, 4, 2, seed);
        }
    }

    #[test]
    fn mean_per_bin_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y = spec(&mut rng, (4, 5));
        let logits = mats(&mut rng, 2, (4, 5), -1.0, 1.0);
        let t = targets(&mut rng, 2, (4, 5));
        let s = loss_grad(&logits, Activation::Sigmoid, &y, &t, Objective::Pit, Reduction::Sum).unwrap();
        let m = loss_grad(
            &logits,
            Activation::Sigmoid,
            &y,
            &t,
            Objective::Pit,
            Reduction::MeanPerBin,
        )
        .unwrap();
        assert!((s.loss / 20.0 - m.loss).abs() < 1e-12);
        let masks = activate_masks(&logits, Activation::Sigmoid).unwrap();
        let r = pit_loss(&masks, &y, &t).unwrap().mean_per_bin(20);
        assert_eq!(r.reduction, Reduction::MeanPerBin);
        assert!((r.loss - m.loss).abs() < 1e-12);
    }

    #[test]
    fn scheduler_extremes_and_rate() {
        let never = SchedulerConfig {
            mixit_probability: 0.0,
            rng_seed: 3,
        };
        let always = SchedulerConfig {
            mixit_probability: 1.0,
            rng_seed: 3,
        };
        for step in 0..1000 {
            assert_eq!(next_batch_kind(&never, step), BatchKind::Pit);
            assert_eq!(next_batch_kind(&always, step), BatchKind::MixIt);
        }
        let cfg = SchedulerConfig {
            mixit_probability: 0.8,
            rng_seed: 17,
        };
        let n = 100_000;
        let mixit = (0..n).filter(|&s| next_batch_kind(&cfg, s) == BatchKind::MixIt).count();
        let frac = mixit as f64 / n as f64;
        assert!((0.79..=0.81).contains(&frac), "fraction {frac}");
        assert_eq!(next_batch_kind(&cfg, 12345), next_batch_kind(&cfg, 12345));
    }
}
