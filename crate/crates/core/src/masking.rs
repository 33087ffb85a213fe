//! Phase-sensitive targets, mask activations, and mask application.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Independent elementwise logistic per mask.
    Sigmoid,
    /// Normalized across masks at every T-F bin.
    Softmax,
}

/// `N >= 2` real masks over one T-F grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    masks: Vec<Array2<f64>>,
    activation: Activation,
}

impl MaskSet {
    /// Wraps precomputed masks after checking the activation invariants.
    pub fn new(masks: Vec<Array2<f64>>, activation: Activation) -> Result<Self> {
        let shape = check_same_shape(&masks)?;
        if masks.len() < 2 {
            return Err(Error::invalid("a mask set needs at least two masks"));
        }
        if masks.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("mask entries must lie in [0, 1]"));
        }
        if activation == Activation::Softmax {
            let mut sum = Array2::<f64>::zeros(shape);
            for m in &masks {
                sum += m;
            }
            if sum.iter().any(|s| (s - 1.0).abs() > 1e-6) {
                return Err(Error::invalid("softmax masks must sum to one at every bin"));
            }
        }
        Ok(MaskSet { masks, activation })
    }

    pub fn masks(&self) -> &[Array2<f64>] {
        &self.masks
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.masks[0].dim()
    }
}

/// Phase-sensitive magnitude target `|X| cos(theta_Y - theta_X)`. May be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct PsmTarget {
    pub values: Array2<f64>,
}

pub(crate) fn check_same_shape(mats: &[Array2<f64>]) -> Result<(usize, usize)> {
    let first = mats.first().ok_or_else(|| Error::invalid("empty matrix list"))?.dim();
    if mats.iter().any(|m| m.dim() != first) {
        return Err(Error::invalid("matrices have differing shapes"));
    }
    Ok(first)
}

/// Computes the phase-sensitive target of `target_spec` against `mixture_spec`.
///
/// Bins where the mixture is exactly zero take `theta_Y = 0`.
pub fn psm_target(target_spec: &Spectrogram, mixture_spec: &Spectrogram) -> Result<PsmTarget> {
    if target_spec.shape() != mixture_spec.shape() {
        return Err(Error::invalid(format!(
            "target shape {:?} differs from mixture shape {:?}",
            target_spec.shape(),
            mixture_spec.shape()
        )));
    }
    let values = Zip::from(&target_spec.bins)
        .and(&mixture_spec.bins)
        .map_collect(|x, y| {
            let theta_y = if y.norm() == 0.0 { 0.0 } else { y.arg() };
            x.norm() * (theta_y - x.arg()).cos()
        });
    Ok(PsmTarget { values })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Turns `N` logit matrices into masks.
pub fn activate_masks(logits: &[Array2<f64>], activation: Activation) -> Result<MaskSet> {
    let shape = check_same_shape(logits)?;
    if logits.len() < 2 {
        return Err(Error::invalid("a mask set needs at least two masks"));
    }
    if logits.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite mask logit"));
    }
    let masks = match activation {
        Activation::Sigmoid => logits.iter().map(|l| l.mapv(sigmoid)).collect(),
        Activation::Softmax => {
            let mut max = logits[0].clone();
            for l in &logits[1..] {
                Zip::from(&mut max).and(l).for_each(|m, &v| *m = m.max(v));
            }
            let mut exps: Vec<Array2<f64>> = logits.iter().map(|l| (l - &max).mapv(f64::exp)).collect();
            let mut total = Array2::<f64>::zeros(shape);
            for e in &exps {
                total += e;
            }
            for e in &mut exps {
                *e /= &total;
            }
            exps
        }
    };
    Ok(MaskSet { masks, activation })
}

/// Masked magnitude with mixture phase, i.e. `mask * |Y| * exp(i theta_Y)`,
/// which equals `mask * Y`.
pub fn apply_mask(mask: &Array2<f64>, mixture_spec: &Spectrogram) -> Result<Spectrogram> {
    if mask.dim() != mixture_spec.shape() {
        return Err(Error::invalid(format!(
            "mask shape {:?} differs from mixture shape {:?}",
            mask.dim(),
            mixture_spec.shape()
        )));
    }
    let bins = Zip::from(mask).and(&mixture_spec.bins).map_collect(|&m, &y| y * m);
    Ok(mixture_spec.with_bins(bins))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn spec_from(bins: Array2<Complex64>) -> Spectrogram {
        Spectrogram {
            bins,
            hop: 160,
            window_len: 400,
            sample_rate: 16_000,
        }
    }

    fn random_spec(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Spectrogram {
        spec_from(Array2::from_shape_fn(shape, |_| {
            Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        }))
    }

    fn random_logits(rng: &mut ChaCha8Rng, n: usize, shape: (usize, usize)) -> Vec<Array2<f64>> {
        (0..n)
            .map(|_| Array2::from_shape_fn(shape, |_| rng.random_range(-4.0..4.0)))
            .collect()
    }

    #[test]
    fn psm_of_mixture_is_its_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_spec(&mut rng, (4, 5));
        let t = psm_target(&y, &y).unwrap();
        for (v, c) in t.values.iter().zip(&y.bins) {
            assert!((v - c.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn psm_quadrature_phase_is_zero() {
        let y = spec_from(Array2::from_elem((1, 1), Complex64::from_polar(2.0, 0.3)));
        let x = spec_from(Array2::from_elem((1, 1), Complex64::from_polar(1.5, 0.3 + FRAC_PI_2)));
        assert!(psm_target(&x, &y).unwrap().values[[0, 0]].abs() < 1e-12);
    }

    #[test]
    fn psm_matches_projection_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_spec(&mut rng, (25, 40));
        let y = random_spec(&mut rng, (25, 40));
        let t = psm_target(&x, &y).unwrap();
        for ((v, xc), yc) in t.values.iter().zip(&x.bins).zip(&y.bins) {
            let oracle = (xc * yc.conj()).re / yc.norm();
            assert!((v - oracle).abs() < 1e-9);
            assert!(v.abs() <= xc.norm() + 1e-12);
        }
    }

    #[test]
    fn psm_zero_mixture_bin_uses_zero_phase() {
        let y = spec_from(Array2::from_elem((1, 2), Complex64::new(0.0, 0.0)));
        let x = spec_from(
            Array2::from_shape_vec((1, 2), vec![Complex64::new(0.0, 0.0), Complex64::new(-1.0, 1.0)]).unwrap(),
        );
        let t = psm_target(&x, &y).unwrap();
        assert_eq!(t.values[[0, 0]], 0.0);
        // theta_Y = 0 gives |X| cos(theta_X) = Re(X).
        assert!((t.values[[0, 1]] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn psm_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spec(&mut rng, (2, 3));
        let b = random_spec(&mut rng, (3, 3));
        assert!(matches!(psm_target(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn zero_logits() {
        let zeros = vec![Array2::<f64>::zeros((3, 4)); 4];
        let s = activate_masks(&zeros[..2], Activation::Sigmoid).unwrap();
        assert!(s.masks().iter().flatten().all(|&v| v == 0.5));
        let s = activate_masks(&zeros, Activation::Softmax).unwrap();
        assert!(s.masks().iter().flatten().all(|&v| v == 0.25));
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let logits = random_logits(&mut rng, 4, (5, 6));
        let shifted: Vec<_> = logits.iter().map(|l| l + 3.7).collect();
        let a = activate_masks(&logits, Activation::Softmax).unwrap();
        let b = activate_masks(&shifted, Activation::Softmax).unwrap();
        for (x, y) in a.masks().iter().flatten().zip(b.masks().iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn activation_errors() {
        let mut bad = vec![Array2::<f64>::zeros((2, 2)); 2];
        bad[1][[0, 0]] = f64::INFINITY;
        assert!(matches!(
            activate_masks(&bad, Activation::Sigmoid),
            Err(Error::Numeric(_))
        ));
        let ragged = vec![Array2::<f64>::zeros((2, 2)), Array2::<f64>::zeros((2, 3))];
        assert!(activate_masks(&ragged, Activation::Softmax).is_err());
        assert!(activate_masks(&ragged[..1], Activation::Softmax).is_err());
    }

    #[test]
    fn apply_mask_ones_and_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = random_spec(&mut rng, (3, 7));
        let ones = apply_mask(&Array2::ones((3, 7)), &y).unwrap();
        assert_eq!(ones, y);
        let zeros = apply_mask(&Array2::zeros((3, 7)), &y).unwrap();
        assert!(zeros.bins.iter().all(|c| c.norm() == 0.0));
        assert!(apply_mask(&Array2::zeros((2, 7)), &y).is_err());
    }

    #[test]
    fn mask_set_validation() {
        let half = Array2::from_elem((2, 2), 0.5);
        assert!(MaskSet::new(vec![half.clone(), half.clone()], Activation::Softmax).is_ok());
        assert!(MaskSet::new(vec![half.clone(); 3], Activation::Softmax).is_err());
        assert!(MaskSet::new(vec![half.clone()], Activation::Sigmoid).is_err());
        let over = Array2::from_elem((2, 2), 1.5);
        assert!(MaskSet::new(vec![half, over], Activation::Sigmoid).is_err());
    }

    proptest! {
        #[test]
        fn softmax_masks_partition_mixture(seed in any::<u64>(), n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = random_spec(&mut rng, (6, 9));
            let masks = activate_masks(&random_logits(&mut rng, n, (6, 9)), Activation::Softmax).unwrap();
            let mut total = Array2::<Complex64>::zeros((6, 9));
            for m in masks.masks() {
                prop_assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
                total += &apply_mask(m, &y).unwrap().bins;
            }
            let err: f64 = (&total - &y.bins).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let norm: f64 = y.bins.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-6 * norm);
        }

        #[test]
        fn psm_bounded_by_target_magnitude(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_spec(&mut rng, (4, 4));
            let y = random_spec(&mut rng, (4, 4));
            let t = psm_target(&x, &y).unwrap();
            for (v, c) in t.values.iter().zip(&x.bins) {
                prop_assert!(v.abs() <= c.norm() * (1.0 + 1e-12));
            }
        }
    }
}
