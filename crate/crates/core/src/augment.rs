//! Gaussian feature augmentation for the training split.
//!
//! Each copy perturbs every feature with zero-mean Gaussian noise whose
//! standard deviation is `sigma_scale` times that feature's training std.
//! The three range fractions receive noise drawn on the plane
//! `tir + tbr + tar = const`, so the per-feature marginal std is exact and
//! the triple keeps summing to one; clamping to `[0, 1]` followed by
//! renormalization only engages at the simplex boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::featurize::{FeatureVector, LabeledExample, N_FEATURES};
use crate::par;
use crate::seed::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub sigma_scale: f64,
    pub copies_per_example: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            sigma_scale: 0.05,
            copies_per_example: 1,
            seed: 0,
        }
    }
}

/// Returns each example followed by its perturbed copies. Output length is
/// `train.len() * (1 + copies_per_example)` and depends only on the seed.
pub fn augment(
    train: &[LabeledExample],
    feature_std: &FeatureVector,
    cfg: &AugmentConfig,
) -> Vec<LabeledExample> {
    if cfg.copies_per_example == 0 {
        return train.to_vec();
    }
    let sigma: FeatureVector = std::array::from_fn(|j| (cfg.sigma_scale * feature_std[j]).max(0.0));
    let plane = SimplexNoise::new(sigma[0], sigma[1], sigma[2]);

    let groups = par::map_range(train.len(), |i| {
        let original = &train[i];
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, i as u64));
        let mut out = Vec::with_capacity(1 + cfg.copies_per_example);
        out.push(original.clone());
        for _ in 0..cfg.copies_per_example {
            let mut x = original.features.vector();
            perturb(&mut x, &sigma, &plane, &mut rng);
            let mut copy = original.clone();
            copy.features.set_vector(&x);
            out.push(copy);
        }
        out
    });
    groups.into_iter().flatten().collect()
}

fn perturb(
    x: &mut FeatureVector,
    sigma: &FeatureVector,
    plane: &SimplexNoise,
    rng: &mut ChaCha8Rng,
) {
    let g: [f64; 2] = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
    for (j, v) in plane.axes.iter().enumerate() {
        x[j] += v[0] * g[0] + v[1] * g[1];
    }
    for j in 3..N_FEATURES {
        let n: f64 = StandardNormal.sample(rng);
        x[j] = (x[j] + sigma[j] * n).max(0.0);
    }
    clamp_ranges(x);
}

/// Clamps the range triple into `[0, 1]` and rescales it to sum to one.
pub(crate) fn clamp_ranges(x: &mut FeatureVector) {
    let before = [x[0], x[1], x[2]];
    for v in &mut x[..3] {
        *v = v.clamp(0.0, 1.0);
    }
    let sum: f64 = x[..3].iter().sum();
    if sum > 0.0 {
        for v in &mut x[..3] {
            *v /= sum;
        }
    } else {
        // every component clamped to zero; fall back to the unperturbed ratios
        let total: f64 = before
            .iter()
            .map(|v| v.abs())
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        for (v, b) in x[..3].iter_mut().zip(before) {
            *v = b.abs() / total;
        }
    }
}

/// Three 2-D vectors with lengths `sigma` that close into a triangle, so the
/// projections of one standard normal 2-vector onto them have the requested
/// standard deviations and always sum to zero.
#[derive(Debug, Clone, Copy)]
struct SimplexNoise {
    axes: [[f64; 2]; 3],
}

impl SimplexNoise {
    fn new(s0: f64, s1: f64, s2: f64) -> Self {
        let denom = 2.0 * s0 * s1;
        let cos = if denom > 0.0 {
            ((s2 * s2 - s0 * s0 - s1 * s1) / denom).clamp(-1.0, 1.0)
        } else {
            -1.0
        };
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        let a = [s0, 0.0];
        let b = [s1 * cos, s1 * sin];
        let c = [-(a[0] + b[0]), -(a[1] + b[1])];
        SimplexNoise { axes: [a, b, c] }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::testutil::day;
    use crate::featurize::GlycemicClass;

    fn example(tir: f64, tbr: f64, tar: f64) -> LabeledExample {
        let mut f = day("S01", "2013-04-02", tir);
        f.tbr = tbr;
        f.tar = tar;
        LabeledExample {
            features: f,
            label: GlycemicClass::Moderate,
            label_date: "2013-04-03".parse().unwrap(),
        }
    }

    const STD: FeatureVector = [0.17, 0.04, 0.17, 8.48, 86.86, 9.04, 19.39];

    #[test]
    fn zero_sigma_is_identity() {
        let train = vec![example(0.74, 0.02, 0.24), example(0.5, 0.1, 0.4)];
        let cfg = AugmentConfig {
            sigma_scale: 0.0,
            copies_per_example: 3,
            seed: 9,
        };
        let out = augment(&train, &STD, &cfg);
        assert_eq!(out.len(), 8);
        for (i, ex) in out.iter().enumerate() {
            assert_eq!(ex, &train[i / 4]);
        }
    }

    #[test]
    fn zero_copies_is_noop() {
        let train = vec![example(0.74, 0.02, 0.24)];
        let cfg = AugmentConfig {
            copies_per_example: 0,
            ..Default::default()
        };
        assert_eq!(augment(&train, &STD, &cfg), train);
    }

    #[test]
    fn clamp_then_renormalize() {
        let mut x = [1.07, 0.01, -0.02, 1.0, 1.0, 1.0, 1.0];
        clamp_ranges(&mut x);
        assert!((x[0] + x[1] + x[2] - 1.0).abs() < 1e-12);
        assert!((x[0] - 1.0 / 1.01).abs() < 1e-12);
        assert_eq!(x[2], 0.0);

        // large noise from (0.98, 0.01, 0.01)
        let train = vec![example(0.98, 0.01, 0.01)];
        let cfg = AugmentConfig {
            sigma_scale: 3.0,
            copies_per_example: 200,
            seed: 1,
        };
        for ex in augment(&train, &STD, &cfg) {
            assert!(ex.features.satisfies_invariants(), "{:?}", ex.features);
        }
    }

    #[test]
    fn simplex_axes_close_and_match_lengths() {
        let n = SimplexNoise::new(0.3, 0.1, 0.25);
        let sum = [0, 1].map(|k| n.axes.iter().map(|a| a[k]).sum::<f64>());
        assert!(sum.iter().all(|s| s.abs() < 1e-15));
        for (a, s) in n.axes.iter().zip([0.3, 0.1, 0.25]) {
            assert!((a[0].hypot(a[1]) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_determinism() {
        let train: Vec<_> = (0..20)
            .map(|i| example(0.5 + 0.01 * i as f64, 0.05, 0.45 - 0.01 * i as f64))
            .collect();
        let cfg = AugmentConfig {
            sigma_scale: 0.1,
            copies_per_example: 2,
            seed: 77,
        };
        let a = augment(&train, &STD, &cfg);
        let b = augment(&train, &STD, &cfg);
        assert_eq!(a, b);
        let c = augment(&train, &STD, &AugmentConfig { seed: 78, ..cfg });
        assert_ne!(a, c);
    }
}
