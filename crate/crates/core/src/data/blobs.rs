//! Synthetic multi-class blob datasets.
//!
//! A desk-scale stand-in for image data with image-like statistics: most
//! coordinates of a class prototype are zero, active coordinates carry a
//! strong value, and samples jitter the prototype with a global amplitude
//! plus sparse background speckle. Dense all-positive features destabilize
//! plain SGD at image-scale learning rates; sparsity keeps the common-mode
//! gradient small the way real pixel data does.
//!
//! Train and test splits are drawn from the same prototypes in one call so
//! they share a distribution.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledDataset;
use crate::error::{Error, Result};

/// Prototype count per class; two gives each class a bimodal "style" mix.
const STYLES: usize = 2;
/// Fraction of coordinates a prototype activates.
const DENSITY: f64 = 0.25;
/// Chance an inactive coordinate carries background speckle.
const BACKGROUND_PROB: f64 = 0.15;
const BACKGROUND_MAX: f64 = 0.12;

/// Generates `(train, test)` splits of a deterministic blob dataset with
/// `classes` balanced classes in `[0,1]^dim`.
pub fn synthetic_blobs(
    train_n: usize,
    test_n: usize,
    dim: usize,
    classes: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if train_n == 0 || test_n == 0 {
        return Err(Error::Domain("need nonempty train and test splits".into()));
    }
    if classes < 2 {
        return Err(Error::Domain("need at least two classes".into()));
    }
    if dim == 0 {
        return Err(Error::Domain("feature dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..classes * STYLES)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if rng.gen::<f64>() < DENSITY {
                        rng.gen_range(0.55..1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let mut draw = |n: usize| -> LabeledDataset {
        let mut features = Array2::zeros((n, dim));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % classes;
            let style = rng.gen_range(0..STYLES);
            let proto = &prototypes[class * STYLES + style];
            let amplitude = rng.gen_range(0.65..1.0);
            for j in 0..dim {
                let value = if proto[j] > 0.0 {
                    proto[j] * amplitude + rng.gen_range(-0.08..0.08)
                } else if rng.gen::<f64>() < BACKGROUND_PROB {
                    rng.gen_range(0.0..BACKGROUND_MAX)
                } else {
                    0.0
                };
                features[[i, j]] = value.clamp(0.0, 1.0);
            }
            labels.push(class);
        }
        LabeledDataset::new(features, labels, classes).expect("blob features are in [0,1]")
    };

    Ok((draw(train_n), draw(test_n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let (a_train, a_test) = synthetic_blobs(100, 40, 8, 10, 5).unwrap();
        let (b_train, b_test) = synthetic_blobs(100, 40, 8, 10, 5).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        for c in 0..10 {
            assert_eq!(a_train.labels().iter().filter(|&&y| y == c).count(), 10);
        }
        assert_eq!(a_train.class_count(), 10);
    }

    #[test]
    fn different_seed_different_data() {
        let (a, _) = synthetic_blobs(50, 10, 4, 3, 1).unwrap();
        let (b, _) = synthetic_blobs(50, 10, 4, 3, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn features_are_sparse_like_images() {
        let (train, _) = synthetic_blobs(200, 10, 784, 10, 7).unwrap();
        let mean: f64 = train.features().iter().sum::<f64>()
            / (train.len() * train.feature_dim()) as f64;
        assert!(mean < 0.35, "mean pixel {mean} too dense");
        let zero_frac = train.features().iter().filter(|&&v| v == 0.0).count() as f64
            / (train.len() * train.feature_dim()) as f64;
        assert!(zero_frac > 0.4, "zero fraction {zero_frac} too low");
    }
}
