//! Dataset construction, IID partitioning, and label-flip noise.

mod blobs;
mod gridworld;
mod idx;

pub use blobs::synthetic_blobs;
pub use gridworld::{
    fig2_worlds, two_class_grid, two_class_grid_fractions, GridWorld, LabelSource,
};
pub use idx::{load_idx, write_idx};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Where a dataset's labels came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Clean,
    /// Labels re-drawn for a `rate` fraction of examples.
    Noised(f64),
}

/// A finite classification dataset: feature vectors in `[0,1]^d` and class
/// labels in `[0, class_count)`. Values are immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if labels.is_empty() || features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "need matching nonempty features/labels, got {} rows and {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if class_count == 0 {
            return Err(Error::Domain("class_count must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if features.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain(
                "features must lie in [0,1] (bounded input space)".into(),
            ));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_count,
            provenance: Provenance::Clean,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Features with the trailing constant-1 component appended, ready for
    /// the network's augmented-input convention.
    pub fn augmented(&self) -> Array2<f64> {
        let (n, d) = self.features.dim();
        let mut out = Array2::ones((n, d + 1));
        out.slice_mut(ndarray::s![.., ..d]).assign(&self.features);
        out
    }

    /// Keeps the first `limit` examples.
    pub fn truncated(&self, limit: usize) -> Result<Self> {
        if limit == 0 || limit > self.len() {
            return Err(Error::Domain(format!(
                "limit {limit} outside 1..={}",
                self.len()
            )));
        }
        Ok(LabeledDataset {
            features: self.features.slice(ndarray::s![..limit, ..]).to_owned(),
            labels: self.labels[..limit].to_vec(),
            class_count: self.class_count,
            provenance: self.provenance,
        })
    }

    fn select(&self, idx: &[usize]) -> Self {
        let mut features = Array2::zeros((idx.len(), self.feature_dim()));
        let mut labels = Vec::with_capacity(idx.len());
        for (row, &i) in idx.iter().enumerate() {
            features.row_mut(row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features,
            labels,
            class_count: self.class_count,
            provenance: self.provenance,
        }
    }
}

/// Splits a dataset into `client_count` IID shards: a seeded shuffle, then
/// contiguous slices. When the size does not divide evenly the first
/// `n % client_count` shards take one extra example.
pub fn partition_iid(
    dataset: &LabeledDataset,
    client_count: usize,
    seed: u64,
) -> Result<Vec<LabeledDataset>> {
    let n = dataset.len();
    if client_count == 0 || client_count > n {
        return Err(Error::Domain(format!(
            "client_count {client_count} outside 1..={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n / client_count;
    let extra = n % client_count;
    let mut shards = Vec::with_capacity(client_count);
    let mut start = 0;
    for k in 0..client_count {
        let size = base + usize::from(k < extra);
        shards.push(dataset.select(&order[start..start + size]));
        start += size;
    }
    Ok(shards)
}

/// Flips the labels of exactly `round(rate * n)` distinct examples, chosen
/// uniformly without replacement, each to a uniform draw over the other
/// `class_count - 1` classes. Features are untouched.
pub fn inject_label_noise(
    dataset: &LabeledDataset,
    rate: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Domain(format!("noise rate {rate} outside [0,1]")));
    }
    let n = dataset.len();
    let flips = (rate * n as f64).round() as usize;
    if flips > 0 && dataset.class_count < 2 {
        return Err(Error::Domain(
            "cannot flip labels with fewer than 2 classes".into(),
        ));
    }
    let mut labels = dataset.labels.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, n, flips);
    for i in chosen {
        let old = labels[i];
        let draw = rng.gen_range(0..dataset.class_count - 1);
        labels[i] = if draw >= old { draw + 1 } else { draw };
    }
    Ok(LabeledDataset {
        features: dataset.features.clone(),
        labels,
        class_count: dataset.class_count,
        provenance: Provenance::Noised(rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, classes: usize) -> LabeledDataset {
        let features = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 3 + j) % 97) as f64 / 96.0);
        let labels = (0..n).map(|i| i % classes).collect();
        LabeledDataset::new(features, labels, classes).unwrap()
    }

    #[test]
    fn partition_even_split() {
        let shards = partition_iid(&toy(100, 4), 2, 5).unwrap();
        assert_eq!(
            shards.iter().map(LabeledDataset::len).collect::<Vec<_>>(),
            [50, 50]
        );
    }

    #[test]
    fn partition_remainder_goes_to_leading_clients() {
        let shards = partition_iid(&toy(101, 4), 4, 5).unwrap();
        assert_eq!(
            shards.iter().map(LabeledDataset::len).collect::<Vec<_>>(),
            [26, 25, 25, 25]
        );
    }

    #[test]
    fn partition_is_deterministic_and_exhaustive() {
        let ds = toy(37, 5);
        let a = partition_iid(&ds, 3, 11).unwrap();
        let b = partition_iid(&ds, 3, 11).unwrap();
        assert_eq!(a, b);

        // Union of shards is the input multiset: compare sorted label+feature keys.
        let mut seen: Vec<String> = a
            .iter()
            .flat_map(|s| {
                (0..s.len())
                    .map(move |i| format!("{:?}|{}", s.features().row(i).to_vec(), s.labels()[i]))
            })
            .collect();
        let mut orig: Vec<String> = (0..ds.len())
            .map(|i| format!("{:?}|{}", ds.features().row(i).to_vec(), ds.labels()[i]))
            .collect();
        seen.sort();
        orig.sort();
        assert_eq!(seen, orig);
    }

    #[test]
    fn partition_rejects_bad_client_count() {
        assert!(matches!(
            partition_iid(&toy(4, 2), 0, 0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            partition_iid(&toy(4, 2), 5, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_noise_changes_nothing() {
        let ds = toy(50, 4);
        let noised = inject_label_noise(&ds, 0.0, 9).unwrap();
        assert_eq!(noised.labels(), ds.labels());
        assert_eq!(noised.features(), ds.features());
        assert_eq!(noised.provenance(), Provenance::Noised(0.0));
    }

    #[test]
    fn full_noise_flips_every_label() {
        let ds = toy(64, 3);
        let noised = inject_label_noise(&ds, 1.0, 1).unwrap();
        assert!(noised
            .labels()
            .iter()
            .zip(ds.labels())
            .all(|(new, old)| new != old));
    }

    #[test]
    fn noise_count_is_exact() {
        let ds = toy(1000, 10);
        let noised = inject_label_noise(&ds, 0.3, 123).unwrap();
        let changed = noised
            .labels()
            .iter()
            .zip(ds.labels())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 300);
        assert_eq!(noised.features(), ds.features());
    }

    #[test]
    fn noise_is_deterministic() {
        let ds = toy(200, 7);
        let a = inject_label_noise(&ds, 0.4, 77).unwrap();
        let b = inject_label_noise(&ds, 0.4, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_needs_two_classes() {
        let ds = toy(10, 1);
        assert!(matches!(
            inject_label_noise(&ds, 0.5, 0),
            Err(Error::Domain(_))
        ));
        // rate 0 with one class is fine
        assert!(inject_label_noise(&ds, 0.0, 0).is_ok());
    }

    #[test]
    fn features_must_be_bounded() {
        let features = Array2::from_elem((3, 2), 1.5);
        assert!(matches!(
            LabeledDataset::new(features, vec![0, 1, 0], 2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn augmented_appends_ones() {
        let ds = toy(4, 2);
        let aug = ds.augmented();
        assert_eq!(aug.ncols(), ds.feature_dim() + 1);
        assert!(aug.column(ds.feature_dim()).iter().all(|&v| v == 1.0));
    }
}
