//! Softmax cross-entropy loss, backpropagation, and mini-batch SGD.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ReluMlp, SgdConfig};
use crate::error::{Error, Result};

/// `log(sum_j exp(v_j))` with max-subtraction so large logits do not
/// overflow.
pub fn log_sum_exp(v: ArrayView1<f64>) -> f64 {
    let m = v.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of the softmax of `logits` against a hard `label`:
/// `-log(exp(f_label) / sum_j exp(f_j))`.
pub fn cross_entropy_loss(
    logits: ArrayView1<f64>,
    label: usize,
    class_count: usize,
) -> Result<f64> {
    if logits.len() != class_count {
        return Err(Error::Shape(format!(
            "got {} logits for {} classes",
            logits.len(),
            class_count
        )));
    }
    if label >= class_count {
        return Err(Error::Domain(format!(
            "label {} out of range for {} classes",
            label, class_count
        )));
    }
    Ok(log_sum_exp(logits) - logits[label])
}

struct BatchPass {
    /// Activations a_0 (input) .. a_L; a_l has shape (n, d_l).
    activations: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

fn forward_cached(model: &ReluMlp, x: ArrayView2<f64>) -> BatchPass {
    let n_mats = model.weights().len();
    let mut activations = Vec::with_capacity(n_mats);
    activations.push(x.to_owned());
    for w in &model.weights()[..n_mats - 1] {
        let mut z = activations.last().unwrap().dot(&w.t());
        z.mapv_inplace(|v| v.max(0.0));
        activations.push(z);
    }
    let logits = activations
        .last()
        .unwrap()
        .dot(&model.weights()[n_mats - 1].t());
    BatchPass {
        activations,
        logits,
    }
}

/// Mean cross-entropy gradient of `model` over a batch (one example per
/// row of `x`, bias-augmented), plus the mean batch loss.
///
/// ReLU's subgradient at exactly 0 is taken as 0. On models with frozen
/// constant-unit rows the corresponding gradient rows are zeroed.
pub fn batch_gradient(
    model: &ReluMlp,
    x: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(Vec<Array2<f64>>, f64)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!(
            "batch has {} rows but {} labels",
            n,
            labels.len()
        )));
    }
    if x.ncols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "batch feature dim {} != d_0 = {}",
            x.ncols(),
            model.input_dim()
        )));
    }
    let classes = model.output_dim();
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Domain(format!(
            "label {} out of range for {} classes",
            bad, classes
        )));
    }

    let pass = forward_cached(model, x);

    // Softmax probabilities and mean loss from the logits.
    let mut delta = pass.logits;
    let mut loss_sum = 0.0;
    for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
        let lse = log_sum_exp(row.view());
        loss_sum += lse - row[labels[i]];
        row.mapv_inplace(|z| (z - lse).exp());
        row[labels[i]] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    delta.mapv_inplace(|v| v * scale);

    // Walk the layers backwards; delta holds dLoss/dZ_{l+1}.
    let n_mats = model.weights().len();
    let mut grads = vec![Array2::zeros((0, 0)); n_mats];
    for l in (0..n_mats).rev() {
        grads[l] = delta.t().dot(&pass.activations[l]);
        if l > 0 {
            let mut da = delta.dot(&model.weights()[l]);
            Zip::from(&mut da)
                .and(&pass.activations[l])
                .for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            delta = da;
        }
    }

    if model.has_hidden_bias() {
        let dims = model.layer_dims();
        for l in 1..dims.len() - 1 {
            grads[l - 1].row_mut(dims[l] - 1).fill(0.0);
        }
    }

    Ok((grads, loss_sum * scale))
}

/// Outcome of a local training pass: the updated model and the mean loss
/// across all mini-batch steps taken.
#[derive(Debug, Clone)]
pub struct SgdRun {
    pub model: ReluMlp,
    pub mean_loss: f64,
}

/// Runs `cfg.epochs` passes of mini-batch SGD. Each epoch reshuffles the
/// example order with a ChaCha stream seeded once from `cfg.seed` (the
/// stream advances across epochs), so a fixed seed gives a bit-identical
/// result. `grad_shift`, when present, is added to every batch gradient
/// before the update (used for control-variate corrections).
pub fn sgd_epochs_full(
    model: &ReluMlp,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &SgdConfig,
    grad_shift: Option<&[Array2<f64>]>,
) -> Result<SgdRun> {
    cfg.validate()?;
    let n = labels.len();
    if n == 0 {
        return Err(Error::Domain("empty dataset".into()));
    }
    if x.nrows() != n {
        return Err(Error::Shape(format!(
            "features have {} rows but {} labels",
            x.nrows(),
            n
        )));
    }
    if let Some(shift) = grad_shift {
        if shift.len() != model.weights().len()
            || shift
                .iter()
                .zip(model.weights())
                .any(|(s, w)| s.dim() != w.dim())
        {
            return Err(Error::Shape("gradient shift shape mismatch".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut current = model.clone();
    let mut xb = Array2::<f64>::zeros((cfg.batch_size.min(n), x.ncols()));
    let mut yb = vec![0usize; cfg.batch_size.min(n)];
    let mut loss_sum = 0.0;
    let mut steps = 0usize;

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let m = chunk.len();
            for (i, &idx) in chunk.iter().enumerate() {
                xb.row_mut(i).assign(&x.row(idx));
                yb[i] = labels[idx];
            }
            let (grads, loss) = batch_gradient(&current, xb.slice(ndarray::s![..m, ..]), &yb[..m])?;
            for (l, g) in grads.iter().enumerate() {
                let w = &mut current.weights_mut()[l];
                w.scaled_add(-cfg.learning_rate, g);
                if let Some(shift) = grad_shift {
                    w.scaled_add(-cfg.learning_rate, &shift[l]);
                }
            }
            loss_sum += loss;
            steps += 1;
        }
    }
    current.check_invariants()?;
    Ok(SgdRun {
        model: current,
        mean_loss: loss_sum / steps as f64,
    })
}

/// Plain local training: [`sgd_epochs_full`] without a gradient shift,
/// returning just the updated model.
pub fn sgd_epochs(
    model: &ReluMlp,
    x: ArrayView2<f64>,
    labels: &[usize],
    cfg: &SgdConfig,
) -> Result<ReluMlp> {
    Ok(sgd_epochs_full(model, x, labels, cfg, None)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use ndarray::{array, Array2};
    use rand::distributions::{Distribution, Uniform};

    fn tiny_raw(seed: u64, dims: &[usize]) -> ReluMlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-1.5, 1.5);
        let weights = (0..dims.len() - 1)
            .map(|l| Array2::from_shape_fn((dims[l + 1], dims[l]), |_| dist.sample(&mut rng)))
            .collect();
        ReluMlp::from_weights(dims.to_vec(), weights).unwrap()
    }

    #[test]
    fn uniform_logits_cost_ln_c() {
        let logits = Array2::<f64>::zeros((1, 10));
        let loss = cross_entropy_loss(logits.row(0), 3, 10).unwrap();
        assert!((loss - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn huge_logit_does_not_overflow() {
        let logits = array![1000.0, 0.0];
        let loss = cross_entropy_loss(logits.view(), 0, 2).unwrap();
        assert!(loss.is_finite());
        assert!(loss >= 0.0 && loss < 1e-300);
    }

    #[test]
    fn matches_direct_log_sum_exp_evaluation() {
        let logits = array![1.0, 2.0, 3.0];
        let loss = cross_entropy_loss(logits.view(), 2, 3).unwrap();
        // independent route: naive sum of exponentials, safe at this scale
        let direct = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0;
        assert!((loss - direct).abs() < 1e-12);
        assert!((loss - 0.40760596444438079).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_is_domain_error() {
        let logits = array![0.0, 0.0];
        assert!(matches!(
            cross_entropy_loss(logits.view(), 2, 2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = array![[0.2, 0.9, 1.0], [0.8, 0.1, 1.0], [0.5, 0.5, 1.0]];
        let labels = [0usize, 1, 0];
        for seed in 0..10u64 {
            let model = tiny_raw(seed, &[3, 4, 3, 2]);
            let (grads, _) = batch_gradient(&model, x.view(), &labels).unwrap();
            let fd = oracle::finite_difference_gradient(&model, x.view(), &labels, 1e-5);
            let worst = oracle::max_relative_error(&grads, &fd);
            assert!(worst < 1e-4, "seed {seed}: max rel err {worst}");
        }
    }

    #[test]
    fn duplicated_batch_keeps_gradient() {
        let model = tiny_raw(3, &[3, 5, 2]);
        let x = array![[0.2, 0.9, 1.0], [0.8, 0.1, 1.0]];
        let labels = [0usize, 1];
        let x2 = array![
            [0.2, 0.9, 1.0],
            [0.8, 0.1, 1.0],
            [0.2, 0.9, 1.0],
            [0.8, 0.1, 1.0]
        ];
        let labels2 = [0usize, 1, 0, 1];
        let (g1, l1) = batch_gradient(&model, x.view(), &labels).unwrap();
        let (g2, l2) = batch_gradient(&model, x2.view(), &labels2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            let diff = (a - b).mapv(f64::abs).iter().fold(0.0f64, |m, &v| m.max(v));
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn saturated_model_has_tiny_gradient() {
        // Output already the one-hot target in the softmax limit.
        let model =
            ReluMlp::from_weights(vec![2, 2], vec![array![[40.0, 0.0], [-40.0, 0.0]]]).unwrap();
        let x = array![[1.0, 1.0]];
        let (grads, loss) = batch_gradient(&model, x.view(), &[0]).unwrap();
        assert!(loss < 1e-30);
        let norm: f64 = grads
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!(norm.sqrt() < 1e-30);
    }

    #[test]
    fn empty_batch_is_domain_error() {
        let model = tiny_raw(0, &[2, 3, 2]);
        let x = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            batch_gradient(&model, x.view(), &[]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let model = tiny_raw(4, &[3, 4, 2]);
        let x = array![[0.3, 0.4, 1.0], [0.6, 0.2, 1.0]];
        let cfg = SgdConfig {
            learning_rate: 0.0,
            batch_size: 2,
            epochs: 3,
            seed: 7,
        };
        let trained = sgd_epochs(&model, x.view(), &[0, 1], &cfg).unwrap();
        assert_eq!(trained, model);
    }

    #[test]
    fn single_example_single_step_identity() {
        let model = tiny_raw(5, &[3, 4, 2]);
        let x = array![[0.3, 0.4, 1.0]];
        let labels = [1usize];
        let cfg = SgdConfig {
            learning_rate: 0.05,
            batch_size: 1,
            epochs: 1,
            seed: 7,
        };
        let trained = sgd_epochs(&model, x.view(), &labels, &cfg).unwrap();
        let (grads, _) = batch_gradient(&model, x.view(), &labels).unwrap();
        for (l, g) in grads.iter().enumerate() {
            let expected = &model.weights()[l] - &(g * cfg.learning_rate);
            assert_eq!(trained.weights()[l], expected);
        }
    }

    #[test]
    fn same_seed_is_bitwise_deterministic() {
        let model = ReluMlp::with_seed(&[3, 6, 4, 2], 21).unwrap();
        let x = array![
            [0.1, 0.2, 1.0],
            [0.9, 0.4, 1.0],
            [0.5, 0.8, 1.0],
            [0.3, 0.3, 1.0],
            [0.7, 0.1, 1.0]
        ];
        let labels = [0usize, 1, 1, 0, 1];
        let cfg = SgdConfig {
            learning_rate: 0.1,
            batch_size: 2,
            epochs: 4,
            seed: 99,
        };
        let a = sgd_epochs(&model, x.view(), &labels, &cfg).unwrap();
        let b = sgd_epochs(&model, x.view(), &labels, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_rows_survive_training() {
        let model = ReluMlp::with_seed(&[3, 5, 4, 2], 13).unwrap();
        let x = array![[0.1, 0.9, 1.0], [0.7, 0.3, 1.0], [0.4, 0.6, 1.0]];
        let labels = [0usize, 1, 0];
        let cfg = SgdConfig {
            learning_rate: 0.2,
            batch_size: 2,
            epochs: 5,
            seed: 3,
        };
        let trained = sgd_epochs(&model, x.view(), &labels, &cfg).unwrap();
        assert!(trained.frozen_row_pattern());
        // ... while the rest of the matrix moved.
        assert_ne!(trained.weights()[0], model.weights()[0]);
    }
}
