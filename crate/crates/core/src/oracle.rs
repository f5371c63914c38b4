//! Brute-force reference routes used to validate the fast implementations.
//!
//! Everything here trades speed for obviousness: path sums are enumerated
//! tuple by tuple, gradients come from central finite differences, and
//! risks from plain Monte-Carlo sampling. Test code asserts agreement
//! between these routes and the production ones.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::GridWorld;
use crate::nn::{cross_entropy_loss, ReluMlp};

/// Scalar-recursion node outputs `g^l_i` for one input, layer by layer.
fn node_outputs(model: &ReluMlp, x: ArrayView1<f64>) -> Vec<Vec<f64>> {
    let dims = model.layer_dims();
    let mut values: Vec<Vec<f64>> = vec![x.to_vec()];
    for l in 1..dims.len() - 1 {
        let w = &model.weights()[l - 1];
        let prev = &values[l - 1];
        let layer: Vec<f64> = (0..dims[l])
            .map(|i| {
                let z: f64 = (0..dims[l - 1]).map(|j| w[[i, j]] * prev[j]).sum();
                z.max(0.0)
            })
            .collect();
        values.push(layer);
    }
    values
}

/// Evaluates the forward pass as an explicit sum over all index tuples
/// `(i_0, .., i_L)`: weight products times ReLU-activity indicators times
/// the selected input component. Exponential in depth; tiny nets only.
pub fn forward_path_sum(model: &ReluMlp, x: ArrayView1<f64>) -> Vec<f64> {
    let dims = model.layer_dims();
    let hidden = node_outputs(model, x);
    let n_out = *dims.last().unwrap();
    let mut out = vec![0.0; n_out];
    // tuple[l] indexes layer l for l = 0..=L
    let depth = dims.len() - 1; // number of weight matrices
    let mut tuple = vec![0usize; depth];
    'outer: loop {
        // activity indicators over hidden layers 1..=L-? (layer indices 1..depth-? )
        let mut product = 1.0;
        let mut active = true;
        for l in 1..depth {
            let w = &model.weights()[l - 1];
            product *= w[[tuple[l], tuple[l - 1]]];
            if hidden[l][tuple[l]] <= 0.0 {
                active = false;
            }
        }
        if active || depth == 1 {
            let last = &model.weights()[depth - 1];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot += last[[k, tuple[depth - 1]]] * product * x[tuple[0]];
            }
        }
        // odometer increment over (i_0..i_{L})
        for l in 0..depth {
            tuple[l] += 1;
            if tuple[l] < dims[l] {
                continue 'outer;
            }
            tuple[l] = 0;
        }
        break;
    }
    out
}

/// Path-norm by exhaustive enumeration of all `(i_0, .., i_{L+1})` tuples.
pub fn path_norm_enumeration(model: &ReluMlp) -> f64 {
    let dims = model.layer_dims();
    let n_mats = dims.len() - 1;
    let mut tuple = vec![0usize; dims.len()];
    let mut total = 0.0;
    'outer: loop {
        let mut product = 1.0;
        for l in 0..n_mats {
            product *= model.weights()[l][[tuple[l + 1], tuple[l]]].abs();
        }
        total += product;
        for l in 0..dims.len() {
            tuple[l] += 1;
            if tuple[l] < dims[l] {
                continue 'outer;
            }
            tuple[l] = 0;
        }
        break;
    }
    total
}

fn mean_batch_loss(model: &ReluMlp, x: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let logits = model.forward_batch(x).unwrap();
    let c = model.output_dim();
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| cross_entropy_loss(logits.row(i), y, c).unwrap())
        .sum::<f64>()
        / labels.len() as f64
}

/// Central finite differences of the mean batch loss with step `h`, entry
/// by entry over every weight matrix.
pub fn finite_difference_gradient(
    model: &ReluMlp,
    x: ArrayView2<f64>,
    labels: &[usize],
    h: f64,
) -> Vec<Array2<f64>> {
    let mut grads = Vec::with_capacity(model.weights().len());
    for l in 0..model.weights().len() {
        let (rows, cols) = model.weights()[l].dim();
        let mut g = Array2::zeros((rows, cols));
        for i in 0..rows {
            for j in 0..cols {
                let mut weights = model.weights().to_vec();
                weights[l][[i, j]] += h;
                let plus =
                    ReluMlp::from_weights(model.layer_dims().to_vec(), weights.clone()).unwrap();
                weights[l][[i, j]] -= 2.0 * h;
                let minus = ReluMlp::from_weights(model.layer_dims().to_vec(), weights).unwrap();
                g[[i, j]] = (mean_batch_loss(&plus, x, labels)
                    - mean_batch_loss(&minus, x, labels))
                    / (2.0 * h);
            }
        }
        grads.push(g);
    }
    grads
}

/// Worst relative disagreement between two gradient stacks, with a small
/// absolute floor so near-zero entries compare cleanly.
pub fn max_relative_error(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (ga, gb) in a.iter().zip(b) {
        for (&va, &vb) in ga.iter().zip(gb.iter()) {
            let denom = va.abs().max(vb.abs()).max(1e-6);
            worst = worst.max((va - vb).abs() / denom);
        }
    }
    worst
}

/// Monte-Carlo estimate of the expected cross-entropy of `model` under one
/// of the world's label laws, plus its standard error.
pub fn monte_carlo_risk(
    model: &ReluMlp,
    world: &GridWorld,
    client: Option<usize>,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = match client {
        Some(k) => world.client_conditionals(k),
        None => world.ground_truth(),
    };
    let c = world.class_count();
    // Per-(point, class) losses precomputed once.
    let x = world.augmented_points();
    let logits = model.forward_batch(x.view()).unwrap();
    let mut losses = Array2::zeros((world.point_count(), c));
    for g in 0..world.point_count() {
        for i in 0..c {
            losses[[g, i]] = cross_entropy_loss(logits.row(g), i, c).unwrap();
        }
    }
    let marginal = world.marginal();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut u: f64 = rng.gen();
        let mut g = 0;
        for (idx, &p) in marginal.iter().enumerate() {
            if u < p {
                g = idx;
                break;
            }
            u -= p;
            g = idx;
        }
        let mut v: f64 = rng.gen();
        let mut y = 0;
        for i in 0..c {
            if v < table[[g, i]] {
                y = i;
                break;
            }
            v -= table[[g, i]];
            y = i;
        }
        let loss = losses[[g, y]];
        sum += loss;
        sum_sq += loss * loss;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    (mean, (var / samples as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::batch_gradient;
    use ndarray::array;

    #[test]
    fn fd_oracle_agrees_with_itself_on_a_linear_model() {
        // d loss/dW of a softmax-linear model has a closed form the
        // analytic path also uses; this pins the oracle's sign convention.
        let model =
            ReluMlp::from_weights(vec![2, 2], vec![array![[0.3, 0.1], [-0.2, 0.4]]]).unwrap();
        let x = array![[1.0, 1.0]];
        let fd = finite_difference_gradient(&model, x.view(), &[0], 1e-5);
        let (an, _) = batch_gradient(&model, x.view(), &[0]).unwrap();
        assert!(max_relative_error(&fd, &an) < 1e-6);
    }
}
