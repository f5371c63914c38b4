//! From-scratch dense ReLU multilayer perceptron.
//!
//! The network is a chain of weight matrices with ReLU on every hidden
//! layer and no activation on the output layer. Biases use the augmented
//! convention: the input carries a trailing constant-1 component, and each
//! hidden layer reserves its last unit as a constant-1 unit fed by a frozen
//! one-hot row from the previous layer's constant unit. With that wiring,
//! bias edges are ordinary edges of the weighted graph, so the path-norm
//! proxy (sum over all input-to-output paths of products of absolute edge
//! weights) counts them like any other weight.

mod snapshot;
mod train;

pub use snapshot::{read_snapshot, write_snapshot};
pub use train::{batch_gradient, cross_entropy_loss, log_sum_exp, sgd_epochs, sgd_epochs_full};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Hyper-parameters for local mini-batch SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Domain(format!(
                "learning_rate must be a finite nonnegative real, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Dense ReLU network: `layer_dims = [d_0, d_1, .., d_{L+1}]` and one
/// weight matrix per consecutive pair, matrix `l` of shape
/// `(layer_dims[l+1], layer_dims[l])`.
///
/// `d_0` includes the constant-1 input component. When built through
/// [`ReluMlp::with_seed`], every hidden layer's last unit is a constant-1
/// unit (see module docs); raw models from [`ReluMlp::from_weights`] have
/// no such structure and train every entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluMlp {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    hidden_bias: bool,
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Shape(format!(
            "need at least input and output dims, got {:?}",
            layer_dims
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "layer dims must be positive, got {:?}",
            layer_dims
        )));
    }
    Ok(())
}

impl ReluMlp {
    /// Builds a trainable network with frozen constant-1 hidden units and
    /// fan-based uniform initialization `U[-sqrt(6/(d_in+d_out)), +..]`
    /// drawn from a ChaCha stream seeded with `seed`.
    pub fn with_seed(layer_dims: &[usize], seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let hidden = &layer_dims[1..layer_dims.len() - 1];
        if hidden.iter().any(|&d| d < 2) {
            return Err(Error::Shape(
                "hidden layers need width >= 2 (one unit is the constant-1 unit)".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        for l in 0..layer_dims.len() - 1 {
            let (rows, cols) = (layer_dims[l + 1], layer_dims[l]);
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            weights.push(Array2::from_shape_fn((rows, cols), |_| {
                dist.sample(&mut rng)
            }));
        }
        let mut model = ReluMlp {
            layer_dims: layer_dims.to_vec(),
            weights,
            // vacuous without hidden layers; keep the flag canonical
            hidden_bias: !hidden.is_empty(),
        };
        model.reset_frozen_rows();
        Ok(model)
    }

    /// Wraps explicit weight matrices with no constant-unit structure.
    pub fn from_weights(layer_dims: Vec<usize>, weights: Vec<Array2<f64>>) -> Result<Self> {
        validate_dims(&layer_dims)?;
        let model = ReluMlp {
            layer_dims,
            weights,
            hidden_bias: false,
        };
        model.check_invariants()?;
        Ok(model)
    }

    /// Same architecture and constant-unit convention, new weight values.
    pub fn with_weights(&self, weights: Vec<Array2<f64>>) -> Result<Self> {
        let model = ReluMlp {
            layer_dims: self.layer_dims.clone(),
            weights,
            hidden_bias: self.hidden_bias,
        };
        model.check_invariants()?;
        Ok(model)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    /// Whether hidden layers carry the frozen constant-1 unit.
    pub fn has_hidden_bias(&self) -> bool {
        self.hidden_bias
    }

    pub(crate) fn set_hidden_bias(&mut self, on: bool) {
        self.hidden_bias = on;
    }

    /// Number of hidden layers (the paper-style depth `L`).
    pub fn hidden_layers(&self) -> usize {
        self.layer_dims.len() - 2
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.weights.len() != self.layer_dims.len() - 1 {
            return Err(Error::Shape(format!(
                "expected {} weight matrices, got {}",
                self.layer_dims.len() - 1,
                self.weights.len()
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            let want = (self.layer_dims[l + 1], self.layer_dims[l]);
            if w.dim() != want {
                return Err(Error::Shape(format!(
                    "weight matrix {} has shape {:?}, expected {:?}",
                    l,
                    w.dim(),
                    want
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "weight matrix {} contains a non-finite entry",
                    l
                )));
            }
        }
        Ok(())
    }

    /// Rewrites each hidden layer's constant-unit incoming row to the
    /// frozen one-hot pattern: a single 1.0 edge from the previous layer's
    /// constant unit (for the first hidden layer, from the augmented input
    /// component). Those rows receive zero gradient during training, so the
    /// unit's activation stays `relu(1) = 1` whenever the input is
    /// bias-augmented.
    fn reset_frozen_rows(&mut self) {
        let n_layers = self.layer_dims.len();
        for l in 1..n_layers - 1 {
            let unit = self.layer_dims[l] - 1;
            let prev = self.layer_dims[l - 1] - 1;
            let mut row = self.weights[l - 1].row_mut(unit);
            row.fill(0.0);
            row[prev] = 1.0;
        }
    }

    /// True when every hidden layer's matrix carries a frozen
    /// constant-unit row matching the convention of [`ReluMlp::with_seed`].
    /// False for networks without hidden layers, where the convention is
    /// vacuous.
    pub(crate) fn frozen_row_pattern(&self) -> bool {
        let n_layers = self.layer_dims.len();
        n_layers > 2
            && (1..n_layers - 1).all(|l| {
                let unit = self.layer_dims[l] - 1;
                let prev = self.layer_dims[l - 1] - 1;
                let row = self.weights[l - 1].row(unit);
                row.iter()
                    .enumerate()
                    .all(|(j, &v)| if j == prev { v == 1.0 } else { v == 0.0 })
            })
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.layer_dims[0] {
            return Err(Error::Shape(format!(
                "input has length {}, expected d_0 = {}",
                len, self.layer_dims[0]
            )));
        }
        Ok(())
    }

    /// Forward pass for a single bias-augmented input (last component 1).
    /// Hidden layers apply elementwise `max(0, .)`; the output layer is
    /// linear.
    pub fn forward(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_input(x.len())?;
        let mut a = x.to_owned();
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let mut z = w.dot(&a);
            if l != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass over a batch, one example per row. Returns logits of
    /// shape `(n, d_out)`.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut a = x.to_owned();
        let last = self.weights.len() - 1;
        for (l, w) in self.weights.iter().enumerate() {
            let mut z = a.dot(&w.t());
            if l != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Path-norm proxy: the sum over all input-to-output paths of the
    /// product of absolute edge weights, evaluated as the chained product
    /// `1^T |W_L| ... |W_0| 1`.
    pub fn path_norm_proxy(&self) -> f64 {
        let mut v = Array1::<f64>::ones(self.layer_dims[0]);
        for w in &self.weights {
            v = w.mapv(f64::abs).dot(&v);
        }
        v.sum()
    }
}
