//! Quantitative instruments: empirical and ground-truth risk,
//! generalization error, the linear noise bound with its omega variants,
//! the cross-entropy expansion identity check, and the regression fits.

mod regression;

pub use regression::{fit_pathnorm_growth, fit_plane, PowerLawFit, RegressionFit};

use ndarray::{Array2, ArrayView2};

use crate::data::{GridWorld, LabelSource, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, ReluMlp};

/// Slack applied when deciding whether the bound holds, absorbing float
/// rounding in the enumeration sums.
pub const BOUND_SLACK: f64 = 1e-9;

/// How to instantiate the output bound multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaVariant {
    /// Largest absolute logit over the evaluation grid at measurement time.
    MeasuredOutput,
    /// The model's current path-norm proxy.
    PathNorm,
    /// `c0 * t^(epochs * layers)` with a configured constant.
    Polynomial {
        c0: f64,
        round: usize,
        epochs: usize,
        layers: usize,
    },
}

impl OmegaVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            OmegaVariant::MeasuredOutput => "cf",
            OmegaVariant::PathNorm => "pnp",
            OmegaVariant::Polynomial { .. } => "poly",
        }
    }
}

/// One evaluation of the linear noise bound against the observed
/// generalization error.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub variant: OmegaVariant,
    /// The weighted expected total-variation-style term over the grid.
    pub expectation_term: f64,
    pub omega: f64,
    /// `omega * expectation_term`.
    pub bound: f64,
    pub observed: f64,
    pub holds: bool,
}

/// Per-communication-round record.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub client_losses: Vec<f64>,
    pub test_accuracy: f64,
    pub empirical_risk: f64,
    pub ground_truth_risk: f64,
    pub generalization_error: f64,
    pub path_norm: f64,
    pub bound: Option<BoundReport>,
}

fn check_weights(weights: &[f64], clients: usize) -> Result<()> {
    if weights.len() != clients {
        return Err(Error::Domain(format!(
            "{} weights for {clients} clients",
            weights.len()
        )));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Domain("client weights must be nonnegative".into()));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "client weights sum to {s}, expected 1"
        )));
    }
    Ok(())
}

/// Cross-entropy of every class at every grid point: entry `(g, i)` is the
/// loss of predicting the model's softmax at point `g` against label `i`.
fn grid_losses(model: &ReluMlp, world: &GridWorld) -> Result<Array2<f64>> {
    let logits = model.forward_batch(world.augmented_points().view())?;
    let c = world.class_count();
    if logits.ncols() != c {
        return Err(Error::Shape(format!(
            "model outputs {} classes, world has {c}",
            logits.ncols()
        )));
    }
    let mut out = Array2::zeros((world.point_count(), c));
    for (g, row) in logits.rows().into_iter().enumerate() {
        let lse = log_sum_exp(row);
        for i in 0..c {
            out[[g, i]] = lse - row[i];
        }
    }
    Ok(out)
}

fn expected_loss(losses: &Array2<f64>, marginal: &[f64], table: ArrayView2<f64>) -> f64 {
    let mut total = 0.0;
    for g in 0..losses.nrows() {
        let mut point = 0.0;
        for i in 0..losses.ncols() {
            point += table[[g, i]] * losses[[g, i]];
        }
        total += marginal[g] * point;
    }
    total
}

/// Empirical risk on a world: client-weighted expected loss under each
/// client's (possibly noisy) label law, by exact enumeration.
pub fn empirical_risk_world(model: &ReluMlp, world: &GridWorld, weights: &[f64]) -> Result<f64> {
    check_weights(weights, world.client_count())?;
    let losses = grid_losses(model, world)?;
    Ok(weights
        .iter()
        .enumerate()
        .map(|(k, &w)| w * expected_loss(&losses, world.marginal(), world.client_conditionals(k)))
        .sum())
}

/// Ground-truth risk on a world: expected loss under the shared clean law.
/// The client weights sum out, but stay in the signature for symmetry with
/// the empirical risk.
pub fn ground_truth_risk_world(model: &ReluMlp, world: &GridWorld, weights: &[f64]) -> Result<f64> {
    check_weights(weights, world.client_count())?;
    let losses = grid_losses(model, world)?;
    let per_truth = expected_loss(&losses, world.marginal(), world.ground_truth());
    Ok(weights.iter().map(|&w| w * per_truth).sum())
}

/// `|ground-truth risk - empirical risk|` on a world.
pub fn generalization_error_world(
    model: &ReluMlp,
    world: &GridWorld,
    weights: &[f64],
) -> Result<f64> {
    Ok((ground_truth_risk_world(model, world, weights)?
        - empirical_risk_world(model, world, weights)?)
    .abs())
}

/// Client-weighted mean loss over finite shards (the dataset counterpart
/// of [`empirical_risk_world`]).
pub fn empirical_risk_datasets(
    model: &ReluMlp,
    shards: &[LabeledDataset],
    weights: &[f64],
) -> Result<f64> {
    check_weights(weights, shards.len())?;
    let mut total = 0.0;
    for (shard, &w) in shards.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let logits = model.forward_batch(shard.augmented().view())?;
        let mut sum = 0.0;
        for (i, &y) in shard.labels().iter().enumerate() {
            if y >= model.output_dim() {
                return Err(Error::Domain(format!(
                    "label {y} out of range for {} outputs",
                    model.output_dim()
                )));
            }
            sum += log_sum_exp(logits.row(i)) - logits[[i, y]];
        }
        total += w * sum / shard.len() as f64;
    }
    Ok(total)
}

/// Shard weights `n_k / n`.
pub fn shard_weights(sizes: &[usize]) -> Vec<f64> {
    let n: usize = sizes.iter().sum();
    sizes.iter().map(|&s| s as f64 / n as f64).collect()
}

/// Empirical and ground-truth risk over shards that share features but
/// carry noisy vs original labels, computed from a single forward pass per
/// shard. Each shard is `(augmented features, noisy labels, clean labels)`.
pub fn dataset_risks(
    model: &ReluMlp,
    shards: &[(ArrayView2<f64>, &[usize], &[usize])],
    weights: &[f64],
) -> Result<(f64, f64)> {
    check_weights(weights, shards.len())?;
    let mut noisy_total = 0.0;
    let mut clean_total = 0.0;
    for ((x, noisy, clean), &w) in shards.iter().zip(weights) {
        let n = x.nrows();
        if noisy.len() != n || clean.len() != n {
            return Err(Error::Shape(format!(
                "shard has {n} rows but {} noisy / {} clean labels",
                noisy.len(),
                clean.len()
            )));
        }
        let logits = model.forward_batch(*x)?;
        let mut noisy_sum = 0.0;
        let mut clean_sum = 0.0;
        for i in 0..n {
            let row = logits.row(i);
            let lse = log_sum_exp(row);
            noisy_sum += lse - row[noisy[i]];
            clean_sum += lse - row[clean[i]];
        }
        noisy_total += w * noisy_sum / n as f64;
        clean_total += w * clean_sum / n as f64;
    }
    Ok((noisy_total, clean_total))
}

/// Argmax accuracy over a pre-augmented feature matrix.
pub fn accuracy_on(model: &ReluMlp, x_aug: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    if x_aug.nrows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} labels",
            x_aug.nrows(),
            labels.len()
        )));
    }
    let logits = model.forward_batch(x_aug)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let row = logits.row(i);
            let pred = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            pred == y
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// The bound's expectation term:
/// `E_X[ sum_i sum_k w_k |Pr_truth(Y=i|X) - Pr_client_k(Y=i|X)| ]`,
/// enumerated exactly over the grid. The shared-marginal assumption holds
/// by `GridWorld` construction.
pub fn noise_expectation_term(world: &GridWorld, weights: &[f64]) -> Result<f64> {
    check_weights(weights, world.client_count())?;
    let truth = world.ground_truth();
    let mut total = 0.0;
    for g in 0..world.point_count() {
        let mut inner = 0.0;
        for (k, &w) in weights.iter().enumerate() {
            let table = world.client_conditionals(k);
            for i in 0..world.class_count() {
                inner += w * (truth[[g, i]] - table[[g, i]]).abs();
            }
        }
        total += world.marginal()[g] * inner;
    }
    Ok(total)
}

/// Evaluates `G(W) <= omega * expectation_term` for the chosen omega
/// variant, reporting every intermediate quantity.
pub fn theorem_bound(
    model: &ReluMlp,
    world: &GridWorld,
    weights: &[f64],
    variant: OmegaVariant,
) -> Result<BoundReport> {
    let expectation_term = noise_expectation_term(world, weights)?;
    let observed = generalization_error_world(model, world, weights)?;
    let omega = match variant {
        OmegaVariant::MeasuredOutput => {
            let logits = model.forward_batch(world.augmented_points().view())?;
            logits.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
        }
        OmegaVariant::PathNorm => model.path_norm_proxy(),
        OmegaVariant::Polynomial {
            c0,
            round,
            epochs,
            layers,
        } => {
            if c0 <= 0.0 || round == 0 {
                return Err(Error::Domain(
                    "polynomial omega needs c0 > 0 and round >= 1".into(),
                ));
            }
            c0 * (round as f64).powi((epochs * layers) as i32)
        }
    };
    let bound = omega * expectation_term;
    Ok(BoundReport {
        variant,
        expectation_term,
        omega,
        bound,
        observed,
        holds: observed <= bound + BOUND_SLACK,
    })
}

/// Both sides of the expected-cross-entropy expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    /// Direct enumeration of `E[loss]`.
    pub direct: f64,
    /// Class-conditional expansion
    /// `-sum_i Pr(Y=i) E_{X|Y=i}[f_i(X) - log sum_r exp f_r(X)]`.
    pub expanded: f64,
    pub diff: f64,
}

/// Computes the expected cross-entropy under one of the world's label laws
/// via both routes. Classes with zero marginal probability are skipped
/// (their conditional expectation is undefined).
pub fn lemma_identity_check(
    model: &ReluMlp,
    world: &GridWorld,
    source: LabelSource,
) -> Result<IdentityCheck> {
    let table = world.conditionals(source);
    let losses = grid_losses(model, world)?;
    let direct = expected_loss(&losses, world.marginal(), table);

    let logits = model.forward_batch(world.augmented_points().view())?;
    let c = world.class_count();
    let mut expanded = 0.0;
    for i in 0..c {
        // Pr(Y=i) and E_{X|Y=i}[f_i - lse]
        let class_mass: f64 = (0..world.point_count())
            .map(|g| world.marginal()[g] * table[[g, i]])
            .sum();
        if class_mass == 0.0 {
            continue;
        }
        let mut conditional = 0.0;
        for g in 0..world.point_count() {
            let joint = world.marginal()[g] * table[[g, i]];
            if joint == 0.0 {
                continue;
            }
            let row = logits.row(g);
            conditional += (joint / class_mass) * (row[i] - log_sum_exp(row));
        }
        expanded -= class_mass * conditional;
    }
    Ok(IdentityCheck {
        direct,
        expanded,
        diff: (direct - expanded).abs(),
    })
}

/// Expected accuracy of the model's argmax prediction under the world's
/// clean label law.
pub fn world_accuracy(model: &ReluMlp, world: &GridWorld) -> Result<f64> {
    let logits = model.forward_batch(world.augmented_points().view())?;
    let truth = world.ground_truth();
    let mut acc = 0.0;
    for g in 0..world.point_count() {
        let row = logits.row(g);
        let pred = (0..row.len())
            .max_by(|&a, &b| row[a].total_cmp(&row[b]))
            .unwrap();
        acc += world.marginal()[g] * truth[[g, pred]];
    }
    Ok(acc)
}

/// Fraction of examples whose argmax logit matches the label.
pub fn dataset_accuracy(model: &ReluMlp, dataset: &LabeledDataset) -> Result<f64> {
    accuracy_on(model, dataset.augmented().view(), dataset.labels())
}

/// Accuracy-vs-noise regression: `accuracy ~ b0 + sum_k b_k * wp_k`.
pub fn fit_accuracy_vs_noise(points: &[(Vec<f64>, f64)]) -> Result<RegressionFit> {
    fit_plane(points)
}

/// Metrics CSV header for a run with `clients` clients.
pub fn csv_header(clients: usize) -> String {
    let mut cols = vec!["run_id".to_string(), "strategy".to_string()];
    cols.extend((1..=clients).map(|k| format!("wp_{k}")));
    cols.push("round".into());
    cols.extend((1..=clients).map(|k| format!("loss_{k}")));
    cols.extend(
        [
            "test_accuracy",
            "empirical_risk",
            "ground_truth_risk",
            "generalization_error",
            "path_norm_proxy",
            "bound_variant",
            "bound_value",
            "bound_holds",
        ]
        .map(String::from),
    );
    cols.join(",")
}

/// One metrics CSV row. Bound columns are empty when no bound was
/// computable for the run.
pub fn csv_row(run_id: &str, strategy: &str, wps: &[f64], m: &RoundMetrics) -> String {
    let mut cols = vec![run_id.to_string(), strategy.to_string()];
    cols.extend(wps.iter().map(|w| format!("{w}")));
    cols.push(format!("{}", m.round));
    cols.extend(m.client_losses.iter().map(|l| format!("{l}")));
    cols.push(format!("{}", m.test_accuracy));
    cols.push(format!("{}", m.empirical_risk));
    cols.push(format!("{}", m.ground_truth_risk));
    cols.push(format!("{}", m.generalization_error));
    cols.push(format!("{}", m.path_norm));
    match &m.bound {
        Some(b) => {
            cols.push(b.variant.tag().into());
            cols.push(format!("{}", b.bound));
            cols.push(format!("{}", b.holds));
        }
        None => {
            cols.push("none".into());
            cols.push(String::new());
            cols.push(String::new());
        }
    }
    cols.join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fig2_worlds, two_class_grid};
    use crate::nn::ReluMlp;
    use ndarray::array;

    fn constant_logit_model(input_dim: usize, classes: usize) -> ReluMlp {
        ReluMlp::from_weights(
            vec![input_dim, classes],
            vec![Array2::zeros((classes, input_dim))],
        )
        .unwrap()
    }

    fn random_model(seed: u64) -> ReluMlp {
        ReluMlp::with_seed(&[3, 8, 6, 2], seed).unwrap()
    }

    #[test]
    fn worked_example_expectations() {
        let (w1, w2) = fig2_worlds();
        let weights = [0.5, 0.5];
        let t1 = noise_expectation_term(&w1, &weights).unwrap();
        let t2 = noise_expectation_term(&w2, &weights).unwrap();
        assert!((t1 - 3.0 / 25.0).abs() < 1e-12, "{t1}");
        assert!((t2 - 4.0 / 25.0).abs() < 1e-12, "{t2}");
    }

    #[test]
    fn clean_system_has_zero_term_and_zero_error() {
        let world = two_class_grid(&[vec![], vec![]]).unwrap();
        let weights = [0.5, 0.5];
        assert_eq!(noise_expectation_term(&world, &weights).unwrap(), 0.0);
        let model = random_model(4);
        let g = generalization_error_world(&model, &world, &weights).unwrap();
        assert!(g < 1e-15);
        let report = theorem_bound(&model, &world, &weights, OmegaVariant::PathNorm).unwrap();
        assert_eq!(report.bound, 0.0);
        assert!(report.holds);
    }

    #[test]
    fn term_is_symmetric_under_client_swap() {
        let a = two_class_grid(&[vec![0, 3, 6], vec![10]]).unwrap();
        let b = two_class_grid(&[vec![10], vec![0, 3, 6]]).unwrap();
        let weights = [0.5, 0.5];
        let ta = noise_expectation_term(&a, &weights).unwrap();
        let tb = noise_expectation_term(&b, &weights).unwrap();
        assert!((ta - tb).abs() < 1e-15);
    }

    #[test]
    fn term_scales_linearly_with_disjoint_flips() {
        let single = two_class_grid(&[vec![0, 3, 6], vec![]]).unwrap();
        let double = two_class_grid(&[vec![0, 3, 6, 9, 12, 15], vec![]]).unwrap();
        let weights = [0.5, 0.5];
        let t1 = noise_expectation_term(&single, &weights).unwrap();
        let t2 = noise_expectation_term(&double, &weights).unwrap();
        assert!((t2 - 2.0 * t1).abs() < 1e-15);
    }

    #[test]
    fn term_stays_within_total_variation_range() {
        let world = two_class_grid(&[(0..25).collect(), (0..25).collect()]).unwrap();
        let t = noise_expectation_term(&world, &[0.5, 0.5]).unwrap();
        assert!(t <= 2.0 + 1e-15);
        assert!((t - 2.0).abs() < 1e-12); // every point fully swapped
    }

    #[test]
    fn constant_logits_risk_is_ln_c() {
        let (w1, _) = fig2_worlds();
        let model = constant_logit_model(3, 2);
        let weights = [0.5, 0.5];
        let l = empirical_risk_world(&model, &w1, &weights).unwrap();
        assert!((l - 2.0f64.ln()).abs() < 1e-12);
        let lt = ground_truth_risk_world(&model, &w1, &weights).unwrap();
        assert!((lt - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn clean_clients_make_risks_equal() {
        let world = two_class_grid(&[vec![], vec![]]).unwrap();
        let model = random_model(7);
        let weights = [0.5, 0.5];
        let l = empirical_risk_world(&model, &world, &weights).unwrap();
        let lt = ground_truth_risk_world(&model, &world, &weights).unwrap();
        assert!((l - lt).abs() < 1e-15);
    }

    #[test]
    fn single_example_dataset_risk_is_its_loss() {
        let ds = LabeledDataset::new(array![[0.25, 0.75]], vec![1], 2).unwrap();
        let model = ReluMlp::from_weights(
            vec![3, 2],
            vec![array![[0.5, -0.25, 0.1], [0.3, 0.9, -0.2]]],
        )
        .unwrap();
        let risk = empirical_risk_datasets(&model, &[ds.clone()], &[1.0]).unwrap();
        let logits = model.forward(ds.augmented().row(0)).unwrap();
        let direct = crate::nn::cross_entropy_loss(logits.view(), 1, 2).unwrap();
        assert!((risk - direct).abs() < 1e-15);
    }

    #[test]
    fn equal_clients_match_single_client_risk() {
        let (w1, _) = fig2_worlds();
        let model = random_model(9);
        // both "clients" use client 0's law: build a 2-client world where
        // client 1 copies client 0
        let dup = two_class_grid(&[vec![0, 3, 6], vec![0, 3, 6]]).unwrap();
        let both = empirical_risk_world(&model, &dup, &[0.5, 0.5]).unwrap();
        let single_world = two_class_grid(&[vec![0, 3, 6]]).unwrap();
        let single = empirical_risk_world(&model, &single_world, &[1.0]).unwrap();
        assert!((both - single).abs() < 1e-12);
        // and world 1's truth-risk restricted to clean client 2 equals L on it
        let weights = [0.0, 1.0];
        let l = empirical_risk_world(&model, &w1, &weights).unwrap();
        let lt = ground_truth_risk_world(&model, &w1, &weights).unwrap();
        assert!((l - lt).abs() < 1e-15);
    }

    #[test]
    fn enumeration_matches_monte_carlo() {
        let (w1, _) = fig2_worlds();
        let model = random_model(11);
        let exact = empirical_risk_world(&model, &w1, &[1.0, 0.0]).unwrap();
        let (mc, se) = crate::oracle::monte_carlo_risk(&model, &w1, Some(0), 1_000_000, 99);
        assert!(
            (exact - mc).abs() < 3.0 * se,
            "exact {exact} vs mc {mc} (3se {})",
            3.0 * se
        );
    }

    #[test]
    fn measured_output_bound_on_forged_model() {
        // Output layer reads only the constant input component, so logits
        // are (0, 5) at every grid point and the measured omega is 5.
        let (w1, _) = fig2_worlds();
        let model =
            ReluMlp::from_weights(vec![3, 2], vec![array![[0.0, 0.0, 0.0], [0.0, 0.0, 5.0]]])
                .unwrap();
        let report = theorem_bound(&model, &w1, &[0.5, 0.5], OmegaVariant::MeasuredOutput).unwrap();
        assert!((report.omega - 5.0).abs() < 1e-12);
        assert!((report.bound - 0.6).abs() < 1e-12);
        assert!(report.holds);
    }

    #[test]
    fn pathnorm_omega_dominates_measured_omega() {
        let (_, w2) = fig2_worlds();
        for seed in 0..5 {
            let model = random_model(seed);
            let cf = theorem_bound(&model, &w2, &[0.5, 0.5], OmegaVariant::MeasuredOutput).unwrap();
            let pnp = theorem_bound(&model, &w2, &[0.5, 0.5], OmegaVariant::PathNorm).unwrap();
            assert!(pnp.omega >= cf.omega);
            assert!(cf.holds && pnp.holds);
        }
    }

    #[test]
    fn polynomial_variant_validates_inputs() {
        let (w1, _) = fig2_worlds();
        let model = random_model(1);
        let bad = OmegaVariant::Polynomial {
            c0: 0.0,
            round: 1,
            epochs: 5,
            layers: 2,
        };
        assert!(theorem_bound(&model, &w1, &[0.5, 0.5], bad).is_err());
        let ok = OmegaVariant::Polynomial {
            c0: 1.0,
            round: 3,
            epochs: 2,
            layers: 2,
        };
        let report = theorem_bound(&model, &w1, &[0.5, 0.5], ok).unwrap();
        assert!((report.omega - 81.0).abs() < 1e-12);
    }

    #[test]
    fn identity_check_on_random_models() {
        let (w1, w2) = fig2_worlds();
        for seed in 0..10 {
            let model = random_model(seed);
            for world in [&w1, &w2] {
                for source in [
                    LabelSource::GroundTruth,
                    LabelSource::Client(0),
                    LabelSource::Client(1),
                ] {
                    let check = lemma_identity_check(&model, world, source).unwrap();
                    assert!(check.diff < 1e-9, "diff {}", check.diff);
                }
            }
        }
    }

    #[test]
    fn identity_check_constant_model_gives_ln_c() {
        let (w1, _) = fig2_worlds();
        let model = constant_logit_model(3, 2);
        let check = lemma_identity_check(&model, &w1, LabelSource::GroundTruth).unwrap();
        assert!((check.direct - 2.0f64.ln()).abs() < 1e-12);
        assert!((check.expanded - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identity_check_skips_empty_classes() {
        // all mass on class 0
        let points = Array2::from_elem((2, 1), 0.5);
        let truth = array![[1.0, 0.0], [1.0, 0.0]];
        let world = GridWorld::new(points, 2, vec![0.5, 0.5], truth.clone(), vec![truth]).unwrap();
        let model = ReluMlp::with_seed(&[2, 4, 2], 5).unwrap();
        let check = lemma_identity_check(&model, &world, LabelSource::GroundTruth).unwrap();
        assert!(check.diff < 1e-12);
    }

    #[test]
    fn world_accuracy_of_perfect_and_inverted_models() {
        let world = two_class_grid(&[vec![], vec![]]).unwrap();
        // logits = (+margin for class A) when the first coordinate < 0.5
        let good = ReluMlp::from_weights(
            vec![3, 2],
            vec![array![[-10.0, 0.0, 4.0], [10.0, 0.0, -4.0]]],
        )
        .unwrap();
        let acc = world_accuracy(&good, &world).unwrap();
        assert!((acc - 1.0).abs() < 1e-12);
        let bad = ReluMlp::from_weights(
            vec![3, 2],
            vec![array![[10.0, 0.0, -4.0], [-10.0, 0.0, 4.0]]],
        )
        .unwrap();
        let acc = world_accuracy(&bad, &world).unwrap();
        assert!(acc < 1e-12);
    }

    #[test]
    fn csv_row_shape_matches_header() {
        let m = RoundMetrics {
            round: 3,
            client_losses: vec![0.5, 0.25],
            test_accuracy: 0.9,
            empirical_risk: 0.4,
            ground_truth_risk: 0.3,
            generalization_error: 0.1,
            path_norm: 12.5,
            bound: None,
        };
        let header = csv_header(2);
        let row = csv_row("cell", "fedavg", &[0.1, 0.2], &m);
        assert_eq!(header.split(',').count(), row.split(',').count());
        assert!(row.contains(",none,,"));
    }
}
