//! Round-based federated training: local SGD per client, upload, server
//! aggregation through a pluggable strategy, broadcast.
//!
//! Every client participates in every round. Per-client training seeds are
//! derived from the master seed, the client id, and the round index, so
//! the trajectory is bit-reproducible no matter how client work is
//! scheduled.

use ndarray::Array2;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{sgd_epochs_full, ReluMlp, SgdConfig};

/// Server-side aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    FedAvg,
    Scaffold,
    FedNova,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::Scaffold => "scaffold",
            Strategy::FedNova => "fednova",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fedavg" => Ok(Strategy::FedAvg),
            "scaffold" => Ok(Strategy::Scaffold),
            "fednova" => Ok(Strategy::FedNova),
            other => Err(Error::Domain(format!(
                "unknown strategy {other:?} (expected fedavg, scaffold, or fednova)"
            ))),
        }
    }
}

/// Round-engine configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub rounds: usize,
    /// Server-side interpolation weight in `[0,1]`.
    pub global_lr: f64,
    pub local_lr: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub strategy: Strategy,
    pub master_seed: u64,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Domain("rounds must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.global_lr) {
            return Err(Error::Domain(format!(
                "global learning rate {} outside [0,1]",
                self.global_lr
            )));
        }
        SgdConfig {
            learning_rate: self.local_lr,
            batch_size: self.batch_size,
            epochs: self.local_epochs,
            seed: 0,
        }
        .validate()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds arbitrary components into one well-mixed seed; used everywhere a
/// deterministic sub-seed is derived from identifying values.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut acc = 0x243F_6A88_85A3_08D3u64;
    for &p in parts {
        let mut state = acc ^ p.wrapping_mul(0xA076_1D64_78BD_642F);
        acc = splitmix64(&mut state);
    }
    acc
}

/// Deterministic per-client, per-round training seed.
pub fn derive_seed(master: u64, client: u64, round: u64) -> u64 {
    mix_seed(&[master, client, round])
}

/// One participant: its shard (already noised as configured), its local
/// model copy, and optional strategy-private control variates.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    features: Array2<f64>,
    labels: Vec<usize>,
    pub model: ReluMlp,
    control: Option<Vec<Array2<f64>>>,
}

impl ClientState {
    pub fn new(
        id: usize,
        shard: &LabeledDataset,
        global: &ReluMlp,
        strategy: Strategy,
    ) -> Result<Self> {
        let features = shard.augmented();
        if features.ncols() != global.input_dim() {
            return Err(Error::Shape(format!(
                "client {id}: augmented feature dim {} != model d_0 {}",
                features.ncols(),
                global.input_dim()
            )));
        }
        if shard.class_count() != global.output_dim() {
            return Err(Error::Shape(format!(
                "client {id}: {} classes but model outputs {}",
                shard.class_count(),
                global.output_dim()
            )));
        }
        let control = match strategy {
            Strategy::Scaffold => Some(zeros_like(global.weights())),
            _ => None,
        };
        Ok(ClientState {
            id,
            features,
            labels: shard.labels().to_vec(),
            model: global.clone(),
            control,
        })
    }

    pub fn shard_size(&self) -> usize {
        self.labels.len()
    }

    /// The client's bias-augmented training features.
    pub fn features_aug(&self) -> ndarray::ArrayView2<'_, f64> {
        self.features.view()
    }

    /// The client's (possibly noisy) training labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Local steps per round: `epochs * ceil(n_k / batch_size)`.
    pub fn local_steps(&self, cfg: &FederationConfig) -> usize {
        cfg.local_epochs * self.labels.len().div_ceil(cfg.batch_size)
    }
}

/// Server: the global model, the round counter, and (for SCAFFOLD) the
/// server control variate.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub global: ReluMlp,
    pub round: usize,
    control: Option<Vec<Array2<f64>>>,
}

impl ServerState {
    pub fn new(global: ReluMlp, strategy: Strategy) -> Self {
        let control = match strategy {
            Strategy::Scaffold => Some(zeros_like(global.weights())),
            _ => None,
        };
        ServerState {
            global,
            round: 0,
            control,
        }
    }
}

/// Per-round record: the mean training loss each client saw during its
/// local pass.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub round: usize,
    pub client_losses: Vec<f64>,
}

fn zeros_like(weights: &[Array2<f64>]) -> Vec<Array2<f64>> {
    weights.iter().map(|w| Array2::zeros(w.dim())).collect()
}

fn check_same_shape(a: &[Array2<f64>], b: &[Array2<f64>], what: &str) -> Result<()> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.dim() != y.dim()) {
        return Err(Error::Protocol(format!("{what}: parameter shape mismatch")));
    }
    Ok(())
}

/// Plain parameter averaging: `(1 - eta) * W + eta * mean_k(w_k)`.
pub fn aggregate_fedavg(
    client_weights: &[Vec<Array2<f64>>],
    global: &[Array2<f64>],
    eta: f64,
) -> Result<Vec<Array2<f64>>> {
    if client_weights.is_empty() {
        return Err(Error::Protocol("no client updates to aggregate".into()));
    }
    for (k, w) in client_weights.iter().enumerate() {
        check_same_shape(w, global, &format!("client {k}"))?;
    }
    let n = client_weights.len() as f64;
    let mut out = Vec::with_capacity(global.len());
    for l in 0..global.len() {
        let mut mean = client_weights[0][l].clone();
        for w in &client_weights[1..] {
            mean += &w[l];
        }
        mean.mapv_inplace(|v| v / n);
        out.push(&global[l] * (1.0 - eta) + &mean * eta);
    }
    Ok(out)
}

/// Normalized averaging: client deltas are divided by their local step
/// counts, then the mean delta is rescaled by the mean step count:
/// `W - eta * tau_eff * mean_k((W - w_k) / tau_k)`.
pub fn aggregate_fednova(
    client_weights: &[Vec<Array2<f64>>],
    local_steps: &[usize],
    global: &[Array2<f64>],
    eta: f64,
) -> Result<Vec<Array2<f64>>> {
    if client_weights.is_empty() {
        return Err(Error::Protocol("no client updates to aggregate".into()));
    }
    if local_steps.len() != client_weights.len() {
        return Err(Error::Protocol(format!(
            "{} step counts for {} clients",
            local_steps.len(),
            client_weights.len()
        )));
    }
    if let Some(&zero) = local_steps.iter().find(|&&t| t == 0) {
        return Err(Error::Domain(format!(
            "local step count {zero} must be >= 1"
        )));
    }
    for (k, w) in client_weights.iter().enumerate() {
        check_same_shape(w, global, &format!("client {k}"))?;
    }
    let n = client_weights.len() as f64;
    let tau_eff = local_steps.iter().map(|&t| t as f64).sum::<f64>() / n;
    let mut out = Vec::with_capacity(global.len());
    for l in 0..global.len() {
        let mut mean_delta = Array2::zeros(global[l].dim());
        for (w, &tau) in client_weights.iter().zip(local_steps) {
            mean_delta += &((&global[l] - &w[l]) / tau as f64);
        }
        mean_delta.mapv_inplace(|v| v / n);
        out.push(&global[l] - &(mean_delta * (eta * tau_eff)));
    }
    Ok(out)
}

/// Control-variate aggregation: parameters average exactly like FedAvg;
/// the server variate absorbs the mean client-variate delta (all clients
/// participate).
pub fn aggregate_scaffold(
    client_weights: &[Vec<Array2<f64>>],
    variate_deltas: &[Vec<Array2<f64>>],
    global: &[Array2<f64>],
    server_control: &[Array2<f64>],
    eta: f64,
) -> Result<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
    if variate_deltas.len() != client_weights.len() {
        return Err(Error::Protocol(format!(
            "{} variate deltas for {} clients",
            variate_deltas.len(),
            client_weights.len()
        )));
    }
    for (k, dv) in variate_deltas.iter().enumerate() {
        check_same_shape(dv, global, &format!("client {k} control variate"))?;
    }
    let new_global = aggregate_fedavg(client_weights, global, eta)?;
    let n = client_weights.len() as f64;
    let mut new_control = Vec::with_capacity(server_control.len());
    for l in 0..server_control.len() {
        let mut mean = variate_deltas[0][l].clone();
        for dv in &variate_deltas[1..] {
            mean += &dv[l];
        }
        mean.mapv_inplace(|v| v / n);
        new_control.push(&server_control[l] + &mean);
    }
    Ok((new_global, new_control))
}

/// Runs one communication round: every client trains locally for the
/// configured epochs, the server aggregates with the configured strategy,
/// and the new global model is broadcast back to all clients.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut [ClientState],
    cfg: &FederationConfig,
) -> Result<RoundOutcome> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::Protocol("no clients".into()));
    }
    let round = server.round + 1;
    let mut client_losses = Vec::with_capacity(clients.len());
    let mut trained: Vec<Vec<Array2<f64>>> = Vec::with_capacity(clients.len());
    let mut variate_deltas: Vec<Vec<Array2<f64>>> = Vec::new();
    let mut taus = Vec::with_capacity(clients.len());

    for client in clients.iter_mut() {
        check_same_shape(client.model.weights(), server.global.weights(), "broadcast")?;
        let sgd = SgdConfig {
            learning_rate: cfg.local_lr,
            batch_size: cfg.batch_size,
            epochs: cfg.local_epochs,
            seed: derive_seed(cfg.master_seed, client.id as u64, round as u64),
        };
        let shift = match cfg.strategy {
            Strategy::Scaffold => {
                let c_k = client.control.as_ref().ok_or_else(|| {
                    Error::Protocol(format!("client {} missing control variate", client.id))
                })?;
                let c = server
                    .control
                    .as_ref()
                    .ok_or_else(|| Error::Protocol("server missing control variate".into()))?;
                check_same_shape(c_k, server.global.weights(), "client control variate")?;
                // grad - c_k + c, applied as an additive gradient shift
                Some(
                    c.iter()
                        .zip(c_k)
                        .map(|(cs, ck)| cs - ck)
                        .collect::<Vec<_>>(),
                )
            }
            _ => None,
        };
        let run = sgd_epochs_full(
            &client.model,
            client.features.view(),
            &client.labels,
            &sgd,
            shift.as_deref(),
        )?;
        let tau = client.local_steps(cfg);
        if cfg.strategy == Strategy::Scaffold {
            // c_k <- c_k - c + (W - w_k) / (tau * lr)
            let c_k = client.control.as_mut().unwrap();
            let c = server.control.as_ref().unwrap();
            let scale = 1.0 / (tau as f64 * cfg.local_lr);
            let mut delta = Vec::with_capacity(c_k.len());
            for l in 0..c_k.len() {
                let new_ck = &c_k[l] - &c[l]
                    + &((&server.global.weights()[l] - &run.model.weights()[l]) * scale);
                delta.push(&new_ck - &c_k[l]);
                c_k[l] = new_ck;
            }
            variate_deltas.push(delta);
        }
        client_losses.push(run.mean_loss);
        taus.push(tau);
        trained.push(run.model.weights().to_vec());
    }

    let new_weights = match cfg.strategy {
        Strategy::FedAvg => aggregate_fedavg(&trained, server.global.weights(), cfg.global_lr)?,
        Strategy::FedNova => {
            aggregate_fednova(&trained, &taus, server.global.weights(), cfg.global_lr)?
        }
        Strategy::Scaffold => {
            let control = server
                .control
                .as_ref()
                .ok_or_else(|| Error::Protocol("server missing control variate".into()))?;
            let (w, c) = aggregate_scaffold(
                &trained,
                &variate_deltas,
                server.global.weights(),
                control,
                cfg.global_lr,
            )?;
            server.control = Some(c);
            w
        }
    };
    server.global = server.global.with_weights(new_weights)?;
    server.round = round;
    for client in clients.iter_mut() {
        client.model = server.global.clone();
    }
    Ok(RoundOutcome {
        round,
        client_losses,
    })
}

/// Runs `cfg.rounds` rounds, invoking `on_round` after each aggregation
/// with the fresh server state and the round outcome.
pub fn run_federation<F>(
    server: &mut ServerState,
    clients: &mut [ClientState],
    cfg: &FederationConfig,
    mut on_round: F,
) -> Result<()>
where
    F: FnMut(&ServerState, &[ClientState], &RoundOutcome) -> Result<()>,
{
    for _ in 0..cfg.rounds {
        let outcome = run_round(server, clients, cfg)?;
        on_round(server, clients, &outcome)?;
    }
    Ok(())
}
