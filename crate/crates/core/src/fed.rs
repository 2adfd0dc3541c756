//! Federated optimization: FedAvg, SCAFFOLD and Q-ANCHOR.
//!
//! The engine is generic over a [`ClientOracle`], so the same round logic
//! drives both the quantum classifier and the synthetic quadratic testbed.
//!
//! Q-ANCHOR clients take corrected local steps with direction
//! `g̃_i(y) − c_i + c_srv`, then refresh two exponential moving averages at
//! the anchor `x^{r−1}`: the raw control `c_i` from the noisy oracle and the
//! ZNE control `c_{i,ZNE}` from the extrapolated oracle. The server moves
//! `x` by the mean model delta and `c_srv` by `(1/N) Σ Δc_{i,ZNE}`.
//!
//! Randomness is keyed by `(seed, round, client, purpose)`, so local
//! trajectories do not depend on whether control updates consumed draws,
//! and results do not depend on the order clients are scheduled in.

use std::io::Write;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::{self, DataError, Partition};
use crate::exec;
use crate::oracle::{self, GradientMode, NoiseLevel, OracleError, Sample, ZneConfig};
use crate::qsim::CircuitParams;
use crate::rng::RandomStream;

const TAG_SAMPLING: u64 = 1;
const TAG_LOCAL: u64 = 2;
const TAG_CONTROL: u64 = 3;
const TAG_INIT: u64 = 4;

#[derive(Debug, thiserror::Error)]
pub enum FedError {
    #[error("invalid round configuration: {key}: {msg}")]
    Config { key: &'static str, msg: String },
    #[error("client {0} has an empty shard")]
    ClientData(usize),
    #[error("aggregation failed: {0}")]
    Aggregation(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    FedAvg,
    Scaffold,
    QAnchor,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::FedAvg, Algorithm::Scaffold, Algorithm::QAnchor];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedAvg => "fedavg",
            Algorithm::Scaffold => "scaffold",
            Algorithm::QAnchor => "qanchor",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub n_clients: usize,
    pub sample_size: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub global_lr: f64,
    pub local_momentum: f64,
    /// Control EMA rate of Q-ANCHOR.
    pub alpha: f64,
    pub algorithm: Algorithm,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            n_clients: 8,
            sample_size: 8,
            local_epochs: 5,
            batch_size: 16,
            local_lr: 0.1,
            global_lr: 1.0,
            local_momentum: 0.9,
            alpha: 0.1,
            algorithm: Algorithm::QAnchor,
        }
    }
}

fn config_err(key: &'static str, msg: impl Into<String>) -> FedError {
    FedError::Config { key, msg: msg.into() }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<(), FedError> {
        if self.n_clients == 0 {
            return Err(config_err("n_clients", "must be at least 1"));
        }
        if self.sample_size == 0 || self.sample_size > self.n_clients {
            return Err(config_err("sample_size", format!("must lie in 1..={}", self.n_clients)));
        }
        if self.local_epochs == 0 {
            return Err(config_err("local_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size", "must be at least 1"));
        }
        // A zero local step is allowed (identity update).
        if !(self.local_lr >= 0.0 && self.local_lr.is_finite()) {
            return Err(config_err("local_lr", "must be finite and nonnegative"));
        }
        if !(self.global_lr > 0.0 && self.global_lr.is_finite()) {
            return Err(config_err("global_lr", "must be finite and positive"));
        }
        if !(0.0..1.0).contains(&self.local_momentum) {
            return Err(config_err("local_momentum", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(config_err("alpha", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// `K = epochs · ceil(|shard| / batch)`.
    pub fn local_steps(&self, shard_len: usize) -> usize {
        self.local_epochs * shard_len.div_ceil(self.batch_size)
    }

    /// `η̃ = η_g · η_ℓ · K`.
    pub fn effective_stepsize(&self, k: f64) -> f64 {
        self.global_lr * self.local_lr * k
    }
}

/// One oracle call's gradient and the circuit executions it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    pub grad: Vec<f64>,
    pub circuit_evals: u64,
}

/// Per-client stochastic gradient oracles.
///
/// `batch` holds dataset indices drawn from the client's shard.
pub trait ClientOracle: Sync {
    fn dim(&self) -> usize;

    /// Raw noisy oracle `g̃_i`.
    fn gradient(&self, client: usize, x: &[f64], batch: &[usize], stream: &mut RandomStream) -> Result<OracleOutput, FedError>;

    /// ZNE-corrected oracle `g̃_i^ZNE`.
    fn zne_gradient(&self, client: usize, x: &[f64], batch: &[usize], stream: &mut RandomStream) -> Result<OracleOutput, FedError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub x: Vec<f64>,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub id: usize,
    pub control: Vec<f64>,
    pub zne_control: Vec<f64>,
    pub shard: Vec<usize>,
}

impl ClientState {
    pub fn new(id: usize, dim: usize, shard: Vec<usize>) -> Self {
        Self {
            id,
            control: vec![0.0; dim],
            zne_control: vec![0.0; dim],
            shard,
        }
    }
}

/// Global model plus the server control (`c` for SCAFFOLD, `c_srv` for Q-ANCHOR).
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub model: GlobalModel,
    pub control: Vec<f64>,
}

/// A local run's final iterate and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub y: Vec<f64>,
    pub steps: usize,
    pub circuit_evals: u64,
}

/// SGD with momentum on `g̃(y) + correction`; the buffer starts at zero.
fn local_sgd<O: ClientOracle + ?Sized>(
    x: &[f64],
    client: &ClientState,
    correction: Option<&[f64]>,
    cfg: &RoundConfig,
    oracle: &O,
    stream: &mut RandomStream,
) -> Result<LocalOutcome, FedError> {
    if client.shard.is_empty() {
        return Err(FedError::ClientData(client.id));
    }
    let mut y = x.to_vec();
    let mut velocity = vec![0.0; x.len()];
    let mut order = client.shard.clone();
    let mut steps = 0;
    let mut evals = 0;
    for _ in 0..cfg.local_epochs {
        order.shuffle(stream);
        for batch in order.chunks(cfg.batch_size) {
            let out = oracle.gradient(client.id, &y, batch, stream)?;
            evals += out.circuit_evals;
            for j in 0..y.len() {
                let mut d = out.grad[j];
                if let Some(c) = correction {
                    d += c[j];
                }
                velocity[j] = cfg.local_momentum * velocity[j] + d;
                y[j] -= cfg.local_lr * velocity[j];
            }
            steps += 1;
        }
    }
    Ok(LocalOutcome {
        y,
        steps,
        circuit_evals: evals,
    })
}

/// `server − client`, the drift correction added to every local gradient.
fn correction(client_control: &[f64], server_control: &[f64]) -> Vec<f64> {
    client_control
        .iter()
        .zip(server_control)
        .map(|(ci, c)| -ci + c)
        .collect()
}

pub fn local_update_fedavg<O: ClientOracle + ?Sized>(
    x: &[f64],
    client: &ClientState,
    cfg: &RoundConfig,
    oracle: &O,
    stream: &mut RandomStream,
) -> Result<LocalOutcome, FedError> {
    local_sgd(x, client, None, cfg, oracle, stream)
}

/// SCAFFOLD local pass; returns the iterate and the refreshed client control
/// `c_i − c + (x − y_K)/(η_ℓ K_μ)`, where `K_μ` is [`momentum_step_count`].
pub fn local_update_scaffold<O: ClientOracle + ?Sized>(
    x: &[f64],
    client: &ClientState,
    global_control: &[f64],
    cfg: &RoundConfig,
    oracle: &O,
    stream: &mut RandomStream,
) -> Result<(LocalOutcome, Vec<f64>), FedError> {
    let corr = correction(&client.control, global_control);
    let out = local_sgd(x, client, Some(&corr), cfg, oracle, stream)?;
    let denom = momentum_step_count(out.steps, cfg.local_momentum) * cfg.local_lr;
    let new_control = if denom > 0.0 {
        (0..x.len())
            .map(|j| client.control[j] - global_control[j] + (x[j] - out.y[j]) / denom)
            .collect()
    } else {
        client.control.clone()
    };
    Ok((out, new_control))
}

/// Displacement of `k` momentum steps along a constant unit direction, in units of the step size.
/// Equals `k` without momentum.
pub fn momentum_step_count(k: usize, momentum: f64) -> f64 {
    if momentum == 0.0 {
        return k as f64;
    }
    (1..=k).map(|j| (1.0 - momentum.powi(j as i32)) / (1.0 - momentum)).sum()
}

/// Q-ANCHOR corrected local pass with direction `g̃_i(y) − c_i + c_srv`.
pub fn local_update_qanchor<O: ClientOracle + ?Sized>(
    x: &[f64],
    client: &ClientState,
    server_control: &[f64],
    cfg: &RoundConfig,
    oracle: &O,
    stream: &mut RandomStream,
) -> Result<LocalOutcome, FedError> {
    let corr = correction(&client.control, server_control);
    local_sgd(x, client, Some(&corr), cfg, oracle, stream)
}

/// Refreshed Q-ANCHOR controls of one sampled client.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlUpdate {
    pub control: Vec<f64>,
    pub zne_control: Vec<f64>,
    pub zne_delta: Vec<f64>,
    pub circuit_evals: u64,
}

/// EMA refresh of both controls at the anchor `x_prev`, sharing one mini-batch.
pub fn qanchor_control_updates<O: ClientOracle + ?Sized>(
    client: &ClientState,
    x_prev: &[f64],
    cfg: &RoundConfig,
    oracle: &O,
    stream: &mut RandomStream,
) -> Result<ControlUpdate, FedError> {
    if client.shard.is_empty() {
        return Err(FedError::ClientData(client.id));
    }
    let take = cfg.batch_size.min(client.shard.len());
    let mut batch: Vec<usize> = index::sample(stream, client.shard.len(), take)
        .into_iter()
        .map(|i| client.shard[i])
        .collect();
    batch.sort_unstable();
    let raw = oracle.gradient(client.id, x_prev, &batch, stream)?;
    let zne = oracle.zne_gradient(client.id, x_prev, &batch, stream)?;
    let a = cfg.alpha;
    let ema = |old: &[f64], fresh: &[f64]| -> Vec<f64> {
        old.iter().zip(fresh).map(|(o, f)| (1.0 - a) * o + a * f).collect()
    };
    let control = ema(&client.control, &raw.grad);
    let zne_control = ema(&client.zne_control, &zne.grad);
    let zne_delta = zne_control
        .iter()
        .zip(&client.zne_control)
        .map(|(new, old)| new - old)
        .collect();
    Ok(ControlUpdate {
        control,
        zne_control,
        zne_delta,
        circuit_evals: raw.circuit_evals + zne.circuit_evals,
    })
}

/// What a sampled client sends back to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub id: usize,
    /// `y_K − x`.
    pub model_delta: Vec<f64>,
    /// `Δc_i` (SCAFFOLD) or `Δc_{i,ZNE}` (Q-ANCHOR).
    pub control_delta: Option<Vec<f64>>,
}

/// `x ← x + η_g · mean(Δy)`, `control ← control + (1/N) Σ Δc`, merged in
/// ascending client id order.
pub fn server_aggregate(server: &ServerState, updates: &[ClientUpdate], cfg: &RoundConfig) -> Result<ServerState, FedError> {
    if updates.len() != cfg.sample_size {
        return Err(FedError::Aggregation(format!(
            "expected {} client updates, got {}",
            cfg.sample_size,
            updates.len()
        )));
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.id);
    if let Some(w) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(FedError::Aggregation(format!("duplicate client id {}", w[0].id)));
    }
    let dim = server.model.x.len();
    let mut model_sum = vec![0.0; dim];
    let mut control_sum = vec![0.0; dim];
    let mut any_control = false;
    for u in &sorted {
        if u.model_delta.len() != dim {
            return Err(FedError::Dimension { expected: dim, got: u.model_delta.len() });
        }
        model_sum.iter_mut().zip(&u.model_delta).for_each(|(s, d)| *s += d);
        if let Some(dc) = &u.control_delta {
            any_control = true;
            control_sum.iter_mut().zip(dc).for_each(|(s, d)| *s += d);
        }
    }
    let s = cfg.sample_size as f64;
    let n = cfg.n_clients as f64;
    let x = server
        .model
        .x
        .iter()
        .zip(&model_sum)
        .map(|(xi, d)| xi + cfg.global_lr * (d / s))
        .collect();
    let control = if any_control {
        server.control.iter().zip(&control_sum).map(|(c, d)| c + d / n).collect()
    } else {
        server.control.clone()
    };
    Ok(ServerState {
        model: GlobalModel {
            x,
            round: server.model.round + 1,
        },
        control,
    })
}

/// Bookkeeping for one completed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub sampled: Vec<usize>,
    pub circuit_evals: u64,
}

/// Stateful driver of Algorithm-style rounds over a [`ClientOracle`].
pub struct Federation<'o, O: ClientOracle + ?Sized> {
    oracle: &'o O,
    cfg: RoundConfig,
    server: ServerState,
    clients: Vec<ClientState>,
    seed: u64,
    freeze_model: bool,
}

struct ClientResult {
    update: ClientUpdate,
    control: Option<Vec<f64>>,
    zne_control: Option<Vec<f64>>,
    evals: u64,
}

impl<'o, O: ClientOracle + ?Sized> Federation<'o, O> {
    pub fn new(cfg: RoundConfig, oracle: &'o O, shards: Vec<Vec<usize>>, x0: Vec<f64>, seed: u64) -> Result<Self, FedError> {
        cfg.validate()?;
        if shards.len() != cfg.n_clients {
            return Err(config_err(
                "n_clients",
                format!("partition has {} shards but n_clients = {}", shards.len(), cfg.n_clients),
            ));
        }
        if x0.len() != oracle.dim() {
            return Err(FedError::Dimension { expected: oracle.dim(), got: x0.len() });
        }
        if let Some(i) = shards.iter().position(Vec::is_empty) {
            return Err(FedError::ClientData(i));
        }
        let dim = x0.len();
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| ClientState::new(id, dim, shard))
            .collect();
        Ok(Self {
            oracle,
            cfg,
            server: ServerState {
                model: GlobalModel { x: x0, round: 0 },
                control: vec![0.0; dim],
            },
            clients,
            seed,
            freeze_model: false,
        })
    }

    /// Keeps `x` fixed while controls keep updating.
    pub fn set_freeze_model(&mut self, freeze: bool) {
        self.freeze_model = freeze;
    }

    pub fn config(&self) -> &RoundConfig {
        &self.cfg
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn model(&self) -> &[f64] {
        &self.server.model.x
    }

    /// Mean of the per-client local step counts `K_i`.
    pub fn mean_local_steps(&self) -> f64 {
        self.clients.iter().map(|c| self.cfg.local_steps(c.shard.len()) as f64).sum::<f64>() / self.clients.len() as f64
    }

    fn sample_clients(&self, round: usize) -> Vec<usize> {
        let mut rng = RandomStream::derive(self.seed, &[round as u64, TAG_SAMPLING]);
        let mut ids = index::sample(&mut rng, self.cfg.n_clients, self.cfg.sample_size).into_vec();
        ids.sort_unstable();
        ids
    }

    fn run_client(&self, id: usize, round: usize) -> Result<ClientResult, FedError> {
        let client = &self.clients[id];
        let x = &self.server.model.x;
        let mut local = RandomStream::derive(self.seed, &[round as u64, id as u64, TAG_LOCAL]);
        let delta = |y: &[f64]| -> Vec<f64> { y.iter().zip(x).map(|(a, b)| a - b).collect() };
        match self.cfg.algorithm {
            Algorithm::FedAvg => {
                let out = local_update_fedavg(x, client, &self.cfg, self.oracle, &mut local)?;
                Ok(ClientResult {
                    update: ClientUpdate { id, model_delta: delta(&out.y), control_delta: None },
                    control: None,
                    zne_control: None,
                    evals: out.circuit_evals,
                })
            }
            Algorithm::Scaffold => {
                let (out, control) = local_update_scaffold(x, client, &self.server.control, &self.cfg, self.oracle, &mut local)?;
                let dc = control.iter().zip(&client.control).map(|(n, o)| n - o).collect();
                Ok(ClientResult {
                    update: ClientUpdate { id, model_delta: delta(&out.y), control_delta: Some(dc) },
                    control: Some(control),
                    zne_control: None,
                    evals: out.circuit_evals,
                })
            }
            Algorithm::QAnchor => {
                let out = local_update_qanchor(x, client, &self.server.control, &self.cfg, self.oracle, &mut local)?;
                let mut ctl = RandomStream::derive(self.seed, &[round as u64, id as u64, TAG_CONTROL]);
                let cu = qanchor_control_updates(client, x, &self.cfg, self.oracle, &mut ctl)?;
                Ok(ClientResult {
                    update: ClientUpdate { id, model_delta: delta(&out.y), control_delta: Some(cu.zne_delta) },
                    control: Some(cu.control),
                    zne_control: Some(cu.zne_control),
                    evals: out.circuit_evals + cu.circuit_evals,
                })
            }
        }
    }

    /// Runs one communication round.
    pub fn step(&mut self) -> Result<RoundReport, FedError> {
        let round = self.server.model.round + 1;
        let sampled = self.sample_clients(round);
        let results = exec::map_indexed(sampled.len(), |k| self.run_client(sampled[k], round))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let updates: Vec<ClientUpdate> = results.iter().map(|r| r.update.clone()).collect();
        let mut next = server_aggregate(&self.server, &updates, &self.cfg)?;
        if self.freeze_model {
            next.model.x.clone_from(&self.server.model.x);
        }
        self.server = next;
        let mut evals = 0;
        for r in results {
            let client = &mut self.clients[r.update.id];
            if let Some(c) = r.control {
                client.control = c;
            }
            if let Some(c) = r.zne_control {
                client.zne_control = c;
            }
            evals += r.evals;
        }
        Ok(RoundReport {
            round,
            sampled,
            circuit_evals: evals,
        })
    }
}

/// Quantum classifier oracle over a shared training set.
pub struct QuantumOracle<'a> {
    pub train: &'a [Sample],
    pub noise: NoiseLevel,
    pub mode: GradientMode,
    pub zne: ZneConfig,
}

impl QuantumOracle<'_> {
    fn batch(&self, idx: &[usize]) -> Vec<Sample> {
        idx.iter().map(|&i| self.train[i].clone()).collect()
    }
}

impl ClientOracle for QuantumOracle<'_> {
    fn dim(&self) -> usize {
        crate::qsim::N_PARAMS
    }

    fn gradient(&self, _client: usize, x: &[f64], batch: &[usize], stream: &mut RandomStream) -> Result<OracleOutput, FedError> {
        let params = CircuitParams::new(x.to_vec()).map_err(OracleError::from)?;
        let g = oracle::grad_param_shift(&params, &self.batch(batch), self.noise, self.mode, stream)?;
        Ok(OracleOutput { grad: g.values, circuit_evals: g.circuit_evals })
    }

    fn zne_gradient(&self, _client: usize, x: &[f64], batch: &[usize], stream: &mut RandomStream) -> Result<OracleOutput, FedError> {
        let params = CircuitParams::new(x.to_vec()).map_err(OracleError::from)?;
        let g = oracle::grad_zne(&params, &self.batch(batch), self.noise, self.mode, &self.zne, stream)?;
        Ok(OracleOutput { grad: g.values, circuit_evals: g.circuit_evals })
    }
}

/// Gradient oracle settings of a quantum training run.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumOracleConfig {
    pub noise: NoiseLevel,
    pub mode: GradientMode,
    pub zne: ZneConfig,
}

/// Train/test split used by [`run_training`].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// Cumulative shifted-circuit executions.
    pub grad_evals: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub algorithm: Algorithm,
    pub rows: Vec<RoundMetrics>,
    pub final_params: Vec<f64>,
}

pub const METRICS_HEADER: &str = "round,algo,train_loss,train_acc,test_loss,test_acc,grad_evals,wall_ms";

impl MetricsSeries {
    /// Writes data rows (no header); `wall_ms` is written as 0 unless `record_timing`.
    pub fn write_rows<W: Write>(&self, out: &mut W, record_timing: bool) -> std::io::Result<()> {
        for m in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                m.round,
                self.algorithm,
                m.train_loss,
                m.train_acc,
                m.test_loss,
                m.test_acc,
                m.grad_evals,
                if record_timing { m.wall_ms } else { 0 }
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self, record_timing: bool) -> String {
        let mut buf = Vec::new();
        writeln!(buf, "{METRICS_HEADER}").expect("write to Vec");
        self.write_rows(&mut buf, record_timing).expect("write to Vec");
        String::from_utf8(buf).expect("ASCII output")
    }
}

/// Initial circuit parameters shared by every algorithm run with `seed`.
pub fn initial_params(seed: u64) -> CircuitParams {
    CircuitParams::random(&mut RandomStream::derive(seed, &[TAG_INIT]))
}

/// Evaluates `params` on the train and test sets with the noiseless model.
pub fn evaluate_round(params: &CircuitParams, dataset: &Dataset, round: usize, grad_evals: u64, wall_ms: u64) -> Result<RoundMetrics, FedError> {
    let (train_loss, train_acc) = data::evaluate(params, &dataset.train)?;
    let (test_loss, test_acc) = data::evaluate(params, &dataset.test)?;
    Ok(RoundMetrics {
        round,
        train_loss,
        train_acc,
        test_loss,
        test_acc,
        grad_evals,
        wall_ms,
    })
}

/// Runs `rounds` rounds of `cfg.algorithm` from [`initial_params`]`(seed)`,
/// recording noiseless train/test metrics after every aggregation.
pub fn run_training(
    cfg: &RoundConfig,
    rounds: usize,
    dataset: &Dataset,
    partition: &Partition,
    oracle_cfg: &QuantumOracleConfig,
    seed: u64,
) -> Result<MetricsSeries, FedError> {
    partition.validate(dataset.train.len())?;
    oracle_cfg.zne.validate()?;
    let oracle = QuantumOracle {
        train: &dataset.train,
        noise: oracle_cfg.noise,
        mode: oracle_cfg.mode,
        zne: oracle_cfg.zne.clone(),
    };
    let x0 = initial_params(seed).into_vec();
    let mut fed = Federation::new(cfg.clone(), &oracle, partition.shards.clone(), x0, seed)?;
    let mut rows = Vec::with_capacity(rounds);
    let mut total_evals = 0;
    for _ in 0..rounds {
        let start = Instant::now();
        let report = fed.step()?;
        total_evals += report.circuit_evals;
        let wall_ms = start.elapsed().as_millis() as u64;
        let params = CircuitParams::new(fed.model().to_vec()).map_err(OracleError::from)?;
        rows.push(evaluate_round(&params, dataset, report.round, total_evals, wall_ms)?);
        log::info!(
            "{} round {}: train_acc {:.3} test_acc {:.3}",
            cfg.algorithm,
            report.round,
            rows.last().map_or(0.0, |r| r.train_acc),
            rows.last().map_or(0.0, |r| r.test_acc)
        );
    }
    Ok(MetricsSeries {
        algorithm: cfg.algorithm,
        rows,
        final_params: fed.model().to_vec(),
    })
}
