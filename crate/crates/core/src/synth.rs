//! Quadratic federated objectives with injectable oracle bias and noise.
//!
//! Client `i` owns `f_i(x) = ½(x − b_i)ᵀ A_i (x − b_i)`, so every quantity the
//! floor diagnostics need (`∇f`, `μ_i`, the minimizer) has a closed form.
//! Oracles return `∇f_i(x) + b_{q,i}(x) + ξ` and a ZNE surrogate with bias
//! divided by `κ_b` and shot variance multiplied by `κ_v`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::fed::{Algorithm, ClientOracle, FedError, Federation, OracleOutput, RoundConfig};
use crate::rng::RandomStream;

const TAG_PROBLEM: u64 = 11;
const TAG_BIAS: u64 = 12;
const PLATEAU_FRACTION: f64 = 0.2;
const PLATEAU_SLOPE_TOL: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {key}: {msg}")]
    Config { key: &'static str, msg: String },
    #[error("singular mean Hessian")]
    Singular,
    #[error("plateau not reached: window halves {first:.3e} vs {second:.3e}", first = .0.window_halves.0, second = .0.window_halves.1)]
    FloorNotReached(Box<FloorReport>),
    #[error(transparent)]
    Fed(#[from] FedError),
}

impl SynthError {
    /// Recovers the report carried by an advisory plateau failure.
    pub fn into_report(self) -> Result<FloorReport, SynthError> {
        match self {
            SynthError::FloorNotReached(r) => Ok(*r),
            other => Err(other),
        }
    }
}

fn config_err(key: &'static str, msg: impl Into<String>) -> SynthError {
    SynthError::Config { key, msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub dim: usize,
    pub n_clients: usize,
    /// Eigenvalue range of every client Hessian.
    pub min_curvature: f64,
    pub max_curvature: f64,
    /// 0 gives identical Hessians, 1 gives independent ones.
    pub hessian_heterogeneity: f64,
    /// Scale of the spread of client minimizers around a common center.
    pub target_spread: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            dim: 20,
            n_clients: 16,
            min_curvature: 0.5,
            max_curvature: 2.0,
            hessian_heterogeneity: 0.3,
            target_spread: 1.0,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.dim == 0 {
            return Err(config_err("dim", "must be at least 1"));
        }
        if self.n_clients == 0 {
            return Err(config_err("n_clients", "must be at least 1"));
        }
        if !(self.min_curvature > 0.0 && self.min_curvature.is_finite()) {
            return Err(config_err("min_curvature", "must be finite and positive"));
        }
        if !(self.max_curvature >= self.min_curvature && self.max_curvature.is_finite()) {
            return Err(config_err("max_curvature", "must be finite and at least min_curvature"));
        }
        if !(0.0..=1.0).contains(&self.hessian_heterogeneity) {
            return Err(config_err("hessian_heterogeneity", "must lie in [0, 1]"));
        }
        if !(self.target_spread >= 0.0 && self.target_spread.is_finite()) {
            return Err(config_err("target_spread", "must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Federated sum of quadratics.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthProblem {
    hessians: Vec<DMatrix<f64>>,
    targets: Vec<DVector<f64>>,
    mean_hessian: DMatrix<f64>,
    /// `(1/N) Σ A_i b_i`, so that `∇f(x) = Ā x − h`.
    mean_shift: DVector<f64>,
    beta: f64,
}

fn random_orthogonal(d: usize, rng: &mut RandomStream) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)).qr().q()
}

fn random_spd(d: usize, lo: f64, hi: f64, rng: &mut RandomStream) -> DMatrix<f64> {
    let q = random_orthogonal(d, rng);
    let eig = DVector::from_fn(d, |k, _| if d == 1 { hi } else { lo + (hi - lo) * k as f64 / (d - 1) as f64 });
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl SynthProblem {
    pub fn generate(cfg: &ProblemConfig, seed: u64) -> Result<Self, SynthError> {
        cfg.validate()?;
        let mut rng = RandomStream::derive(seed, &[TAG_PROBLEM]);
        let d = cfg.dim;
        let h = cfg.hessian_heterogeneity;
        let base = random_spd(d, cfg.min_curvature, cfg.max_curvature, &mut rng);
        let center = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut hessians = Vec::with_capacity(cfg.n_clients);
        let mut targets = Vec::with_capacity(cfg.n_clients);
        for _ in 0..cfg.n_clients {
            let own = random_spd(d, cfg.min_curvature, cfg.max_curvature, &mut rng);
            hessians.push(symmetrize(&base * (1.0 - h) + own * h));
            let offset = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            targets.push(&center + offset * (cfg.target_spread / (d as f64).sqrt()));
        }
        Self::from_parts(hessians, targets)
    }

    pub fn from_parts(hessians: Vec<DMatrix<f64>>, targets: Vec<DVector<f64>>) -> Result<Self, SynthError> {
        if hessians.is_empty() || hessians.len() != targets.len() {
            return Err(config_err("n_clients", "need one target per Hessian and at least one client"));
        }
        let d = targets[0].len();
        if hessians.iter().any(|a| a.shape() != (d, d)) || targets.iter().any(|b| b.len() != d) {
            return Err(config_err("dim", "inconsistent client dimensions"));
        }
        let n = hessians.len() as f64;
        let mean_hessian = hessians.iter().fold(DMatrix::zeros(d, d), |acc, a| acc + a) / n;
        let mean_shift = hessians.iter().zip(&targets).fold(DVector::zeros(d), |acc, (a, b)| acc + a * b) / n;
        let beta = hessians
            .iter()
            .map(|a| a.clone().symmetric_eigenvalues().iter().fold(0.0f64, |m, e| m.max(e.abs())))
            .fold(0.0, f64::max);
        Ok(Self {
            hessians,
            targets,
            mean_hessian,
            mean_shift,
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean_shift.len()
    }

    pub fn n_clients(&self) -> usize {
        self.hessians.len()
    }

    /// Smoothness `max_i ‖A_i‖₂`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn hessian(&self, client: usize) -> &DMatrix<f64> {
        &self.hessians[client]
    }

    pub fn target(&self, client: usize) -> &DVector<f64> {
        &self.targets[client]
    }

    /// Multiplies every Hessian by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self, SynthError> {
        Self::from_parts(self.hessians.iter().map(|a| a * c).collect(), self.targets.clone())
    }

    pub fn local_objective(&self, client: usize, x: &[f64]) -> f64 {
        let r = DVector::from_column_slice(x) - &self.targets[client];
        0.5 * r.dot(&(&self.hessians[client] * &r))
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        (0..self.n_clients()).map(|i| self.local_objective(i, x)).sum::<f64>() / self.n_clients() as f64
    }

    pub fn local_gradient(&self, client: usize, x: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(x) - &self.targets[client];
        (&self.hessians[client] * r).data.into()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (&self.mean_hessian * DVector::from_column_slice(x) - &self.mean_shift).data.into()
    }

    pub fn grad_norm_sq(&self, x: &[f64]) -> f64 {
        self.gradient(x).iter().map(|g| g * g).sum()
    }

    /// Global minimizer `Ā⁻¹ h`.
    pub fn minimizer(&self) -> Result<Vec<f64>, SynthError> {
        let chol = self.mean_hessian.clone().cholesky().ok_or(SynthError::Singular)?;
        Ok(chol.solve(&self.mean_shift).data.into())
    }
}

/// How the hardware bias depends on the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BiasModel {
    /// Fixed vector of norm `U_q` (Lipschitz constant 0).
    Constant,
    /// `U_q/√d · tanh(gain·x_j + φ_ij)` per coordinate, Lipschitz `U_q·gain/√d`.
    Saturating { gain: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOracleConfig {
    pub u_q: f64,
    pub sigma: f64,
    pub sigma_q: f64,
    pub kappa_b: f64,
    pub kappa_v: f64,
    pub bias: BiasModel,
}

impl Default for SynthOracleConfig {
    fn default() -> Self {
        Self {
            u_q: 0.5,
            sigma: 0.05,
            sigma_q: 0.05,
            kappa_b: 10.0,
            kappa_v: 5.0,
            bias: BiasModel::Constant,
        }
    }
}

impl SynthOracleConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !nonneg(self.u_q) {
            return Err(config_err("u_q", "must be finite and nonnegative"));
        }
        if !nonneg(self.sigma) {
            return Err(config_err("sigma", "must be finite and nonnegative"));
        }
        if !nonneg(self.sigma_q) {
            return Err(config_err("sigma_q", "must be finite and nonnegative"));
        }
        if !(self.kappa_b >= 1.0 && self.kappa_b.is_finite()) {
            return Err(config_err("kappa_b", "must be finite and at least 1"));
        }
        if !(self.kappa_v >= 1.0 && self.kappa_v.is_finite()) {
            return Err(config_err("kappa_v", "must be finite and at least 1"));
        }
        if let BiasModel::Saturating { gain } = self.bias {
            if !nonneg(gain) {
                return Err(config_err("bias.gain", "must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Multiplies the bias magnitude and both noise scales by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            u_q: self.u_q * c,
            sigma: self.sigma * c,
            sigma_q: self.sigma_q * c,
            ..self.clone()
        }
    }
}

/// Biased noisy gradient oracles for every client of a [`SynthProblem`].
#[derive(Debug, Clone)]
pub struct SynthOracle<'p> {
    problem: &'p SynthProblem,
    cfg: SynthOracleConfig,
    /// Unit bias directions (constant model) or phases (saturating model).
    bias_dirs: Vec<Vec<f64>>,
}

impl<'p> SynthOracle<'p> {
    /// Draws per-client bias directions from `seed`; they do not depend on `cfg`.
    pub fn new(problem: &'p SynthProblem, cfg: SynthOracleConfig, seed: u64) -> Result<Self, SynthError> {
        cfg.validate()?;
        let d = problem.dim();
        let mut rng = RandomStream::derive(seed, &[TAG_BIAS]);
        let bias_dirs = (0..problem.n_clients())
            .map(|_| {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Ok(Self { problem, cfg, bias_dirs })
    }

    pub fn config(&self) -> &SynthOracleConfig {
        &self.cfg
    }

    pub fn problem(&self) -> &SynthProblem {
        self.problem
    }

    /// Hardware bias `b_{q,i}(x)`.
    pub fn bias(&self, client: usize, x: &[f64]) -> Vec<f64> {
        let dir = &self.bias_dirs[client];
        match self.cfg.bias {
            BiasModel::Constant => dir.iter().map(|u| self.cfg.u_q * u).collect(),
            BiasModel::Saturating { gain } => {
                let s = self.cfg.u_q / (dir.len() as f64).sqrt();
                x.iter().zip(dir).map(|(xj, phi)| s * (gain * xj + phi).tanh()).collect()
            }
        }
    }

    /// Oracle mean `μ_i(x) = ∇f_i(x) + b_{q,i}(x)`.
    pub fn mean(&self, client: usize, x: &[f64]) -> Vec<f64> {
        let mut g = self.problem.local_gradient(client, x);
        g.iter_mut().zip(self.bias(client, x)).for_each(|(g, b)| *g += b);
        g
    }

    /// ZNE oracle mean `∇f_i(x) + b_{q,i}(x)/κ_b`.
    pub fn zne_mean(&self, client: usize, x: &[f64]) -> Vec<f64> {
        let mut g = self.problem.local_gradient(client, x);
        let k = self.cfg.kappa_b;
        g.iter_mut().zip(self.bias(client, x)).for_each(|(g, b)| *g += b / k);
        g
    }

    fn noise_std(&self, zne: bool) -> f64 {
        let shot = if zne { self.cfg.kappa_v } else { 1.0 } * self.cfg.sigma_q * self.cfg.sigma_q;
        ((self.cfg.sigma * self.cfg.sigma + shot) / self.problem.dim() as f64).sqrt()
    }

    /// One oracle draw; both flavours consume exactly `d` normals.
    pub fn sample(&self, client: usize, x: &[f64], zne: bool, stream: &mut RandomStream) -> Vec<f64> {
        let mut g = if zne { self.zne_mean(client, x) } else { self.mean(client, x) };
        let std = self.noise_std(zne);
        for v in &mut g {
            let z: f64 = stream.sample(StandardNormal);
            *v += std * z;
        }
        g
    }
}

/// `A_i(x − b_i) + b_{q,i} + ξ`, or the ZNE surrogate when `zne` is set.
pub fn synth_gradient(oracle: &SynthOracle<'_>, client: usize, x: &[f64], zne: bool, stream: &mut RandomStream) -> Vec<f64> {
    oracle.sample(client, x, zne, stream)
}

impl ClientOracle for SynthOracle<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn gradient(&self, client: usize, x: &[f64], _batch: &[usize], stream: &mut RandomStream) -> Result<OracleOutput, FedError> {
        Ok(OracleOutput { grad: self.sample(client, x, false, stream), circuit_evals: 1 })
    }

    fn zne_gradient(&self, client: usize, x: &[f64], _batch: &[usize], stream: &mut RandomStream) -> Result<OracleOutput, FedError> {
        Ok(OracleOutput { grad: self.sample(client, x, true, stream), circuit_evals: 1 })
    }
}

/// Optimizer settings of a synthetic run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthRunConfig {
    pub algorithm: Algorithm,
    pub sample_size: usize,
    pub local_steps: usize,
    pub local_lr: f64,
    pub global_lr: f64,
    pub local_momentum: f64,
    pub alpha: f64,
    pub rounds: usize,
    /// Hold `x` at its initial value while controls evolve.
    pub freeze_model: bool,
}

impl Default for SynthRunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::QAnchor,
            sample_size: 16,
            local_steps: 5,
            local_lr: 0.05,
            global_lr: 1.0,
            local_momentum: 0.0,
            alpha: 0.1,
            rounds: 1000,
            freeze_model: false,
        }
    }
}

impl SynthRunConfig {
    /// Maps onto a [`RoundConfig`] with one single-index mini-batch per local step.
    pub fn round_config(&self, n_clients: usize) -> RoundConfig {
        RoundConfig {
            n_clients,
            sample_size: self.sample_size,
            local_epochs: 1,
            batch_size: 1,
            local_lr: self.local_lr,
            global_lr: self.global_lr,
            local_momentum: self.local_momentum,
            alpha: self.alpha,
            algorithm: self.algorithm,
        }
    }

    /// `η̃ = η_g η_ℓ K`.
    pub fn effective_stepsize(&self) -> f64 {
        self.global_lr * self.local_lr * self.local_steps as f64
    }
}

/// Per-round diagnostics of one synthetic run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FloorReport {
    pub algorithm: Algorithm,
    pub u_q: f64,
    pub kappa_b: f64,
    pub kappa_v: f64,
    pub sigma_q: f64,
    pub eta_tilde: f64,
    /// Mean of `‖∇f(x^r)‖²` over the final rounds.
    pub plateau: f64,
    /// Means over the first and second half of the plateau window.
    pub window_halves: (f64, f64),
    pub grad_norm_sq: Vec<f64>,
    /// `(1/N) Σ ‖c_i − μ_i(x)‖²`.
    pub gamma: Vec<f64>,
    /// `(1/N) Σ ‖c_{i,ZNE} − μ_{i,ZNE}(x)‖²`.
    pub gamma_zne: Vec<f64>,
    /// `‖c_srv − (1/N) Σ c_{i,ZNE}‖²`.
    pub lambda: Vec<f64>,
    /// `‖c_srv − (1/N) Σ c_i‖²`.
    pub lambda_raw: Vec<f64>,
}

impl FloorReport {
    fn window(&self) -> std::ops::Range<usize> {
        let n = self.grad_norm_sq.len();
        let w = ((n as f64 * PLATEAU_FRACTION).ceil() as usize).clamp(n.min(1), n);
        n - w..n
    }

    fn window_mean(series: &[f64], range: std::ops::Range<usize>) -> f64 {
        if range.is_empty() {
            return 0.0;
        }
        let len = range.len() as f64;
        series[range].iter().sum::<f64>() / len
    }

    pub fn mean_gamma(&self) -> f64 {
        Self::window_mean(&self.gamma, self.window())
    }

    pub fn mean_gamma_zne(&self) -> f64 {
        Self::window_mean(&self.gamma_zne, self.window())
    }

    pub fn mean_lambda(&self) -> f64 {
        Self::window_mean(&self.lambda, self.window())
    }

    /// Slope test between the two halves of the plateau window.
    pub fn plateau_reached(&self) -> bool {
        let (a, b) = self.window_halves;
        (a - b).abs() <= PLATEAU_SLOPE_TOL * a.max(b) + 1e-14
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Runs `run.rounds` rounds from `x = 0` and records floor diagnostics.
///
/// A run whose plateau window fails the slope test returns
/// [`SynthError::FloorNotReached`] carrying the full report.
pub fn measure_floor(oracle: &SynthOracle<'_>, run: &SynthRunConfig, seed: u64) -> Result<FloorReport, SynthError> {
    let problem = oracle.problem();
    let n = problem.n_clients();
    let d = problem.dim();
    if run.local_steps == 0 {
        return Err(config_err("local_steps", "must be at least 1"));
    }
    let shards = vec![(0..run.local_steps).collect::<Vec<_>>(); n];
    let mut fed = Federation::new(run.round_config(n), oracle, shards, vec![0.0; d], seed)?;
    fed.set_freeze_model(run.freeze_model);

    let cap = run.rounds;
    let (mut gns, mut gamma, mut gamma_zne, mut lambda, mut lambda_raw) =
        (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    for _ in 0..run.rounds {
        fed.step()?;
        let x = fed.model();
        gns.push(problem.grad_norm_sq(x));
        let clients = fed.clients();
        let mut mean_c = vec![0.0; d];
        let mut mean_z = vec![0.0; d];
        let (mut g, mut gz) = (0.0, 0.0);
        for c in clients {
            g += sq_dist(&c.control, &oracle.mean(c.id, x));
            gz += sq_dist(&c.zne_control, &oracle.zne_mean(c.id, x));
            mean_c.iter_mut().zip(&c.control).for_each(|(m, v)| *m += v / n as f64);
            mean_z.iter_mut().zip(&c.zne_control).for_each(|(m, v)| *m += v / n as f64);
        }
        gamma.push(g / n as f64);
        gamma_zne.push(gz / n as f64);
        let srv = &fed.server().control;
        lambda.push(sq_dist(srv, &mean_z));
        lambda_raw.push(sq_dist(srv, &mean_c));
    }

    let cfg = oracle.config();
    let mut report = FloorReport {
        algorithm: run.algorithm,
        u_q: cfg.u_q,
        kappa_b: cfg.kappa_b,
        kappa_v: cfg.kappa_v,
        sigma_q: cfg.sigma_q,
        eta_tilde: run.effective_stepsize(),
        plateau: 0.0,
        window_halves: (0.0, 0.0),
        grad_norm_sq: gns,
        gamma,
        gamma_zne,
        lambda,
        lambda_raw,
    };
    let w = report.window();
    let mid = w.start + w.len() / 2;
    report.plateau = FloorReport::window_mean(&report.grad_norm_sq, w.clone());
    report.window_halves = (
        FloorReport::window_mean(&report.grad_norm_sq, w.start..mid),
        FloorReport::window_mean(&report.grad_norm_sq, mid..w.end),
    );
    if report.plateau_reached() {
        Ok(report)
    } else {
        Err(SynthError::FloorNotReached(Box::new(report)))
    }
}

/// One cell of a floor sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub algorithm: Algorithm,
    pub u_q: f64,
    pub kappa_b: f64,
}

/// Result of one sweep cell; `reached` is false when the slope test failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub report: FloorReport,
    pub reached: bool,
}

pub const SWEEP_HEADER: &str = "algo,u_q,kappa_b,kappa_v,sigma_q,eta_tilde,plateau,mean_gamma,mean_gamma_zne,mean_lambda,floor_reached";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{:e},{:e},{:e},{:e},{}",
            r.algorithm,
            r.u_q,
            r.kappa_b,
            r.kappa_v,
            r.sigma_q,
            r.eta_tilde,
            r.plateau,
            r.mean_gamma(),
            r.mean_gamma_zne(),
            r.mean_lambda(),
            self.reached
        )
    }
}

/// Runs every cell on the same problem, bias directions and noise streams.
pub fn floor_sweep(
    problem: &SynthProblem,
    oracle_cfg: &SynthOracleConfig,
    run: &SynthRunConfig,
    cells: &[SweepCell],
    seed: u64,
) -> Result<Vec<SweepRow>, SynthError> {
    exec::map_indexed(cells.len(), |k| {
        let cell = &cells[k];
        let cfg = SynthOracleConfig { u_q: cell.u_q, kappa_b: cell.kappa_b, ..oracle_cfg.clone() };
        let oracle = SynthOracle::new(problem, cfg, seed)?;
        let run = SynthRunConfig { algorithm: cell.algorithm, ..run.clone() };
        match measure_floor(&oracle, &run, seed) {
            Ok(report) => Ok(SweepRow { report, reached: true }),
            Err(e) => e.into_report().map(|report| SweepRow { report, reached: false }),
        }
    })
    .into_iter()
    .collect()
}

/// Expected per-round contraction of `E Γ` with a frozen model and no noise:
/// each sampled client's squared error shrinks by `(1 − α)²`.
pub fn gamma_contraction_rate(alpha: f64, sample_size: usize, n_clients: usize) -> f64 {
    1.0 - (sample_size as f64 / n_clients as f64) * (2.0 * alpha - alpha * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_problem(seed: u64) -> SynthProblem {
        let cfg = ProblemConfig { dim: 6, n_clients: 4, ..ProblemConfig::default() };
        SynthProblem::generate(&cfg, seed).unwrap()
    }

    fn quiet(u_q: f64) -> SynthOracleConfig {
        SynthOracleConfig { u_q, sigma: 0.0, sigma_q: 0.0, ..SynthOracleConfig::default() }
    }

    #[test]
    fn hessians_are_symmetric_and_bounded() {
        let cfg = ProblemConfig::default();
        let p = SynthProblem::generate(&cfg, 1).unwrap();
        assert!(p.beta() <= cfg.max_curvature + 1e-9);
        for i in 0..p.n_clients() {
            let a = p.hessian(i);
            assert!((a - a.transpose()).amax() < 1e-12);
            let ev = a.clone().symmetric_eigenvalues();
            assert!(ev.min() >= cfg.min_curvature - 1e-9);
        }
    }

    #[test]
    fn closed_form_gradient_matches_finite_differences() {
        let p = small_problem(2);
        let x: Vec<f64> = (0..6).map(|j| 0.3 * j as f64 - 0.7).collect();
        let g = p.gradient(&x);
        let h = 1e-5;
        let mut fd_norm = 0.0;
        for j in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.objective(&xp) - p.objective(&xm)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-8);
            fd_norm += fd * fd;
        }
        assert!((fd_norm - p.grad_norm_sq(&x)).abs() < 1e-8);
    }

    #[test]
    fn minimizer_zeroes_the_gradient() {
        let p = small_problem(3);
        let xs = p.minimizer().unwrap();
        assert!(p.grad_norm_sq(&xs) < 1e-20);
    }

    #[test]
    fn oracle_examples() {
        let p = small_problem(4);
        let x = vec![0.1; 6];
        let exact = SynthOracle::new(&p, quiet(0.0), 0).unwrap();
        assert_eq!(exact.sample(1, &x, false, &mut RandomStream::new(0)), p.local_gradient(1, &x));

        let biased = SynthOracle::new(&p, quiet(0.7), 0).unwrap();
        let at_min: Vec<f64> = p.target(2).iter().copied().collect();
        let g = biased.sample(2, &at_min, false, &mut RandomStream::new(0));
        assert!((g.iter().map(|v| v * v).sum::<f64>().sqrt() - 0.7).abs() < 1e-12);
        let gz = biased.sample(2, &at_min, true, &mut RandomStream::new(0));
        assert!((gz.iter().map(|v| v * v).sum::<f64>().sqrt() - 0.07).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_mean_and_variance() {
        let p = small_problem(5);
        let cfg = SynthOracleConfig { u_q: 0.4, sigma: 0.3, sigma_q: 0.2, ..SynthOracleConfig::default() };
        let o = SynthOracle::new(&p, cfg, 9).unwrap();
        let x = vec![0.5, -0.5, 0.0, 1.0, 0.2, -0.1];
        let mut stream = RandomStream::new(1);
        let n = 10_000;
        let mut sum = vec![0.0; 6];
        let mut total_var = 0.0;
        let mu = o.mean(0, &x);
        for _ in 0..n {
            let g = o.sample(0, &x, false, &mut stream);
            for j in 0..6 {
                sum[j] += g[j];
                total_var += (g[j] - mu[j]).powi(2);
            }
        }
        let per_coord = ((0.09 + 0.04) / 6.0f64).sqrt();
        for j in 0..6 {
            assert!((sum[j] / n as f64 - mu[j]).abs() < 5.0 * per_coord / (n as f64).sqrt());
        }
        assert!((total_var / n as f64 - 0.13).abs() < 0.01);
    }

    #[test]
    fn saturating_bias_is_bounded() {
        let p = small_problem(6);
        let cfg = SynthOracleConfig { bias: BiasModel::Saturating { gain: 2.0 }, ..quiet(0.5) };
        let o = SynthOracle::new(&p, cfg, 1).unwrap();
        for s in 0..20 {
            let x: Vec<f64> = (0..6).map(|j| ((s * 7 + j) as f64).sin() * 10.0).collect();
            let b = o.bias(0, &x);
            assert!(b.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn clean_convergence_for_every_algorithm() {
        // FedAvg with several local steps keeps a drift floor on heterogeneous
        // Hessians, so check single-step runs and a homogeneous problem.
        let hetero = small_problem(7);
        let homo = SynthProblem::generate(&ProblemConfig { dim: 6, n_clients: 4, hessian_heterogeneity: 0.0, ..ProblemConfig::default() }, 7).unwrap();
        for (p, k) in [(&hetero, 1), (&homo, 5)] {
            let o = SynthOracle::new(p, quiet(0.0), 0).unwrap();
            for algorithm in Algorithm::ALL {
                let run = SynthRunConfig { algorithm, sample_size: 4, local_steps: k, rounds: 400, ..SynthRunConfig::default() };
                let r = measure_floor(&o, &run, 1).or_else(SynthError::into_report).unwrap();
                assert!(r.plateau <= 1e-8, "{algorithm}, K = {k}: {}", r.plateau);
            }
        }
    }

    #[test]
    fn server_control_identity_holds() {
        let p = small_problem(8);
        let o = SynthOracle::new(&p, SynthOracleConfig::default(), 0).unwrap();
        let run = SynthRunConfig { sample_size: 4, rounds: 40, ..SynthRunConfig::default() };
        let r = measure_floor(&o, &run, 2).or_else(SynthError::into_report).unwrap();
        assert!(r.lambda.iter().all(|l| *l < 1e-12));
        assert!(r.lambda_raw.iter().any(|l| *l > 1e-6));
    }

    #[test]
    fn config_errors_name_the_key() {
        let bad = SynthOracleConfig { kappa_b: 0.5, ..SynthOracleConfig::default() };
        assert!(matches!(bad.validate(), Err(SynthError::Config { key: "kappa_b", .. })));
        let bad = ProblemConfig { max_curvature: 0.1, ..ProblemConfig::default() };
        assert!(matches!(bad.validate(), Err(SynthError::Config { key: "max_curvature", .. })));
    }

    #[test]
    fn contraction_rate_formula() {
        assert!((gamma_contraction_rate(1.0, 4, 4) - 0.0).abs() < 1e-15);
        assert!((gamma_contraction_rate(0.0, 4, 4) - 1.0).abs() < 1e-15);
        assert!((gamma_contraction_rate(0.1, 8, 16) - 0.905).abs() < 1e-15);
    }
}
