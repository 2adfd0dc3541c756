//! Gradient oracles over the quantum classifier.
//!
//! All gradients are parameter-shift gradients of the per-sample NLL
//! `-ln max(p_y, 1e-8)`, where `p_y` is the class probability of the label
//! either read exactly from the density matrix (`Analytic`) or estimated
//! from a multinomial shot record (`Shots`). ZNE evaluates the same gradient
//! at linearly amplified depolarizing strengths and combines the results
//! with Lagrange weights extrapolating to zero noise.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::qsim::{self, amplitude_embed, Circuit, CircuitParams, CircuitSpec, DensityMatrix, QsimError, ZeroInput, DIM, N_CLASSES, N_PARAMS};
use crate::rng::RandomStream;

/// Probability clamp used by the loss and its gradient.
pub const PROB_FLOOR: f64 = 1e-8;

const BASE_TAG: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("gradient batch is empty")]
    EmptyBatch,
    #[error("label {0} is not a class index (0..{N_CLASSES})")]
    Label(usize),
    #[error("shot count must be at least 1")]
    Shots,
    #[error("noise level {0} is outside [0, 1]")]
    Noise(f64),
    #[error("invalid ZNE configuration: {0}")]
    ZneConfig(String),
    #[error("scaled noise {scale} × {p} exceeds 1 and clipping is disabled")]
    ScaleOverflow { scale: f64, p: f64 },
    #[error("reference gradient norm {0:e} is too small for a relative error")]
    DegenerateReference(f64),
    #[error("variance probe needs at least 2 trials, got {0}")]
    Trials(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientMode {
    /// Infinite-shot limit: exact class probabilities.
    Analytic,
    Shots(u64),
}

impl GradientMode {
    pub fn shots(n: u64) -> Result<Self, OracleError> {
        if n == 0 {
            Err(OracleError::Shots)
        } else {
            Ok(Self::Shots(n))
        }
    }

    fn validate(self) -> Result<(), OracleError> {
        match self {
            Self::Shots(0) => Err(OracleError::Shots),
            _ => Ok(()),
        }
    }
}

/// Native depolarizing strength `p`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub const ZERO: NoiseLevel = NoiseLevel(0.0);

    pub fn new(p: f64) -> Result<Self, OracleError> {
        if (0.0..=1.0).contains(&p) {
            Ok(Self(p))
        } else {
            Err(OracleError::Noise(p))
        }
    }

    pub fn p(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZneConfig {
    pub scale_factors: Vec<f64>,
    pub degree: usize,
    /// Clip amplified strengths at 1 instead of failing.
    pub clip: bool,
}

impl Default for ZneConfig {
    fn default() -> Self {
        Self {
            scale_factors: vec![1.0, 3.0, 5.0],
            degree: 2,
            clip: true,
        }
    }
}

impl ZneConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        let s = &self.scale_factors;
        if s.is_empty() {
            return Err(OracleError::ZneConfig("no scale factors".into()));
        }
        if self.degree + 1 != s.len() {
            return Err(OracleError::ZneConfig(format!(
                "degree {} needs {} scale factors, got {}",
                self.degree,
                self.degree + 1,
                s.len()
            )));
        }
        if s.iter().any(|l| !l.is_finite()) {
            return Err(OracleError::ZneConfig("non-finite scale factor".into()));
        }
        for (i, a) in s.iter().enumerate() {
            if s[i + 1..].iter().any(|b| b == a) {
                return Err(OracleError::ZneConfig(format!("duplicate scale factor {a}")));
            }
        }
        if s[0] != 1.0 {
            return Err(OracleError::ZneConfig("first scale factor must be 1.0".into()));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OracleError::ZneConfig("scale factors must be ascending".into()));
        }
        Ok(())
    }
}

/// Lagrange weights `γ_k = Π_{j≠k} λ_j / (λ_j − λ_k)` extrapolating to `λ = 0`.
pub fn zne_weights(config: &ZneConfig) -> Result<Vec<f64>, OracleError> {
    config.validate()?;
    Ok(lagrange_at_zero(&config.scale_factors))
}

fn lagrange_at_zero(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(k, &lk)| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &lj)| (0.0 - lj) / (lk - lj))
                .product()
        })
        .collect()
}

/// One classifier input with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: [f64; DIM],
    pub label: usize,
}

impl Sample {
    fn check(&self) -> Result<(), OracleError> {
        if self.label < N_CLASSES {
            Ok(())
        } else {
            Err(OracleError::Label(self.label))
        }
    }
}

/// A gradient vector together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub values: Vec<f64>,
    pub mode: GradientMode,
    pub noise: NoiseLevel,
    pub zne_applied: bool,
    /// Shifted-circuit executions spent on this estimate.
    pub circuit_evals: u64,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn label_probability(rho: &DensityMatrix, label: usize, mode: GradientMode, seed: u64, tags: &[u64]) -> f64 {
    match mode {
        GradientMode::Analytic => rho.class_probabilities()[label],
        GradientMode::Shots(n) => {
            let mut rng = RandomStream::derive(seed, tags);
            let counts = qsim::sample_class_counts(rho, n, &mut rng);
            counts[label] as f64 / n as f64
        }
    }
}

fn embed(sample: &Sample) -> DensityMatrix {
    amplitude_embed(&sample.features, ZeroInput::BasisFallback)
        .expect("fallback embedding never fails")
}

/// `-ln max(p_label, 1e-8)` under the given noise and measurement mode.
pub fn nll_loss(
    params: &CircuitParams,
    sample: &Sample,
    noise: NoiseLevel,
    mode: GradientMode,
    stream: &mut RandomStream,
) -> Result<f64, OracleError> {
    sample.check()?;
    mode.validate()?;
    let circuit = Circuit::new(&CircuitSpec::new(noise.p())?)?;
    let rho = circuit.run(embed(sample), params.as_slice());
    let p = label_probability(&rho, sample.label, mode, stream.fork_seed(), &[BASE_TAG]);
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Parameter-shift NLL gradient of one sample; `seed` keys every shot record.
fn sample_gradient(
    circuit: &Circuit,
    angles: &[f64],
    sample: &Sample,
    mode: GradientMode,
    seed: u64,
) -> Vec<f64> {
    let (out, snapshots) = circuit.run_with_snapshots(embed(sample), angles);
    let label = sample.label;
    let p = label_probability(&out, label, mode, seed, &[BASE_TAG]);
    let scale = -1.0 / p.max(PROB_FLOOR);
    exec::map_indexed(N_PARAMS, |j| {
        let plus = circuit.run_shifted(&snapshots[j], angles, j, FRAC_PI_2);
        let minus = circuit.run_shifted(&snapshots[j], angles, j, -FRAC_PI_2);
        let p_plus = label_probability(&plus, label, mode, seed, &[j as u64, 0]);
        let p_minus = label_probability(&minus, label, mode, seed, &[j as u64, 1]);
        scale * 0.5 * (p_plus - p_minus)
    })
}

fn batch_gradient(
    params: &CircuitParams,
    batch: &[Sample],
    noise: f64,
    mode: GradientMode,
    seed: u64,
) -> Result<Vec<f64>, OracleError> {
    let circuit = Circuit::new(&CircuitSpec::new(noise)?)?;
    let angles = params.as_slice();
    let per_sample = exec::map_indexed(batch.len(), |k| {
        sample_gradient(&circuit, angles, &batch[k], mode, crate::rng::mix_seed(seed, &[k as u64]))
    });
    let inv = 1.0 / batch.len() as f64;
    let mut mean = vec![0.0; N_PARAMS];
    for g in &per_sample {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(mean)
}

fn check_batch(batch: &[Sample], mode: GradientMode) -> Result<(), OracleError> {
    if batch.is_empty() {
        return Err(OracleError::EmptyBatch);
    }
    mode.validate()?;
    batch.iter().try_for_each(Sample::check)
}

/// Batch-averaged parameter-shift gradient at noise `p`.
pub fn grad_param_shift(
    params: &CircuitParams,
    batch: &[Sample],
    noise: NoiseLevel,
    mode: GradientMode,
    stream: &mut RandomStream,
) -> Result<GradientEstimate, OracleError> {
    check_batch(batch, mode)?;
    let values = batch_gradient(params, batch, noise.p(), mode, stream.fork_seed())?;
    Ok(GradientEstimate {
        values,
        mode,
        noise,
        zne_applied: false,
        circuit_evals: (2 * N_PARAMS * batch.len()) as u64,
    })
}

/// Exact noiseless gradient.
pub fn grad_ideal(params: &CircuitParams, batch: &[Sample]) -> Result<GradientEstimate, OracleError> {
    // Analytic mode never reads the stream.
    let mut unused = RandomStream::new(0);
    grad_param_shift(params, batch, NoiseLevel::ZERO, GradientMode::Analytic, &mut unused)
}

/// Zero-noise-extrapolated gradient `Σ γ_k g(λ_k p)` with independent shot
/// records per scale.
pub fn grad_zne(
    params: &CircuitParams,
    batch: &[Sample],
    noise: NoiseLevel,
    mode: GradientMode,
    config: &ZneConfig,
    stream: &mut RandomStream,
) -> Result<GradientEstimate, OracleError> {
    check_batch(batch, mode)?;
    let weights = zne_weights(config)?;
    let strengths = config
        .scale_factors
        .iter()
        .map(|&scale| {
            let scaled = scale * noise.p();
            if scaled <= 1.0 {
                Ok(scaled)
            } else if config.clip {
                Ok(1.0)
            } else {
                Err(OracleError::ScaleOverflow { scale, p: noise.p() })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let seed = stream.fork_seed();
    let per_scale = exec::map_indexed(strengths.len(), |k| {
        batch_gradient(params, batch, strengths[k], mode, crate::rng::mix_seed(seed, &[k as u64]))
    });
    let mut values = vec![0.0; N_PARAMS];
    for (g, w) in per_scale.into_iter().zip(&weights) {
        for (v, gi) in values.iter_mut().zip(g?) {
            *v += w * gi;
        }
    }
    Ok(GradientEstimate {
        values,
        mode,
        noise,
        zne_applied: true,
        circuit_evals: (2 * N_PARAMS * batch.len() * strengths.len()) as u64,
    })
}

/// `‖estimate − ideal‖ / ‖ideal‖`.
pub fn fractional_error(estimate: &GradientEstimate, ideal: &GradientEstimate) -> Result<f64, OracleError> {
    let reference = ideal.norm();
    if reference <= 1e-12 {
        return Err(OracleError::DegenerateReference(reference));
    }
    let diff = estimate
        .values
        .iter()
        .zip(&ideal.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / reference)
}

/// Sum over coordinates of the sample variance of the shot-mode gradient
/// across `trials` independent shot records.
pub fn variance_probe(
    params: &CircuitParams,
    sample: &Sample,
    shots: u64,
    trials: usize,
    noise: NoiseLevel,
    stream: &mut RandomStream,
) -> Result<f64, OracleError> {
    if trials < 2 {
        return Err(OracleError::Trials(trials));
    }
    let mode = GradientMode::shots(shots)?;
    sample.check()?;
    let seed = stream.fork_seed();
    let batch = std::slice::from_ref(sample);
    let runs = exec::map_indexed(trials, |t| {
        batch_gradient(params, batch, noise.p(), mode, crate::rng::mix_seed(seed, &[t as u64]))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(total_variance(&runs))
}

/// Sum of per-coordinate unbiased sample variances.
pub fn total_variance(runs: &[Vec<f64>]) -> f64 {
    let n = runs.len() as f64;
    let dim = runs[0].len();
    (0..dim)
        .map(|j| {
            let mean = runs.iter().map(|r| r[j]).sum::<f64>() / n;
            runs.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .sum()
}

/// Exact class probabilities of the classifier at noise `p`.
pub fn predict(params: &CircuitParams, features: &[f64; DIM], noise: NoiseLevel) -> Result<[f64; N_CLASSES], OracleError> {
    let rho = qsim::run_circuit(params, features, &CircuitSpec::new(noise.p())?)?;
    Ok(rho.class_probabilities())
}
