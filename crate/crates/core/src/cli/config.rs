use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fed::{Algorithm, FedError, RoundConfig};
use crate::oracle::{GradientMode, NoiseLevel, ZneConfig};
use crate::synth::{ProblemConfig, SynthError, SynthOracleConfig, SynthRunConfig};

pub const PAPER_TRAIN: usize = 5000;
pub const PAPER_TEST: usize = 10000;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Write measured wall time into per-round metrics; off keeps files byte-stable.
    pub record_timing: bool,
    /// Worker threads; 0 keeps the runtime default.
    pub workers: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 2024,
            out_dir: PathBuf::from("out"),
            record_timing: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub n_train: usize,
    pub n_test: usize,
    pub flip_p: f64,
    pub dirichlet_alpha: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_train: 800,
            n_test: 800,
            flip_p: 0.05,
            dirichlet_alpha: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedSection {
    pub n_clients: usize,
    pub sample_size: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub local_lr: f64,
    pub global_lr: f64,
    pub local_momentum: f64,
    pub alpha: f64,
    pub algorithms: Vec<Algorithm>,
}

impl Default for FedSection {
    fn default() -> Self {
        Self {
            n_clients: 8,
            sample_size: 8,
            rounds: 20,
            local_epochs: 5,
            batch_size: 16,
            local_lr: 0.1,
            global_lr: 1.0,
            local_momentum: 0.9,
            alpha: 0.1,
            algorithms: Algorithm::ALL.to_vec(),
        }
    }
}

impl FedSection {
    pub fn round_config(&self, algorithm: Algorithm) -> RoundConfig {
        RoundConfig {
            n_clients: self.n_clients,
            sample_size: self.sample_size,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
            local_lr: self.local_lr,
            global_lr: self.global_lr,
            local_momentum: self.local_momentum,
            alpha: self.alpha,
            algorithm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Depolarizing strength per qubit per layer.
    pub p: f64,
    /// Measurement shots per circuit; 0 selects exact expectations.
    pub shots: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { p: 0.01, shots: 0 }
    }
}

impl NoiseSection {
    pub fn level(&self) -> NoiseLevel {
        NoiseLevel::new(self.p).expect("validated noise level")
    }

    pub fn mode(&self) -> GradientMode {
        if self.shots == 0 {
            GradientMode::Analytic
        } else {
            GradientMode::Shots(self.shots)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasSweepSection {
    pub noise_levels: Vec<f64>,
    pub instances: usize,
}

impl Default for BiasSweepSection {
    fn default() -> Self {
        Self {
            noise_levels: vec![0.01, 0.02, 0.03, 0.04, 0.05],
            instances: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShotSweepSection {
    pub shots: Vec<u64>,
    pub trials: usize,
}

impl Default for ShotSweepSection {
    fn default() -> Self {
        Self {
            shots: vec![5000, 20000, 50000, 100000],
            trials: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub algorithms: Vec<Algorithm>,
    pub u_q_values: Vec<f64>,
    pub kappa_b_values: Vec<f64>,
    pub problem: ProblemConfig,
    pub oracle: SynthOracleConfig,
    pub run: SynthRunConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            u_q_values: vec![0.0, 0.25, 0.5, 1.0],
            kappa_b_values: vec![1.0, 3.0, 10.0],
            problem: ProblemConfig::default(),
            oracle: SynthOracleConfig::default(),
            run: SynthRunConfig::default(),
        }
    }
}

/// Full experiment configuration; every section is optional in the file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    pub fed: FedSection,
    pub noise: NoiseSection,
    pub zne: ZneConfig,
    pub bias_sweep: BiasSweepSection,
    pub shot_sweep: ShotSweepSection,
    pub synth: SynthSection,
}

fn fed_key(prefix: &str, e: FedError) -> ConfigError {
    match e {
        FedError::Config { key, msg } => invalid(format!("{prefix}.{key}"), msg),
        other => invalid(prefix, other.to_string()),
    }
}

fn synth_key(prefix: &str, e: SynthError) -> ConfigError {
    match e {
        SynthError::Config { key, msg } => invalid(format!("{prefix}.{key}"), msg),
        other => invalid(prefix, other.to_string()),
    }
}

fn check_unit(key: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(key, format!("{v} is outside [0, 1]")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn apply_paper_scale(&mut self) {
        self.data.n_train = PAPER_TRAIN;
        self.data.n_test = PAPER_TEST;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.data;
        if d.n_train == 0 {
            return Err(invalid("data.n_train", "must be at least 1"));
        }
        if d.n_test == 0 {
            return Err(invalid("data.n_test", "must be at least 1"));
        }
        if !(0.0..0.5).contains(&d.flip_p) {
            return Err(invalid("data.flip_p", "must lie in [0, 0.5)"));
        }
        if !(d.dirichlet_alpha > 0.0 && d.dirichlet_alpha.is_finite()) {
            return Err(invalid("data.dirichlet_alpha", "must be finite and positive"));
        }
        if self.fed.n_clients > d.n_train {
            return Err(invalid("fed.n_clients", "cannot exceed data.n_train"));
        }

        if self.fed.algorithms.is_empty() {
            return Err(invalid("fed.algorithms", "must list at least one algorithm"));
        }
        self.fed.round_config(Algorithm::QAnchor).validate().map_err(|e| fed_key("fed", e))?;

        check_unit("noise.p", self.noise.p)?;
        self.zne.validate().map_err(|e| invalid("zne", e.to_string()))?;

        let b = &self.bias_sweep;
        if b.noise_levels.is_empty() {
            return Err(invalid("bias_sweep.noise_levels", "must not be empty"));
        }
        for &p in &b.noise_levels {
            check_unit("bias_sweep.noise_levels", p)?;
        }
        if b.instances == 0 {
            return Err(invalid("bias_sweep.instances", "must be at least 1"));
        }

        let s = &self.shot_sweep;
        if s.shots.is_empty() {
            return Err(invalid("shot_sweep.shots", "must not be empty"));
        }
        if s.shots.contains(&0) {
            return Err(invalid("shot_sweep.shots", "every entry must be at least 1"));
        }
        if s.trials < 2 {
            return Err(invalid("shot_sweep.trials", "must be at least 2"));
        }

        let y = &self.synth;
        if y.algorithms.is_empty() {
            return Err(invalid("synth.algorithms", "must list at least one algorithm"));
        }
        if y.u_q_values.is_empty() {
            return Err(invalid("synth.u_q_values", "must not be empty"));
        }
        if y.kappa_b_values.is_empty() {
            return Err(invalid("synth.kappa_b_values", "must not be empty"));
        }
        y.problem.validate().map_err(|e| synth_key("synth.problem", e))?;
        y.oracle.validate().map_err(|e| synth_key("synth.oracle", e))?;
        for &u in &y.u_q_values {
            SynthOracleConfig { u_q: u, ..y.oracle.clone() }
                .validate()
                .map_err(|_| invalid("synth.u_q_values", format!("{u} must be finite and nonnegative")))?;
        }
        for &k in &y.kappa_b_values {
            SynthOracleConfig { kappa_b: k, ..y.oracle.clone() }
                .validate()
                .map_err(|_| invalid("synth.kappa_b_values", format!("{k} must be finite and at least 1")))?;
        }
        if y.run.local_steps == 0 {
            return Err(invalid("synth.run.local_steps", "must be at least 1"));
        }
        y.run
            .round_config(y.problem.n_clients)
            .validate()
            .map_err(|e| match e {
                FedError::Config { key: "n_clients", msg } | FedError::Config { key: "sample_size", msg } => {
                    invalid("synth.run.sample_size", msg)
                }
                other => fed_key("synth.run", other),
            })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml("[fed]\nlocal_lrr = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("local_lrr"), "{err}");
        let err = ExperimentConfig::from_toml("[fedd]\n").unwrap_err();
        assert!(err.to_string().contains("fedd"), "{err}");
    }

    #[test]
    fn range_errors_are_named() {
        let cases = [
            ("[noise]\np = 1.5\n", "noise.p"),
            ("[fed]\nlocal_momentum = 1.0\n", "fed.local_momentum"),
            ("[fed]\nsample_size = 9\n", "fed.sample_size"),
            ("[data]\nflip_p = 0.5\n", "data.flip_p"),
            ("[shot_sweep]\ntrials = 1\n", "shot_sweep.trials"),
            ("[synth.oracle]\nkappa_b = 0.5\n", "synth.oracle.kappa_b"),
            ("[synth.run]\nsample_size = 40\n", "synth.run.sample_size"),
            ("[synth]\nkappa_b_values = [0.2]\n", "synth.kappa_b_values"),
        ];
        for (text, key) in cases {
            let err = ExperimentConfig::from_toml(text).unwrap().validate().unwrap_err();
            assert!(matches!(&err, ConfigError::Invalid { key: k, .. } if k == key), "{text}: {err}");
        }
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
[fed]
algorithms = ["fedavg", "qanchor"]

[synth.oracle]
bias = { kind = "saturating", gain = 0.5 }
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.fed.algorithms, vec![Algorithm::FedAvg, Algorithm::QAnchor]);
        assert_eq!(cfg.synth.oracle.bias, crate::synth::BiasModel::Saturating { gain: 0.5 });
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn paper_scale_overrides_sizes() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_paper_scale();
        assert_eq!((cfg.data.n_train, cfg.data.n_test), (5000, 10000));
    }
}
