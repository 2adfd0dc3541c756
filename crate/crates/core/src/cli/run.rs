use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::CliError;
use crate::data::{self, BlobSample, Partition};
use crate::exec;
use crate::fed::{self, Algorithm, Dataset, MetricsSeries, QuantumOracleConfig, RoundMetrics, METRICS_HEADER};
use crate::oracle::{self, NoiseLevel, Sample};
use crate::qsim::CircuitParams;
use crate::rng::{mix_seed, RandomStream};
use crate::synth::{self, FloorReport, SweepCell, SynthProblem, SWEEP_HEADER};

const TAG_TRAIN: u64 = 101;
const TAG_TEST: u64 = 102;
const TAG_PARTITION: u64 = 103;
const TAG_BIAS: u64 = 104;
const TAG_SHOTS: u64 = 105;
const MAX_REDRAWS: u64 = 16;

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.experiment.out_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    Ok(dir)
}

/// Train/test blobs and the client partition derived from the config seed.
pub struct GeneratedData {
    pub train: Vec<BlobSample>,
    pub test: Vec<BlobSample>,
    pub partition: Partition,
}

pub fn build_data(cfg: &ExperimentConfig) -> Result<GeneratedData, CliError> {
    let seed = cfg.experiment.seed;
    let d = &cfg.data;
    let train = data::generate_blobs(d.n_train, d.flip_p, mix_seed(seed, &[TAG_TRAIN]))?;
    let test = data::generate_blobs(d.n_test, d.flip_p, mix_seed(seed, &[TAG_TEST]))?;
    let labels: Vec<usize> = train.iter().map(|b| b.label).collect();
    let partition = data::dirichlet_partition(&labels, cfg.fed.n_clients, d.dirichlet_alpha, mix_seed(seed, &[TAG_PARTITION]))?;
    Ok(GeneratedData { train, test, partition })
}

pub fn run_gen_data(cfg: &ExperimentConfig) -> Result<GeneratedData, CliError> {
    let dir = out_dir(cfg)?;
    let generated = build_data(cfg)?;
    for (name, set) in [("train.csv", &generated.train), ("test.csv", &generated.test)] {
        let mut buf = Vec::new();
        data::write_dataset_csv(&mut buf, set)?;
        write_file(&dir.join(name), &buf)?;
    }
    write_file(&dir.join("partition.json"), generated.partition.to_json()?.as_bytes())?;
    Ok(generated)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasRow {
    pub p: f64,
    pub raw_mean: f64,
    pub raw_std: f64,
    pub zne_mean: f64,
    pub zne_std: f64,
    /// Per-instance errors, kept for pooled statistics.
    #[serde(skip)]
    pub raw: Vec<f64>,
    #[serde(skip)]
    pub zne: Vec<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Draws the `k`-th (params, sample) instance, redrawing if the ideal gradient vanishes.
fn bias_instance(seed: u64, k: usize, flip_p: f64) -> Result<(CircuitParams, Sample, oracle::GradientEstimate), CliError> {
    for attempt in 0..MAX_REDRAWS {
        let mut rng = RandomStream::derive(seed, &[TAG_BIAS, k as u64, attempt]);
        let params = CircuitParams::random(&mut rng);
        let blob = data::generate_blobs(1, flip_p, rng.fork_seed())?.remove(0);
        let sample = blob.to_sample();
        let ideal = oracle::grad_ideal(&params, std::slice::from_ref(&sample))?;
        if ideal.norm() > 1e-6 {
            return Ok((params, sample, ideal));
        }
    }
    Err(oracle::OracleError::DegenerateReference(0.0).into())
}

pub fn bias_sweep(cfg: &ExperimentConfig) -> Result<Vec<BiasRow>, CliError> {
    let seed = cfg.experiment.seed;
    let sweep = &cfg.bias_sweep;
    let mode = cfg.noise.mode();
    let instances = exec::map_indexed(sweep.instances, |k| bias_instance(seed, k, cfg.data.flip_p))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let levels = &sweep.noise_levels;
    let n = instances.len();
    let errors = exec::map_indexed(levels.len() * n, |idx| -> Result<(f64, f64), CliError> {
        let (li, k) = (idx / n, idx % n);
        let noise = NoiseLevel::new(levels[li])?;
        let (params, sample, ideal) = &instances[k];
        let batch = std::slice::from_ref(sample);
        let mut rng = RandomStream::derive(seed, &[TAG_BIAS, k as u64, u64::MAX, li as u64]);
        let raw = oracle::grad_param_shift(params, batch, noise, mode, &mut rng)?;
        let zne = oracle::grad_zne(params, batch, noise, mode, &cfg.zne, &mut rng)?;
        Ok((oracle::fractional_error(&raw, ideal)?, oracle::fractional_error(&zne, ideal)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(li, &p)| {
            let cell = &errors[li * n..(li + 1) * n];
            let raw: Vec<f64> = cell.iter().map(|e| e.0).collect();
            let zne: Vec<f64> = cell.iter().map(|e| e.1).collect();
            let (raw_mean, raw_std) = mean_std(&raw);
            let (zne_mean, zne_std) = mean_std(&zne);
            BiasRow { p, raw_mean, raw_std, zne_mean, zne_std, raw, zne }
        })
        .collect())
}

pub fn bias_sweep_csv(rows: &[BiasRow]) -> String {
    let mut out = String::from("p,raw_mean,raw_std,zne_mean,zne_std\n");
    for r in rows {
        out += &format!("{},{},{},{},{}\n", r.p, r.raw_mean, r.raw_std, r.zne_mean, r.zne_std);
    }
    out
}

pub fn run_bias_sweep(cfg: &ExperimentConfig) -> Result<Vec<BiasRow>, CliError> {
    let dir = out_dir(cfg)?;
    let rows = bias_sweep(cfg)?;
    write_file(&dir.join("bias_sweep.csv"), bias_sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algo: Algorithm,
    pub final_round: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub grad_evals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlSummary {
    pub seed: u64,
    pub rounds: usize,
    pub noise_p: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub results: Vec<AlgorithmSummary>,
}

#[derive(Debug, Clone)]
pub struct FlCompareOutcome {
    pub initial: RoundMetrics,
    pub series: Vec<MetricsSeries>,
    pub summary: FlSummary,
}

impl FlCompareOutcome {
    pub fn csv(&self, record_timing: bool) -> String {
        let mut buf = Vec::new();
        use std::io::Write;
        writeln!(buf, "{METRICS_HEADER}").expect("write to Vec");
        for s in &self.series {
            let init = MetricsSeries { algorithm: s.algorithm, rows: vec![self.initial.clone()], final_params: Vec::new() };
            init.write_rows(&mut buf, record_timing).expect("write to Vec");
            s.write_rows(&mut buf, record_timing).expect("write to Vec");
        }
        String::from_utf8(buf).expect("ASCII output")
    }

    pub fn summary_json(&self) -> Result<String, CliError> {
        Ok(serde_json::to_string_pretty(&self.summary)? + "\n")
    }

    pub fn final_test_acc(&self, algo: Algorithm) -> Option<f64> {
        self.summary.results.iter().find(|r| r.algo == algo).map(|r| r.test_acc)
    }
}

pub fn fl_compare(cfg: &ExperimentConfig) -> Result<FlCompareOutcome, CliError> {
    let seed = cfg.experiment.seed;
    let generated = build_data(cfg)?;
    let dataset = Dataset { train: data::to_samples(&generated.train), test: data::to_samples(&generated.test) };
    let oracle_cfg = QuantumOracleConfig { noise: cfg.noise.level(), mode: cfg.noise.mode(), zne: cfg.zne.clone() };
    let initial = fed::evaluate_round(&fed::initial_params(seed), &dataset, 0, 0, 0)?;
    let algorithms = &cfg.fed.algorithms;
    let series = exec::map_indexed(algorithms.len(), |k| {
        fed::run_training(&cfg.fed.round_config(algorithms[k]), cfg.fed.rounds, &dataset, &generated.partition, &oracle_cfg, seed)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let results = series
        .iter()
        .map(|s| {
            let last = s.rows.last().unwrap_or(&initial);
            AlgorithmSummary {
                algo: s.algorithm,
                final_round: last.round,
                train_loss: last.train_loss,
                train_acc: last.train_acc,
                test_loss: last.test_loss,
                test_acc: last.test_acc,
                grad_evals: last.grad_evals,
            }
        })
        .collect();
    Ok(FlCompareOutcome {
        initial,
        series,
        summary: FlSummary {
            seed,
            rounds: cfg.fed.rounds,
            noise_p: cfg.noise.p,
            n_train: cfg.data.n_train,
            n_test: cfg.data.n_test,
            results,
        },
    })
}

pub fn run_fl_compare(cfg: &ExperimentConfig) -> Result<FlCompareOutcome, CliError> {
    let dir = out_dir(cfg)?;
    let outcome = fl_compare(cfg)?;
    write_file(&dir.join("fl_compare.csv"), outcome.csv(cfg.experiment.record_timing).as_bytes())?;
    write_file(&dir.join("fl_summary.json"), outcome.summary_json()?.as_bytes())?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShotRow {
    pub shots: u64,
    pub total_variance: f64,
    /// Mean wall time of one gradient evaluation.
    pub wall_ms: f64,
}

pub fn shot_sweep(cfg: &ExperimentConfig) -> Result<Vec<ShotRow>, CliError> {
    let seed = cfg.experiment.seed;
    let (params, sample, _) = bias_instance(seed, 0, cfg.data.flip_p)?;
    let noise = cfg.noise.level();
    let trials = cfg.shot_sweep.trials;
    cfg.shot_sweep
        .shots
        .iter()
        .enumerate()
        .map(|(i, &shots)| {
            let mut rng = RandomStream::derive(seed, &[TAG_SHOTS, i as u64]);
            let start = Instant::now();
            let total_variance = oracle::variance_probe(&params, &sample, shots, trials, noise, &mut rng)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3 / trials as f64;
            log::info!("shots {shots}: total variance {total_variance:.4e}, {wall_ms:.1} ms per gradient");
            Ok(ShotRow { shots, total_variance, wall_ms })
        })
        .collect()
}

pub fn shot_sweep_csv(rows: &[ShotRow]) -> String {
    let mut out = String::from("shots,total_variance,wall_ms\n");
    for r in rows {
        out += &format!("{},{},{:.3}\n", r.shots, r.total_variance, r.wall_ms);
    }
    out
}

pub fn run_shot_sweep(cfg: &ExperimentConfig) -> Result<Vec<ShotRow>, CliError> {
    let dir = out_dir(cfg)?;
    let rows = shot_sweep(cfg)?;
    write_file(&dir.join("shot_sweep.csv"), shot_sweep_csv(&rows).as_bytes())?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthCell {
    pub floor_reached: bool,
    pub report: FloorReport,
}

pub fn synth_floor(cfg: &ExperimentConfig) -> Result<Vec<synth::SweepRow>, CliError> {
    let s = &cfg.synth;
    let seed = cfg.experiment.seed;
    let problem = SynthProblem::generate(&s.problem, seed)?;
    let mut cells = Vec::new();
    for &algorithm in &s.algorithms {
        for &u_q in &s.u_q_values {
            for &kappa_b in &s.kappa_b_values {
                cells.push(SweepCell { algorithm, u_q, kappa_b });
            }
        }
    }
    Ok(synth::floor_sweep(&problem, &s.oracle, &s.run, &cells, seed)?)
}

pub fn synth_floor_csv(rows: &[synth::SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out += &r.csv_line();
        out.push('\n');
    }
    out
}

pub fn run_synth_floor(cfg: &ExperimentConfig) -> Result<Vec<synth::SweepRow>, CliError> {
    let dir = out_dir(cfg)?;
    let rows = synth_floor(cfg)?;
    for r in rows.iter().filter(|r| !r.reached) {
        log::warn!("{} u_q={} kappa_b={}: plateau not reached", r.report.algorithm, r.report.u_q, r.report.kappa_b);
    }
    write_file(&dir.join("synth_floor.csv"), synth_floor_csv(&rows).as_bytes())?;
    let cells: Vec<SynthCell> = rows.iter().map(|r| SynthCell { floor_reached: r.reached, report: r.report.clone() }).collect();
    write_file(&dir.join("synth_floor.json"), (serde_json::to_string_pretty(&cells)? + "\n").as_bytes())?;
    Ok(rows)
}

