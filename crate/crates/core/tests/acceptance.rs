//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line each and exits nonzero if any criterion fails.
//!
//! `QFL_ACCEPTANCE_ONLY=1,3,6` restricts the run to the listed criteria.

use std::time::{Duration, Instant};

use rand::Rng;

use qfl::cli::run as runners;
use qfl::cli::ExperimentConfig;
use qfl::data;
use qfl::exec;
use qfl::fed::{Algorithm, Federation};
use qfl::oracle::{self, GradientMode, NoiseLevel, Sample, ZneConfig};
use qfl::qsim::{self, CircuitParams, CircuitSpec, DIM, N_PARAMS};
use qfl::rng::RandomStream;
use qfl::synth::{self, FloorReport, ProblemConfig, SynthError, SynthOracle, SynthOracleConfig, SynthProblem, SynthRunConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_sample(rng: &mut RandomStream) -> Sample {
    let blob = data::generate_blobs(1, 0.05, rng.random()).unwrap().remove(0);
    blob.to_sample()
}

fn c1_gradient_correctness() -> Outcome {
    let mut rng = RandomStream::new(1);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let params = CircuitParams::random(&mut rng);
        let sample = random_sample(&mut rng);
        let g = oracle::grad_ideal(&params, std::slice::from_ref(&sample)).unwrap();
        let loss = |angles: Vec<f64>| {
            let p = CircuitParams::new(angles).unwrap();
            oracle::nll_loss(&p, &sample, NoiseLevel::ZERO, GradientMode::Analytic, &mut RandomStream::new(0)).unwrap()
        };
        for j in 0..N_PARAMS {
            let mut plus = params.as_slice().to_vec();
            let mut minus = plus.clone();
            plus[j] += h;
            minus[j] -= h;
            let fd = (loss(plus) - loss(minus)) / (2.0 * h);
            worst = worst.max((fd - g.values[j]).abs());
        }
    }
    outcome(worst <= 1e-6, format!("max |param-shift - central FD| = {worst:.2e} (tol 1e-6)"))
}

fn c2_density_fuzz() -> Outcome {
    let mut rng = RandomStream::new(2);
    let (mut trace_err, mut herm_err, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for _ in 0..1000 {
        let params = CircuitParams::random(&mut rng);
        let p = rng.random_range(0.0..=0.1);
        let mut input = [0.0; DIM];
        for v in &mut input {
            *v = rng.random_range(-1.0..1.0);
        }
        let rho = qsim::run_circuit(&params, &input, &CircuitSpec::new(p).unwrap()).unwrap();
        let tr = rho.trace();
        trace_err = trace_err.max((tr.re - 1.0).abs().max(tr.im.abs()));
        herm_err = herm_err.max(rho.hermiticity_error());
        min_eig = min_eig.min(rho.min_eigenvalue());
    }
    let pass = trace_err <= 1e-10 && herm_err <= 1e-10 && min_eig >= -1e-9;
    outcome(pass, format!("1000 circuits: |tr - 1| {trace_err:.1e}, hermiticity {herm_err:.1e}, min eigenvalue {min_eig:.2e}"))
}

fn c3_zne_algebra() -> Outcome {
    let cfg = ZneConfig::default();
    let w = oracle::zne_weights(&cfg).unwrap();
    let expected = [1.875, -1.25, 0.375];
    let weights_ok = w.iter().zip(expected).all(|(a, b)| (a - b).abs() <= 1e-12);
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|g| g * g).sum();
    let mut rng = RandomStream::new(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (a, b, c): (f64, f64, f64) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let est: f64 = cfg.scale_factors.iter().zip(&w).map(|(l, g)| g * (a + b * l + c * l * l)).sum();
        worst = worst.max((est - a).abs());
    }
    let pass = weights_ok && (sum - 1.0).abs() <= 1e-12 && (sum_sq - 5.21875).abs() <= 1e-12 && worst <= 1e-9;
    outcome(pass, format!("weights {w:?}, sum {sum}, sum of squares {sum_sq}, worst quadratic recovery error {worst:.1e}"))
}

fn c4_bias_sweep() -> Outcome {
    let rows = runners::bias_sweep(&ExperimentConfig::default()).unwrap();
    let ordering = rows.iter().all(|r| r.zne_mean < r.raw_mean);
    let mut monotone = true;
    for pair in rows.windows(2) {
        let n = pair[0].raw.len() as f64;
        let pooled_se = ((pair[0].raw_std.powi(2) + pair[1].raw_std.powi(2)) / n).sqrt();
        monotone &= pair[1].raw_mean >= pair[0].raw_mean - pooled_se;
    }
    let table: Vec<String> = rows.iter().map(|r| format!("p={} raw {:.3} zne {:.3}", r.p, r.raw_mean, r.zne_mean)).collect();
    outcome(ordering && monotone, format!("ZNE < raw at every p: {ordering}; raw monotone: {monotone}; {}", table.join(", ")))
}

fn c5_shot_sweep() -> Outcome {
    let rows = runners::shot_sweep(&ExperimentConfig::default()).unwrap();
    let first = rows.first().unwrap();
    let last = rows.last().unwrap();
    let ratio = last.total_variance / first.total_variance;
    let xs: Vec<f64> = rows.iter().map(|r| (r.shots as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.total_variance.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    let pass = (0.025..=0.10).contains(&ratio) && (slope + 1.0).abs() <= 0.2;
    outcome(pass, format!("variance ratio 100000/5000 shots {ratio:.4} (want [0.025, 0.10]), log-log slope {slope:.3} (want -1 +/- 0.2)"))
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

fn c6_reduction() -> Outcome {
    let configs = [
        (ProblemConfig { dim: 8, n_clients: 6, ..ProblemConfig::default() }, 6, 0.0, 3),
        (ProblemConfig::default(), 16, 0.9, 5),
        (ProblemConfig::default(), 8, 0.5, 2),
        (ProblemConfig { hessian_heterogeneity: 1.0, ..ProblemConfig::default() }, 4, 0.0, 7),
        (ProblemConfig { dim: 3, n_clients: 10, target_spread: 3.0, ..ProblemConfig::default() }, 5, 0.9, 1),
    ];
    let mut identical = 0;
    for (idx, (pc, sample_size, momentum, steps)) in configs.iter().enumerate() {
        let seed = 60 + idx as u64;
        let problem = SynthProblem::generate(pc, seed).unwrap();
        let oracle = SynthOracle::new(&problem, SynthOracleConfig::default(), seed).unwrap();
        let run = |algorithm| SynthRunConfig {
            algorithm,
            sample_size: *sample_size,
            local_steps: *steps,
            local_momentum: *momentum,
            alpha: 0.0,
            ..SynthRunConfig::default()
        };
        let shards = vec![(0..*steps).collect::<Vec<_>>(); pc.n_clients];
        let x0 = vec![0.0; pc.dim];
        let mut fedavg = Federation::new(run(Algorithm::FedAvg).round_config(pc.n_clients), &oracle, shards.clone(), x0.clone(), seed).unwrap();
        let mut qanchor = Federation::new(run(Algorithm::QAnchor).round_config(pc.n_clients), &oracle, shards, x0, seed).unwrap();
        let mut same = true;
        for _ in 0..50 {
            fedavg.step().unwrap();
            qanchor.step().unwrap();
            same &= fedavg.model().iter().zip(qanchor.model()).all(|(a, b)| a.to_bits() == b.to_bits());
        }
        identical += same as usize;
    }
    outcome(identical == configs.len(), format!("{identical}/5 synthetic configs bitwise identical over 50 rounds"))
}

fn floor(oracle: &SynthOracle<'_>, run: &SynthRunConfig, seed: u64) -> FloorReport {
    synth::measure_floor(oracle, run, seed).or_else(SynthError::into_report).unwrap()
}

fn c7_fedavg_floor() -> Outcome {
    let problem = SynthProblem::generate(&ProblemConfig::default(), 7).unwrap();
    let quiet = |u_q| SynthOracleConfig { u_q, sigma: 0.0, sigma_q: 0.0, ..SynthOracleConfig::default() };
    let run = SynthRunConfig { algorithm: Algorithm::FedAvg, ..SynthRunConfig::default() };
    let base = floor(&SynthOracle::new(&problem, quiet(0.5), 7).unwrap(), &run, 7);
    let doubled_u = floor(&SynthOracle::new(&problem, quiet(1.0), 7).unwrap(), &run, 7);
    let long = floor(
        &SynthOracle::new(&problem, quiet(0.5), 7).unwrap(),
        &SynthRunConfig { rounds: 2 * run.rounds, ..run.clone() },
        7,
    );
    let ratio = doubled_u.plateau / base.plateau;
    let persists = long.plateau >= base.plateau;
    outcome(
        (3.0..=5.0).contains(&ratio) && persists,
        format!(
            "plateau(2U)/plateau(U) = {ratio:.3} (want [3, 5]); plateau {:.4e} at {} rounds, {:.4e} at {} rounds",
            base.plateau,
            run.rounds,
            long.plateau,
            2 * run.rounds
        ),
    )
}

fn c8_qanchor_floor() -> Outcome {
    let problem = SynthProblem::generate(&ProblemConfig::default(), 8).unwrap();
    let small_step = SynthRunConfig { local_lr: 0.01, ..SynthRunConfig::default() };
    let oracle = |kappa_b| SynthOracle::new(&problem, SynthOracleConfig { kappa_b, ..SynthOracleConfig::default() }, 8).unwrap();
    let fedavg = floor(&oracle(10.0), &SynthRunConfig { algorithm: Algorithm::FedAvg, ..small_step.clone() }, 8);
    let qa: Vec<f64> = [1.0, 3.0, 10.0]
        .iter()
        .map(|&k| floor(&oracle(k), &SynthRunConfig { algorithm: Algorithm::QAnchor, ..small_step.clone() }, 8).plateau)
        .collect();
    let reduction = qa[2] <= fedavg.plateau / 5.0;
    let monotone = qa[1] <= qa[0] && qa[2] <= qa[1];
    outcome(
        reduction && monotone,
        format!(
            "eta~ {}: FedAvg {:.3e}, Q-ANCHOR kappa_b 1/3/10 = {:.3e}/{:.3e}/{:.3e} (FedAvg/Q-ANCHOR(10) = {:.1})",
            small_step.effective_stepsize(),
            fedavg.plateau,
            qa[0],
            qa[1],
            qa[2],
            fedavg.plateau / qa[2]
        ),
    )
}

fn c9_fl_compare() -> Outcome {
    let seeds = [1u64, 2, 3];
    let mut acc = [0.0f64; 3];
    for &seed in &seeds {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.seed = seed;
        let out = runners::fl_compare(&cfg).unwrap();
        for (slot, algo) in acc.iter_mut().zip(Algorithm::ALL) {
            *slot += out.final_test_acc(algo).unwrap() / seeds.len() as f64;
        }
        println!(
            "    seed {seed}: fedavg {:.4} scaffold {:.4} qanchor {:.4}",
            out.final_test_acc(Algorithm::FedAvg).unwrap(),
            out.final_test_acc(Algorithm::Scaffold).unwrap(),
            out.final_test_acc(Algorithm::QAnchor).unwrap()
        );
    }
    let [fedavg, scaffold, qanchor] = acc;
    let ordering = qanchor >= fedavg && qanchor >= scaffold;
    let above_chance = acc.iter().all(|a| *a >= 2.0 / 8.0);
    outcome(
        ordering && above_chance,
        format!("mean final test accuracy over 3 seeds: FedAvg {fedavg:.4}, SCAFFOLD {scaffold:.4}, Q-ANCHOR {qanchor:.4} (chance 0.125)"),
    )
}

fn read_all(dir: &std::path::Path, names: &[&str]) -> Vec<Vec<u8>> {
    names.iter().map(|n| std::fs::read(dir.join(n)).unwrap()).collect()
}

fn c10_determinism() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.experiment.seed = 10;
    cfg.data.n_train = 160;
    cfg.data.n_test = 80;
    cfg.fed.rounds = 3;
    cfg.fed.local_epochs = 1;
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let files = ["fl_compare.csv", "fl_summary.json", "synth_floor.csv", "synth_floor.json"];
    let mut outputs = Vec::new();
    for (k, dir) in dirs.iter().enumerate() {
        cfg.experiment.out_dir = dir.path().to_path_buf();
        // The third run uses the sequential path to rule out scheduling effects.
        let strategy = if k == 2 { exec::Strategy::Sequential } else { exec::Strategy::Parallel };
        exec::with_strategy(strategy, || {
            runners::run_fl_compare(&cfg).unwrap();
            runners::run_synth_floor(&cfg).unwrap();
        });
        outputs.push(read_all(dir.path(), &files));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = outputs[0].iter().map(Vec::len).sum();
    outcome(same, format!("fl-compare and synth-floor outputs ({bytes} bytes) identical across 3 reruns, one sequential"))
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "gradient correctness", Duration::from_secs(60), c1_gradient_correctness),
        (2, "density-matrix invariant fuzz", Duration::from_secs(60), c2_density_fuzz),
        (3, "ZNE algebra", Duration::from_secs(60), c3_zne_algebra),
        (4, "fractional error sweep", Duration::from_secs(20 * 60), c4_bias_sweep),
        (5, "shot-count variance", Duration::from_secs(30 * 60), c5_shot_sweep),
        (6, "algorithm reduction", Duration::from_secs(60), c6_reduction),
        (7, "FedAvg bias floor", Duration::from_secs(5 * 60), c7_fedavg_floor),
        (8, "Q-ANCHOR floor reduction", Duration::from_secs(10 * 60), c8_qanchor_floor),
        (9, "federated comparison trend", Duration::from_secs(2 * 3600), c9_fl_compare),
        (10, "output determinism", Duration::from_secs(10 * 60), c10_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("QFL_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= budget;
        let pass = result.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {id:>2} {}: {name}: {} [{:.1}s, budget {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
