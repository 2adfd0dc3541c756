use proptest::prelude::*;

use qfl::cli::ExperimentConfig;
use qfl::data;
use qfl::fed::{server_aggregate, Algorithm, ClientUpdate, GlobalModel, RoundConfig, ServerState};
use qfl::oracle::{self, ZneConfig};
use qfl::qsim::{amplitude_embed, Axis, DensityMatrix, ZeroInput, N_QUBITS};

#[derive(Debug, Clone)]
enum Op {
    Rot(usize, u8, f64),
    Cnot(usize, usize),
    Depol(usize, f64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..N_QUBITS, 0u8..3, -10.0..10.0f64).prop_map(|(q, a, t)| Op::Rot(q, a, t)),
        (0..N_QUBITS, 1..N_QUBITS).prop_map(|(c, off)| Op::Cnot(c, (c + off) % N_QUBITS)),
        (0..N_QUBITS, 0.0..=1.0f64).prop_map(|(q, p)| Op::Depol(q, p)),
    ]
}

fn apply(rho: &mut DensityMatrix, op: &Op) {
    match *op {
        Op::Rot(q, a, t) => {
            let axis = [Axis::X, Axis::Y, Axis::Z][a as usize];
            rho.apply_rotation(q, axis, t).unwrap();
        }
        Op::Cnot(c, t) => rho.apply_cnot(c, t).unwrap(),
        Op::Depol(q, p) => rho.apply_depolarizing(q, p).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gates_preserve_density_matrix_invariants(
        input in prop::array::uniform16(-1.0..1.0f64),
        ops in prop::collection::vec(op(), 0..40),
    ) {
        let mut rho = amplitude_embed(&input, ZeroInput::BasisFallback).unwrap();
        for o in &ops {
            apply(&mut rho, o);
        }
        let tr = rho.trace();
        prop_assert!((tr.re - 1.0).abs() < 1e-10 && tr.im.abs() < 1e-10);
        prop_assert!(rho.hermiticity_error() < 1e-10);
        prop_assert!(rho.min_eigenvalue() > -1e-9);
        let probs = rho.class_probabilities();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zne_weights_are_exact_on_quadratics(
        a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64,
        gap1 in 0.5..3.0f64, gap2 in 0.5..3.0f64,
    ) {
        let scales = vec![1.0, 1.0 + gap1, 1.0 + gap1 + gap2];
        let cfg = ZneConfig { scale_factors: scales.clone(), degree: 2, clip: true };
        let w = oracle::zne_weights(&cfg).unwrap();
        let est: f64 = scales.iter().zip(&w).map(|(l, g)| g * (a + b * l + c * l * l)).sum();
        prop_assert!((est - a).abs() < 1e-9 * (1.0 + a.abs() + b.abs() + c.abs()));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn partitions_are_disjoint_covers(seed in any::<u64>(), n in 40usize..300, clients in 1usize..10, alpha in 0.05..50.0f64) {
        let blobs = data::generate_blobs(n, 0.05, seed).unwrap();
        let labels: Vec<usize> = blobs.iter().map(|b| b.label).collect();
        let part = data::dirichlet_partition(&labels, clients, alpha, seed).unwrap();
        prop_assert_eq!(part.shards.len(), clients);
        prop_assert!(part.shards.iter().all(|s| !s.is_empty()));
        let mut all: Vec<usize> = part.shards.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let again = data::dirichlet_partition(&labels, clients, alpha, seed).unwrap();
        prop_assert_eq!(part, again);
    }

    #[test]
    fn aggregation_ignores_arrival_order(
        deltas in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 5),
        perm_seed in any::<u64>(),
    ) {
        let cfg = RoundConfig { n_clients: 5, sample_size: 5, algorithm: Algorithm::Scaffold, ..RoundConfig::default() };
        let server = ServerState { model: GlobalModel { x: vec![0.3, -0.2, 1.0], round: 4 }, control: vec![0.0; 3] };
        let updates: Vec<ClientUpdate> = deltas
            .iter()
            .enumerate()
            .map(|(id, d)| ClientUpdate { id, model_delta: d.clone(), control_delta: Some(d.iter().map(|v| v * 0.5).collect()) })
            .collect();
        let mut shuffled = updates.clone();
        let k = (perm_seed % 5) as usize;
        shuffled.rotate_left(k);
        if perm_seed % 2 == 0 {
            shuffled.reverse();
        }
        let a = server_aggregate(&server, &updates, &cfg).unwrap();
        let b = server_aggregate(&server, &shuffled, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn config_round_trips(
        seed in any::<u64>(),
        rounds in 0usize..100,
        lr in 0.0..1.0f64,
        p in 0.0..1.0f64,
        shots in 0u64..1_000_000,
        record in any::<bool>(),
    ) {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.seed = seed;
        cfg.experiment.record_timing = record;
        cfg.fed.rounds = rounds;
        cfg.fed.local_lr = lr;
        cfg.noise.p = p;
        cfg.noise.shots = shots;
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn generation_is_label_balanced() {
    let n = 8000;
    let blobs = data::generate_blobs(n, 0.05, 77).unwrap();
    let mut counts = [0usize; 8];
    blobs.iter().for_each(|b| counts[b.label] += 1);
    let mean = n as f64 / 8.0;
    let sd = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
    assert!(counts.iter().all(|&c| (c as f64 - mean).abs() < 5.0 * sd), "{counts:?}");
}
