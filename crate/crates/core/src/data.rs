//! Binary Blobs generation, Dirichlet non-IID partitioning and evaluation.
//!
//! The eight reference patterns are the four single-row bars and four
//! single-column bars of a 4×4 grid (row-major bit order), labels 0..3 for
//! rows and 4..7 for columns.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::exec;
use crate::oracle::{Sample, PROB_FLOOR};
use crate::qsim::{CircuitParams, CircuitSpec, N_CLASSES, DIM};
use crate::rng::RandomStream;

const GRID: usize = 4;
const MAX_PARTITION_RETRIES: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("bit-flip probability {0} must lie in [0, 0.5)")]
    FlipProbability(f64),
    #[error("need at least one client")]
    NoClients,
    #[error("Dirichlet concentration {0} must be positive and finite")]
    Concentration(f64),
    #[error("every Dirichlet draw left a client empty after {0} attempts")]
    Partition(usize),
    #[error("partition is invalid: {0}")]
    InvalidPartition(String),
    #[error("cannot evaluate on an empty sample set")]
    Empty,
    #[error("malformed dataset CSV at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

/// The eight noiseless 16-bit patterns.
pub fn reference_patterns() -> [[u8; DIM]; N_CLASSES] {
    let mut patterns = [[0u8; DIM]; N_CLASSES];
    for k in 0..GRID {
        for j in 0..GRID {
            patterns[k][k * GRID + j] = 1;
            patterns[GRID + k][j * GRID + k] = 1;
        }
    }
    patterns
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlobSample {
    pub bits: [u8; DIM],
    pub label: usize,
}

impl BlobSample {
    pub fn to_sample(&self) -> Sample {
        let mut features = [0.0; DIM];
        for (f, &b) in features.iter_mut().zip(&self.bits) {
            *f = f64::from(b);
        }
        Sample {
            features,
            label: self.label,
        }
    }
}

pub fn to_samples(blobs: &[BlobSample]) -> Vec<Sample> {
    blobs.iter().map(BlobSample::to_sample).collect()
}

/// Draws `n` samples: a uniformly chosen reference pattern with each bit
/// flipped independently with probability `flip_p`.
pub fn generate_blobs(n: usize, flip_p: f64, seed: u64) -> Result<Vec<BlobSample>, DataError> {
    if !(0.0..0.5).contains(&flip_p) {
        return Err(DataError::FlipProbability(flip_p));
    }
    let patterns = reference_patterns();
    let mut rng = RandomStream::new(seed);
    Ok((0..n)
        .map(|_| {
            let label = rng.random_range(0..N_CLASSES);
            let mut bits = patterns[label];
            for b in bits.iter_mut() {
                if rng.random::<f64>() < flip_p {
                    *b ^= 1;
                }
            }
            BlobSample { bits, label }
        })
        .collect())
}

/// Client shards of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub shards: Vec<Vec<usize>>,
    pub alpha: f64,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.shards.len()
    }

    /// Checks disjointness, coverage of `0..n_samples` and nonempty shards.
    pub fn validate(&self, n_samples: usize) -> Result<(), DataError> {
        let mut seen = vec![false; n_samples];
        for (client, shard) in self.shards.iter().enumerate() {
            if shard.is_empty() {
                return Err(DataError::InvalidPartition(format!("client {client} has no samples")));
            }
            for &i in shard {
                if i >= n_samples {
                    return Err(DataError::InvalidPartition(format!("index {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(DataError::InvalidPartition(format!("index {i} assigned twice")));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(DataError::InvalidPartition(format!("index {i} unassigned")));
        }
        Ok(())
    }

    /// Per-client class histogram.
    pub fn class_counts(&self, labels: &[usize]) -> Vec<[usize; N_CLASSES]> {
        self.shards
            .iter()
            .map(|shard| {
                let mut h = [0; N_CLASSES];
                for &i in shard {
                    h[labels[i]] += 1;
                }
                h
            })
            .collect()
    }

    /// JSON object mapping client id to its index list.
    pub fn to_json(&self) -> Result<String, DataError> {
        let map: BTreeMap<usize, &Vec<usize>> = self.shards.iter().enumerate().collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str, alpha: f64) -> Result<Self, DataError> {
        let map: BTreeMap<usize, Vec<usize>> = serde_json::from_str(text)?;
        if map.keys().copied().ne(0..map.len()) {
            return Err(DataError::InvalidPartition("client ids must be 0..N".into()));
        }
        Ok(Self {
            shards: map.into_values().collect(),
            alpha,
        })
    }
}

fn dirichlet<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        // Every gamma underflowed (tiny alpha); put all mass on one client.
        let k = rng.random_range(0..n);
        draws.iter_mut().enumerate().for_each(|(i, d)| *d = f64::from(u8::from(i == k)));
    }
    draws
}

/// Splits each class across clients by Dirichlet(α·1) proportions, redrawing
/// everything when a client ends up empty.
pub fn dirichlet_partition(labels: &[usize], n_clients: usize, alpha: f64, seed: u64) -> Result<Partition, DataError> {
    if n_clients == 0 {
        return Err(DataError::NoClients);
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DataError::Concentration(alpha));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); N_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = RandomStream::new(seed);
    for _ in 0..MAX_PARTITION_RETRIES {
        let mut shards = vec![Vec::new(); n_clients];
        for class in &by_class {
            let mut idx = class.clone();
            idx.shuffle(&mut rng);
            let props = dirichlet(alpha, n_clients, &mut rng);
            let mut start = 0;
            let mut cum = 0.0;
            for (client, p) in props.iter().enumerate() {
                cum += p;
                let end = if client + 1 == n_clients {
                    idx.len()
                } else {
                    ((cum * idx.len() as f64).floor() as usize).clamp(start, idx.len())
                };
                shards[client].extend_from_slice(&idx[start..end]);
                start = end;
            }
        }
        if shards.iter().all(|s| !s.is_empty()) {
            shards.iter_mut().for_each(|s| s.sort_unstable());
            return Ok(Partition { shards, alpha });
        }
    }
    Err(DataError::Partition(MAX_PARTITION_RETRIES))
}

/// Index of the largest probability, lowest index on ties.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Mean noiseless NLL and accuracy of the classifier on `samples`.
pub fn evaluate(params: &CircuitParams, samples: &[Sample]) -> Result<(f64, f64), DataError> {
    evaluate_with_noise(params, samples, 0.0)
}

pub fn evaluate_with_noise(params: &CircuitParams, samples: &[Sample], noise: f64) -> Result<(f64, f64), DataError> {
    if samples.is_empty() {
        return Err(DataError::Empty);
    }
    let spec = CircuitSpec::new(noise).map_err(crate::oracle::OracleError::from)?;
    let results = exec::map_indexed(samples.len(), |k| {
        let s = &samples[k];
        let probs = crate::qsim::run_circuit(params, &s.features, &spec)
            .expect("validated spec")
            .class_probabilities();
        (-probs[s.label].max(PROB_FLOOR).ln(), argmax(&probs) == s.label)
    });
    let n = samples.len() as f64;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / n;
    let acc = results.iter().filter(|r| r.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Writes `b0..b15,label` rows with a header.
pub fn write_dataset_csv<W: Write>(mut out: W, samples: &[BlobSample]) -> Result<(), DataError> {
    let header: Vec<String> = (0..DIM).map(|i| format!("b{i}")).chain(["label".to_string()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let row: Vec<String> = s.bits.iter().map(u8::to_string).chain([s.label.to_string()]).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_dataset_csv<R: BufRead>(input: R) -> Result<Vec<BlobSample>, DataError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if !line.starts_with("b0,") {
                return Err(DataError::Csv { line: 1, msg: "missing header".into() });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| DataError::Csv { line: n + 1, msg };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != DIM + 1 {
            return Err(err(format!("expected {} fields, got {}", DIM + 1, fields.len())));
        }
        let mut bits = [0u8; DIM];
        for (b, f) in bits.iter_mut().zip(&fields) {
            *b = match f.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(err(format!("bit value {other:?}"))),
            };
        }
        let label: usize = fields[DIM].trim().parse().map_err(|_| err("bad label".into()))?;
        if label >= N_CLASSES {
            return Err(err(format!("label {label} out of range")));
        }
        out.push(BlobSample { bits, label });
    }
    Ok(out)
}
