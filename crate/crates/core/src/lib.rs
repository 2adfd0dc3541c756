//! Deterministic simulator for quantum federated learning under non-IID
//! client data and noisy quantum gradient estimation.
//!
//! * [`qsim`]: density-matrix simulation of the 4-qubit classifier.
//! * [`oracle`]: parameter-shift, finite-shot and ZNE gradient oracles.
//! * [`data`]: Binary Blobs generation and Dirichlet partitioning.
//! * [`fed`]: FedAvg, SCAFFOLD and Q-ANCHOR over any client oracle.
//! * [`synth`]: quadratic biased-oracle testbed for error-floor experiments.
//! * [`cli`]: experiment configuration and runners behind the `qfl` binary.

pub mod cli;
pub mod data;
pub mod exec;
pub mod fed;
pub mod oracle;
pub mod qsim;
pub mod rng;
pub mod synth;
