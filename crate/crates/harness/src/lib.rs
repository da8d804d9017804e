//! Simulation harness for `sisal-core`: synthetic image pairs, FPR/TPR
//! experiments, brute-force oracles and the `sisal` command line.

pub mod cli;
pub mod experiment;
pub mod fixtures;
pub mod gen;
pub mod models;
pub mod oracle;
