//! Training, structural pruning, and sparse inference for click-through-rate
//! models of the factorization-machine family: LR, FM, FwFM, and DeepFwFM.
//!
//! The pipeline runs `data` → `training` (with an optional `pruning` hook) →
//! `sparse` compilation → `metrics` / `bench`. The `cli` module wires the
//! stages together behind the `deeplight` binary.

pub mod bench;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pruning;
pub mod sparse;
pub mod training;

pub use error::{Error, Result};
