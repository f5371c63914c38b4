//! Deterministic federated-learning simulator for studying label noise.
//!
//! The crate trains from-scratch ReLU multilayer perceptrons across
//! simulated clients whose labels carry uniform flip noise, and measures
//! the damage: empirical vs ground-truth risk, the generalization error,
//! the path-norm capacity proxy, and the linear noise bound that ties them
//! together. Everything is seeded and bit-reproducible.
//!
//! Module map:
//! - [`nn`]: the network, loss, backprop, SGD, path-norm proxy, snapshots.
//! - [`data`]: datasets, IDX files, grid worlds, IID partitioning, noise.
//! - [`federation`]: the round engine with FedAvg / SCAFFOLD / FedNova.
//! - [`metrics`]: risks, the bound, the identity check, regression fits.
//! - [`oracle`]: slow brute-force reference routes used by tests.

pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod oracle;

pub use error::{Error, Result};
