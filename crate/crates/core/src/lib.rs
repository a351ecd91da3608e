//! Straggler-aware workload scheduling for federated training on
//! heterogeneous mobile devices.
//!
//! The crate covers device cost models ([`model`]), the training-time
//! profiler ([`profiler`]), the min-makespan scheduler for IID data
//! ([`lbap`]), the accuracy-aware greedy for non-IID data ([`mincost`]),
//! gradient diversity ([`diversity`]), a round simulator ([`simulator`]) and
//! exhaustive reference solvers ([`oracle`]).
//!
//! Random draws use `ChaCha8Rng` from `rand_chacha`, seeded with
//! `seed_from_u64`, so seeded runs reproduce across platforms.

pub mod cli;
pub mod diversity;
pub mod error;
pub mod lbap;
pub mod mincost;
pub mod model;
pub mod oracle;
pub mod presets;
pub mod profiler;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{cost_of, AccuracyWeights, CostModel, DeviceProfile, Schedule, TrainingTask};
