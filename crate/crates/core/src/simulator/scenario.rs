//! Seeded population generator.
//!
//! Every random draw comes from a `ChaCha8Rng` seeded with the spec's seed,
//! so a spec reproduces the same population on every platform.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_max_classes() -> usize {
    7
}

fn default_n_classes() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataMode {
    /// Every user holds every class in equal proportion; user sizes follow a
    /// Gaussian with standard deviation `imbalance_ratio * mean`.
    Iid {
        imbalance_ratio: f64,
        #[serde(default = "default_n_classes")]
        n_classes: usize,
    },
    /// Every user holds a random subset of `1..=max_classes` classes.
    NonIid {
        #[serde(default = "default_max_classes")]
        max_classes: usize,
        #[serde(default = "default_n_classes")]
        n_classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub n_users: usize,
    pub total_samples: u64,
    pub mode: DataMode,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::InvalidScenario("n_users must be positive".into()));
        }
        match self.mode {
            DataMode::Iid {
                imbalance_ratio,
                n_classes,
            } => {
                if !(imbalance_ratio.is_finite() && imbalance_ratio >= 0.0) {
                    return Err(Error::InvalidScenario(format!(
                        "imbalance ratio {imbalance_ratio} must be non-negative"
                    )));
                }
                if n_classes == 0 {
                    return Err(Error::InvalidScenario("n_classes must be positive".into()));
                }
            }
            DataMode::NonIid { max_classes, n_classes } => {
                if max_classes == 0 || max_classes > n_classes {
                    return Err(Error::InvalidScenario(format!(
                        "max_classes {max_classes} must lie in 1..={n_classes}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserData {
    pub samples: u64,
    pub class_counts: BTreeMap<u32, u64>,
}

impl UserData {
    pub fn classes(&self) -> BTreeSet<u32> {
        self.class_counts.keys().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedScenario {
    pub users: Vec<UserData>,
    /// Union of every user's classes.
    pub coverage: BTreeSet<u32>,
}

/// Integer apportionment of `total` proportional to `weights`: floors first,
/// then one unit each to the largest fractional parts (ties to the lowest
/// index).
pub fn largest_remainder(weights: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if sum <= 0.0 {
        return largest_remainder(&vec![1.0; weights.len()], total);
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let placed: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total.saturating_sub(placed);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    // Floating error can overshoot by a unit.
    let mut over = counts.iter().sum::<u64>().saturating_sub(total);
    for &i in order.iter().rev() {
        if over == 0 {
            break;
        }
        if counts[i] > 0 {
            counts[i] -= 1;
            over -= 1;
        }
    }
    counts
}

/// Generates a population of users.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<GeneratedScenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_users;
    let users = match spec.mode {
        DataMode::Iid {
            imbalance_ratio,
            n_classes,
        } => {
            let mean = spec.total_samples as f64 / n as f64;
            let sizes: Vec<f64> = if imbalance_ratio == 0.0 {
                vec![mean; n]
            } else {
                let normal =
                    Normal::new(mean, imbalance_ratio * mean).map_err(|e| Error::InvalidScenario(e.to_string()))?;
                (0..n).map(|_| normal.sample(&mut rng).max(1.0)).collect()
            };
            let counts = largest_remainder(&sizes, spec.total_samples);
            counts
                .into_iter()
                .map(|samples| {
                    let per_class = largest_remainder(&vec![1.0; n_classes], samples);
                    UserData {
                        samples,
                        class_counts: (0..n_classes as u32).zip(per_class).collect(),
                    }
                })
                .collect::<Vec<_>>()
        }
        DataMode::NonIid { max_classes, n_classes } => {
            let counts = largest_remainder(&vec![1.0; n], spec.total_samples);
            counts
                .into_iter()
                .map(|samples| {
                    let k = rng.random_range(1..=max_classes);
                    let mut chosen: Vec<u32> = index::sample(&mut rng, n_classes, k)
                        .into_iter()
                        .map(|c| c as u32)
                        .collect();
                    chosen.sort_unstable();
                    let weights: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
                    // One sample per chosen class first, so every listed
                    // class is actually present.
                    let floor = if samples >= k as u64 { 1 } else { 0 };
                    let rest = largest_remainder(&weights, samples - floor * k as u64);
                    UserData {
                        samples,
                        class_counts: chosen
                            .into_iter()
                            .zip(rest)
                            .map(|(c, r)| (c, r + floor))
                            .filter(|&(_, count)| count > 0)
                            .collect(),
                    }
                })
                .collect()
        }
    };
    let coverage = users.iter().flat_map(|u| u.class_counts.keys().copied()).collect();
    Ok(GeneratedScenario { users, coverage })
}
