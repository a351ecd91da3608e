//! Exhaustive reference solvers for small instances.
//!
//! Both solvers enumerate compositions of the task in lexicographic order by
//! recursive descent and keep the first strictly better assignment, so ties
//! resolve to the lexicographically smallest optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbap::CostMatrix;
use crate::model::{cost_of, AccuracyWeights, DeviceProfile, TrainingTask};

/// Most compositions the oracle agrees to enumerate.
pub const MAX_ENUMERATION: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCap {
    pub max_users: usize,
    pub max_shards: usize,
}

impl Default for InstanceCap {
    fn default() -> Self {
        InstanceCap {
            max_users: 4,
            max_shards: 12,
        }
    }
}

impl InstanceCap {
    fn check(&self, limits: &[usize]) -> Result<()> {
        if limits.len() > self.max_users {
            return Err(Error::TooLarge(format!(
                "{} users exceeds the cap of {}",
                limits.len(),
                self.max_users
            )));
        }
        if let Some(&s) = limits.iter().find(|&&s| s > self.max_shards) {
            return Err(Error::TooLarge(format!(
                "{s} shards per user exceeds the cap of {}",
                self.max_shards
            )));
        }
        let size: f64 = limits.iter().map(|&s| (s + 1) as f64).product();
        if size > MAX_ENUMERATION {
            return Err(Error::TooLarge(format!("{size:.0} compositions to enumerate")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Optimal objective value.
    pub value: f64,
    pub assignment: Vec<usize>,
}

struct Search<'a> {
    costs: &'a [Vec<f64>],
    suffix_capacity: Vec<usize>,
    combine: fn(f64, f64) -> f64,
    best: Option<(f64, Vec<usize>)>,
    current: Vec<usize>,
}

impl Search<'_> {
    fn descend(&mut self, device: usize, remaining: usize, running: f64) {
        if let Some((best, _)) = &self.best {
            // No completion can beat the incumbent strictly.
            if running >= *best {
                return;
            }
        }
        if device == self.costs.len() {
            if remaining == 0 {
                self.best = Some((running, self.current.clone()));
            }
            return;
        }
        if self.suffix_capacity[device] < remaining {
            return;
        }
        let row = &self.costs[device];
        let top = remaining.min(row.len() - 1);
        for (shards, &cost) in row.iter().enumerate().take(top + 1) {
            self.current[device] = shards;
            let next = (self.combine)(running, cost);
            self.descend(device + 1, remaining - shards, next);
        }
        self.current[device] = 0;
    }
}

/// `costs[i][j]` is the objective contribution of `j` shards on device `i`
/// (`costs[i][0]` included). Both objectives are monotone in the running
/// value, which makes the pruning exact.
fn enumerate(costs: &[Vec<f64>], total: usize, combine: fn(f64, f64) -> f64) -> Option<OracleResult> {
    let mut suffix_capacity = vec![0; costs.len() + 1];
    for i in (0..costs.len()).rev() {
        suffix_capacity[i] = suffix_capacity[i + 1] + costs[i].len() - 1;
    }
    let mut search = Search {
        costs,
        suffix_capacity,
        combine,
        best: None,
        current: vec![0; costs.len()],
    };
    search.descend(0, total, 0.0);
    search
        .best
        .map(|(value, assignment)| OracleResult { value, assignment })
}

/// Exhaustive min-max partition over a cost matrix.
pub fn oracle_minmax(matrix: &CostMatrix, total_shards: usize, cap: InstanceCap) -> Result<OracleResult> {
    let limits: Vec<usize> = matrix.rows().iter().map(Vec::len).collect();
    cap.check(&limits)?;
    let costs: Vec<Vec<f64>> = (0..matrix.devices())
        .map(|i| (0..=limits[i]).map(|j| matrix.cost(i, j)).collect())
        .collect();
    enumerate(&costs, total_shards, f64::max)
        .ok_or_else(|| Error::Infeasible(format!("no composition of {total_shards} shards fits the matrix")))
}

/// Exhaustive minimum of compute + (communication + accuracy cost) over
/// participants, subject to capacities.
pub fn oracle_mincost(
    profiles: &[DeviceProfile],
    weights: &AccuracyWeights,
    task: &TrainingTask,
    cap: InstanceCap,
) -> Result<OracleResult> {
    let d = task.total_shards;
    let limits: Vec<usize> = profiles
        .iter()
        .map(|p| p.shard_limit(true).unwrap_or(d).min(d))
        .collect();
    cap.check(&limits)?;
    let mut costs = Vec::with_capacity(profiles.len());
    for (i, p) in profiles.iter().enumerate() {
        let mut row = vec![0.0];
        for j in 1..=limits[i] {
            row.push(cost_of(p, i, j)? + weights.costs[i]);
        }
        costs.push(row);
    }
    enumerate(&costs, d, |acc, c| acc + c)
        .ok_or_else(|| Error::Infeasible(format!("capacities cannot absorb {d} shards")))
}

/// Objective value of an assignment under the min-max criterion, evaluated
/// straight from the profiles.
pub fn minmax_value(profiles: &[DeviceProfile], assignment: &[usize]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, (p, &d)) in profiles.iter().zip(assignment).enumerate() {
        worst = worst.max(cost_of(p, i, d)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lbap::build_cost_matrix;
    use crate::mincost::{accuracy_weights, mincost_schedule};

    fn weights(costs: Vec<f64>) -> AccuracyWeights {
        AccuracyWeights {
            weights: vec![0; costs.len()],
            costs,
            lowest: 0,
        }
    }

    #[test]
    fn minmax_two_linear_devices() {
        let profiles = vec![DeviceProfile::linear(0, 1.0, 0.0), DeviceProfile::linear(1, 2.0, 0.0)];
        let m = build_cost_matrix(&profiles, 4, 4).unwrap();
        let r = oracle_minmax(&m, 4, InstanceCap::default()).unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.assignment, vec![3, 1]);
    }

    #[test]
    fn minmax_single_device_and_empty_task() {
        let m = CostMatrix::from_rows(vec![vec![1.0, 2.0, 7.0]]).unwrap();
        let r = oracle_minmax(&m, 3, InstanceCap::default()).unwrap();
        assert_eq!((r.value, r.assignment), (7.0, vec![3]));
        let m = CostMatrix::from_rows(vec![vec![1.0, 2.0], vec![3.0]]).unwrap();
        let r = oracle_minmax(&m, 0, InstanceCap::default()).unwrap();
        assert_eq!((r.value, r.assignment), (0.0, vec![0, 0]));
    }

    #[test]
    fn minmax_ties_resolve_lexicographically() {
        let m = CostMatrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let r = oracle_minmax(&m, 2, InstanceCap::default()).unwrap();
        assert_eq!(r.assignment, vec![0, 2]);
    }

    #[test]
    fn caps_are_enforced() {
        let m = CostMatrix::from_rows(vec![vec![1.0; 3]; 5]).unwrap();
        assert!(matches!(
            oracle_minmax(&m, 3, InstanceCap::default()).unwrap_err(),
            Error::TooLarge(_)
        ));
        let m = CostMatrix::from_rows(vec![vec![1.0; 13]]).unwrap();
        assert!(matches!(
            oracle_minmax(&m, 3, InstanceCap::default()).unwrap_err(),
            Error::TooLarge(_)
        ));
        let wide = InstanceCap {
            max_users: 10,
            max_shards: 100,
        };
        let m = CostMatrix::from_rows(vec![vec![1.0; 100]; 5]).unwrap();
        assert!(matches!(oracle_minmax(&m, 3, wide).unwrap_err(), Error::TooLarge(_)));
    }

    #[test]
    fn mincost_optimum_beats_total_cost_greedy() {
        // Greedy balances running cost and ends at [3, 1] with total 8; the
        // optimum loads device 0 alone for 4 + 1 = 5.
        let profiles = vec![DeviceProfile::linear(0, 1.0, 0.0), DeviceProfile::linear(1, 3.0, 0.0)];
        let task = TrainingTask::new(4).with_alpha(2.0);
        let w = weights(vec![1.0, 1.0]);
        let r = oracle_mincost(&profiles, &w, &task, InstanceCap::default()).unwrap();
        assert_eq!((r.value, r.assignment.clone()), (5.0, vec![4, 0]));
        let greedy = mincost_schedule(&profiles, &task, &w).unwrap();
        assert!(greedy.total_cost.unwrap() >= r.value);
    }

    #[test]
    fn mincost_excludes_prohibitive_outlier() {
        let profiles = vec![
            DeviceProfile::linear(0, 0.1, 0.0).with_classes([3]),
            DeviceProfile::linear(1, 3.0, 0.0).with_classes(0..10),
        ];
        let task = TrainingTask::new(5).with_alpha(2.0);
        let w = accuracy_weights(&profiles, &task);
        assert_eq!(w.weights, vec![9, 0]);
        let r = oracle_mincost(&profiles, &w, &task, InstanceCap::default()).unwrap();
        assert_eq!(r.assignment, vec![0, 5]);
        let greedy = mincost_schedule(&profiles, &task, &w).unwrap();
        assert_eq!(greedy.assignment, r.assignment);
    }

    #[test]
    fn mincost_tight_capacities() {
        let profiles = vec![
            DeviceProfile::linear(0, 1.0, 0.0).with_capacity(2),
            DeviceProfile::linear(1, 9.0, 0.0).with_capacity(3),
        ];
        let task = TrainingTask::new(5);
        let r = oracle_mincost(&profiles, &weights(vec![1.0, 1.0]), &task, InstanceCap::default()).unwrap();
        assert_eq!(r.assignment, vec![2, 3]);
        let over = TrainingTask::new(6);
        assert!(matches!(
            oracle_mincost(&profiles, &weights(vec![1.0, 1.0]), &over, InstanceCap::default()).unwrap_err(),
            Error::Infeasible(_)
        ));
    }
}
