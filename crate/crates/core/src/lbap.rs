//! Min-makespan partitioning for IID data.
//!
//! [`fed_lbap`] runs a threshold search over the sorted entries of the cost
//! matrix: for a threshold `c`, each device can take every shard count whose
//! cost stays at or below `c`, and the smallest `c` whose caps add up to the
//! task size is the optimal makespan. [`analytical_linear`] is the closed
//! form for linear cost models, where the relaxed optimum equalises every
//! participant's round time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cost_of, DeviceProfile, Schedule};

/// `rows[i][j - 1]` is the round cost of giving `j` shards to device `i`.
///
/// Rows may differ in length when table cost models are shorter than the
/// requested shard limit; every row is non-decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    rows: Vec<Vec<f64>>,
}

impl CostMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::InvalidCostModel {
                    device: i,
                    reason: format!("cost for {} shards is not a finite non-negative time", j + 1),
                });
            }
            if let Some(j) = row.windows(2).position(|w| w[1] < w[0]) {
                return Err(Error::NonMonotoneCost {
                    device: i,
                    shards: j + 2,
                    prev: row[j],
                    next: row[j + 1],
                });
            }
        }
        Ok(CostMatrix { rows })
    }

    pub fn devices(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Cost of `shards` on device `i`; zero shards costs nothing.
    pub fn cost(&self, i: usize, shards: usize) -> f64 {
        if shards == 0 {
            0.0
        } else {
            self.rows[i][shards - 1]
        }
    }

    /// Most shards the whole fleet can absorb.
    pub fn capacity(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Schedule for an assignment over this matrix.
    pub fn schedule(&self, assignment: Vec<usize>) -> Schedule {
        let per_device_cost: Vec<f64> = assignment.iter().enumerate().map(|(i, &d)| self.cost(i, d)).collect();
        let makespan = crate::model::makespan_of(&assignment, &per_device_cost);
        Schedule {
            assignment,
            makespan,
            per_device_cost,
            total_cost: None,
        }
    }
}

/// Cost matrix with exactly `max_shards` columns per device.
pub fn build_cost_matrix(profiles: &[DeviceProfile], total_shards: usize, max_shards: usize) -> Result<CostMatrix> {
    if profiles.is_empty() {
        return Err(Error::EmptyDeviceList);
    }
    if profiles.len().saturating_mul(max_shards) < total_shards {
        return Err(Error::Infeasible(format!(
            "{} devices x {max_shards} shards cannot hold {total_shards} shards",
            profiles.len()
        )));
    }
    let rows = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| (1..=max_shards).map(|j| cost_of(p, i, j)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    CostMatrix::from_rows(rows)
}

/// Cost matrix whose rows run to `min(total_shards, table length)`.
pub fn build_cost_matrix_for(profiles: &[DeviceProfile], total_shards: usize) -> Result<CostMatrix> {
    if profiles.is_empty() {
        return Err(Error::EmptyDeviceList);
    }
    let rows = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let limit = p.shard_limit(false).unwrap_or(total_shards).min(total_shards);
            (1..=limit).map(|j| cost_of(p, i, j)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = CostMatrix::from_rows(rows)?;
    if matrix.capacity() < total_shards {
        return Err(Error::Infeasible(format!(
            "fleet holds at most {} of {total_shards} shards",
            matrix.capacity()
        )));
    }
    Ok(matrix)
}

/// Per-device shard caps under a cost threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub caps: Vec<usize>,
}

/// `caps[i]` is the largest shard count whose cost is at most `threshold`.
pub fn feasible_at(matrix: &CostMatrix, threshold: f64, total_shards: usize) -> Feasibility {
    let caps: Vec<usize> = matrix
        .rows
        .iter()
        .map(|row| row.partition_point(|&c| c <= threshold))
        .collect();
    let feasible = caps.iter().sum::<usize>() >= total_shards;
    Feasibility { feasible, caps }
}

/// Optimal min-makespan partition of `total_shards` over the matrix rows.
pub fn fed_lbap(matrix: &CostMatrix, total_shards: usize) -> Result<Schedule> {
    if matrix.devices() == 0 {
        return Err(Error::EmptyDeviceList);
    }
    if matrix.capacity() < total_shards {
        return Err(Error::Infeasible(format!(
            "fleet holds at most {} of {total_shards} shards",
            matrix.capacity()
        )));
    }
    if total_shards == 0 {
        return Ok(matrix.schedule(vec![0; matrix.devices()]));
    }

    let mut values: Vec<f64> = matrix.rows.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();

    // Smallest index whose threshold is feasible; the last value always is.
    let (mut lo, mut hi) = (0usize, values.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if feasible_at(matrix, values[mid], total_shards).feasible {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut caps = feasible_at(matrix, values[lo], total_shards).caps;

    // Shed the surplus from whichever device currently runs longest.
    let mut surplus = caps.iter().sum::<usize>() - total_shards;
    while surplus > 0 {
        let mut worst: Option<(usize, f64)> = None;
        for (i, &cap) in caps.iter().enumerate() {
            if cap == 0 {
                continue;
            }
            let c = matrix.cost(i, cap);
            if worst.is_none_or(|(_, w)| c > w) {
                worst = Some((i, c));
            }
        }
        let (i, _) = worst.ok_or_else(|| Error::Internal("surplus with no assigned shards".into()))?;
        caps[i] -= 1;
        surplus -= 1;
    }
    Ok(matrix.schedule(caps))
}

/// Equal shares, remainder to the lowest indices.
pub fn equal_split(devices: usize, total_shards: usize) -> Vec<usize> {
    let base = total_shards / devices;
    let extra = total_shards % devices;
    (0..devices).map(|i| base + usize::from(i < extra)).collect()
}

/// Relaxed and rounded closed-form solution for linear fleets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalSolution {
    /// Relaxed optimal round time.
    pub t_star: f64,
    /// Real-valued shards per device; zero outside the support.
    pub relaxed: Vec<f64>,
    pub schedule: Schedule,
}

/// Closed-form optimum when every cost model is linear.
///
/// Communication is folded into the intercept. Devices whose intercept alone
/// exceeds the round time are dropped and the system re-solved over the rest
/// until every share is non-negative. Rounding floors every share and hands
/// the leftover shards out one at a time to the device with the cheapest
/// resulting round cost.
pub fn analytical_linear(profiles: &[DeviceProfile], total_shards: usize) -> Result<AnalyticalSolution> {
    if profiles.is_empty() {
        return Err(Error::EmptyDeviceList);
    }
    let params = linear_fleet(profiles)?;
    let n = params.len();
    let d = total_shards as f64;

    let mut support: Vec<bool> = vec![true; n];
    let (t_star, relaxed) = loop {
        let (inv_sum, ratio_sum) = params
            .iter()
            .zip(&support)
            .filter(|(_, &on)| on)
            .fold((0.0, 0.0), |(inv, ratio), (&(a, b), _)| (inv + 1.0 / a, ratio + b / a));
        let t = (d + ratio_sum) / inv_sum;
        let shares: Vec<f64> = params
            .iter()
            .zip(&support)
            .map(|(&(a, b), &on)| if on { (t - b) / a } else { 0.0 })
            .collect();
        let mut changed = false;
        for (on, share) in support.iter_mut().zip(&shares) {
            if *on && *share < 0.0 {
                *on = false;
                changed = true;
            }
        }
        if !changed {
            break (t, shares);
        }
    };

    let mut assignment: Vec<usize> = relaxed.iter().map(|x| x.floor().max(0.0) as usize).collect();
    let mut placed: usize = assignment.iter().sum();
    // Floating error can push the floors past the total.
    while placed > total_shards {
        let i = (0..n)
            .filter(|&i| assignment[i] > 0)
            .max_by(|&x, &y| {
                let cx = params[x].0 * assignment[x] as f64 + params[x].1;
                let cy = params[y].0 * assignment[y] as f64 + params[y].1;
                cx.total_cmp(&cy).then(y.cmp(&x))
            })
            .ok_or_else(|| Error::Internal("rounding overshoot".into()))?;
        assignment[i] -= 1;
        placed -= 1;
    }
    while placed < total_shards {
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for (i, &(a, b)) in params.iter().enumerate() {
            let c = a * (assignment[i] + 1) as f64 + b;
            if c < best_cost {
                best = i;
                best_cost = c;
            }
        }
        assignment[best] += 1;
        placed += 1;
    }
    let schedule = Schedule::evaluate(profiles, assignment)?;
    Ok(AnalyticalSolution {
        t_star,
        relaxed,
        schedule,
    })
}

fn linear_fleet(profiles: &[DeviceProfile]) -> Result<Vec<(f64, f64)>> {
    profiles
        .iter()
        .enumerate()
        .map(|(i, p)| match p.linear_params() {
            Some((a, b)) if a > 0.0 => Ok((a, b)),
            Some(_) => Err(Error::InvalidCostModel {
                device: i,
                reason: "slope must be positive".into(),
            }),
            None => Err(Error::NonLinearProfile { device: i }),
        })
        .collect()
}

/// True when every participant of a relaxed assignment finishes at the same
/// time, within 1e-9 relative. Devices with a zero share are ignored.
pub fn check_property3(relaxed: &[f64], profiles: &[DeviceProfile]) -> Result<bool> {
    let params = linear_fleet(profiles)?;
    let times: Vec<f64> = relaxed
        .iter()
        .zip(&params)
        .filter(|(&x, _)| x > 0.0)
        .map(|(&x, &(a, b))| a * x + b)
        .collect();
    let Some(&first) = times.first() else {
        return Ok(true);
    };
    let scale = times.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    Ok(times.iter().all(|t| (t - first).abs() <= 1e-9 * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(slopes: &[f64], intercepts: &[f64]) -> Vec<DeviceProfile> {
        slopes
            .iter()
            .zip(intercepts)
            .enumerate()
            .map(|(i, (&a, &b))| DeviceProfile::linear(i as u32, a, b))
            .collect()
    }

    #[test]
    fn cost_matrix_rows() {
        let m = build_cost_matrix(&linear(&[1.0, 2.0], &[0.0, 0.0]), 4, 4).unwrap();
        assert_eq!(m.rows(), &[vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 4.0, 6.0, 8.0]]);
        let err = build_cost_matrix(&linear(&[1.0], &[0.0]), 4, 3).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        let flat = build_cost_matrix(&[DeviceProfile::table(0, vec![1.0, 1.0, 5.0])], 3, 3).unwrap();
        assert_eq!(flat.rows()[0], vec![1.0, 1.0, 5.0]);
        let short = build_cost_matrix(&[DeviceProfile::table(0, vec![1.0, 1.0])], 3, 3).unwrap_err();
        assert!(matches!(short, Error::ShardsOutOfRange { .. }));
    }

    #[test]
    fn feasibility_caps() {
        let m = build_cost_matrix(&linear(&[1.0, 2.0], &[0.0, 0.0]), 4, 4).unwrap();
        assert_eq!(
            feasible_at(&m, 3.0, 4),
            Feasibility {
                feasible: true,
                caps: vec![3, 1]
            }
        );
        assert_eq!(
            feasible_at(&m, 0.5, 1),
            Feasibility {
                feasible: false,
                caps: vec![0, 0]
            }
        );
        assert_eq!(
            feasible_at(&m, 8.0, 8),
            Feasibility {
                feasible: true,
                caps: vec![4, 4]
            }
        );
    }

    #[test]
    fn fed_lbap_examples() {
        let m = build_cost_matrix(&linear(&[1.0, 2.0], &[0.0, 0.0]), 4, 4).unwrap();
        let s = fed_lbap(&m, 4).unwrap();
        assert_eq!(s.assignment, vec![3, 1]);
        assert_eq!(s.makespan, 3.0);

        let single = CostMatrix::from_rows(vec![vec![1.0, 2.0, 7.0]]).unwrap();
        let s = fed_lbap(&single, 3).unwrap();
        assert_eq!((s.assignment, s.makespan), (vec![3], 7.0));

        let twins = build_cost_matrix(&linear(&[1.0, 1.0], &[0.0, 0.0]), 10, 10).unwrap();
        let s = fed_lbap(&twins, 10).unwrap();
        assert_eq!((s.assignment, s.makespan), (vec![5, 5], 5.0));
    }

    #[test]
    fn fed_lbap_infeasible_and_empty_task() {
        let m = CostMatrix::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        assert!(matches!(fed_lbap(&m, 3).unwrap_err(), Error::Infeasible(_)));
        let s = fed_lbap(&m, 0).unwrap();
        assert_eq!((s.assignment, s.makespan), (vec![0], 0.0));
    }

    #[test]
    fn fed_lbap_leaves_slow_device_idle() {
        let profiles = vec![
            DeviceProfile::linear(0, 1.0, 0.0),
            DeviceProfile::linear(1, 1.0, 0.0).with_comm(50.0, 50.0),
        ];
        let m = build_cost_matrix_for(&profiles, 6).unwrap();
        let s = fed_lbap(&m, 6).unwrap();
        assert_eq!(s.assignment, vec![6, 0]);
        assert_eq!(s.per_device_cost, vec![6.0, 0.0]);
    }

    #[test]
    fn equal_split_remainder_to_front() {
        assert_eq!(equal_split(3, 10), vec![4, 3, 3]);
        assert_eq!(equal_split(4, 8), vec![2, 2, 2, 2]);
    }

    #[test]
    fn analytical_examples() {
        let sol = analytical_linear(&linear(&[1.0, 1.0], &[0.0, 0.0]), 10).unwrap();
        assert_eq!(sol.t_star, 5.0);
        assert_eq!(sol.relaxed, vec![5.0, 5.0]);
        assert_eq!(sol.schedule.assignment, vec![5, 5]);

        let sol = analytical_linear(&linear(&[1.0, 2.0], &[0.0, 0.0]), 9).unwrap();
        assert!((sol.t_star - 6.0).abs() < 1e-12);
        assert!((sol.relaxed[0] - 6.0).abs() < 1e-12 && (sol.relaxed[1] - 3.0).abs() < 1e-12);

        // T* = (7 + 1/2 + 2/3) / (1/2 + 1/3) = 9.8
        let profiles = linear(&[2.0, 3.0], &[1.0, 2.0]);
        let sol = analytical_linear(&profiles, 7).unwrap();
        assert!((sol.t_star - 9.8).abs() < 1e-12);
        assert!((sol.relaxed[0] - 4.4).abs() < 1e-12 && (sol.relaxed[1] - 2.6).abs() < 1e-12);
        assert!(check_property3(&sol.relaxed, &profiles).unwrap());
        assert!(sol.schedule.makespan >= sol.t_star);
        assert!(sol.schedule.makespan <= sol.t_star + 3.0);
    }

    #[test]
    fn analytical_water_fills_expensive_devices() {
        // Device 1's intercept alone exceeds the unconstrained optimum.
        let profiles = linear(&[1.0, 1.0], &[0.0, 100.0]);
        let sol = analytical_linear(&profiles, 10).unwrap();
        assert_eq!(sol.relaxed, vec![10.0, 0.0]);
        assert_eq!(sol.t_star, 10.0);
        assert_eq!(sol.schedule.assignment, vec![10, 0]);
    }

    #[test]
    fn analytical_rejects_table_models() {
        let profiles = vec![DeviceProfile::table(0, vec![1.0])];
        assert!(matches!(
            analytical_linear(&profiles, 1).unwrap_err(),
            Error::NonLinearProfile { device: 0 }
        ));
    }

    #[test]
    fn property3_examples() {
        let profiles = linear(&[2.0, 3.0], &[1.0, 2.0]);
        assert!(!check_property3(&[4.5, 2.5], &profiles).unwrap());
        assert!(check_property3(&[3.0], &linear(&[2.0], &[0.0])).unwrap());
    }
}
