//! Accuracy-cost weights and the greedy min-average-cost scheduler for
//! non-IID data.
//!
//! Every device pays a fixed participation cost `alpha^w` on top of its
//! compute and communication time. The weight `w` is the number of classes
//! the device is missing, except for contributing outliers (devices that
//! bring classes nobody else has), which get the fleet's lowest weight.
//!
//! The greedy hands out one shard at a time to the device whose running cost
//! `T(l + 1) + comm + alpha^w` is smallest, closing devices that reach their
//! capacity.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cost_of, AccuracyWeights, DeviceProfile, Schedule, TrainingTask};

/// Union of every other device's classes, viewed from each device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationView {
    pub populations: Vec<BTreeSet<u32>>,
    pub lowest_weight: u32,
}

impl PopulationView {
    pub fn new(profiles: &[DeviceProfile], task: &TrainingTask) -> Self {
        let populations = (0..profiles.len())
            .map(|i| {
                profiles
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .flat_map(|(_, p)| p.classes.iter().copied())
                    .collect()
            })
            .collect();
        let widest = profiles.iter().map(|p| p.classes.len()).max().unwrap_or(0);
        PopulationView {
            populations,
            lowest_weight: task.class_set.len().saturating_sub(widest) as u32,
        }
    }
}

/// Weights `w_i` and costs `alpha^w_i` for every device.
///
/// A device whose classes appear nowhere else gets the lowest weight. When
/// several devices hold an identical class set that nobody outside the group
/// has, the first of them gets the lowest weight and the rest keep their
/// missing-class count. Devices with no classes never count as contributing.
pub fn accuracy_weights(profiles: &[DeviceProfile], task: &TrainingTask) -> AccuracyWeights {
    let view = PopulationView::new(profiles, task);
    let total = task.class_set.len();
    let missing = |p: &DeviceProfile| (total - p.classes.intersection(&task.class_set).count()) as u32;

    let mut weights: Vec<u32> = profiles.iter().map(missing).collect();
    let mut settled = vec![false; profiles.len()];
    for i in 0..profiles.len() {
        if settled[i] || profiles[i].classes.is_empty() {
            continue;
        }
        let classes = &profiles[i].classes;
        if classes.is_disjoint(&view.populations[i]) {
            weights[i] = view.lowest_weight;
            settled[i] = true;
            continue;
        }
        let group: Vec<usize> = (0..profiles.len())
            .filter(|&j| &profiles[j].classes == classes)
            .collect();
        if group.len() < 2 {
            continue;
        }
        let outside_overlap = profiles
            .iter()
            .enumerate()
            .filter(|(j, _)| !group.contains(j))
            .any(|(_, p)| !p.classes.is_disjoint(classes));
        if !outside_overlap {
            weights[group[0]] = view.lowest_weight;
        }
        for j in group {
            settled[j] = true;
        }
    }
    let costs = weights.iter().map(|&w| task.alpha.powi(w as i32)).collect();
    AccuracyWeights {
        weights,
        costs,
        lowest: view.lowest_weight,
    }
}

/// One greedy decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub device: usize,
    /// Running cost of the chosen device after taking the shard.
    pub value: f64,
}

/// Mutable state of the greedy.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyState {
    pub shards: Vec<usize>,
    pub closed: Vec<bool>,
    limits: Vec<Option<usize>>,
}

impl GreedyState {
    fn new(profiles: &[DeviceProfile]) -> Self {
        let limits: Vec<Option<usize>> = profiles.iter().map(|p| p.shard_limit(true)).collect();
        let closed = limits.iter().map(|l| *l == Some(0)).collect();
        GreedyState {
            shards: vec![0; profiles.len()],
            closed,
            limits,
        }
    }

    pub fn opened(&self) -> impl Iterator<Item = usize> + '_ {
        self.shards.iter().enumerate().filter(|(_, &l)| l > 0).map(|(i, _)| i)
    }

    fn assign(&mut self, i: usize) {
        self.shards[i] += 1;
        if self.limits[i].is_some_and(|u| self.shards[i] >= u) {
            self.closed[i] = true;
        }
    }
}

/// Running cost of device `i` holding `shards` shards, accuracy cost included.
pub fn step_value(profile: &DeviceProfile, i: usize, shards: usize, accuracy_cost: f64) -> Result<f64> {
    Ok(cost_of(profile, i, shards)? + accuracy_cost)
}

/// Greedy non-IID schedule.
pub fn mincost_schedule(
    profiles: &[DeviceProfile],
    task: &TrainingTask,
    weights: &AccuracyWeights,
) -> Result<Schedule> {
    mincost_trace(profiles, task, weights).map(|(s, _)| s)
}

/// Greedy schedule together with the decision taken at every step.
pub fn mincost_trace(
    profiles: &[DeviceProfile],
    task: &TrainingTask,
    weights: &AccuracyWeights,
) -> Result<(Schedule, Vec<GreedyStep>)> {
    if profiles.is_empty() {
        return Err(Error::EmptyDeviceList);
    }
    if weights.costs.len() != profiles.len() {
        return Err(Error::Internal(format!(
            "{} accuracy costs for {} devices",
            weights.costs.len(),
            profiles.len()
        )));
    }
    let mut state = GreedyState::new(profiles);
    let mut trace = Vec::with_capacity(task.total_shards);
    for step in 0..task.total_shards {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in profiles.iter().enumerate() {
            if state.closed[i] {
                continue;
            }
            let v = step_value(p, i, state.shards[i] + 1, weights.costs[i])?;
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
        let Some((i, value)) = best else {
            return Err(Error::Infeasible(format!(
                "every device is at capacity after {step} of {} shards",
                task.total_shards
            )));
        };
        state.assign(i);
        trace.push(GreedyStep { device: i, value });
    }

    let mut schedule = Schedule::evaluate(profiles, state.shards)?;
    let total: f64 = schedule
        .assignment
        .iter()
        .zip(&schedule.per_device_cost)
        .zip(&weights.costs)
        .filter(|((&d, _), _)| d > 0)
        .map(|((_, &c), &acc)| c + acc)
        .sum();
    schedule.total_cost = Some(total);
    Ok((schedule, trace))
}

/// Objective of the non-IID problem for an arbitrary assignment.
pub fn total_cost(profiles: &[DeviceProfile], weights: &AccuracyWeights, assignment: &[usize]) -> Result<f64> {
    let mut sum = 0.0;
    for (i, (p, &d)) in profiles.iter().zip(assignment).enumerate() {
        if d > 0 {
            sum += cost_of(p, i, d)? + weights.costs[i];
        }
    }
    Ok(sum)
}

/// Prediction of the two-device linear closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternationPlan {
    /// Device whose cost line starts lower.
    pub leader: usize,
    /// Shards the leader takes before its running cost passes the other
    /// device's starting cost.
    pub phase_one: usize,
    /// `floor(steeper slope / flatter slope)`: shards the flatter device
    /// takes per shard of the steeper one during the alternation.
    pub ratio: u64,
    pub assignment: Vec<usize>,
}

/// Closed-form greedy outcome for two linear, uncapped devices.
///
/// Each device's running costs form an arithmetic progression, so the greedy
/// ends up holding the `D` cheapest entries of the two progressions. The
/// leader fills alone until its cost reaches the other device's starting
/// cost; after that the shards split in inverse proportion to the slopes,
/// which is resolved exactly by locating the `D`-th cheapest entry with a
/// binary search on each progression.
///
/// Capacities are not modelled; a binding capacity is rejected.
pub fn alternation_check_linear(
    profiles: &[DeviceProfile],
    weights: &AccuracyWeights,
    total_shards: usize,
) -> Result<AlternationPlan> {
    if profiles.len() != 2 {
        return Err(Error::NotTwoDevices(profiles.len()));
    }
    let mut slopes = [0.0; 2];
    for (i, p) in profiles.iter().enumerate() {
        slopes[i] = p.linear_params().ok_or(Error::NonLinearProfile { device: i })?.0;
        if p.capacity.is_some_and(|u| u < total_shards) {
            return Err(Error::Config(format!(
                "device {i}: capacity binds; the closed form assumes uncapped devices"
            )));
        }
    }
    let value = |i: usize, k: usize| step_value(&profiles[i], i, k, weights.costs[i]);

    // Cost lines start at their fixed cost for zero shards.
    let intercept = [value(0, 1)? - slopes[0], value(1, 1)? - slopes[1]];
    let leader = if intercept[1] < intercept[0] { 1 } else { 0 };
    let other = 1 - leader;
    let phase_one = count_entries(|k| value(leader, k), total_shards, |v| v <= intercept[other])?;

    let assignment = if phase_one >= total_shards {
        let mut a = vec![0; 2];
        a[leader] = total_shards;
        a
    } else {
        kth_cheapest_split(&value, total_shards)?
    };
    let (steep, flat) = if slopes[0] >= slopes[1] {
        (slopes[0], slopes[1])
    } else {
        (slopes[1], slopes[0])
    };
    Ok(AlternationPlan {
        leader,
        phase_one: phase_one.min(total_shards),
        ratio: (steep / flat).floor() as u64,
        assignment,
    })
}

/// Number of leading progression entries (out of `limit`) satisfying `pred`.
fn count_entries(value: impl Fn(usize) -> Result<f64>, limit: usize, pred: impl Fn(f64) -> bool) -> Result<usize> {
    let (mut lo, mut hi) = (0usize, limit);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if pred(value(mid)?) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}

/// Split of the `total` cheapest entries of two increasing progressions,
/// ties to device 0.
fn kth_cheapest_split(value: &impl Fn(usize, usize) -> Result<f64>, total: usize) -> Result<Vec<usize>> {
    // Entries of device i at or below `t`.
    let at_most = |i: usize, t: f64| count_entries(|k| value(i, k), total, |v| v <= t);
    // Threshold: the smallest entry t with at_most(0, t) + at_most(1, t) >= total.
    let mut threshold = f64::INFINITY;
    for i in 0..2 {
        let mut lo = 1usize;
        let mut hi = total;
        let reaches = |k: usize| -> Result<bool> {
            let t = value(i, k)?;
            Ok(at_most(0, t)? + at_most(1, t)? >= total)
        };
        if !reaches(hi)? {
            continue;
        }
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if reaches(mid)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        threshold = threshold.min(value(i, lo)?);
    }
    let below = |i: usize| count_entries(|k| value(i, k), total, |v| v < threshold);
    let mut split = vec![below(0)?, below(1)?];
    let mut left = total - split[0] - split[1];
    for (i, s) in split.iter_mut().enumerate() {
        if left > 0 && value(i, *s + 1)? == threshold {
            *s += 1;
            left -= 1;
        }
    }
    if left != 0 {
        return Err(Error::Internal("closed-form split did not exhaust the shards".into()));
    }
    Ok(split)
}
