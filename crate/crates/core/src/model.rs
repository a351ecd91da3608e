//! Domain types shared by the schedulers.
//!
//! A [`DeviceProfile`] describes one phone: how long it takes to train on
//! `j` shards ([`CostModel`]), its fixed upload/download latency, an optional
//! shard capacity and the class labels it holds. A shard count of zero always
//! means the device sits the round out and pays nothing, communication
//! included.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compute-time model for one device as a function of the number of shards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostModel {
    /// `a * shards + b` seconds.
    Linear { a: f64, b: f64 },
    /// `costs[j - 1]` is the compute time for `j` shards. The table length is
    /// the most shards the device can take.
    Table { costs: Vec<f64> },
}

impl CostModel {
    /// Compute time for `shards >= 1`. Zero shards costs nothing.
    pub fn compute(&self, device: usize, shards: usize) -> Result<f64> {
        if shards == 0 {
            return Ok(0.0);
        }
        match self {
            CostModel::Linear { a, b } => Ok(a * shards as f64 + b),
            CostModel::Table { costs } => costs.get(shards - 1).copied().ok_or(Error::ShardsOutOfRange {
                device,
                shards,
                max: costs.len(),
            }),
        }
    }

    /// Largest admissible shard count, `None` when unbounded.
    pub fn max_shards(&self) -> Option<usize> {
        match self {
            CostModel::Linear { .. } => None,
            CostModel::Table { costs } => Some(costs.len()),
        }
    }

    fn validate(&self, device: usize) -> Result<()> {
        match self {
            CostModel::Linear { a, b } => {
                if !a.is_finite() || *a <= 0.0 {
                    return Err(Error::InvalidCostModel {
                        device,
                        reason: format!("slope a = {a} must be finite and positive"),
                    });
                }
                if !b.is_finite() || *b < 0.0 {
                    return Err(Error::InvalidCostModel {
                        device,
                        reason: format!("intercept b = {b} must be finite and non-negative"),
                    });
                }
            }
            CostModel::Table { costs } => {
                if let Some(bad) = costs.iter().position(|c| !c.is_finite() || *c < 0.0) {
                    return Err(Error::InvalidCostModel {
                        device,
                        reason: format!("table entry {} is not a finite non-negative time", bad + 1),
                    });
                }
                for (j, pair) in costs.windows(2).enumerate() {
                    if pair[1] < pair[0] {
                        return Err(Error::NonMonotoneCost {
                            device,
                            shards: j + 2,
                            prev: pair[0],
                            next: pair[1],
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// One participating device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub cost_model: CostModel,
    /// Upload latency in seconds.
    #[serde(default)]
    pub comm_up: f64,
    /// Download latency in seconds.
    #[serde(default)]
    pub comm_down: f64,
    /// Maximum shards the device accepts; `None` is unbounded. Only the
    /// non-IID scheduler honours it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(default)]
    pub classes: BTreeSet<u32>,
}

impl DeviceProfile {
    pub fn new(id: u32, cost_model: CostModel) -> Self {
        DeviceProfile {
            id,
            name: None,
            cost_model,
            comm_up: 0.0,
            comm_down: 0.0,
            capacity: None,
            classes: BTreeSet::new(),
        }
    }

    pub fn linear(id: u32, a: f64, b: f64) -> Self {
        Self::new(id, CostModel::Linear { a, b })
    }

    pub fn table(id: u32, costs: Vec<f64>) -> Self {
        Self::new(id, CostModel::Table { costs })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_comm(mut self, up: f64, down: f64) -> Self {
        self.comm_up = up;
        self.comm_down = down;
        self
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn with_classes(mut self, classes: impl IntoIterator<Item = u32>) -> Self {
        self.classes = classes.into_iter().collect();
        self
    }

    /// Round-trip communication latency.
    pub fn comm(&self) -> f64 {
        self.comm_up + self.comm_down
    }

    /// Linear parameters with communication folded into the intercept.
    pub fn linear_params(&self) -> Option<(f64, f64)> {
        match self.cost_model {
            CostModel::Linear { a, b } => Some((a, b + self.comm())),
            CostModel::Table { .. } => None,
        }
    }

    /// Shard limit from the cost table and, when `with_capacity`, the
    /// device capacity.
    pub fn shard_limit(&self, with_capacity: bool) -> Option<usize> {
        let table = self.cost_model.max_shards();
        let cap = if with_capacity { self.capacity } else { None };
        match (table, cap) {
            (Some(t), Some(c)) => Some(t.min(c)),
            (t, c) => t.or(c),
        }
    }

    /// Label for reports.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("device-{}", self.id))
    }
}

/// Round cost of `profile` training `shards` shards: compute plus upload and
/// download, or zero for a non-participant.
pub fn cost_of(profile: &DeviceProfile, device: usize, shards: usize) -> Result<f64> {
    if shards == 0 {
        return Ok(0.0);
    }
    Ok(profile.cost_model.compute(device, shards)? + profile.comm_up + profile.comm_down)
}

fn default_shard_size() -> usize {
    100
}

fn default_alpha() -> f64 {
    1.8
}

fn default_classes() -> BTreeSet<u32> {
    (0..10).collect()
}

/// The workload to distribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingTask {
    pub total_shards: usize,
    /// Samples per shard; metadata only.
    #[serde(default = "default_shard_size")]
    pub shard_size: usize,
    #[serde(default = "default_classes")]
    pub class_set: BTreeSet<u32>,
    /// Base of the accuracy cost `alpha^w`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

impl TrainingTask {
    /// `total_shards` shards of 100 samples over ten classes, alpha 1.8.
    pub fn new(total_shards: usize) -> Self {
        TrainingTask {
            total_shards,
            shard_size: default_shard_size(),
            class_set: default_classes(),
            alpha: default_alpha(),
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_classes(mut self, classes: impl IntoIterator<Item = u32>) -> Self {
        self.class_set = classes.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_shards == 0 {
            return Err(Error::ZeroShards);
        }
        if self.class_set.is_empty() {
            return Err(Error::InvalidTask("class set is empty".into()));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidTask(format!(
                "alpha = {} must be finite and positive",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Shards per device, in input order.
    pub assignment: Vec<usize>,
    /// Slowest participant's round cost.
    pub makespan: f64,
    /// Compute plus communication per device; zero for non-participants.
    pub per_device_cost: Vec<f64>,
    /// Objective of the non-IID problem (compute + communication + accuracy
    /// cost over participants). Absent for min-max schedules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_cost: Option<f64>,
}

impl Schedule {
    /// Evaluates `assignment` against the device cost models.
    pub fn evaluate(profiles: &[DeviceProfile], assignment: Vec<usize>) -> Result<Schedule> {
        if assignment.len() != profiles.len() {
            return Err(Error::Internal(format!(
                "assignment has {} entries for {} devices",
                assignment.len(),
                profiles.len()
            )));
        }
        let per_device_cost = profiles
            .iter()
            .zip(&assignment)
            .enumerate()
            .map(|(i, (p, &shards))| cost_of(p, i, shards))
            .collect::<Result<Vec<_>>>()?;
        let makespan = makespan_of(&assignment, &per_device_cost);
        Ok(Schedule {
            assignment,
            makespan,
            per_device_cost,
            total_cost: None,
        })
    }

    pub fn total_shards(&self) -> usize {
        self.assignment.iter().sum()
    }

    pub fn participants(&self) -> usize {
        self.assignment.iter().filter(|&&d| d > 0).count()
    }

    /// Checks the schedule invariants: shards sum to the task size, per-device
    /// limits hold and the makespan is the max participant cost.
    pub fn check(&self, profiles: &[DeviceProfile], task: &TrainingTask, with_capacity: bool) -> Result<()> {
        if self.total_shards() != task.total_shards {
            return Err(Error::Internal(format!(
                "schedule assigns {} of {} shards",
                self.total_shards(),
                task.total_shards
            )));
        }
        for (i, (p, &d)) in profiles.iter().zip(&self.assignment).enumerate() {
            if let Some(limit) = p.shard_limit(with_capacity) {
                if d > limit {
                    return Err(Error::Internal(format!(
                        "device {i} holds {d} shards above its limit {limit}"
                    )));
                }
            }
        }
        let expected = makespan_of(&self.assignment, &self.per_device_cost);
        if expected != self.makespan {
            return Err(Error::Internal(format!(
                "makespan {} differs from max participant cost {expected}",
                self.makespan
            )));
        }
        Ok(())
    }
}

pub(crate) fn makespan_of(assignment: &[usize], per_device_cost: &[f64]) -> f64 {
    assignment
        .iter()
        .zip(per_device_cost)
        .filter(|(&d, _)| d > 0)
        .map(|(_, &c)| c)
        .fold(0.0, f64::max)
}

/// Accuracy-cost exponents and the resulting fixed participation costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyWeights {
    /// Exponent `w_i` per device.
    pub weights: Vec<u32>,
    /// `alpha ^ w_i` per device.
    pub costs: Vec<f64>,
    /// Smallest weight, `|C| - max_i |C_i|`.
    pub lowest: u32,
}

/// Profiles and task that passed [`validate_profiles`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub profiles: Vec<DeviceProfile>,
    pub task: TrainingTask,
}

/// Checks every device and task invariant. Whether the fleet can actually
/// hold the task is left to the solvers.
pub fn validate_profiles(profiles: Vec<DeviceProfile>, task: TrainingTask) -> Result<Scenario> {
    if profiles.is_empty() {
        return Err(Error::EmptyDeviceList);
    }
    task.validate()?;
    for (i, p) in profiles.iter().enumerate() {
        let latency_ok = |t: f64| t.is_finite() && t >= 0.0;
        if !latency_ok(p.comm_up) || !latency_ok(p.comm_down) {
            return Err(Error::NegativeLatency { device: i });
        }
        p.cost_model.validate(i)?;
        if let Some(&class) = p.classes.iter().find(|c| !task.class_set.contains(c)) {
            return Err(Error::UnknownClass { device: i, class });
        }
    }
    Ok(Scenario { profiles, task })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_linear() -> Vec<DeviceProfile> {
        vec![DeviceProfile::linear(0, 1.0, 0.0), DeviceProfile::linear(1, 2.0, 0.5)]
    }

    #[test]
    fn accepts_valid_linear_fleet() {
        let scenario = validate_profiles(two_linear(), TrainingTask::new(10)).unwrap();
        assert_eq!(scenario.profiles.len(), 2);
    }

    #[test]
    fn rejects_decreasing_table() {
        let err = validate_profiles(vec![DeviceProfile::table(0, vec![3.0, 2.0])], TrainingTask::new(2)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::NonMonotoneCost {
                    device: 0,
                    shards: 2,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn rejects_empty_fleet() {
        let err = validate_profiles(vec![], TrainingTask::new(5)).unwrap_err();
        assert!(matches!(err, Error::EmptyDeviceList));
    }

    #[test]
    fn rejects_zero_shards_and_bad_latency() {
        assert!(matches!(
            validate_profiles(two_linear(), TrainingTask::new(0)).unwrap_err(),
            Error::ZeroShards
        ));
        let bad = vec![DeviceProfile::linear(0, 1.0, 0.0).with_comm(-0.1, 0.0)];
        assert!(matches!(
            validate_profiles(bad, TrainingTask::new(1)).unwrap_err(),
            Error::NegativeLatency { device: 0 }
        ));
        let nan = vec![DeviceProfile::linear(0, 1.0, 0.0).with_comm(0.0, f64::NAN)];
        assert!(validate_profiles(nan, TrainingTask::new(1)).is_err());
    }

    #[test]
    fn rejects_non_positive_slope_and_foreign_class() {
        let flat = vec![DeviceProfile::linear(0, 0.0, 1.0)];
        assert!(matches!(
            validate_profiles(flat, TrainingTask::new(1)).unwrap_err(),
            Error::InvalidCostModel { .. }
        ));
        let foreign = vec![DeviceProfile::linear(0, 1.0, 0.0).with_classes([11])];
        assert!(matches!(
            validate_profiles(foreign, TrainingTask::new(1)).unwrap_err(),
            Error::UnknownClass { device: 0, class: 11 }
        ));
    }

    #[test]
    fn cost_of_examples() {
        let p = DeviceProfile::linear(0, 2.0, 1.0).with_comm(0.5, 0.5);
        assert_eq!(cost_of(&p, 0, 3).unwrap(), 8.0);
        assert_eq!(cost_of(&p, 0, 0).unwrap(), 0.0);
        let t = DeviceProfile::table(0, vec![1.0, 2.5, 2.5]);
        assert_eq!(cost_of(&t, 0, 2).unwrap(), 2.5);
        assert_eq!(cost_of(&t, 0, 0).unwrap(), 0.0);
        assert!(matches!(
            cost_of(&t, 0, 4).unwrap_err(),
            Error::ShardsOutOfRange { shards: 4, max: 3, .. }
        ));
    }

    #[test]
    fn schedule_evaluate_skips_idle_devices() {
        let profiles = vec![
            DeviceProfile::linear(0, 1.0, 0.0).with_comm(1.0, 1.0),
            DeviceProfile::linear(1, 5.0, 0.0).with_comm(100.0, 0.0),
        ];
        let s = Schedule::evaluate(&profiles, vec![3, 0]).unwrap();
        assert_eq!(s.per_device_cost, vec![5.0, 0.0]);
        assert_eq!(s.makespan, 5.0);
        s.check(&profiles, &TrainingTask::new(3), false).unwrap();
        assert!(s.check(&profiles, &TrainingTask::new(4), false).is_err());
    }

    #[test]
    fn cost_model_json_shape() {
        let json = serde_json::to_string(&CostModel::Linear { a: 2.0, b: 1.0 }).unwrap();
        assert_eq!(json, r#"{"kind":"linear","a":2.0,"b":1.0}"#);
        let table: CostModel = serde_json::from_str(r#"{"kind":"table","costs":[1,2]}"#).unwrap();
        assert_eq!(table.max_shards(), Some(2));
        assert!(serde_json::from_str::<CostModel>(r#"{"kind":"linear","a":1,"b":0,"c":3}"#).is_err());
    }
}
