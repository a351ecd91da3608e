//! Multi-scheduler campaigns: one schedule per scheduler, the resulting
//! round time, and wall-clock estimates to each accuracy target.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::convergence::{break_even_accuracy, crossing_accuracies, epochs_to_accuracy, ConvergenceModel};
use super::round_makespan;
use super::scenario::{generate_scenario, largest_remainder, ScenarioSpec};
use crate::error::{Error, Result};
use crate::lbap::{analytical_linear, build_cost_matrix_for, equal_split, fed_lbap};
use crate::mincost::{accuracy_weights, mincost_schedule};
use crate::model::{CostModel, DeviceProfile, Schedule, TrainingTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    FedLbap,
    Analytical,
    Mincost,
    EqualSplit,
    Proportional,
    Random,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 6] = [
        SchedulerKind::FedLbap,
        SchedulerKind::Analytical,
        SchedulerKind::Mincost,
        SchedulerKind::EqualSplit,
        SchedulerKind::Proportional,
        SchedulerKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::FedLbap => "fed_lbap",
            SchedulerKind::Analytical => "analytical",
            SchedulerKind::Mincost => "mincost",
            SchedulerKind::EqualSplit => "equal_split",
            SchedulerKind::Proportional => "proportional",
            SchedulerKind::Random => "random",
        }
    }

    pub fn parse(name: &str) -> Option<SchedulerKind> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Static speed weight of a device: `1 / a` for linear models, the inverse
/// one-shard compute time for tables.
fn speed_weight(profile: &DeviceProfile, i: usize) -> Result<f64> {
    let unit = match &profile.cost_model {
        CostModel::Linear { a, .. } => *a,
        CostModel::Table { .. } => profile.cost_model.compute(i, 1)?,
    };
    Ok(if unit > 0.0 { 1.0 / unit } else { f64::MAX })
}

/// Uniformly random composition of `total` into `parts` non-negative parts
/// (stars and bars).
pub fn random_composition(parts: usize, total: usize, seed: u64) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bars: Vec<usize> = index::sample(&mut rng, total + parts - 1, parts - 1).into_vec();
    bars.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for (k, &b) in bars.iter().enumerate() {
        // Position `b` is the k-th bar; stars before it belong to part k.
        out.push(b - k - prev);
        prev = b - k;
    }
    out.push(total - prev);
    out
}

/// Runs one scheduler on a fleet.
pub fn run_scheduler(
    kind: SchedulerKind,
    profiles: &[DeviceProfile],
    task: &TrainingTask,
    seed: u64,
) -> Result<Schedule> {
    if profiles.is_empty() {
        return Err(Error::EmptyDeviceList);
    }
    let d = task.total_shards;
    match kind {
        SchedulerKind::FedLbap => fed_lbap(&build_cost_matrix_for(profiles, d)?, d),
        SchedulerKind::Analytical => Ok(analytical_linear(profiles, d)?.schedule),
        SchedulerKind::Mincost => {
            let weights = accuracy_weights(profiles, task);
            mincost_schedule(profiles, task, &weights)
        }
        SchedulerKind::EqualSplit => Schedule::evaluate(profiles, equal_split(profiles.len(), d)),
        SchedulerKind::Proportional => {
            let weights = profiles
                .iter()
                .enumerate()
                .map(|(i, p)| speed_weight(p, i))
                .collect::<Result<Vec<_>>>()?;
            let shares = largest_remainder(&weights, d as u64);
            Schedule::evaluate(profiles, shares.into_iter().map(|x| x as usize).collect())
        }
        SchedulerKind::Random => Schedule::evaluate(profiles, random_composition(profiles.len(), d, seed)),
    }
}

/// Convergence curve of a scheduler; the per-epoch time comes from the
/// simulated round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveParams {
    pub asymptote: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub profiles: Vec<DeviceProfile>,
    pub task: TrainingTask,
    pub schedulers: Vec<SchedulerKind>,
    #[serde(default)]
    pub convergence: BTreeMap<SchedulerKind, CurveParams>,
    #[serde(default)]
    pub targets: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// When present, device class sets are replaced by a generated
    /// population with one user per device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: f64,
    /// `None` when the target is at or above the asymptote.
    pub epochs: Option<f64>,
    pub whole_epochs: Option<u64>,
    pub seconds: Option<f64>,
    /// Equal-split wall time over this scheduler's wall time.
    pub speedup_vs_equal_split: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerReport {
    pub scheduler: SchedulerKind,
    pub schedule: Schedule,
    pub round_seconds: f64,
    /// Equal-split round time over this scheduler's round time.
    pub round_speedup_vs_equal_split: Option<f64>,
    pub convergence: Option<ConvergenceModel>,
    pub targets: Vec<TargetReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEvenReport {
    /// Curve labelled 1 in the closed form (the non-IID scheduler).
    pub first: SchedulerKind,
    pub second: SchedulerKind,
    /// Closed-form bound; `None` when the exponents coincide.
    pub closed_form: Option<f64>,
    /// Accuracies at which both wall times agree, found numerically.
    pub crossings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub equal_split_round_seconds: Option<f64>,
    pub schedulers: Vec<SchedulerReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub break_even: Option<BreakEvenReport>,
}

fn ratio(num: Option<f64>, den: f64) -> Option<f64> {
    match num {
        Some(n) if den > 0.0 => Some(n / den),
        _ => None,
    }
}

/// Simulates every requested scheduler on the same fleet.
pub fn simulate_campaign(spec: &CampaignSpec) -> Result<CampaignReport> {
    let mut profiles = spec.profiles.clone();
    let task = spec.task.clone();
    if let Some(scenario) = &spec.scenario {
        if scenario.n_users != profiles.len() {
            return Err(Error::InvalidScenario(format!(
                "{} users for {} devices",
                scenario.n_users,
                profiles.len()
            )));
        }
        let generated = generate_scenario(scenario)?;
        for (p, u) in profiles.iter_mut().zip(&generated.users) {
            p.classes = u.classes();
        }
    }
    let scenario = crate::model::validate_profiles(profiles, task)?;
    let (profiles, task) = (scenario.profiles, scenario.task);
    for &t in &spec.targets {
        if !t.is_finite() {
            return Err(Error::Config(format!("target accuracy {t} is not finite")));
        }
    }

    let equal = run_scheduler(SchedulerKind::EqualSplit, &profiles, &task, spec.seed).ok();
    let equal_round = equal.as_ref().map(round_makespan);
    let equal_model = equal_round.and_then(|k| {
        spec.convergence
            .get(&SchedulerKind::EqualSplit)
            .and_then(|c| ConvergenceModel::new(c.asymptote, c.rate, k).ok())
    });

    let mut reports = Vec::with_capacity(spec.schedulers.len());
    let mut models: BTreeMap<SchedulerKind, ConvergenceModel> = BTreeMap::new();
    for &kind in &spec.schedulers {
        let schedule = run_scheduler(kind, &profiles, &task, spec.seed)?;
        let round = round_makespan(&schedule);
        log::info!(
            "{kind}: round {round:.3} s over {} participants",
            schedule.participants()
        );
        let convergence = match spec.convergence.get(&kind) {
            Some(c) => Some(ConvergenceModel::new(c.asymptote, c.rate, round)?),
            None => None,
        };
        if let Some(m) = convergence {
            models.insert(kind, m);
        }
        let targets = spec
            .targets
            .iter()
            .map(|&target| {
                let est = convergence.and_then(|m| epochs_to_accuracy(&m, target).ok());
                let baseline = equal_model.and_then(|m| epochs_to_accuracy(&m, target).ok());
                TargetReport {
                    target,
                    epochs: est.map(|e| e.epochs),
                    whole_epochs: est.map(|e| e.whole_epochs),
                    seconds: est.map(|e| e.seconds),
                    speedup_vs_equal_split: match (baseline, est) {
                        (Some(b), Some(e)) => ratio(Some(b.seconds), e.seconds),
                        _ => None,
                    },
                }
            })
            .collect();
        reports.push(SchedulerReport {
            scheduler: kind,
            round_seconds: round,
            round_speedup_vs_equal_split: ratio(equal_round, round),
            schedule,
            convergence,
            targets,
        });
    }

    let break_even = match (models.get(&SchedulerKind::Mincost), models.get(&SchedulerKind::FedLbap)) {
        (Some(m1), Some(m2)) => Some(BreakEvenReport {
            first: SchedulerKind::Mincost,
            second: SchedulerKind::FedLbap,
            closed_form: match break_even_accuracy(m1, m2) {
                Ok(p) => Some(p),
                Err(Error::DegenerateCurves) => None,
                Err(e) => return Err(e),
            },
            crossings: crossing_accuracies(m1, m2)?,
        }),
        _ => None,
    };

    Ok(CampaignReport {
        equal_split_round_seconds: equal_round,
        schedulers: reports,
        break_even,
    })
}
