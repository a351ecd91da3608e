use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::output::{num, opt_num, read_json, to_json, Report, Table};
use super::{DiversityArgs, Mode, Objective, OracleArgs, ProfileArgs, ScheduleArgs, SimulateArgs};
use crate::diversity::{diversity_rank, gradient_diversity, LayeredGradient, RankedUser};
use crate::error::{Error, Result};
use crate::lbap::build_cost_matrix_for;
use crate::mincost::{accuracy_weights, mincost_schedule};
use crate::model::{validate_profiles, AccuracyWeights, DeviceProfile, Scenario, Schedule, TrainingTask};
use crate::oracle::{oracle_mincost, oracle_minmax, InstanceCap};
use crate::presets;
use crate::profiler::{fit_step_one, fit_step_two, ArchSample};
use crate::simulator::{run_scheduler, simulate_campaign, CampaignSpec, SchedulerKind};

/// Fleet and task loaded from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub profiles: Vec<DeviceProfile>,
    pub task: TrainingTask,
}

/// Per-user gradients, optionally with the global gradient to compare
/// against. Without it every user is compared to the mean of the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientsFile {
    pub users: Vec<LayeredGradient>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global: Option<LayeredGradient>,
}

fn load_scenario(path: Option<&std::path::Path>, preset: Option<&str>) -> Result<Scenario> {
    let file = match (path, preset) {
        (Some(p), _) => read_json::<ScenarioFile>(p)?,
        (None, Some(name)) => ScenarioFile {
            profiles: presets::testbed(name).ok_or_else(|| Error::Config(format!("unknown preset {name:?}")))?,
            task: presets::fleet_task(),
        },
        (None, None) => return Err(Error::Config("no scenario given".into())),
    };
    validate_profiles(file.profiles, file.task)
}

pub fn profile(args: &ProfileArgs) -> Result<Report> {
    let samples: Vec<ArchSample> = read_json(&args.trace)?;
    // Devices in order of first appearance.
    let mut devices: Vec<(String, Vec<ArchSample>)> = Vec::new();
    for s in samples {
        match devices.iter_mut().find(|(name, _)| *name == s.device) {
            Some((_, group)) => group.push(s),
            None => devices.push((s.device.clone(), vec![s])),
        }
    }
    if devices.is_empty() {
        return Err(Error::InvalidSample("trace is empty".into()));
    }
    let mut out = Vec::new();
    let mut table = Table::new(["device", "a", "b", "step_two_rmse", "max_step_one_rmse"]);
    for (name, group) in &devices {
        let step_one = fit_step_one(group)?;
        let fitted = fit_step_two(&step_one, args.conv, args.dense)?;
        let planes: Vec<Value> = step_one
            .planes
            .iter()
            .map(|(&d, p)| {
                json!({
                    "data_batches": d,
                    "coefficients": p.coefficients(),
                    "rmse": p.rmse,
                    "condition": p.condition,
                    "samples": p.samples,
                })
            })
            .collect();
        let worst = step_one.planes.values().map(|p| p.rmse).fold(0.0, f64::max);
        table.push(vec![
            name.clone(),
            num(fitted.a),
            num(fitted.b),
            num(fitted.step_two_rmse),
            num(worst),
        ]);
        out.push(json!({
            "device": name,
            "a": fitted.a,
            "b": fitted.b,
            "cost_model": fitted.cost_model(),
            "step_two_rmse": fitted.step_two_rmse,
            "step_one": planes,
        }));
    }
    Ok(Report {
        json: to_json(&json!({ "conv_params": args.conv, "dense_params": args.dense, "devices": out }))?,
        table,
    })
}

fn device_table(profiles: &[DeviceProfile], schedule: &Schedule, weights: Option<&AccuracyWeights>) -> Table {
    let mut table = Table::new(["device", "shards", "seconds", "accuracy_weight"]);
    for (i, p) in profiles.iter().enumerate() {
        table.push(vec![
            p.label(),
            schedule.assignment[i].to_string(),
            num(schedule.per_device_cost[i]),
            weights.map(|w| w.weights[i].to_string()).unwrap_or_else(|| "-".into()),
        ]);
    }
    table
}

fn verification(
    kind: SchedulerKind,
    scenario: &Scenario,
    schedule: &Schedule,
    weights: Option<&AccuracyWeights>,
) -> Result<Value> {
    let cap = InstanceCap::default();
    let (profiles, task) = (&scenario.profiles, &scenario.task);
    let (optimum, achieved) = match (kind, weights) {
        (SchedulerKind::Mincost, Some(w)) => {
            let r = oracle_mincost(profiles, w, task, cap)?;
            (r, schedule.total_cost.unwrap_or(f64::NAN))
        }
        _ => {
            let matrix = build_cost_matrix_for(profiles, task.total_shards)?;
            (oracle_minmax(&matrix, task.total_shards, cap)?, schedule.makespan)
        }
    };
    let ratio = if optimum.value > 0.0 {
        achieved / optimum.value
    } else {
        1.0
    };
    if achieved != optimum.value {
        log::info!("{kind}: {achieved} against optimum {}", optimum.value);
    }
    Ok(json!({
        "objective": if kind == SchedulerKind::Mincost { "total_cost" } else { "makespan" },
        "scheduler_value": achieved,
        "oracle_value": optimum.value,
        "oracle_assignment": optimum.assignment,
        "ratio": ratio,
        "optimal": achieved == optimum.value,
    }))
}

pub fn schedule(args: &ScheduleArgs, seed: u64) -> Result<Report> {
    let mut scenario = load_scenario(args.scenario.as_deref(), args.preset.as_deref())?;
    if let Some(alpha) = args.alpha {
        scenario.task.alpha = alpha;
        scenario.task.validate()?;
    }
    let kind = match &args.scheduler {
        Some(name) => SchedulerKind::parse(name).ok_or_else(|| Error::Config(format!("unknown scheduler {name:?}")))?,
        None => match args.mode {
            Mode::Iid => SchedulerKind::FedLbap,
            Mode::Noniid => SchedulerKind::Mincost,
        },
    };
    if let Some(grid) = args.alpha_grid {
        return alpha_sweep(&scenario, &grid.values());
    }
    let schedule = run_scheduler(kind, &scenario.profiles, &scenario.task, seed)?;
    let weights = (kind == SchedulerKind::Mincost || args.mode == Mode::Noniid)
        .then(|| accuracy_weights(&scenario.profiles, &scenario.task));
    let mut body = json!({
        "scheduler": kind,
        "total_shards": scenario.task.total_shards,
        "schedule": schedule,
        "devices": scenario.profiles.iter().map(DeviceProfile::label).collect::<Vec<_>>(),
    });
    if let Some(w) = &weights {
        body["alpha"] = json!(scenario.task.alpha);
        body["accuracy_weights"] = json!(w);
    }
    if args.verify {
        body["verification"] = verification(kind, &scenario, &schedule, weights.as_ref())?;
    }
    Ok(Report {
        json: to_json(&body)?,
        table: device_table(&scenario.profiles, &schedule, weights.as_ref()),
    })
}

fn alpha_sweep(scenario: &Scenario, alphas: &[f64]) -> Result<Report> {
    let mut headers = vec!["alpha".to_string()];
    headers.extend(scenario.profiles.iter().map(DeviceProfile::label));
    headers.extend(["total_cost".into(), "makespan".into()]);
    let mut table = Table::new(headers);
    let mut rows = Vec::new();
    for &alpha in alphas {
        let task = TrainingTask {
            alpha,
            ..scenario.task.clone()
        };
        task.validate()?;
        let weights = accuracy_weights(&scenario.profiles, &task);
        let s = mincost_schedule(&scenario.profiles, &task, &weights)?;
        let mut row = vec![num(alpha)];
        row.extend(s.assignment.iter().map(ToString::to_string));
        row.extend([opt_num(s.total_cost), num(s.makespan)]);
        table.push(row);
        rows.push(json!({
            "alpha": alpha,
            "assignment": s.assignment,
            "total_cost": s.total_cost,
            "makespan": s.makespan,
        }));
    }
    let weights = accuracy_weights(&scenario.profiles, &scenario.task).weights;
    Ok(Report {
        json: to_json(&json!({
            "scheduler": SchedulerKind::Mincost,
            "total_shards": scenario.task.total_shards,
            "devices": scenario.profiles.iter().map(DeviceProfile::label).collect::<Vec<_>>(),
            "accuracy_weights": weights,
            "alpha_grid": rows,
        }))?,
        table,
    })
}

pub fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<Report> {
    let mut spec: CampaignSpec = read_json(&args.campaign)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let report = simulate_campaign(&spec)?;
    let mut headers: Vec<String> = ["scheduler", "round_seconds", "round_speedup"]
        .map(String::from)
        .to_vec();
    headers.extend(spec.targets.iter().map(|t| format!("seconds_to_{}", num(*t))));
    let mut table = Table::new(headers);
    for r in &report.schedulers {
        let mut row = vec![
            r.scheduler.to_string(),
            num(r.round_seconds),
            opt_num(r.round_speedup_vs_equal_split),
        ];
        row.extend(r.targets.iter().map(|t| opt_num(t.seconds)));
        table.push(row);
    }
    Ok(Report {
        json: to_json(&report)?,
        table,
    })
}

pub fn diversity(args: &DiversityArgs) -> Result<Report> {
    let file: GradientsFile = read_json(&args.gradients)?;
    let (mode, ranked) = match &file.global {
        Some(global) => {
            if file.users.is_empty() {
                return Err(Error::TooFewUsers { needed: 1, got: 0 });
            }
            let mut ranked = file
                .users
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    Ok(RankedUser {
                        user: i,
                        diversity: Some(gradient_diversity(u, global)?),
                        degenerate: false,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            ranked.sort_by(|a, b| {
                b.diversity
                    .unwrap_or(0.0)
                    .total_cmp(&a.diversity.unwrap_or(0.0))
                    .then(a.user.cmp(&b.user))
            });
            ("global", ranked)
        }
        None => ("leave_one_out", diversity_rank(&file.users)?),
    };
    let mut table = Table::new(["rank", "user", "diversity", "degenerate"]);
    for (k, r) in ranked.iter().enumerate() {
        table.push(vec![
            k.to_string(),
            r.user.to_string(),
            opt_num(r.diversity),
            r.degenerate.to_string(),
        ]);
    }
    Ok(Report {
        json: to_json(&json!({ "reference": mode, "users": ranked }))?,
        table,
    })
}

pub fn oracle(args: &OracleArgs) -> Result<Report> {
    let scenario = load_scenario(args.scenario.as_deref(), args.preset.as_deref())?;
    let cap = InstanceCap {
        max_users: args.max_users,
        max_shards: args.max_shards,
    };
    let d = scenario.task.total_shards;
    let (name, result) = match args.objective {
        Objective::Minmax => {
            let matrix = build_cost_matrix_for(&scenario.profiles, d)?;
            ("makespan", oracle_minmax(&matrix, d, cap)?)
        }
        Objective::Mincost => {
            let weights = accuracy_weights(&scenario.profiles, &scenario.task);
            (
                "total_cost",
                oracle_mincost(&scenario.profiles, &weights, &scenario.task, cap)?,
            )
        }
    };
    let mut table = Table::new(["device", "shards"]);
    for (p, &s) in scenario.profiles.iter().zip(&result.assignment) {
        table.push(vec![p.label(), s.to_string()]);
    }
    Ok(Report {
        json: to_json(&json!({
            "objective": name,
            "value": result.value,
            "assignment": result.assignment,
        }))?,
        table,
    })
}
