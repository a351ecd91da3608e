//! Desk-scale round simulator: populations, round accounting and
//! convergence curves.

pub mod campaign;
pub mod convergence;
pub mod scenario;

pub use campaign::{
    random_composition, run_scheduler, simulate_campaign, BreakEvenReport, CampaignReport, CampaignSpec, CurveParams,
    SchedulerKind, SchedulerReport, TargetReport,
};
pub use convergence::{
    break_even_accuracy, crossing_accuracies, crossing_accuracy, epochs_to_accuracy, ConvergenceModel, EpochEstimate,
};
pub use scenario::{generate_scenario, largest_remainder, DataMode, GeneratedScenario, ScenarioSpec, UserData};

use crate::model::Schedule;

/// Wall time of one synchronous round: the slowest participant.
pub fn round_makespan(schedule: &Schedule) -> f64 {
    crate::model::makespan_of(&schedule.assignment, &schedule.per_device_cost)
}
