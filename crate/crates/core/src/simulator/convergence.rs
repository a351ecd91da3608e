//! Accuracy-versus-epoch curves `p(x) = A - exp(-beta * x)` with a fixed
//! wall-clock cost `k` per epoch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceModel {
    /// Asymptotic accuracy `A` in (0, 1].
    pub asymptote: f64,
    /// Convergence rate `beta`.
    pub rate: f64,
    /// Seconds per epoch `k`.
    pub epoch_seconds: f64,
}

impl ConvergenceModel {
    pub fn new(asymptote: f64, rate: f64, epoch_seconds: f64) -> Result<Self> {
        let m = ConvergenceModel {
            asymptote,
            rate,
            epoch_seconds,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.asymptote > 0.0 && self.asymptote <= 1.0) {
            return Err(Error::InvalidConvergence(format!(
                "asymptote {} outside (0, 1]",
                self.asymptote
            )));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidConvergence(format!(
                "rate {} must be positive",
                self.rate
            )));
        }
        if !(self.epoch_seconds.is_finite() && self.epoch_seconds > 0.0) {
            return Err(Error::InvalidConvergence(format!(
                "epoch time {} must be positive",
                self.epoch_seconds
            )));
        }
        Ok(())
    }

    /// Accuracy after `epochs` epochs.
    pub fn accuracy(&self, epochs: f64) -> f64 {
        self.asymptote - (-self.rate * epochs).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochEstimate {
    pub epochs: f64,
    pub whole_epochs: u64,
    /// `k * epochs`.
    pub seconds: f64,
}

/// Epochs needed to reach `target`: `-ln(A - p) / beta`, or zero when the
/// curve starts at or above the target.
pub fn epochs_to_accuracy(model: &ConvergenceModel, target: f64) -> Result<EpochEstimate> {
    model.validate()?;
    if !target.is_finite() || target >= model.asymptote {
        return Err(Error::Unreachable {
            target,
            asymptote: model.asymptote,
        });
    }
    let gap = model.asymptote - target;
    let epochs = if gap >= 1.0 { 0.0 } else { -gap.ln() / model.rate };
    Ok(EpochEstimate {
        epochs,
        whole_epochs: epochs.ceil() as u64,
        seconds: model.epoch_seconds * epochs,
    })
}

/// Accuracy bound below which the first curve reaches a target in less wall
/// time than the second, in closed form:
/// `(e^(b1 k2) A2 - e^(b2 k1) A1) / (e^(b1 k2) - e^(b2 k1))`.
pub fn break_even_accuracy(first: &ConvergenceModel, second: &ConvergenceModel) -> Result<f64> {
    first.validate()?;
    second.validate()?;
    if first.asymptote == second.asymptote {
        // Both numerator terms share the factor A.
        return Ok(first.asymptote);
    }
    let e1 = (first.rate * second.epoch_seconds).exp();
    let e2 = (second.rate * first.epoch_seconds).exp();
    let denominator = e1 - e2;
    if denominator == 0.0 || !denominator.is_finite() {
        return Err(Error::DegenerateCurves);
    }
    Ok((e1 * second.asymptote - e2 * first.asymptote) / denominator)
}

/// Target accuracies at which both curves need the same wall time, in
/// increasing order, over the range where both logarithms are finite.
///
/// The wall-time difference is sampled on a uniform grid refined
/// geometrically towards both ends of the range, and every sign change is
/// bisected to machine precision.
pub fn crossing_accuracies(first: &ConvergenceModel, second: &ConvergenceModel) -> Result<Vec<f64>> {
    first.validate()?;
    second.validate()?;
    let wall = |m: &ConvergenceModel, p: f64| -m.epoch_seconds * (m.asymptote - p).ln() / m.rate;
    let diff = |p: f64| wall(first, p) - wall(second, p);
    let lo_bound = (first.asymptote - 1.0).max(second.asymptote - 1.0);
    let hi_bound = first.asymptote.min(second.asymptote);
    let width = hi_bound - lo_bound;
    if width <= 0.0 {
        return Ok(Vec::new());
    }
    const UNIFORM: usize = 4096;
    let mut grid: Vec<f64> = (1..UNIFORM)
        .map(|k| lo_bound + width * k as f64 / UNIFORM as f64)
        .collect();
    for e in 4..=40 {
        let t = width * 2f64.powi(-e) * 0.5;
        grid.push(lo_bound + t);
        grid.push(hi_bound - t);
    }
    grid.retain(|&p| p > lo_bound && p < hi_bound);
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut roots = Vec::new();
    let values: Vec<f64> = grid.iter().map(|&p| diff(p)).collect();
    for k in 0..grid.len() {
        if values[k] == 0.0 {
            roots.push(grid[k]);
            continue;
        }
        if k + 1 < grid.len() && values[k + 1] != 0.0 && values[k].signum() != values[k + 1].signum() {
            roots.push(bisect(&diff, grid[k], grid[k + 1], values[k]));
        }
    }
    Ok(roots)
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lowest target accuracy at which both curves need the same wall time, or
/// `None` when one curve is faster over the whole range.
pub fn crossing_accuracy(first: &ConvergenceModel, second: &ConvergenceModel) -> Result<Option<f64>> {
    Ok(crossing_accuracies(first, second)?.first().copied())
}
