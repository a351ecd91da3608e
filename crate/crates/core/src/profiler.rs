//! Two-step training-time profiler.
//!
//! Step one regresses training time on the number of convolutional and dense
//! parameters, separately for every profiled data size:
//! `y = c0 + c1 * conv + c2 * dense`. Step two evaluates those planes at a
//! target architecture and fits a line through the predictions as a function
//! of data size, giving the `a * shards + b` cost model the schedulers
//! consume.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CostModel;

/// Condition numbers above this trigger a warning.
pub const CONDITION_WARNING: f64 = 1e12;

/// One measured training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSample {
    #[serde(default)]
    pub device: String,
    pub conv_params: f64,
    pub dense_params: f64,
    /// Data size the run trained on, in shard units.
    pub data_batches: u64,
    #[serde(rename = "seconds")]
    pub time: f64,
}

impl ArchSample {
    pub fn new(conv_params: f64, dense_params: f64, data_batches: u64, time: f64) -> Self {
        ArchSample {
            device: String::new(),
            conv_params,
            dense_params,
            data_batches,
            time,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.conv_params) || !ok(self.dense_params) || !ok(self.time) {
            return Err(Error::InvalidSample(format!(
                "device {:?} at data size {}: parameters and time must be finite and non-negative",
                self.device, self.data_batches
            )));
        }
        Ok(())
    }
}

/// Plane fitted for a single data size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub intercept: f64,
    pub conv: f64,
    pub dense: f64,
    pub rmse: f64,
    /// 1-norm condition number of the equilibrated normal matrix.
    pub condition: f64,
    pub samples: usize,
}

impl PlaneFit {
    pub fn coefficients(&self) -> [f64; 3] {
        [self.intercept, self.conv, self.dense]
    }

    pub fn predict(&self, conv_params: f64, dense_params: f64) -> f64 {
        self.intercept + self.conv * conv_params + self.dense * dense_params
    }
}

/// Step-one output: one plane per distinct data size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOneModel {
    pub planes: BTreeMap<u64, PlaneFit>,
}

impl StepOneModel {
    /// Builds a model directly from known coefficients, with zero RMSE.
    pub fn from_coefficients(coefficients: impl IntoIterator<Item = (u64, [f64; 3])>) -> Self {
        let planes = coefficients
            .into_iter()
            .map(|(d, [c0, c1, c2])| {
                (
                    d,
                    PlaneFit {
                        intercept: c0,
                        conv: c1,
                        dense: c2,
                        rmse: 0.0,
                        condition: 1.0,
                        samples: 0,
                    },
                )
            })
            .collect();
        StepOneModel { planes }
    }

    pub fn predict(&self, data_batches: u64, conv_params: f64, dense_params: f64) -> Option<f64> {
        self.planes
            .get(&data_batches)
            .map(|p| p.predict(conv_params, dense_params))
    }
}

/// Step-two output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedDevice {
    pub a: f64,
    pub b: f64,
    /// Step-one RMSE keyed by data size.
    pub step_one_rmse: BTreeMap<u64, f64>,
    pub step_two_rmse: f64,
}

impl FittedDevice {
    pub fn cost_model(&self) -> CostModel {
        CostModel::Linear { a: self.a, b: self.b }
    }
}

/// Least-squares plane per data size via the 3x3 normal equations.
pub fn fit_step_one(samples: &[ArchSample]) -> Result<StepOneModel> {
    let mut groups: BTreeMap<u64, Vec<&ArchSample>> = BTreeMap::new();
    for s in samples {
        s.validate()?;
        groups.entry(s.data_batches).or_default().push(s);
    }
    if groups.is_empty() {
        return Err(Error::TooFewSamples {
            data_batches: 0,
            count: 0,
        });
    }
    let mut planes = BTreeMap::new();
    for (d, group) in groups {
        planes.insert(d, fit_plane(d, &group)?);
    }
    Ok(StepOneModel { planes })
}

fn fit_plane(d: u64, group: &[&ArchSample]) -> Result<PlaneFit> {
    if group.len() < 3 {
        return Err(Error::TooFewSamples {
            data_batches: d,
            count: group.len(),
        });
    }
    let rows: Vec<[f64; 3]> = group.iter().map(|s| [1.0, s.conv_params, s.dense_params]).collect();
    let y: Vec<f64> = group.iter().map(|s| s.time).collect();

    // Column equilibration keeps raw parameter counts (1e5..1e7) from
    // swamping the intercept column.
    let mut scale = [0.0f64; 3];
    for r in &rows {
        for k in 0..3 {
            scale[k] += r[k] * r[k];
        }
    }
    for (k, s) in scale.iter_mut().enumerate() {
        *s = s.sqrt();
        if *s == 0.0 {
            // An all-zero column cannot be identified.
            log::debug!("data size {d}: column {k} is identically zero");
            return Err(Error::RankDeficient { data_batches: d });
        }
    }
    let scaled: Vec<[f64; 3]> = rows
        .iter()
        .map(|r| [r[0] / scale[0], r[1] / scale[1], r[2] / scale[2]])
        .collect();

    let (normal, rhs) = normal_equations(&scaled, &y);
    let condition = condition_1norm(&normal).ok_or(Error::RankDeficient { data_batches: d })?;
    if condition > 1e15 {
        return Err(Error::RankDeficient { data_batches: d });
    }
    if condition > CONDITION_WARNING {
        log::warn!("data size {d}: normal matrix condition number {condition:.3e}");
    }
    let mut beta = solve3(normal, rhs).ok_or(Error::RankDeficient { data_batches: d })?;

    // One round of iterative refinement on the residual.
    let residual: Vec<f64> = scaled.iter().zip(&y).map(|(r, yi)| yi - dot3(r, &beta)).collect();
    let (_, correction_rhs) = normal_equations(&scaled, &residual);
    if let Some(delta) = solve3(normal, correction_rhs) {
        for k in 0..3 {
            beta[k] += delta[k];
        }
    }

    let coef = [beta[0] / scale[0], beta[1] / scale[1], beta[2] / scale[2]];
    let sse: f64 = rows.iter().zip(&y).map(|(r, yi)| (yi - dot3(r, &coef)).powi(2)).sum();
    Ok(PlaneFit {
        intercept: coef[0],
        conv: coef[1],
        dense: coef[2],
        rmse: (sse / rows.len() as f64).sqrt(),
        condition,
        samples: rows.len(),
    })
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normal_equations(rows: &[[f64; 3]], y: &[f64]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for (r, yi) in rows.iter().zip(y) {
        for i in 0..3 {
            v[i] += r[i] * yi;
            for j in 0..3 {
                m[i][j] += r[i] * r[j];
            }
        }
    }
    (m, v)
}

/// Gaussian elimination with partial pivoting. `None` on a zero pivot.
fn solve3(mut m: [[f64; 3]; 3], mut v: [f64; 3]) -> Option<[f64; 3]> {
    let norm = m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if norm == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= 1e-14 * norm {
            return None;
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (target, &p) in m[row].iter_mut().zip(&pivot_row).skip(col) {
                *target -= f * p;
            }
            v[row] -= f * v[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (v[row] - tail) / m[row][row];
    }
    Some(x)
}

fn condition_1norm(m: &[[f64; 3]; 3]) -> Option<f64> {
    let norm1 = |a: &[[f64; 3]; 3]| {
        (0..3)
            .map(|j| (0..3).map(|i| a[i][j].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut inv = [[0.0; 3]; 3];
    for j in 0..3 {
        let mut e = [0.0; 3];
        e[j] = 1.0;
        let col = solve3(*m, e)?;
        for i in 0..3 {
            inv[i][j] = col[i];
        }
    }
    Some(norm1(m) * norm1(&inv))
}

/// Ordinary least-squares line `y = slope * x + intercept`.
pub(crate) fn simple_regression(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    (slope, intercept, (sse / n).sqrt())
}

/// Extends step-one planes to arbitrary data sizes for one architecture.
pub fn fit_step_two(step_one: &StepOneModel, conv_params: f64, dense_params: f64) -> Result<FittedDevice> {
    let points: Vec<(f64, f64)> = step_one
        .planes
        .iter()
        .map(|(&d, plane)| (d as f64, plane.predict(conv_params, dense_params)))
        .collect();
    fit_line(&points, step_one.planes.iter().map(|(&d, p)| (d, p.rmse)).collect())
}

/// Step two from already-evaluated `(data size, predicted seconds)` pairs.
pub fn fit_predictions(predictions: &[(u64, f64)]) -> Result<FittedDevice> {
    let points: Vec<(f64, f64)> = predictions.iter().map(|&(d, y)| (d as f64, y)).collect();
    fit_line(&points, BTreeMap::new())
}

fn fit_line(points: &[(f64, f64)], step_one_rmse: BTreeMap<u64, f64>) -> Result<FittedDevice> {
    let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(Error::SingleDataSize);
    }
    let (a, b, rmse) = simple_regression(points);
    let span = sizes[sizes.len() - 1] - sizes[0];
    let magnitude = points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    if !a.is_finite() || a * span <= 1e-12 * magnitude {
        return Err(Error::NonPositiveSlope { slope: a });
    }
    Ok(FittedDevice {
        a,
        b,
        step_one_rmse,
        step_two_rmse: rmse,
    })
}

/// Fitted compute time for `shards` shards; zero for a non-participant.
pub fn predict_time(device: &FittedDevice, shards: usize) -> f64 {
    if shards == 0 {
        0.0
    } else {
        device.a * shards as f64 + device.b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_samples(d: u64, c: [f64; 3], archs: &[(f64, f64)]) -> Vec<ArchSample> {
        archs
            .iter()
            .map(|&(x1, x2)| ArchSample::new(x1, x2, d, c[0] + c[1] * x1 + c[2] * x2))
            .collect()
    }

    #[test]
    fn exact_plane_is_recovered() {
        let samples = plane_samples(1, [10.0, 2.0, 3.0], &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (2.0, 5.0)]);
        let fit = fit_step_one(&samples).unwrap();
        let plane = fit.planes[&1];
        for (got, want) in plane.coefficients().iter().zip([10.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(plane.rmse < 1e-12);
    }

    #[test]
    fn nexus6_table_coefficients() {
        let model = StepOneModel::from_coefficients([(1, [578.0, 0.02, 2e-5])]);
        let y = model.predict(1, 1e5, 1e6).unwrap();
        assert!((y - 2598.0).abs() < 1e-9, "{y}");
    }

    #[test]
    fn too_few_samples() {
        let samples = plane_samples(4, [1.0, 1.0, 1.0], &[(0.0, 1.0), (1.0, 0.0)]);
        assert!(matches!(
            fit_step_one(&samples).unwrap_err(),
            Error::TooFewSamples {
                data_batches: 4,
                count: 2
            }
        ));
    }

    #[test]
    fn collinear_samples_are_rank_deficient() {
        // dense = 2 * conv everywhere.
        let samples = plane_samples(1, [1.0, 1.0, 1.0], &[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0), (5.0, 10.0)]);
        assert!(matches!(
            fit_step_one(&samples).unwrap_err(),
            Error::RankDeficient { data_batches: 1 }
        ));
    }

    #[test]
    fn residuals_orthogonal_to_design_columns() {
        let archs = [(1e5, 2e6), (3e5, 1e6), (8e5, 5e5), (2e6, 4e6), (6e6, 1e5), (4e5, 9e6)];
        let noise = [3.0, -2.0, 5.0, -4.0, 1.5, -0.5];
        let samples: Vec<ArchSample> = archs
            .iter()
            .zip(noise)
            .map(|(&(x1, x2), e)| ArchSample::new(x1, x2, 8, 200.0 + 1e-3 * x1 + 2e-5 * x2 + e))
            .collect();
        let plane = fit_step_one(&samples).unwrap().planes[&8];
        let residuals: Vec<f64> = samples
            .iter()
            .map(|s| s.time - plane.predict(s.conv_params, s.dense_params))
            .collect();
        for col in 0..3 {
            let column: Vec<f64> = samples
                .iter()
                .map(|s| [1.0, s.conv_params, s.dense_params][col])
                .collect();
            let dot: f64 = column.iter().zip(&residuals).map(|(x, r)| x * r).sum();
            let scale =
                column.iter().map(|x| x * x).sum::<f64>().sqrt() * residuals.iter().map(|r| r * r).sum::<f64>().sqrt();
            assert!(dot.abs() <= 1e-6 * scale, "column {col}: {dot} vs {scale}");
        }
        assert!(plane.rmse > 0.0);
    }

    #[test]
    fn step_two_exact_line() {
        let fit = fit_predictions(&[(1, 5.0), (2, 8.0), (3, 11.0)]).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-12 && (fit.b - 2.0).abs() < 1e-12);
        assert!(fit.step_two_rmse < 1e-12);
    }

    #[test]
    fn step_two_flat_trace_rejected() {
        assert!(matches!(
            fit_predictions(&[(1, 4.0), (2, 4.0)]).unwrap_err(),
            Error::NonPositiveSlope { .. }
        ));
        assert!(matches!(
            fit_predictions(&[(3, 4.0), (3, 5.0)]).unwrap_err(),
            Error::SingleDataSize
        ));
    }

    #[test]
    fn step_two_noisy_matches_closed_form() {
        // Closed form for x = 1, 2, 3 and y = 3.1, 4.9, 7.2:
        // x_bar = 2, y_bar = 5.0667, Sxy = 4.1, Sxx = 2.
        let slope: f64 = ((1.0 - 2.0) * (3.1 - 15.2 / 3.0) + (3.0 - 2.0) * (7.2 - 15.2 / 3.0)) / 2.0;
        let intercept = 15.2 / 3.0 - slope * 2.0;
        assert!((slope - 2.05).abs() < 1e-12);
        let fit = fit_predictions(&[(1, 3.1), (2, 4.9), (3, 7.2)]).unwrap();
        assert!((fit.a - slope).abs() < 1e-12);
        assert!((fit.b - intercept).abs() < 1e-12);
        assert!(fit.step_two_rmse > 0.0);
    }

    #[test]
    fn predict_time_examples() {
        let dev = fit_predictions(&[(1, 5.0), (2, 8.0)]).unwrap();
        assert!((predict_time(&dev, 4) - 14.0).abs() < 1e-12);
        assert_eq!(predict_time(&dev, 0), 0.0);
        let slow = FittedDevice {
            a: 4.0,
            b: 3.0,
            step_one_rmse: BTreeMap::new(),
            step_two_rmse: 0.0,
        };
        let fast = FittedDevice {
            a: 1.0,
            b: 3.0,
            step_one_rmse: BTreeMap::new(),
            step_two_rmse: 0.0,
        };
        for shards in 1..50 {
            assert!(predict_time(&slow, shards) > predict_time(&fast, shards));
        }
    }

    #[test]
    fn rejects_negative_sample() {
        let mut s = plane_samples(1, [1.0, 1.0, 1.0], &[(0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]);
        s[1].time = -1.0;
        assert!(matches!(fit_step_one(&s).unwrap_err(), Error::InvalidSample(_)));
    }
}
