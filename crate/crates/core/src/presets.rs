//! Bundled device fleets built from measured per-device profiling planes.
//!
//! Each device model has a step-one plane measured at 100 shards. Fleet
//! presets evaluate that plane at a reference VGG-style architecture and
//! spread it linearly over the shard count.

use crate::model::{DeviceProfile, TrainingTask};
use crate::profiler::ArchSample;

/// Convolutional parameters of the reference architecture.
pub const REFERENCE_CONV: f64 = 1e5;
/// Dense parameters of the reference architecture.
pub const REFERENCE_DENSE: f64 = 1e6;
/// Data size, in shards, at which the planes were measured.
pub const PLANE_SHARDS: u64 = 100;
/// Upload and download latency per round, in seconds.
pub const COMM_SECONDS: f64 = 0.5;
/// Shards in the bundled fleet tasks (60k samples at 100 per shard).
pub const FLEET_SHARDS: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceModel {
    pub name: &'static str,
    /// `[intercept, conv, dense]` in seconds at [`PLANE_SHARDS`] shards.
    pub plane: [f64; 3],
}

impl DeviceModel {
    /// Training time of `PLANE_SHARDS` shards for an architecture.
    pub fn plane_seconds(&self, conv: f64, dense: f64) -> f64 {
        self.plane[0] + self.plane[1] * conv + self.plane[2] * dense
    }

    /// Seconds per shard at the reference architecture.
    pub fn slope(&self) -> f64 {
        self.plane_seconds(REFERENCE_CONV, REFERENCE_DENSE) / PLANE_SHARDS as f64
    }
}

pub const NEXUS6: DeviceModel = DeviceModel {
    name: "Nexus6",
    plane: [578.0, 0.02, 2e-5],
};
pub const NEXUS6P: DeviceModel = DeviceModel {
    name: "Nexus6P",
    plane: [647.0, 8e-3, 3e-4],
};
pub const SJ8: DeviceModel = DeviceModel {
    name: "SJ8",
    plane: [183.0, 1e-2, 9e-5],
};
pub const MATE10: DeviceModel = DeviceModel {
    name: "Mate10",
    plane: [47.0, 2e-3, 2e-5],
};
pub const PIXEL2: DeviceModel = DeviceModel {
    name: "Pixel2",
    plane: [68.0, 2e-3, 1e-5],
};
pub const P30: DeviceModel = DeviceModel {
    name: "P30",
    plane: [42.0, 2e-3, 1e-5],
};

pub const DEVICE_MODELS: [DeviceModel; 6] = [NEXUS6, NEXUS6P, SJ8, MATE10, PIXEL2, P30];

/// Device counts per model, in [`DEVICE_MODELS`] order.
pub const TESTBEDS: [(&str, [usize; 6]); 5] = [
    ("t1", [1, 0, 0, 1, 1, 0]),
    ("t2", [2, 2, 0, 1, 1, 0]),
    ("t3", [4, 2, 0, 2, 2, 0]),
    ("t4", [6, 2, 1, 2, 2, 1]),
    ("t5", [8, 3, 2, 2, 3, 2]),
];

fn profile(id: u32, model: &DeviceModel, copy: usize) -> DeviceProfile {
    DeviceProfile::linear(id, model.slope(), 0.0)
        .with_name(format!("{}-{}", model.name, copy))
        .with_comm(COMM_SECONDS, COMM_SECONDS)
}

/// Fleet for a testbed name (`t1` to `t5`), devices grouped by model.
pub fn testbed(name: &str) -> Option<Vec<DeviceProfile>> {
    let (_, counts) = TESTBEDS.iter().find(|(n, _)| n.eq_ignore_ascii_case(name))?;
    let mut fleet = Vec::new();
    for (model, &count) in DEVICE_MODELS.iter().zip(counts) {
        for copy in 0..count {
            fleet.push(profile(fleet.len() as u32, model, copy));
        }
    }
    Some(fleet)
}

/// `n` identical devices of one model.
pub fn homogeneous(model: &DeviceModel, n: usize) -> Vec<DeviceProfile> {
    (0..n).map(|i| profile(i as u32, model, i)).collect()
}

pub fn fleet_task() -> TrainingTask {
    TrainingTask::new(FLEET_SHARDS)
}

/// Architectures in the bundled profiling trace.
pub const TRACE_ARCHITECTURES: [(f64, f64); 5] = [(5e4, 2e5), (1e5, 1e6), (2e5, 5e5), (3e5, 2e6), (1.5e5, 3e6)];
/// Data sizes in the bundled profiling trace, in shards.
pub const TRACE_SHARDS: [u64; 4] = [25, 50, 100, 200];

/// Noiseless profiling trace for every device model: training time scales
/// linearly with the data size and equals the plane at [`PLANE_SHARDS`].
pub fn sample_trace() -> Vec<ArchSample> {
    let mut out = Vec::new();
    for model in &DEVICE_MODELS {
        for &d in &TRACE_SHARDS {
            for &(conv, dense) in &TRACE_ARCHITECTURES {
                let mut s = ArchSample::new(
                    conv,
                    dense,
                    d,
                    model.plane_seconds(conv, dense) * d as f64 / PLANE_SHARDS as f64,
                );
                s.device = model.name.to_string();
                out.push(s);
            }
        }
    }
    out
}
