//! The files under `data/` are generated from the presets. Run with
//! `FEDSCHED_BLESS=1` to rewrite them.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fedsched::cli::{GradientsFile, ScenarioFile};
use fedsched::diversity::LayeredGradient;
use fedsched::presets;
use fedsched::simulator::{CampaignSpec, CurveParams, DataMode, ScenarioSpec, SchedulerKind};
use fedsched::{DeviceProfile, TrainingTask};
use serde::Serialize;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn t5_campaign() -> CampaignSpec {
    let mut convergence = BTreeMap::new();
    for kind in [
        SchedulerKind::FedLbap,
        SchedulerKind::EqualSplit,
        SchedulerKind::Proportional,
        SchedulerKind::Random,
    ] {
        convergence.insert(
            kind,
            CurveParams {
                asymptote: 0.9,
                rate: 0.05,
            },
        );
    }
    convergence.insert(
        SchedulerKind::Mincost,
        CurveParams {
            asymptote: 0.95,
            rate: 0.08,
        },
    );
    CampaignSpec {
        profiles: presets::testbed("t5").unwrap(),
        task: presets::fleet_task(),
        schedulers: vec![
            SchedulerKind::FedLbap,
            SchedulerKind::Mincost,
            SchedulerKind::EqualSplit,
            SchedulerKind::Proportional,
            SchedulerKind::Random,
        ],
        convergence,
        targets: vec![0.5, 0.8, 0.85],
        seed: 17,
        scenario: Some(ScenarioSpec {
            seed: 17,
            n_users: 20,
            total_samples: 60_000,
            mode: DataMode::NonIid {
                max_classes: 7,
                n_classes: 10,
            },
        }),
    }
}

fn homogeneous_campaign() -> CampaignSpec {
    CampaignSpec {
        profiles: presets::homogeneous(&presets::PIXEL2, 10),
        task: presets::fleet_task(),
        schedulers: vec![
            SchedulerKind::FedLbap,
            SchedulerKind::EqualSplit,
            SchedulerKind::Proportional,
        ],
        convergence: BTreeMap::new(),
        targets: vec![],
        seed: 0,
        scenario: None,
    }
}

fn gradients() -> GradientsFile {
    let g = |v: &[f64]| LayeredGradient::new(vec![v.to_vec()]).unwrap();
    GradientsFile {
        users: vec![
            g(&[1.0, 0.0, 0.0]),
            g(&[1.0, 0.0, 0.0]),
            g(&[0.0, 1.0, 0.0]),
            g(&[-1.0, 0.2, 0.0]),
        ],
        global: None,
    }
}

fn expected() -> Vec<(&'static str, String)> {
    fn pretty<T: Serialize>(v: &T) -> String {
        let mut s = serde_json::to_string_pretty(v).unwrap();
        s.push('\n');
        s
    }
    vec![
        ("sample_trace.json", pretty(&presets::sample_trace())),
        (
            "fleet_t5.json",
            pretty(&ScenarioFile {
                profiles: presets::testbed("t5").unwrap(),
                task: presets::fleet_task(),
            }),
        ),
        (
            "fleet_homogeneous.json",
            pretty(&ScenarioFile {
                profiles: presets::homogeneous(&presets::PIXEL2, 10),
                task: presets::fleet_task(),
            }),
        ),
        (
            "two_devices.json",
            pretty(&ScenarioFile {
                profiles: vec![DeviceProfile::linear(0, 1.0, 0.0), DeviceProfile::linear(1, 2.0, 0.0)],
                task: TrainingTask::new(4),
            }),
        ),
        (
            "noniid_outlier.json",
            pretty(&ScenarioFile {
                profiles: vec![
                    DeviceProfile::linear(0, 0.5, 0.0).with_classes([0]),
                    DeviceProfile::linear(1, 2.0, 1.0).with_classes(0..10),
                    DeviceProfile::linear(2, 2.0, 1.0).with_classes(0..5),
                    DeviceProfile::linear(3, 3.0, 1.0).with_classes(5..10),
                ],
                task: TrainingTask::new(12),
            }),
        ),
        ("campaign_t5.json", pretty(&t5_campaign())),
        ("campaign_homogeneous.json", pretty(&homogeneous_campaign())),
        ("gradients.json", pretty(&gradients())),
    ]
}

#[test]
fn bundled_files_match_presets() {
    let bless = std::env::var_os("FEDSCHED_BLESS").is_some();
    for (name, content) in expected() {
        let path = data_dir().join(name);
        if bless {
            std::fs::write(&path, &content).unwrap();
            continue;
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(on_disk, content, "{name} is stale; rerun with FEDSCHED_BLESS=1");
    }
}

#[test]
fn bundled_files_parse() {
    let read = |name: &str| std::fs::read_to_string(data_dir().join(name)).unwrap();
    let _: ScenarioFile = serde_json::from_str(&read("fleet_t5.json")).unwrap();
    let c: CampaignSpec = serde_json::from_str(&read("campaign_t5.json")).unwrap();
    assert_eq!(c.profiles.len(), 20);
    let g: GradientsFile = serde_json::from_str(&read("gradients.json")).unwrap();
    assert_eq!(g.users.len(), 4);
}
