// Search EE-HI thresholds for the cheapest policy meeting a QoS.

use hiedge::decision::train;
use hiedge::optimizer::{optimize, qos_from_context, AccuracyRule};
use hiedge::trace::generate_synthetic;
use hiedge::{DeviceProfile, GridSpec, LrTrainConfig, Objective, SynthConfig};

const PROFILE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/profiles/synthetic_two_exit.json");

pub fn run_example() -> hiedge::Result<()> {
    let profile = DeviceProfile::load(PROFILE)?;
    let trace = generate_synthetic(&SynthConfig {
        num_samples: 4000,
        num_classes: 10,
        exit_accuracy: vec![0.78, 0.87],
        server_accuracy: 0.99,
        separation: 3.0,
        seed: 21,
    })?;
    let model = train(
        &trace,
        &LrTrainConfig {
            class_weighting: true,
            ..LrTrainConfig::default()
        },
    )?;

    // the derived floor is loose here, so tighten it to make the thresholds matter
    let mut qos = qos_from_context(0.995, profile.offload_latency_ms, profile.offload_energy_mj, AccuracyRule::Absolute10Pts);
    qos.accuracy_floor = Some(0.98);
    let grid = GridSpec::new(0.5, 1.0, 0.01)?;
    for objective in [Objective::MinLatency, Objective::MinEnergy] {
        let out = optimize(&trace, &model, &profile, &qos, &grid, objective)?;
        let r = &out.best.report;
        println!(
            "{objective:?}: theta {:?} feasible {} accuracy {:.4} latency {:.3} ms energy {:.3} mJ ({} points)",
            out.best.policy.thresholds, out.feasible, r.accuracy, r.avg_latency_ms, r.avg_energy_mj, out.evaluated
        );
    }
    Ok(())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
