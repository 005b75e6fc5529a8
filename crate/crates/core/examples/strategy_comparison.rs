// Which strategy wins when each QoS dimension is fixed in turn.

use hiedge::decision::train;
use hiedge::optimizer::{compare_strategies, qos_from_context, AccuracyRule};
use hiedge::trace::generate_synthetic;
use hiedge::{DeviceProfile, GridSpec, LrTrainConfig, SynthConfig};

const PROFILE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/profiles/rpi_resnet8_cifar10.json");
const CALIBRATED: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/calibrated_resnet8_cifar10.synth.json");

pub fn run_example() -> hiedge::Result<()> {
    let profile = DeviceProfile::load(PROFILE)?;
    let text = std::fs::read_to_string(CALIBRATED).map_err(|e| hiedge::Error::Config(e.to_string()))?;
    let cfg: SynthConfig = serde_json::from_str(&text).map_err(|e| hiedge::Error::Config(e.to_string()))?;
    let trace = generate_synthetic(&cfg)?;
    let model = train(
        &trace,
        &LrTrainConfig {
            class_weighting: true,
            ..LrTrainConfig::default()
        },
    )?;

    let qos = qos_from_context(0.995, profile.offload_latency_ms, profile.offload_energy_mj, AccuracyRule::Absolute10Pts);
    let rows = compare_strategies(&trace, &model, &profile, &qos, &GridSpec::default())?;
    for row in &rows {
        let winner = row.best.as_ref().map_or("none".to_string(), |c| c.report.mode.to_string());
        println!("{} fixed at {}: {}", row.dimension, row.bound, winner);
        for (c, ok) in &row.per_strategy {
            let r = &c.report;
            println!(
                "  {:<10} feasible {:<5} accuracy {:.4} latency {:.3} energy {:.3}",
                r.mode.as_str(),
                ok,
                r.accuracy,
                r.avg_latency_ms,
                r.avg_energy_mj
            );
        }
    }
    Ok(())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
