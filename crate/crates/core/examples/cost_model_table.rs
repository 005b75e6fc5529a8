// Accuracy, latency and energy of every strategy on a calibrated trace.

use hiedge::decision::train;
use hiedge::trace::generate_synthetic;
use hiedge::{evaluate, DeviceProfile, LrTrainConfig, Mode, Policy, SynthConfig};

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

    println!("{:<10} {:>9} {:>11} {:>11} {:>8}", "strategy", "accuracy", "latency ms", "energy mJ", "eta_off");
    for mode in [Mode::OnDevice, Mode::Remote, Mode::Hi] {
        let r = evaluate(&trace, &Policy::simple(mode), Some(&model), &profile)?;
        println!(
            "{:<10} {:>9.4} {:>11.3} {:>11.3} {:>8.4}",
            mode.as_str(),
            r.accuracy,
            r.avg_latency_ms,
            r.avg_energy_mj,
            r.eta_off
        );
    }
    Ok(())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
