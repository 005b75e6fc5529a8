// Accuracy-latency Pareto front of the EE-HI threshold grid, written as CSV.

use hiedge::decision::train;
use hiedge::optimizer::{pareto, ParetoAxes};
use hiedge::report::{write_report, Emit, Format};
use hiedge::trace::generate_synthetic;
use hiedge::{DeviceProfile, GridSpec, LrTrainConfig, SynthConfig};

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
    let model = train(&trace, &LrTrainConfig::default())?;
    let front = pareto(&trace, &model, &profile, &GridSpec::new(0.5, 1.0, 0.05)?, ParetoAxes::AccVsLatency)?;
    println!("{} non-dominated points", front.len());
    write_report(&Emit::Candidates(&front, None), Format::Csv, std::io::stdout().lock())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
