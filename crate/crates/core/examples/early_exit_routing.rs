// Route one sample through the early-exit cascade and tally exit fractions.

use hiedge::gate::{exit_fractions, route};
use hiedge::trace::generate_synthetic;
use hiedge::{LrModel, Mode, Policy, SampleRecord, SynthConfig};

pub fn run_example() -> hiedge::Result<()> {
    // accept at the side branch iff its peak reaches 0.8; the final exit asks the LR
    let policy = Policy::new(Mode::EeHi, vec![0.8]);
    let model = LrModel::new([10.0, 0.0], -6.0, 0.5)?;

    let confident = SampleRecord {
        sample_id: 0,
        true_label: 2,
        exit_softmax: vec![vec![0.05, 0.05, 0.9], vec![0.02, 0.03, 0.95]],
        server_label: 2,
    };
    let unsure = SampleRecord {
        sample_id: 1,
        true_label: 1,
        exit_softmax: vec![vec![0.4, 0.35, 0.25], vec![0.3, 0.45, 0.25]],
        server_label: 1,
    };
    for rec in [&confident, &unsure] {
        let r = route(rec, &policy, Some(&model))?;
        println!(
            "sample {}: exit {} offloaded {} label {} LR ran {}",
            rec.sample_id, r.exit_taken, r.offloaded, r.final_label, r.lr_invoked
        );
    }

    let trace = generate_synthetic(&SynthConfig {
        num_samples: 5000,
        num_classes: 10,
        exit_accuracy: vec![0.75, 0.87],
        server_accuracy: 0.99,
        separation: 3.0,
        seed: 5,
    })?;
    for theta in [0.6, 0.8, 0.95, 1.01] {
        let f = exit_fractions(&trace, &Policy::new(Mode::EeHi, vec![theta]), Some(&model))?;
        println!(
            "theta {theta:.2}: eta_exit {:?} eta_off {:.4}",
            f.eta_exit.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            f.eta_off
        );
    }
    Ok(())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
