// Train the LR offload decider on one half of a trace and score it on the other.

use hiedge::decision::{score, train};
use hiedge::trace::generate_synthetic;
use hiedge::{LrTrainConfig, SynthConfig};

pub fn run_example() -> hiedge::Result<()> {
    let trace = generate_synthetic(&SynthConfig {
        num_samples: 6000,
        num_classes: 10,
        exit_accuracy: vec![0.87],
        server_accuracy: 0.988,
        separation: 2.0,
        seed: 3,
    })?;
    let (fit, held_out) = trace.split_at(trace.len() / 2);

    for class_weighting in [false, true] {
        let cfg = LrTrainConfig {
            class_weighting,
            ..LrTrainConfig::default()
        };
        let model = train(&fit, &cfg)?;
        let s = score(&model, &held_out);
        let c = &s.confusion;
        println!(
            "class weighting {class_weighting}: w = [{:.3}, {:.3}] b = {:.3}",
            model.weights[0], model.weights[1], model.bias
        );
        println!(
            "  held out: P {:.3} R {:.3} F1 {:.3} (TP {} FP {} FN {} TN {})",
            s.precision, s.recall, s.f1, c.tp, c.fp, c.fn_, c.tn
        );
    }
    Ok(())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
