// Start an offload server on loopback, send a few payloads and benchmark round trips.

use hiedge::wire::{bench, offload, sample_payload, serve, DelayModel, Predictor};

pub fn run_example() -> hiedge::Result<()> {
    let delay = DelayModel {
        fixed_ms: 2.0,
        jitter_ms: 1.0,
        seed: 9,
    };
    let server = serve("127.0.0.1:0", Predictor::Constant(7), delay)?;
    let addr = server.local_addr().to_string();

    let (class, rtt) = offload(&addr, &sample_payload(42, 3072))?;
    println!("one offload: class {class} in {rtt:.3} ms");

    let result = bench(&addr, 3072, 50, 1)?;
    let s = &result.stats;
    println!(
        "{} x {} B: mean {:.3} ms, sd {:.3}, p50 {:.3}, p99 {:.3}",
        s.repetitions, s.payload_bytes, s.mean_rtt_ms, s.stddev_ms, s.p50_ms, s.p99_ms
    );
    server.shutdown();
    Ok(())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
