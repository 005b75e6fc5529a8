// Generate a synthetic two-exit trace, write it as JSONL and read it back.

use hiedge::trace::{generate_synthetic, load_trace, save_trace};
use hiedge::SynthConfig;

pub fn run_example() -> hiedge::Result<()> {
    let cfg = SynthConfig {
        num_samples: 2000,
        num_classes: 10,
        exit_accuracy: vec![0.78, 0.87],
        server_accuracy: 0.99,
        separation: 3.0,
        seed: 11,
    };
    let trace = generate_synthetic(&cfg)?;

    let dir = std::env::temp_dir().join(format!("hiedge-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| hiedge::Error::Config(e.to_string()))?;
    let path = dir.join("synthetic.jsonl");
    save_trace(&trace, &path)?;
    let back = load_trace(&path)?;
    assert_eq!(back.records, trace.records);

    for k in 0..trace.num_exits {
        println!("exit {k}: accuracy {:.4}", trace.exit_accuracy(k));
    }
    println!("server: accuracy {:.4}", trace.server_accuracy());
    println!("round-tripped {} records through {}", back.len(), path.display());
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}

fn main() -> hiedge::Result<()> {
    run_example()
}
