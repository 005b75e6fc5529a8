use hiedge::trace::{generate_synthetic, load_trace, save_trace, Trace};
use hiedge::{SampleRecord, SynthConfig};
use proptest::prelude::*;

fn cfg(n: usize, exits: Vec<f64>, server: f64, sep: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        num_samples: n,
        num_classes: 10,
        exit_accuracy: exits,
        server_accuracy: server,
        separation: sep,
        seed,
    }
}

#[test]
fn generated_trace_round_trips_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let trace = generate_synthetic(&cfg(500, vec![0.7, 0.9], 0.99, 3.0, 1)).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    save_trace(&trace, &a).unwrap();
    let loaded = load_trace(&a).unwrap();
    assert_eq!(loaded.records, trace.records);
    save_trace(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn generator_hits_target_accuracies() {
    let t = generate_synthetic(&cfg(20_000, vec![0.85, 0.93], 0.99, 4.0, 7)).unwrap();
    assert!((t.exit_accuracy(0) - 0.85).abs() <= 0.02, "{}", t.exit_accuracy(0));
    assert!((t.exit_accuracy(1) - 0.93).abs() <= 0.02, "{}", t.exit_accuracy(1));
    assert!((t.server_accuracy() - 0.99).abs() <= 0.02, "{}", t.server_accuracy());
}

#[test]
fn correct_predictions_are_more_confident() {
    let t = generate_synthetic(&cfg(10_000, vec![0.8], 0.99, 3.0, 2)).unwrap();
    let (mut right, mut wrong): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for r in &t.records {
        let conf = r.device_prediction(0).1;
        if r.device_correct(0) {
            right.push(conf)
        } else {
            wrong.push(conf)
        }
    }
    // first-order dominance checked at the deciles
    right.sort_by(f64::total_cmp);
    wrong.sort_by(f64::total_cmp);
    for q in 1..10 {
        let at = |v: &[f64]| v[v.len() * q / 10];
        assert!(at(&right) > at(&wrong), "decile {q}");
    }
}

#[test]
fn same_seed_same_trace() {
    let c = cfg(300, vec![0.8], 0.95, 1.0, 99);
    assert_eq!(generate_synthetic(&c).unwrap(), generate_synthetic(&c).unwrap());
    let other = cfg(300, vec![0.8], 0.95, 1.0, 100);
    assert_ne!(generate_synthetic(&c).unwrap().records, generate_synthetic(&other).unwrap().records);
}

#[test]
fn load_reports_location_of_bad_record() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    std::fs::write(
        &p,
        "{\"classes\":2,\"exits\":1}\n\
         {\"id\":0,\"label\":0,\"exits\":[[0.9,0.1]],\"server_label\":0}\n\
         {\"id\":42,\"label\":1,\"exits\":[[0.6,0.6]],\"server_label\":1}\n",
    )
    .unwrap();
    let msg = load_trace(&p).unwrap_err().to_string();
    assert!(msg.contains("sample 42"), "{msg}");
    assert!(msg.contains("line 3"), "{msg}");
}

fn arb_trace() -> impl Strategy<Value = Trace> {
    (2usize..5, 1usize..4, 1usize..20).prop_flat_map(|(classes, exits, n)| {
        let softmax = prop::collection::vec(0.01f64..1.0, classes).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        });
        let rec = (
            0..classes as u32,
            prop::collection::vec(softmax, exits),
            0..classes as u32,
        );
        prop::collection::vec(rec, n).prop_map(move |recs| {
            let records = recs
                .into_iter()
                .enumerate()
                .map(|(i, (label, exit_softmax, server))| SampleRecord {
                    sample_id: i as u64,
                    true_label: label,
                    exit_softmax,
                    server_label: server,
                })
                .collect();
            Trace::new(classes, exits, records, Default::default()).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn write_read_identity(trace in arb_trace()) {
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let back = Trace::read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.records, &trace.records);
        prop_assert_eq!(back.num_classes, trace.num_classes);
        prop_assert_eq!(back.num_exits, trace.num_exits);
    }
}
