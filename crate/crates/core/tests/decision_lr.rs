use hiedge::cost::evaluate;
use hiedge::decision::{extract_features, loss_and_grad, score, sigmoid, train};
use hiedge::trace::generate_synthetic;
use hiedge::{DeviceProfile, LrModel, LrTrainConfig, Mode, Policy, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook cross-entropy, written out independently of the library.
fn naive_loss(p: &[f64; 3], xs: &[(f64, f64)], ys: &[u8], l2: f64) -> f64 {
    let mut total = 0.0;
    for (&(a, b), &y) in xs.iter().zip(ys) {
        let s = 1.0 / (1.0 + (-(p[0] * a + p[1] * b + p[2])).exp());
        total -= if y == 1 { s.ln() } else { (1.0 - s).ln() };
    }
    total / xs.len() as f64 + 0.5 * l2 * (p[0] * p[0] + p[1] * p[1])
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-6;
    for _ in 0..100 {
        let n = rng.random_range(5..60);
        let xs: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let top1: f64 = rng.random_range(0.1..1.0);
                (top1, rng.random_range(0.0..=(1.0 - top1).min(top1)))
            })
            .collect();
        let ys: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let l2 = if rng.random_bool(0.5) { rng.random_range(0.0..0.5) } else { 0.0 };

        let (loss, grad) = loss_and_grad(&p, &xs, &ys, l2).unwrap();
        assert!((loss - naive_loss(&p, &xs, &ys, l2)).abs() < 1e-12);
        for i in 0..3 {
            let (mut up, mut down) = (p, p);
            up[i] += h;
            down[i] -= h;
            let numeric = (naive_loss(&up, &xs, &ys, l2) - naive_loss(&down, &xs, &ys, l2)) / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-3);
            assert!(rel < 1e-5, "param {i}: numeric {numeric} analytic {}", grad[i]);
        }
    }
}

#[test]
fn uninformative_confidence_gives_baseline_f1() {
    let trace = generate_synthetic(&SynthConfig {
        num_samples: 8000,
        num_classes: 10,
        exit_accuracy: vec![0.8],
        server_accuracy: 0.99,
        separation: 0.0,
        seed: 4,
    })
    .unwrap();
    let (fit, held) = trace.split_at(4000);
    let model = train(&fit, &LrTrainConfig::default()).unwrap();
    let f1 = score(&model, &held).f1;

    let acc = held.exit_accuracy(0);
    let baseline = 2.0 * acc / (acc + 1.0);
    assert!((f1 - baseline).abs() <= 0.02, "f1 {f1} baseline {baseline}");
}

#[test]
fn informative_confidence_beats_baseline() {
    let trace = generate_synthetic(&SynthConfig {
        num_samples: 8000,
        num_classes: 10,
        exit_accuracy: vec![0.7],
        server_accuracy: 0.99,
        separation: 6.0,
        seed: 4,
    })
    .unwrap();
    let (fit, held) = trace.split_at(4000);
    let model = train(&fit, &LrTrainConfig::default()).unwrap();
    let acc = held.exit_accuracy(0);
    assert!(score(&model, &held).f1 > 2.0 * acc / (acc + 1.0) + 0.02);
}

#[test]
fn hi_false_negatives_match_decider_confusion() {
    let trace = generate_synthetic(&SynthConfig {
        num_samples: 3000,
        num_classes: 10,
        exit_accuracy: vec![0.85],
        server_accuracy: 0.99,
        separation: 2.0,
        seed: 8,
    })
    .unwrap();
    let profile = DeviceProfile {
        name: "t".into(),
        exit_latency_ms: vec![1.0],
        exit_energy_mj: vec![1.0],
        lr_latency_ms: 0.1,
        lr_energy_mj: 0.1,
        offload_latency_ms: 10.0,
        offload_energy_mj: 10.0,
        source: None,
    };
    let model = train(&trace, &LrTrainConfig { class_weighting: true, ..Default::default() }).unwrap();
    let s = score(&model, &trace);
    let r = evaluate(&trace, &Policy::simple(Mode::Hi), Some(&model), &profile).unwrap();
    let n = trace.len() as f64;
    assert_eq!(r.eta_fn, s.confusion.fn_ as f64 / n);
    assert_eq!(r.eta_off, (s.confusion.fn_ + s.confusion.tn) as f64 / n);
    assert_eq!(r.lr_confusion, s.confusion);
}

#[test]
fn saved_model_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("lr.json");
    let m = LrModel::new([4.5, -1.25], -2.0, 0.6).unwrap();
    m.save(&p).unwrap();
    let back = LrModel::load(&p).unwrap();
    assert_eq!(back.weights, m.weights);
    assert_eq!(back.bias, m.bias);
    assert_eq!(back.decision_threshold, 0.6);
    let (top1, top2) = extract_features(&[0.1, 0.7, 0.2]).unwrap();
    let expect = sigmoid(4.5 * top1 - 1.25 * top2 - 2.0);
    assert_eq!(back.predict(&[0.1, 0.7, 0.2]).1, expect);
}
