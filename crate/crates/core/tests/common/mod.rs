//! Brute-force reference implementations used as test oracles. They read only
//! raw trace fields and share no code with the library's routing or cost paths.
#![allow(dead_code)]

use hiedge::{DeviceProfile, LrModel, Mode, Trace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub accuracy: f64,
    pub latency: f64,
    pub energy: f64,
}

fn peak(p: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    (best, p[best])
}

fn lr_accepts(model: &LrModel, p: &[f64]) -> bool {
    let mut s = p.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let z = model.weights[0] * s[0] + model.weights[1] * s[1] + model.bias;
    1.0 / (1.0 + (-z).exp()) >= model.decision_threshold
}

/// Per-sample tally of hits and of how often each cost was paid; averages come from the counts.
pub fn evaluate(trace: &Trace, mode: Mode, thetas: &[f64], model: &LrModel, profile: &DeviceProfile) -> Point {
    let last = trace.num_exits - 1;
    let mut hits = 0usize;
    let mut at_exit = vec![0usize; trace.num_exits];
    let (mut lr_runs, mut offloads) = (0usize, 0usize);
    for r in &trace.records {
        if mode == Mode::Remote {
            hits += usize::from(r.server_label == r.true_label);
            offloads += 1;
            continue;
        }
        let mut exit = last;
        if matches!(mode, Mode::Ee | Mode::EeHi) {
            for (k, &t) in thetas.iter().enumerate() {
                if peak(&r.exit_softmax[k]).1 >= t {
                    exit = k;
                    break;
                }
            }
        }
        at_exit[exit] += 1;
        let local_ok = peak(&r.exit_softmax[exit]).0 as u32 == r.true_label;
        if exit == last && matches!(mode, Mode::Hi | Mode::EeHi) {
            lr_runs += 1;
            if lr_accepts(model, &r.exit_softmax[last]) {
                hits += usize::from(local_ok);
            } else {
                offloads += 1;
                hits += usize::from(r.server_label == r.true_label);
            }
        } else {
            hits += usize::from(local_ok);
        }
    }
    let n = trace.len() as f64;
    let avg = |per_exit: &[f64], lr: f64, off: f64| {
        let mut total = 0.0;
        for (c, x) in at_exit.iter().zip(per_exit) {
            total += *c as f64 / n * x;
        }
        total + lr_runs as f64 / n * lr + offloads as f64 / n * off
    };
    Point {
        accuracy: hits as f64 / n,
        latency: avg(&profile.exit_latency_ms, profile.lr_latency_ms, profile.offload_latency_ms),
        energy: avg(&profile.exit_energy_mj, profile.lr_energy_mj, profile.offload_energy_mj),
    }
}

/// Grid axis values lo, lo+step, ..., built by integer multiples.
pub fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12).collect()
}

/// Every threshold vector over `axis` in lexicographic order.
pub fn all_points(axis: &[f64], dims: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

/// Feasible point with the least latency, then energy; first in grid order on exact ties.
pub fn best_min_latency(
    points: &[(Vec<f64>, Point)],
    floor: Option<f64>,
    lat_cap: Option<f64>,
    en_cap: Option<f64>,
) -> Option<(Vec<f64>, Point)> {
    let mut best: Option<(Vec<f64>, Point)> = None;
    for (t, p) in points {
        let ok = floor.is_none_or(|f| p.accuracy >= f)
            && lat_cap.is_none_or(|c| p.latency <= c)
            && en_cap.is_none_or(|c| p.energy <= c);
        if !ok {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, b)) => p.latency < b.latency || (p.latency == b.latency && p.energy < b.energy),
        };
        if better {
            best = Some((t.clone(), *p));
        }
    }
    best
}

/// Points not strictly dominated by any other (accuracy up, cost down).
pub fn front(points: &[(Vec<f64>, Point)], cost: impl Fn(&Point) -> f64) -> Vec<(Vec<f64>, Point)> {
    points
        .iter()
        .filter(|(_, p)| {
            !points.iter().any(|(_, q)| {
                q.accuracy >= p.accuracy && cost(q) <= cost(p) && (q.accuracy > p.accuracy || cost(q) < cost(p))
            })
        })
        .cloned()
        .collect()
}
