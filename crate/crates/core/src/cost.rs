//! Analytic accuracy, latency and energy of a routed trace.
//!
//! Per-sample costs are never simulated. A report is a population average:
//! every sample pays the cumulative cost of the exit it left from, samples that
//! reach the final exit under an LR mode pay the decider, and offloaded samples
//! pay the round trip to the server.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::{Confusion, LrModel};
use crate::error::{Error, Result};
use crate::gate::{route_all, ExitFractions, Mode, Policy, Routing};
use crate::trace::Trace;

const FRACTION_TOLERANCE: f64 = 1e-9;

/// Measured costs of one device running one model. Milliseconds and millijoules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    /// Cumulative time to produce each exit's output, shallow to deep.
    pub exit_latency_ms: Vec<f64>,
    pub exit_energy_mj: Vec<f64>,
    pub lr_latency_ms: f64,
    pub lr_energy_mj: f64,
    /// Full round trip: transmission, server inference, reply.
    pub offload_latency_ms: f64,
    pub offload_energy_mj: f64,
    /// Where the numbers came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl DeviceProfile {
    pub fn num_exits(&self) -> usize {
        self.exit_latency_ms.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("profile '{}': {m}", self.name)));
        if self.exit_latency_ms.is_empty() {
            return bad("needs at least one exit".into());
        }
        if self.exit_latency_ms.len() != self.exit_energy_mj.len() {
            return bad("exit latency and energy vectors differ in length".into());
        }
        let scalars = [
            self.lr_latency_ms,
            self.lr_energy_mj,
            self.offload_latency_ms,
            self.offload_energy_mj,
        ];
        let all = self.exit_latency_ms.iter().chain(&self.exit_energy_mj).chain(&scalars);
        if let Some(v) = all.clone().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return bad(format!("value {v} must be finite and >= 0"));
        }
        for (what, costs) in [("latency", &self.exit_latency_ms), ("energy", &self.exit_energy_mj)] {
            if costs.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("exit {what} must be strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let profile: DeviceProfile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub thresholds: Vec<f64>,
    pub n: usize,
    pub accuracy: f64,
    pub avg_latency_ms: f64,
    pub avg_energy_mj: f64,
    pub eta_off: f64,
    pub eta_exit: Vec<f64>,
    pub eta_fn: f64,
    /// Fraction of samples on which the LR decider ran.
    pub lr_fraction: f64,
    pub lr_confusion: Confusion,
}

fn check_aligned(trace: &Trace, routings: &[Routing]) -> Result<()> {
    if trace.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if trace.len() != routings.len() {
        return Err(Error::Dimension(format!(
            "{} routings for {} samples",
            routings.len(),
            trace.len()
        )));
    }
    Ok(())
}

/// Fraction of samples whose delivered answer is right: the exit taken when
/// kept local, the server's when offloaded.
pub fn accuracy_direct(trace: &Trace, routings: &[Routing]) -> Result<f64> {
    check_aligned(trace, routings)?;
    let hits = trace
        .records
        .iter()
        .zip(routings)
        .filter(|(rec, rt)| {
            if rt.offloaded {
                rec.server_correct()
            } else {
                rec.device_correct(rt.exit_taken)
            }
        })
        .count();
    Ok(hits as f64 / trace.len() as f64)
}

/// Components of the decomposed accuracy, `acc_od - eta_fn + server_recovered`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyTerms {
    /// On-device accuracy at the exits taken, ignoring offloads.
    pub acc_od: f64,
    /// Offloaded although the device was right.
    pub eta_fn: f64,
    /// Offloaded and the server was right.
    pub server_recovered: f64,
}

impl AccuracyTerms {
    pub fn total(&self) -> f64 {
        self.acc_od - self.eta_fn + self.server_recovered
    }
}

pub fn accuracy_terms(trace: &Trace, routings: &[Routing]) -> Result<AccuracyTerms> {
    check_aligned(trace, routings)?;
    let (mut od, mut fn_, mut rec) = (0usize, 0usize, 0usize);
    for (r, rt) in trace.records.iter().zip(routings) {
        let device_ok = r.device_correct(rt.exit_taken);
        od += usize::from(device_ok);
        if rt.offloaded {
            fn_ += usize::from(device_ok);
            rec += usize::from(r.server_correct());
        }
    }
    let n = trace.len() as f64;
    Ok(AccuracyTerms {
        acc_od: od as f64 / n,
        eta_fn: fn_ as f64 / n,
        server_recovered: rec as f64 / n,
    })
}

/// The same accuracy reached through the on-device accuracy minus wasted offloads.
pub fn accuracy_decomposed(trace: &Trace, routings: &[Routing]) -> Result<f64> {
    Ok(accuracy_terms(trace, routings)?.total())
}

fn check_fractions(eta_exit: &[f64], eta_off: f64, lr_fraction: f64, exits: usize) -> Result<()> {
    if eta_exit.len() != exits {
        return Err(Error::Dimension(format!(
            "{} exit fractions for a {exits}-exit profile",
            eta_exit.len()
        )));
    }
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    if !eta_exit.iter().all(|&v| in_unit(v)) || !in_unit(eta_off) || !in_unit(lr_fraction) {
        return Err(Error::Fractions("every fraction must lie in [0, 1]".into()));
    }
    let sum: f64 = eta_exit.iter().sum();
    if (sum - 1.0).abs() > FRACTION_TOLERANCE {
        return Err(Error::Fractions(format!("exit fractions sum to {sum}")));
    }
    let last = eta_exit[exits - 1];
    if eta_off > last + FRACTION_TOLERANCE || lr_fraction > last + FRACTION_TOLERANCE {
        return Err(Error::Fractions(
            "offload and LR fractions cannot exceed the final-exit fraction".into(),
        ));
    }
    Ok(())
}

fn expected(eta_exit: &[f64], exit_cost: &[f64], lr_fraction: f64, lr_cost: f64, eta_off: f64, off_cost: f64) -> f64 {
    let device: f64 = eta_exit.iter().zip(exit_cost).map(|(f, c)| f * c).sum();
    device + lr_fraction * lr_cost + eta_off * off_cost
}

pub fn expected_latency(eta_exit: &[f64], eta_off: f64, lr_fraction: f64, profile: &DeviceProfile) -> Result<f64> {
    check_fractions(eta_exit, eta_off, lr_fraction, profile.num_exits())?;
    Ok(expected(
        eta_exit,
        &profile.exit_latency_ms,
        lr_fraction,
        profile.lr_latency_ms,
        eta_off,
        profile.offload_latency_ms,
    ))
}

pub fn expected_energy(eta_exit: &[f64], eta_off: f64, lr_fraction: f64, profile: &DeviceProfile) -> Result<f64> {
    check_fractions(eta_exit, eta_off, lr_fraction, profile.num_exits())?;
    Ok(expected(
        eta_exit,
        &profile.exit_energy_mj,
        lr_fraction,
        profile.lr_energy_mj,
        eta_off,
        profile.offload_energy_mj,
    ))
}

/// Routes the whole trace under `policy` and reports accuracy and average costs.
///
/// REMOTE charges the offload round trip only; no on-device compute is billed.
pub fn evaluate(
    trace: &Trace,
    policy: &Policy,
    model: Option<&LrModel>,
    profile: &DeviceProfile,
) -> Result<EvalReport> {
    if profile.num_exits() != trace.num_exits {
        return Err(Error::Dimension(format!(
            "profile '{}' has {} exits, trace has {}",
            profile.name,
            profile.num_exits(),
            trace.num_exits
        )));
    }
    let routings = route_all(trace, policy, model)?;
    report_from_routings(trace, policy, &routings, profile)
}

pub(crate) fn report_from_routings(
    trace: &Trace,
    policy: &Policy,
    routings: &[Routing],
    profile: &DeviceProfile,
) -> Result<EvalReport> {
    let fractions = ExitFractions::from_routings(routings, trace.num_exits)?;
    let accuracy = accuracy_direct(trace, routings)?;

    let mut confusion = Confusion::default();
    for (rec, rt) in trace.records.iter().zip(routings) {
        if let Some(decision) = rt.decision {
            confusion.record(decision, rec.device_correct(rt.exit_taken));
        }
    }
    let n = trace.len();
    let lr_fraction = confusion.total() as f64 / n as f64;
    let eta_fn = confusion.fn_ as f64 / n as f64;

    let (latency, energy) = if policy.mode == Mode::Remote {
        (
            fractions.eta_off * profile.offload_latency_ms,
            fractions.eta_off * profile.offload_energy_mj,
        )
    } else {
        (
            expected_latency(&fractions.eta_exit, fractions.eta_off, lr_fraction, profile)?,
            expected_energy(&fractions.eta_exit, fractions.eta_off, lr_fraction, profile)?,
        )
    };

    Ok(EvalReport {
        mode: policy.mode,
        thresholds: policy.thresholds.clone(),
        n,
        accuracy,
        avg_latency_ms: latency,
        avg_energy_mj: energy,
        eta_off: fractions.eta_off,
        eta_exit: fractions.eta_exit,
        eta_fn,
        lr_fraction,
        lr_confusion: confusion,
    })
}
