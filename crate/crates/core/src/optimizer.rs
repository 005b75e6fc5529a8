//! Exhaustive threshold search, Pareto fronts and strategy comparison under
//! QoS constraints.
//!
//! Every search evaluates the full Cartesian grid, one axis per early branch.
//! Grid points are produced in lexicographic order and reduced serially after
//! a parallel evaluation, so results never depend on thread count.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{evaluate, DeviceProfile, EvalReport};
use crate::decision::LrModel;
use crate::error::{Error, Result};
use crate::gate::{Mode, Policy};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QosSpec {
    pub accuracy_floor: Option<f64>,
    pub latency_cap_ms: Option<f64>,
    pub energy_cap_mj: Option<f64>,
}

impl QosSpec {
    pub fn validate(&self) -> Result<()> {
        if self.accuracy_floor.is_none() && self.latency_cap_ms.is_none() && self.energy_cap_mj.is_none() {
            return Err(Error::Config("QoS needs at least one constraint".into()));
        }
        if let Some(a) = self.accuracy_floor {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("accuracy floor {a} not in [0, 1]")));
            }
        }
        for cap in [self.latency_cap_ms, self.energy_cap_mj].into_iter().flatten() {
            if cap.is_nan() || cap < 0.0 {
                return Err(Error::Config(format!("cost cap {cap} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn is_satisfied(&self, r: &EvalReport) -> bool {
        self.accuracy_floor.is_none_or(|f| r.accuracy >= f)
            && self.latency_cap_ms.is_none_or(|c| r.avg_latency_ms <= c)
            && self.energy_cap_mj.is_none_or(|c| r.avg_energy_mj <= c)
    }

    /// Sum of relative violations; zero exactly when satisfied.
    pub fn violation(&self, r: &EvalReport) -> f64 {
        let rel = |excess: f64, scale: f64| {
            if excess <= 0.0 {
                0.0
            } else if scale > 0.0 {
                excess / scale
            } else {
                excess
            }
        };
        self.accuracy_floor.map_or(0.0, |f| rel(f - r.accuracy, f))
            + self.latency_cap_ms.map_or(0.0, |c| rel(r.avg_latency_ms - c, c))
            + self.energy_cap_mj.map_or(0.0, |c| rel(r.avg_energy_mj - c, c))
    }
}

/// How the accuracy floor is derived from the state-of-the-art accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyRule {
    /// Ten percentage points below.
    Absolute10Pts,
    /// Ninety percent of it.
    Relative90Pct,
}

impl FromStr for AccuracyRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "absolute-10pts" | "absolute" => Ok(AccuracyRule::Absolute10Pts),
            "relative-90pct" | "relative" => Ok(AccuracyRule::Relative90Pct),
            _ => Err(Error::Config(format!("unknown accuracy rule '{s}'"))),
        }
    }
}

/// Accuracy floor from the best known accuracy; latency and energy caps at half
/// the cost of offloading one sample.
pub fn qos_from_context(
    sota_accuracy: f64,
    offload_latency_ms: f64,
    offload_energy_mj: f64,
    rule: AccuracyRule,
) -> QosSpec {
    let floor = match rule {
        AccuracyRule::Absolute10Pts => sota_accuracy - 0.10,
        AccuracyRule::Relative90Pct => 0.9 * sota_accuracy,
    };
    QosSpec {
        accuracy_floor: Some(floor),
        latency_cap_ms: Some(0.5 * offload_latency_ms),
        energy_cap_mj: Some(0.5 * offload_energy_mj),
    }
}

/// Per-axis threshold grid `lower, lower + step, ...` up to `upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lower: 0.5,
            upper: 1.0,
            step: 0.01,
        }
    }
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        let g = GridSpec { lower, upper, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.lower && self.lower < self.upper && self.upper <= 1.0) {
            return Err(Error::Config(format!(
                "grid bounds need 0 <= lower < upper <= 1, got {}:{}",
                self.lower, self.upper
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("grid step {} must be > 0", self.step)));
        }
        Ok(())
    }

    /// Axis values, rounded to 12 decimals so that 0.5 + 3 * 0.1 prints as 0.8.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.upper - self.lower) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let v = self.lower + i as f64 * self.step;
                ((v * 1e12).round() / 1e12).min(self.upper)
            })
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// Parses `lower:upper:step`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(Error::Config(format!("grid '{s}' is not lower:upper:step")));
        };
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("grid '{s}': '{p}' is not a number")))
        };
        GridSpec::new(num(lo)?, num(hi)?, num(step)?)
    }
}

/// Cartesian product of `axis` over `dims` dimensions, lexicographic order.
/// Zero dimensions yields one empty point.
pub fn grid_points(axis: &[f64], dims: usize) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::with_capacity(dims)];
    for _ in 0..dims {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MinLatency,
    MinEnergy,
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "min-latency" | "latency" => Ok(Objective::MinLatency),
            "min-energy" | "energy" => Ok(Objective::MinEnergy),
            _ => Err(Error::Config(format!("unknown objective '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub policy: Policy,
    pub report: EvalReport,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

impl Objective {
    /// Primary objective, then the other cost, then smaller thresholds.
    pub fn compare(self, a: &Candidate, b: &Candidate) -> Ordering {
        let (ra, rb) = (&a.report, &b.report);
        let costs = match self {
            Objective::MinLatency => ra
                .avg_latency_ms
                .total_cmp(&rb.avg_latency_ms)
                .then(ra.avg_energy_mj.total_cmp(&rb.avg_energy_mj)),
            Objective::MinEnergy => ra
                .avg_energy_mj
                .total_cmp(&rb.avg_energy_mj)
                .then(ra.avg_latency_ms.total_cmp(&rb.avg_latency_ms)),
        };
        costs.then_with(|| lex(&a.policy.thresholds, &b.policy.thresholds))
    }
}

/// Evaluates every grid point in `mode`, in lexicographic threshold order.
pub fn sweep(
    trace: &Trace,
    model: Option<&LrModel>,
    profile: &DeviceProfile,
    grid: &GridSpec,
    mode: Mode,
) -> Result<Vec<Candidate>> {
    grid.validate()?;
    let dims = if mode.uses_thresholds() {
        trace.num_exits - 1
    } else {
        0
    };
    if dims > 3 {
        log::warn!(
            "exhaustive sweep over {dims} thresholds: {} grid points",
            grid.values().len().pow(dims as u32)
        );
    }
    let points = grid_points(&grid.values(), dims);
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    points
        .into_par_iter()
        .map(|thresholds| {
            let policy = Policy::new(mode, thresholds);
            let report = evaluate(trace, &policy, model, profile)?;
            Ok(Candidate { policy, report })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub best: Candidate,
    /// False when no grid point met the QoS; `best` is then the least-violating point.
    pub feasible: bool,
    pub evaluated: usize,
}

fn select(candidates: Vec<Candidate>, qos: &QosSpec, objective: Objective) -> Result<OptimizeOutcome> {
    let evaluated = candidates.len();
    let feasible = candidates.iter().any(|c| qos.is_satisfied(&c.report));
    let best = if feasible {
        candidates
            .into_iter()
            .filter(|c| qos.is_satisfied(&c.report))
            .min_by(|a, b| objective.compare(a, b))
    } else {
        candidates.into_iter().min_by(|a, b| {
            qos.violation(&a.report)
                .total_cmp(&qos.violation(&b.report))
                .then_with(|| objective.compare(a, b))
        })
    };
    Ok(OptimizeOutcome {
        best: best.ok_or(Error::EmptyGrid)?,
        feasible,
        evaluated,
    })
}

/// Best EE-HI thresholds on the grid for `objective` subject to `qos`.
pub fn optimize(
    trace: &Trace,
    model: &LrModel,
    profile: &DeviceProfile,
    qos: &QosSpec,
    grid: &GridSpec,
    objective: Objective,
) -> Result<OptimizeOutcome> {
    optimize_mode(trace, Some(model), profile, qos, grid, objective, Mode::EeHi)
}

/// [`optimize`] for any mode; modes without early exits have a single grid point.
pub fn optimize_mode(
    trace: &Trace,
    model: Option<&LrModel>,
    profile: &DeviceProfile,
    qos: &QosSpec,
    grid: &GridSpec,
    objective: Objective,
    mode: Mode,
) -> Result<OptimizeOutcome> {
    qos.validate()?;
    let candidates = sweep(trace, model, profile, grid, mode)?;
    select(candidates, qos, objective)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParetoAxes {
    AccVsLatency,
    AccVsEnergy,
}

impl ParetoAxes {
    pub fn cost(self, r: &EvalReport) -> f64 {
        match self {
            ParetoAxes::AccVsLatency => r.avg_latency_ms,
            ParetoAxes::AccVsEnergy => r.avg_energy_mj,
        }
    }

    /// `a` is at least as accurate and at most as costly, strictly better in one.
    pub fn dominates(self, a: &EvalReport, b: &EvalReport) -> bool {
        let (ca, cb) = (self.cost(a), self.cost(b));
        a.accuracy >= b.accuracy && ca <= cb && (a.accuracy > b.accuracy || ca < cb)
    }
}

impl FromStr for ParetoAxes {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "acc-latency" | "acc-vs-latency" | "latency" => Ok(ParetoAxes::AccVsLatency),
            "acc-energy" | "acc-vs-energy" | "energy" => Ok(ParetoAxes::AccVsEnergy),
            _ => Err(Error::Config(format!("unknown pareto axes '{s}'"))),
        }
    }
}

/// Non-dominated subset, sorted by cost, then accuracy descending, then thresholds.
pub fn pareto_filter(candidates: Vec<Candidate>, axes: ParetoAxes) -> Vec<Candidate> {
    let mut sorted = candidates;
    sorted.sort_by(|a, b| {
        axes.cost(&a.report)
            .total_cmp(&axes.cost(&b.report))
            .then(b.report.accuracy.total_cmp(&a.report.accuracy))
            .then_with(|| lex(&a.policy.thresholds, &b.policy.thresholds))
    });
    // In this order a point can only be dominated by something before it, and
    // the most accurate point seen so far dominates whenever anything does.
    let mut front: Vec<Candidate> = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for c in sorted {
        let (acc, cost) = (c.report.accuracy, axes.cost(&c.report));
        let dominated = best.is_some_and(|(b_acc, b_cost)| {
            b_acc >= acc && b_cost <= cost && (b_acc > acc || b_cost < cost)
        });
        if !dominated {
            if best.is_none_or(|(b_acc, _)| acc > b_acc) {
                best = Some((acc, cost));
            }
            front.push(c);
        }
    }
    front
}

/// Pareto front of the EE-HI grid.
pub fn pareto(
    trace: &Trace,
    model: &LrModel,
    profile: &DeviceProfile,
    grid: &GridSpec,
    axes: ParetoAxes,
) -> Result<Vec<Candidate>> {
    let sweep = sweep(trace, Some(model), profile, grid, Mode::EeHi)?;
    Ok(pareto_filter(sweep, axes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QosDimension {
    Accuracy,
    Latency,
    Energy,
}

impl fmt::Display for QosDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QosDimension::Accuracy => "accuracy",
            QosDimension::Latency => "latency",
            QosDimension::Energy => "energy",
        })
    }
}

impl QosDimension {
    fn feasible(self, bound: f64, r: &EvalReport) -> bool {
        match self {
            QosDimension::Accuracy => r.accuracy >= bound,
            QosDimension::Latency => r.avg_latency_ms <= bound,
            QosDimension::Energy => r.avg_energy_mj <= bound,
        }
    }

    /// Ordering of feasible reports, best first.
    ///
    /// Accuracy fixed: least latency, then least energy.
    /// Latency fixed: most accurate, then least energy.
    /// Energy fixed: most accurate, then least latency.
    fn rank(self, a: &EvalReport, b: &EvalReport) -> Ordering {
        match self {
            QosDimension::Accuracy => a
                .avg_latency_ms
                .total_cmp(&b.avg_latency_ms)
                .then(a.avg_energy_mj.total_cmp(&b.avg_energy_mj)),
            QosDimension::Latency => b
                .accuracy
                .total_cmp(&a.accuracy)
                .then(a.avg_energy_mj.total_cmp(&b.avg_energy_mj)),
            QosDimension::Energy => b
                .accuracy
                .total_cmp(&a.accuracy)
                .then(a.avg_latency_ms.total_cmp(&b.avg_latency_ms)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub dimension: QosDimension,
    pub bound: f64,
    /// Best feasible strategy; `None` when nothing meets the bound.
    pub best: Option<Candidate>,
    /// Best point of every strategy under this row's bound, feasible or not,
    /// in the fixed strategy order.
    pub per_strategy: Vec<(Candidate, bool)>,
}

/// For each constraint present in `qos`, fixes it alone and picks the strategy
/// that does best on the remaining metrics.
pub fn compare_strategies(
    trace: &Trace,
    model: &LrModel,
    profile: &DeviceProfile,
    qos: &QosSpec,
    grid: &GridSpec,
) -> Result<Vec<CompareRow>> {
    qos.validate()?;
    let sweeps = Mode::ALL
        .iter()
        .map(|&mode| sweep(trace, Some(model), profile, grid, mode))
        .collect::<Result<Vec<_>>>()?;

    let dims = [
        (QosDimension::Accuracy, qos.accuracy_floor),
        (QosDimension::Latency, qos.latency_cap_ms),
        (QosDimension::Energy, qos.energy_cap_mj),
    ];
    let mut rows = Vec::new();
    for (dimension, bound) in dims {
        let Some(bound) = bound else { continue };
        let order = |a: &Candidate, b: &Candidate| {
            dimension
                .rank(&a.report, &b.report)
                .then_with(|| lex(&a.policy.thresholds, &b.policy.thresholds))
        };
        let per_strategy: Vec<(Candidate, bool)> = sweeps
            .iter()
            .map(|cands| {
                let feasible = cands.iter().filter(|c| dimension.feasible(bound, &c.report)).min_by(|a, b| order(a, b));
                match feasible {
                    Some(c) => (c.clone(), true),
                    None => {
                        let c = cands.iter().min_by(|a, b| order(a, b)).expect("sweep is never empty");
                        (c.clone(), false)
                    }
                }
            })
            .collect();
        // min_by keeps the first of equal elements, so ties go to the earlier strategy
        let best = per_strategy
            .iter()
            .filter(|(_, ok)| *ok)
            .map(|(c, _)| c)
            .min_by(|a, b| dimension.rank(&a.report, &b.report))
            .cloned();
        rows.push(CompareRow {
            dimension,
            bound,
            best,
            per_strategy,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qos_rules() {
        let q = qos_from_context(0.995, 9.68, 27.67, AccuracyRule::Absolute10Pts);
        assert!((q.accuracy_floor.unwrap() - 0.895).abs() < 1e-12);
        assert_eq!(q.latency_cap_ms, Some(4.84));
        assert_eq!(q.energy_cap_mj, Some(13.835));

        let q = qos_from_context(0.9877, 9.68, 27.67, AccuracyRule::Relative90Pct);
        assert!((q.accuracy_floor.unwrap() - 0.88893).abs() < 1e-12);
    }

    #[test]
    fn grid_values_and_parse() {
        let g: GridSpec = "0.5:1.0:0.05".parse().unwrap();
        let v = g.values();
        assert_eq!(v.len(), 11);
        assert_eq!(v[0], 0.5);
        assert_eq!(v[6], 0.8);
        assert_eq!(v[10], 1.0);
        assert_eq!(GridSpec::default().values().len(), 51);
        assert_eq!(GridSpec::new(0.5, 0.6, 0.5).unwrap().values(), vec![0.5]);
        assert!("0.5:1.0".parse::<GridSpec>().is_err());
        assert!("0.9:0.5:0.1".parse::<GridSpec>().is_err());
        assert!("0.5:1.0:0".parse::<GridSpec>().is_err());
    }

    #[test]
    fn cartesian_points() {
        assert_eq!(grid_points(&[0.5, 1.0], 0), vec![Vec::<f64>::new()]);
        assert_eq!(
            grid_points(&[0.5, 1.0], 2),
            vec![vec![0.5, 0.5], vec![0.5, 1.0], vec![1.0, 0.5], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn qos_needs_a_constraint() {
        assert!(QosSpec::default().validate().is_err());
        let q = QosSpec {
            accuracy_floor: Some(1.5),
            ..Default::default()
        };
        assert!(q.validate().is_err());
    }
}
