//! JSON and CSV output for reports, fronts, strategy tables and benchmarks.
//!
//! JSON keeps full precision so files load back to identical values. CSV is
//! meant for plotting and prints floats with 6 significant digits.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::EvalReport;
use crate::error::{Error, Result};
use crate::optimizer::{Candidate, CompareRow, QosSpec};
use crate::wire::BenchStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Config(format!("unknown format '{s}'"))),
        }
    }
}

impl Format {
    /// Guesses from the file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }
}

/// `x` with 6 significant digits, trailing zeros dropped.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Thresholds joined with `;` so they fit one CSV cell.
pub fn fmt_thresholds(t: &[f64]) -> String {
    t.iter().map(|v| fmt_sig6(*v)).collect::<Vec<_>>().join(";")
}

pub fn parse_thresholds(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split([';', ','])
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("'{p}' is not a threshold")))
        })
        .collect()
}

/// One line of a policy CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub mode: String,
    pub thresholds: String,
    pub accuracy: String,
    pub latency_ms: String,
    pub energy_mj: String,
    pub eta_off: String,
    pub feasible: String,
}

impl PolicyRow {
    pub fn new(report: &EvalReport, feasible: Option<bool>) -> Self {
        PolicyRow {
            mode: report.mode.to_string(),
            thresholds: fmt_thresholds(&report.thresholds),
            accuracy: fmt_sig6(report.accuracy),
            latency_ms: fmt_sig6(report.avg_latency_ms),
            energy_mj: fmt_sig6(report.avg_energy_mj),
            eta_off: fmt_sig6(report.eta_off),
            feasible: feasible.map(|f| f.to_string()).unwrap_or_default(),
        }
    }

    pub fn accuracy(&self) -> Result<f64> {
        parse_num(&self.accuracy)
    }

    pub fn latency(&self) -> Result<f64> {
        parse_num(&self.latency_ms)
    }

    pub fn energy(&self) -> Result<f64> {
        parse_num(&self.energy_mj)
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Config(format!("'{s}' is not a number")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareCsvRow {
    pub fixed: String,
    pub bound: String,
    pub strategy: String,
    pub thresholds: String,
    pub accuracy: String,
    pub latency_ms: String,
    pub energy_mj: String,
    pub eta_off: String,
    pub feasible: String,
}

/// What can be written out.
pub enum Emit<'a> {
    Report(&'a EvalReport, Option<&'a QosSpec>),
    Candidates(&'a [Candidate], Option<&'a QosSpec>),
    Compare(&'a [CompareRow]),
    Bench(&'a BenchStats),
}

#[derive(Serialize)]
struct CandidateJson<'a> {
    policy: &'a crate::gate::Policy,
    feasible: Option<bool>,
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct CompareJson<'a> {
    fixed: String,
    bound: f64,
    strategy: Option<String>,
    best: Option<&'a EvalReport>,
    candidates: Vec<CandidateJson<'a>>,
}

pub fn write_report<W: Write>(item: &Emit<'_>, format: Format, out: W) -> Result<()> {
    match format {
        Format::Json => write_json(item, out),
        Format::Csv => write_csv(item, out),
    }
}

fn write_json<W: Write>(item: &Emit<'_>, mut out: W) -> Result<()> {
    let feasible = |qos: Option<&QosSpec>, r: &EvalReport| qos.map(|q| q.is_satisfied(r));
    let value = match item {
        Emit::Report(r, _) => serde_json::to_value(r),
        Emit::Candidates(cands, qos) => serde_json::to_value(
            cands
                .iter()
                .map(|c| CandidateJson {
                    policy: &c.policy,
                    feasible: feasible(*qos, &c.report),
                    report: &c.report,
                })
                .collect::<Vec<_>>(),
        ),
        Emit::Compare(rows) => serde_json::to_value(
            rows.iter()
                .map(|row| CompareJson {
                    fixed: row.dimension.to_string(),
                    bound: row.bound,
                    strategy: row.best.as_ref().map(|c| c.report.mode.to_string()),
                    best: row.best.as_ref().map(|c| &c.report),
                    candidates: row
                        .per_strategy
                        .iter()
                        .map(|(c, ok)| CandidateJson {
                            policy: &c.policy,
                            feasible: Some(*ok),
                            report: &c.report,
                        })
                        .collect(),
                })
                .collect::<Vec<_>>(),
        ),
        Emit::Bench(stats) => serde_json::to_value(stats),
    }
    .expect("reports serialize");
    let text = serde_json::to_string_pretty(&value).expect("reports serialize");
    writeln!(out, "{text}").map_err(|e| Error::io("<output>", e))
}

fn write_csv<W: Write>(item: &Emit<'_>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    match item {
        Emit::Report(r, qos) => {
            w.serialize(PolicyRow::new(r, qos.map(|q| q.is_satisfied(r))))?;
        }
        Emit::Candidates(cands, qos) => {
            if cands.is_empty() {
                w.write_record(["mode", "thresholds", "accuracy", "latency_ms", "energy_mj", "eta_off", "feasible"])?;
            }
            for c in *cands {
                w.serialize(PolicyRow::new(&c.report, qos.map(|q| q.is_satisfied(&c.report))))?;
            }
        }
        Emit::Compare(rows) => {
            if rows.is_empty() {
                w.write_record([
                    "fixed", "bound", "strategy", "thresholds", "accuracy", "latency_ms", "energy_mj", "eta_off",
                    "feasible",
                ])?;
            }
            for row in *rows {
                let base = CompareCsvRow {
                    fixed: row.dimension.to_string(),
                    bound: fmt_sig6(row.bound),
                    strategy: "none feasible".into(),
                    thresholds: String::new(),
                    accuracy: String::new(),
                    latency_ms: String::new(),
                    energy_mj: String::new(),
                    eta_off: String::new(),
                    feasible: "false".into(),
                };
                let line = match &row.best {
                    None => base,
                    Some(c) => {
                        let r = &c.report;
                        CompareCsvRow {
                            strategy: r.mode.to_string(),
                            thresholds: fmt_thresholds(&r.thresholds),
                            accuracy: fmt_sig6(r.accuracy),
                            latency_ms: fmt_sig6(r.avg_latency_ms),
                            energy_mj: fmt_sig6(r.avg_energy_mj),
                            eta_off: fmt_sig6(r.eta_off),
                            feasible: "true".into(),
                            ..base
                        }
                    }
                };
                w.serialize(line)?;
            }
        }
        Emit::Bench(s) => {
            w.write_record([
                "payload_bytes", "repetitions", "mean_rtt_ms", "stddev_ms", "min_ms", "max_ms", "p50_ms", "p99_ms",
            ])?;
            w.write_record([
                s.payload_bytes.to_string(),
                s.repetitions.to_string(),
                fmt_sig6(s.mean_rtt_ms),
                fmt_sig6(s.stddev_ms),
                fmt_sig6(s.min_ms),
                fmt_sig6(s.max_ms),
                fmt_sig6(s.p50_ms),
                fmt_sig6(s.p99_ms),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

/// Writes to `path`, or to stdout when `path` is `None` or `-`.
pub fn emit_report(item: &Emit<'_>, format: Format, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => {
            let file = File::create(p).map_err(|e| Error::io(p, e))?;
            write_report(item, format, io::BufWriter::new(file))
        }
        _ => write_report(item, format, io::stdout().lock()),
    }
}

pub fn read_policy_csv(path: impl AsRef<Path>) -> Result<Vec<PolicyRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::Confusion;
    use crate::gate::Mode;

    fn report() -> EvalReport {
        EvalReport {
            mode: Mode::EeHi,
            thresholds: vec![0.69],
            n: 10,
            accuracy: 0.956_789_123,
            avg_latency_ms: 3.820_001_7,
            avg_energy_mj: 12.55,
            eta_off: 0.2157,
            eta_exit: vec![0.4, 0.6],
            eta_fn: 0.01,
            lr_fraction: 0.6,
            lr_confusion: Confusion { tp: 3, fp: 1, fn_: 1, tn: 1 },
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(3.82), "3.82");
        assert_eq!(fmt_sig6(0.956_789_123), "0.956789");
        assert_eq!(fmt_sig6(1234.56789), "1234.57");
        assert_eq!(fmt_sig6(13.835), "13.835");
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(1.5e-7), "1.50000e-7");
    }

    #[test]
    fn json_report_roundtrips() {
        let r = report();
        let mut buf = Vec::new();
        write_report(&Emit::Report(&r, None), Format::Json, &mut buf).unwrap();
        let back: EvalReport = serde_json::from_slice(&buf).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let r = report();
        let cands: Vec<Candidate> = (0..3)
            .map(|_| Candidate {
                policy: crate::gate::Policy::new(Mode::EeHi, vec![0.69]),
                report: r.clone(),
            })
            .collect();
        let mut buf = Vec::new();
        write_report(&Emit::Candidates(&cands, None), Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "mode,thresholds,accuracy,latency_ms,energy_mj,eta_off,feasible");
        assert_eq!(lines[1], "EE_HI,0.69,0.956789,3.82,12.55,0.2157,");

        let mut buf = Vec::new();
        write_report(&Emit::Candidates(&[], None), Format::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn threshold_cells() {
        assert_eq!(fmt_thresholds(&[0.81, 0.84]), "0.81;0.84");
        assert_eq!(parse_thresholds("0.81;0.84").unwrap(), vec![0.81, 0.84]);
        assert_eq!(parse_thresholds("0.5,1.5").unwrap(), vec![0.5, 1.5]);
        assert!(parse_thresholds("").unwrap().is_empty());
        assert!(parse_thresholds("x").is_err());
    }
}
