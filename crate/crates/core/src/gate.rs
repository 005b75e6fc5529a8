//! Routing of samples through the exit cascade.
//!
//! Exit `n < E-1` accepts when its top probability is `>= thresholds[n]`.
//! Samples that reach the final exit are handled by the mode's terminal rule:
//! accept locally, always offload, or ask the LR decider.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decision::{Decision, LrModel};
use crate::error::{Error, Result};
use crate::trace::{SampleRecord, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    OnDevice,
    Remote,
    Ee,
    Hi,
    EeHi,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::OnDevice, Mode::Remote, Mode::Hi, Mode::Ee, Mode::EeHi];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OnDevice => "ON_DEVICE",
            Mode::Remote => "REMOTE",
            Mode::Ee => "EE",
            Mode::Hi => "HI",
            Mode::EeHi => "EE_HI",
        }
    }

    pub fn uses_thresholds(self) -> bool {
        matches!(self, Mode::Ee | Mode::EeHi)
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Mode::Hi | Mode::EeHi)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    /// Accepts both `EE_HI` and `ee-hi` spellings.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ON_DEVICE" => Ok(Mode::OnDevice),
            "REMOTE" => Ok(Mode::Remote),
            "EE" => Ok(Mode::Ee),
            "HI" => Ok(Mode::Hi),
            "EE_HI" => Ok(Mode::EeHi),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub mode: Mode,
    /// One threshold per early branch. A value above 1 disables the branch.
    #[serde(default)]
    pub thresholds: Vec<f64>,
}

impl Policy {
    pub fn new(mode: Mode, thresholds: Vec<f64>) -> Self {
        Policy { mode, thresholds }
    }

    pub fn simple(mode: Mode) -> Self {
        Policy {
            mode,
            thresholds: Vec::new(),
        }
    }

    pub fn validate(&self, num_exits: usize) -> Result<()> {
        if self.mode.uses_thresholds() {
            if self.thresholds.len() != num_exits - 1 {
                return Err(Error::Dimension(format!(
                    "{} needs {} thresholds for {num_exits} exits, got {}",
                    self.mode,
                    num_exits - 1,
                    self.thresholds.len()
                )));
            }
            if let Some(t) = self.thresholds.iter().find(|t| t.is_nan() || **t < 0.0) {
                return Err(Error::Config(format!("threshold {t} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Thresholds actually applied; empty for modes without early exits.
    fn active_thresholds(&self) -> &[f64] {
        if self.mode.uses_thresholds() {
            &self.thresholds
        } else {
            &[]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Routing {
    pub exit_taken: usize,
    pub offloaded: bool,
    pub final_label: u32,
    pub lr_invoked: bool,
    /// The decider's verdict when it ran.
    pub decision: Option<Decision>,
}

fn check_model(policy: &Policy, model: Option<&LrModel>) -> Result<()> {
    if policy.mode.needs_model() && model.is_none() {
        return Err(Error::MissingModel(policy.mode.as_str()));
    }
    Ok(())
}

/// Routes one sample. Thresholds are assumed already validated against the exit count.
pub fn route(record: &SampleRecord, policy: &Policy, model: Option<&LrModel>) -> Result<Routing> {
    check_model(policy, model)?;
    Ok(route_unchecked(record, policy, model))
}

fn route_unchecked(record: &SampleRecord, policy: &Policy, model: Option<&LrModel>) -> Routing {
    let last = record.exit_softmax.len() - 1;
    for (n, &theta) in policy.active_thresholds().iter().enumerate().take(last) {
        let (label, confidence) = record.device_prediction(n);
        if confidence >= theta {
            return Routing {
                exit_taken: n,
                offloaded: false,
                final_label: label,
                lr_invoked: false,
                decision: None,
            };
        }
    }

    let (local_label, _) = record.device_prediction(last);
    let local = Routing {
        exit_taken: last,
        offloaded: false,
        final_label: local_label,
        lr_invoked: false,
        decision: None,
    };
    match policy.mode {
        Mode::OnDevice | Mode::Ee => local,
        Mode::Remote => Routing {
            offloaded: true,
            final_label: record.server_label,
            ..local
        },
        Mode::Hi | Mode::EeHi => {
            let model = model.expect("checked by caller");
            let (decision, _) = model.predict(record.final_softmax());
            let offloaded = decision == Decision::Offload;
            Routing {
                offloaded,
                final_label: if offloaded { record.server_label } else { local_label },
                lr_invoked: true,
                decision: Some(decision),
                ..local
            }
        }
    }
}

/// Routes every sample of the trace, in record order.
pub fn route_all(trace: &Trace, policy: &Policy, model: Option<&LrModel>) -> Result<Vec<Routing>> {
    policy.validate(trace.num_exits)?;
    check_model(policy, model)?;
    Ok(trace
        .records
        .par_iter()
        .map(|r| route_unchecked(r, policy, model))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitFractions {
    pub eta_exit: Vec<f64>,
    pub eta_off: f64,
    /// Raw counts behind the fractions.
    pub exit_counts: Vec<usize>,
    pub offloaded: usize,
}

impl ExitFractions {
    pub fn from_routings(routings: &[Routing], num_exits: usize) -> Result<Self> {
        if routings.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut exit_counts = vec![0usize; num_exits];
        let mut offloaded = 0;
        for r in routings {
            exit_counts[r.exit_taken] += 1;
            offloaded += usize::from(r.offloaded);
        }
        let n = routings.len() as f64;
        Ok(ExitFractions {
            eta_exit: exit_counts.iter().map(|&c| c as f64 / n).collect(),
            eta_off: offloaded as f64 / n,
            exit_counts,
            offloaded,
        })
    }
}

pub fn exit_fractions(trace: &Trace, policy: &Policy, model: Option<&LrModel>) -> Result<ExitFractions> {
    if trace.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let routings = route_all(trace, policy, model)?;
    ExitFractions::from_routings(&routings, trace.num_exits)
}
