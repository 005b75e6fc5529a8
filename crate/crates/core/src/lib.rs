//! Hierarchical-inference offload policies for edge devices.
//!
//! An on-device classifier, optionally with early-exit branches, answers each
//! sample locally; a logistic-regression decider on the final exit's top-2
//! probabilities chooses which samples to offload to a stronger remote model.
//! This crate evaluates such policies on recorded inference traces with an
//! analytic accuracy/latency/energy model, searches exit thresholds under QoS
//! constraints, and emulates the device-to-server offload path over TCP.
//!
//! | module | role |
//! |---|---|
//! | [`trace`] | trace schema, JSONL I/O, synthetic generator |
//! | [`decision`] | LR offload decider |
//! | [`gate`] | exit cascade routing under a [`Policy`](gate::Policy) |
//! | [`cost`] | accuracy and average latency/energy of a policy |
//! | [`optimizer`] | threshold grid search, Pareto fronts, strategy comparison |
//! | [`wire`] | length-prefixed TCP offload server, client and benchmark |
//! | [`report`] | JSON/CSV output |
//! | [`cli`] | the `hiedge` command line |

pub mod cli;
pub mod cost;
pub mod decision;
pub mod error;
pub mod gate;
pub mod optimizer;
pub mod report;
pub mod trace;
pub mod wire;

pub use cost::{evaluate, DeviceProfile, EvalReport};
pub use decision::{Decision, LrModel, LrTrainConfig};
pub use error::{Error, Result};
pub use gate::{Mode, Policy, Routing};
pub use optimizer::{GridSpec, Objective, QosSpec};
pub use trace::{SampleRecord, SynthConfig, Trace};
