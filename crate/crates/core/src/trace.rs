//! Inference traces: per-sample softmax outputs at every exit of the on-device
//! model, the ground-truth label and the remote model's prediction.
//!
//! A trace carries semantic outcomes only. Latency and energy live in
//! [`DeviceProfile`](crate::cost::DeviceProfile).
//!
//! On disk a trace is JSON Lines: a header object followed by one record per line.
//!
//! ```text
//! {"classes":3,"exits":2,"meta":{"dataset":"toy"}}
//! {"id":0,"label":1,"exits":[[0.2,0.5,0.3],[0.1,0.8,0.1]],"server_label":1}
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Location, Result};

/// Allowed deviation of a softmax vector's sum from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: u64,
    pub true_label: u32,
    /// One probability vector per exit, shallow to deep. The last is the final layer.
    pub exit_softmax: Vec<Vec<f64>>,
    pub server_label: u32,
}

impl SampleRecord {
    /// Label and confidence the on-device model reports at `exit`.
    ///
    /// # Panics
    ///
    /// Panics if `exit` is out of range.
    pub fn device_prediction(&self, exit: usize) -> (u32, f64) {
        argmax(&self.exit_softmax[exit])
    }

    pub fn final_softmax(&self) -> &[f64] {
        self.exit_softmax.last().expect("record has at least one exit")
    }

    pub fn device_correct(&self, exit: usize) -> bool {
        self.device_prediction(exit).0 == self.true_label
    }

    pub fn server_correct(&self) -> bool {
        self.server_label == self.true_label
    }
}

/// Index and value of the largest entry; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> (u32, f64) {
    let mut best = 0usize;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    (best as u32, probs[best])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub num_classes: usize,
    pub num_exits: usize,
    pub records: Vec<SampleRecord>,
    pub meta: Map<String, Value>,
}

impl Trace {
    /// Builds a trace and checks every invariant, reporting the first violation.
    pub fn new(
        num_classes: usize,
        num_exits: usize,
        records: Vec<SampleRecord>,
        meta: Map<String, Value>,
    ) -> Result<Self> {
        let trace = Trace {
            num_classes,
            num_exits,
            records,
            meta,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        check_header(self.num_classes, self.num_exits, None)?;
        let mut seen = HashSet::with_capacity(self.records.len());
        for record in &self.records {
            let at = Location {
                line: None,
                sample_id: Some(record.sample_id),
            };
            validate_record(record, self.num_classes, self.num_exits, &at)?;
            if !seen.insert(record.sample_id) {
                return Err(Error::trace(at, "id", "duplicate sample id"));
            }
        }
        Ok(())
    }

    /// Top-1 accuracy of the on-device model at `exit`.
    pub fn exit_accuracy(&self, exit: usize) -> f64 {
        let hits = self.records.iter().filter(|r| r.device_correct(exit)).count();
        hits as f64 / self.records.len() as f64
    }

    pub fn server_accuracy(&self) -> f64 {
        let hits = self.records.iter().filter(|r| r.server_correct()).count();
        hits as f64 / self.records.len() as f64
    }

    /// Splits into the first `at` records and the rest, both keeping the header.
    pub fn split_at(&self, at: usize) -> (Trace, Trace) {
        let at = at.min(self.records.len());
        let (head, tail) = self.records.split_at(at);
        let part = |records: &[SampleRecord]| Trace {
            num_classes: self.num_classes,
            num_exits: self.num_exits,
            records: records.to_vec(),
            meta: self.meta.clone(),
        };
        (part(head), part(tail))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = json!({
            "classes": self.num_classes,
            "exits": self.num_exits,
            "meta": Value::Object(self.meta.clone()),
        });
        writeln!(out, "{header}")?;
        for r in &self.records {
            let line = json!({
                "id": r.sample_id,
                "label": r.true_label,
                "exits": r.exit_softmax,
                "server_label": r.server_label,
            });
            writeln!(out, "{line}")?;
        }
        out.flush()
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        parse(input, None)
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse(BufReader::new(file), Some(path))
}

pub fn save_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    trace
        .write_jsonl(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

fn parse<R: BufRead>(input: R, path: Option<&Path>) -> Result<Trace> {
    let mut header: Option<(usize, usize, Map<String, Value>)> = None;
    let mut records = Vec::new();
    let mut seen = HashSet::new();

    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| match path {
            Some(p) => Error::io(p, e),
            None => Error::io("<input>", e),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let at = Location {
            line: Some(line_no),
            sample_id: None,
        };
        let value: Value = serde_json::from_str(trimmed)
            .map_err(|e| Error::trace(at.clone(), "<line>", format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::trace(at.clone(), "<line>", "expected a JSON object"))?;

        let Some((classes, exits, _)) = &header else {
            header = Some(parse_header(obj, &at)?);
            continue;
        };
        let record = parse_record(obj, *classes, *exits, line_no)?;
        if !seen.insert(record.sample_id) {
            let at = Location {
                line: Some(line_no),
                sample_id: Some(record.sample_id),
            };
            return Err(Error::trace(at, "id", "duplicate sample id"));
        }
        records.push(record);
    }

    let (num_classes, num_exits, meta) = header.ok_or_else(|| {
        Error::trace(Location::default(), "classes", "missing header line")
    })?;
    if records.is_empty() {
        return Err(Error::trace(Location::default(), "<records>", "trace has no records"));
    }
    Ok(Trace {
        num_classes,
        num_exits,
        records,
        meta,
    })
}

fn parse_header(obj: &Map<String, Value>, at: &Location) -> Result<(usize, usize, Map<String, Value>)> {
    let classes = get_u64(obj, "classes", at)? as usize;
    let exits = get_u64(obj, "exits", at)? as usize;
    check_header(classes, exits, at.line)?;
    let meta = match obj.get("meta") {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(Error::trace(at.clone(), "meta", "must be an object")),
    };
    Ok((classes, exits, meta))
}

fn check_header(classes: usize, exits: usize, line: Option<usize>) -> Result<()> {
    let at = Location {
        line,
        sample_id: None,
    };
    if classes == 0 {
        return Err(Error::trace(at, "classes", "must be positive"));
    }
    if exits == 0 {
        return Err(Error::trace(at, "exits", "must be positive"));
    }
    Ok(())
}

fn get_u64(obj: &Map<String, Value>, field: &'static str, at: &Location) -> Result<u64> {
    let v = obj
        .get(field)
        .ok_or_else(|| Error::trace(at.clone(), field, "missing"))?;
    v.as_u64()
        .ok_or_else(|| Error::trace(at.clone(), field, "must be a non-negative integer"))
}

fn parse_record(
    obj: &Map<String, Value>,
    classes: usize,
    exits: usize,
    line: usize,
) -> Result<SampleRecord> {
    let mut at = Location {
        line: Some(line),
        sample_id: None,
    };
    let sample_id = get_u64(obj, "id", &at)?;
    at.sample_id = Some(sample_id);

    let label = get_u64(obj, "label", &at)?;
    let server_label = get_u64(obj, "server_label", &at)?;
    let raw_exits = obj
        .get("exits")
        .ok_or_else(|| Error::trace(at.clone(), "exits", "missing"))?
        .as_array()
        .ok_or_else(|| Error::trace(at.clone(), "exits", "must be an array of arrays"))?;

    let mut exit_softmax = Vec::with_capacity(raw_exits.len());
    for (k, raw) in raw_exits.iter().enumerate() {
        let arr = raw.as_array().ok_or_else(|| {
            Error::trace(at.clone(), "exits", format!("exit {k} must be an array"))
        })?;
        let probs = arr
            .iter()
            .map(|p| {
                p.as_f64().ok_or_else(|| {
                    Error::trace(at.clone(), "exits", format!("exit {k} holds a non-number"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        exit_softmax.push(probs);
    }

    let to_u32 = |v: u64, field: &'static str| {
        u32::try_from(v).map_err(|_| Error::trace(at.clone(), field, "out of range"))
    };
    let record = SampleRecord {
        sample_id,
        true_label: to_u32(label, "label")?,
        exit_softmax,
        server_label: to_u32(server_label, "server_label")?,
    };
    validate_record(&record, classes, exits, &at)?;
    Ok(record)
}

fn validate_record(record: &SampleRecord, classes: usize, exits: usize, at: &Location) -> Result<()> {
    if record.true_label as usize >= classes {
        return Err(Error::trace(
            at.clone(),
            "label",
            format!("{} not in [0, {classes})", record.true_label),
        ));
    }
    if record.server_label as usize >= classes {
        return Err(Error::trace(
            at.clone(),
            "server_label",
            format!("{} not in [0, {classes})", record.server_label),
        ));
    }
    if record.exit_softmax.len() != exits {
        return Err(Error::trace(
            at.clone(),
            "exits",
            format!("expected {exits} exits, found {}", record.exit_softmax.len()),
        ));
    }
    for (k, probs) in record.exit_softmax.iter().enumerate() {
        if probs.len() != classes {
            return Err(Error::trace(
                at.clone(),
                "exits",
                format!("exit {k}: expected {classes} probabilities, found {}", probs.len()),
            ));
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::trace(
                at.clone(),
                "exits",
                format!("exit {k}: probability {bad} outside [0, 1]"),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::trace(
                at.clone(),
                "exits",
                format!("exit {k}: probabilities sum to {sum}, expected 1"),
            ));
        }
    }
    Ok(())
}

/// Parameters of the synthetic trace generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_samples: usize,
    pub num_classes: usize,
    /// Target top-1 accuracy per exit, shallow to deep. Its length is the exit count.
    pub exit_accuracy: Vec<f64>,
    pub server_accuracy: f64,
    /// Extra concentration of the peak probability on correctly classified
    /// samples. Zero gives correct and incorrect samples the same confidence law.
    pub separation: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn num_exits(&self) -> usize {
        self.exit_accuracy.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_samples == 0 {
            return bad("num_samples must be positive".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        if self.exit_accuracy.is_empty() {
            return bad("at least one exit accuracy is required".into());
        }
        for &a in self.exit_accuracy.iter().chain([&self.server_accuracy]) {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("accuracy {a} outside [0, 1]"));
            }
        }
        if self.exit_accuracy.windows(2).any(|w| w[1] < w[0]) {
            return bad("exit accuracies must be non-decreasing with depth".into());
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad(format!("separation {} must be finite and >= 0", self.separation));
        }
        Ok(())
    }
}

/// Generates a deterministic synthetic trace.
///
/// Each sample draws one difficulty `u ~ U[0,1)`; exit `k` classifies it
/// correctly iff `u < exit_accuracy[k]`, so correctness is nested across exits.
/// The peak probability is `1/C + (1 - 1/C) * B` with `B ~ Beta(1 + s, 1)` for
/// correct predictions and `B ~ Beta(1, 1 + s)` for wrong ones. The remaining
/// mass is spread over the other classes with a flat Dirichlet draw, rejected
/// until the peak stays the strict maximum.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Trace> {
    cfg.validate()?;
    let classes = cfg.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sharp = Beta::new(1.0 + cfg.separation, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let flat = Beta::new(1.0, 1.0 + cfg.separation).map_err(|e| Error::Config(e.to_string()))?;

    let mut records = Vec::with_capacity(cfg.num_samples);
    for id in 0..cfg.num_samples {
        let label = rng.random_range(0..classes as u32);
        let difficulty: f64 = rng.random();
        let exit_softmax = cfg
            .exit_accuracy
            .iter()
            .map(|&acc| {
                let correct = difficulty < acc;
                let predicted = if correct {
                    label
                } else {
                    wrong_class(&mut rng, label, classes)
                };
                let b = if correct {
                    sharp.sample(&mut rng)
                } else {
                    flat.sample(&mut rng)
                };
                peaked_softmax(&mut rng, classes, predicted as usize, b)
            })
            .collect();
        let server_label = if rng.random::<f64>() < cfg.server_accuracy {
            label
        } else {
            wrong_class(&mut rng, label, classes)
        };
        records.push(SampleRecord {
            sample_id: id as u64,
            true_label: label,
            exit_softmax,
            server_label,
        });
    }

    let mut meta = Map::new();
    meta.insert("source".into(), json!("synthetic"));
    meta.insert("seed".into(), json!(cfg.seed));
    meta.insert("server_accuracy_target".into(), json!(cfg.server_accuracy));
    Trace::new(classes, cfg.num_exits(), records, meta)
}

fn wrong_class<R: Rng>(rng: &mut R, label: u32, classes: usize) -> u32 {
    let k = rng.random_range(0..classes as u32 - 1);
    if k >= label {
        k + 1
    } else {
        k
    }
}

fn peaked_softmax<R: Rng>(rng: &mut R, classes: usize, peak: usize, b: f64) -> Vec<f64> {
    const MAX_REJECTIONS: usize = 32;
    let floor = 1.0 / classes as f64;
    let top = floor + (1.0 - floor) * b.max(1e-9);
    let rest = 1.0 - top;

    let mut probs = vec![0.0; classes];
    let mut accepted = false;
    for _ in 0..MAX_REJECTIONS {
        let draws: Vec<f64> = (0..classes - 1).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        let mut others = draws.iter().map(|d| rest * d / total);
        if draws.iter().all(|d| rest * d / total < top) {
            for (i, p) in probs.iter_mut().enumerate() {
                *p = if i == peak { top } else { others.next().unwrap() };
            }
            accepted = true;
            break;
        }
    }
    if !accepted {
        let share = rest / (classes - 1) as f64;
        for (i, p) in probs.iter_mut().enumerate() {
            *p = if i == peak { top } else { share };
        }
    }
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    probs
}
