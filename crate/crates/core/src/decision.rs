//! Binary logistic-regression offload decider.
//!
//! The model reads the two largest probabilities of the final exit and
//! predicts whether the on-device answer is correct. ACCEPT keeps the local
//! answer; OFFLOAD sends the sample to the remote model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Offload = 0,
    Accept = 1,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub learning_rate: f64,
    pub epochs_run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    /// Coefficients on (top1, top2).
    #[serde(rename = "w")]
    pub weights: [f64; 2],
    #[serde(rename = "b")]
    pub bias: f64,
    #[serde(rename = "threshold")]
    pub decision_threshold: f64,
    #[serde(skip)]
    pub training: Option<TrainingMeta>,
}

impl LrModel {
    pub fn new(weights: [f64; 2], bias: f64, decision_threshold: f64) -> Result<Self> {
        let model = LrModel {
            weights,
            bias,
            decision_threshold,
            training: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// A model that accepts every sample (sigmoid(50) rounds to 1).
    pub fn accept_all() -> Self {
        LrModel {
            weights: [0.0, 0.0],
            bias: 50.0,
            decision_threshold: 0.5,
            training: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.params().iter().all(|w| w.is_finite()) {
            return Err(Error::Config("LR weights must be finite".into()));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::Config(format!(
                "decision threshold {} not in (0, 1)",
                self.decision_threshold
            )));
        }
        Ok(())
    }

    fn params(&self) -> [f64; 3] {
        [self.weights[0], self.weights[1], self.bias]
    }

    /// Decision and accept-probability for one softmax vector.
    pub fn predict(&self, softmax: &[f64]) -> (Decision, f64) {
        let (top1, top2) = top_two(softmax);
        let p = sigmoid(self.weights[0] * top1 + self.weights[1] * top2 + self.bias);
        let decision = if p >= self.decision_threshold {
            Decision::Accept
        } else {
            Decision::Offload
        };
        (decision, p)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: LrModel = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrTrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the loss improves by less than this between epochs.
    pub tolerance: f64,
    pub l2: f64,
    pub class_weighting: bool,
    /// Seeds a random initialization when `random_init` is set; unused otherwise.
    pub seed: u64,
    pub random_init: bool,
    pub decision_threshold: f64,
}

impl Default for LrTrainConfig {
    fn default() -> Self {
        LrTrainConfig {
            learning_rate: 0.1,
            max_epochs: 1000,
            tolerance: 1e-8,
            l2: 0.0,
            class_weighting: false,
            seed: 0,
            random_init: false,
            decision_threshold: 0.5,
        }
    }
}

impl LrTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max epochs must be >= 1".into()));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::Config("L2 penalty must be >= 0".into()));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::Config("decision threshold must be in (0, 1)".into()));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The two largest entries, largest first.
fn top_two(softmax: &[f64]) -> (f64, f64) {
    let mut top1 = f64::NEG_INFINITY;
    let mut top2 = f64::NEG_INFINITY;
    for &p in softmax {
        if p > top1 {
            top2 = top1;
            top1 = p;
        } else if p > top2 {
            top2 = p;
        }
    }
    (top1, top2)
}

pub fn extract_features(softmax: &[f64]) -> Result<(f64, f64)> {
    if softmax.len() < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 probabilities, got {}",
            softmax.len()
        )));
    }
    Ok(top_two(softmax))
}

/// 1 where the final exit's argmax matches the true label.
pub fn lr_labels(trace: &Trace) -> Vec<u8> {
    let last = trace.num_exits - 1;
    trace
        .records
        .iter()
        .map(|r| u8::from(r.device_correct(last)))
        .collect()
}

fn final_features(trace: &Trace) -> Result<Vec<(f64, f64)>> {
    trace
        .records
        .iter()
        .map(|r| extract_features(r.final_softmax()))
        .collect()
}

/// Per-sample weights; all ones unless class weighting is on.
fn sample_weights(labels: &[u8], balanced: bool) -> Vec<f64> {
    if !balanced {
        return vec![1.0; labels.len()];
    }
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = n - pos;
    labels
        .iter()
        .map(|&y| if y == 1 { n / (2.0 * pos) } else { n / (2.0 * neg) })
        .collect()
}

/// Log of sigmoid(z) and of 1 - sigmoid(z), stable for large |z|.
fn log_sigmoids(z: f64) -> (f64, f64) {
    let softplus_neg = if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    };
    (-softplus_neg, -z - softplus_neg)
}

fn weighted_loss_and_grad(
    params: &[f64; 3],
    features: &[(f64, f64)],
    labels: &[u8],
    weights: &[f64],
    l2: f64,
) -> (f64, [f64; 3]) {
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    for ((&(x1, x2), &y), &w) in features.iter().zip(labels).zip(weights) {
        let z = params[0] * x1 + params[1] * x2 + params[2];
        let (log_p, log_q) = log_sigmoids(z);
        let y = f64::from(y);
        loss -= w * (y * log_p + (1.0 - y) * log_q);
        let err = w * (sigmoid(z) - y);
        grad[0] += err * x1;
        grad[1] += err * x2;
        grad[2] += err;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    loss += 0.5 * l2 * (params[0] * params[0] + params[1] * params[1]);
    grad[0] += l2 * params[0];
    grad[1] += l2 * params[1];
    (loss, grad)
}

/// Mean binary cross-entropy plus `(l2 / 2) * |w|^2` (bias excluded), and its gradient
/// with respect to `(w1, w2, b)`.
pub fn loss_and_grad(
    params: &[f64; 3],
    features: &[(f64, f64)],
    labels: &[u8],
    l2: f64,
) -> Result<(f64, [f64; 3])> {
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let ones = vec![1.0; features.len()];
    Ok(weighted_loss_and_grad(params, features, labels, &ones, l2))
}

/// Full-batch gradient descent on the final-exit top-2 features.
pub fn train(trace: &Trace, cfg: &LrTrainConfig) -> Result<LrModel> {
    cfg.validate()?;
    let labels = lr_labels(trace);
    let features = final_features(trace)?;
    train_on(&features, &labels, cfg)
}

pub fn train_on(features: &[(f64, f64)], labels: &[u8], cfg: &LrTrainConfig) -> Result<LrModel> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(Error::Dimension("features and labels differ in length".into()));
    }
    if let Some(&first) = labels.first() {
        if labels.iter().all(|&y| y == first) {
            return Err(Error::DegenerateTraining { label: first });
        }
    }
    let weights = sample_weights(labels, cfg.class_weighting);

    let mut params = if cfg.random_init {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        [0; 3].map(|_| rng.random_range(-0.5..0.5))
    } else {
        [0.0; 3]
    };

    let (initial_loss, mut grad) = weighted_loss_and_grad(&params, features, labels, &weights, cfg.l2);
    let mut loss = initial_loss;
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        let candidate = [
            params[0] - cfg.learning_rate * grad[0],
            params[1] - cfg.learning_rate * grad[1],
            params[2] - cfg.learning_rate * grad[2],
        ];
        let (next_loss, next_grad) =
            weighted_loss_and_grad(&candidate, features, labels, &weights, cfg.l2);
        epochs += 1;
        if next_loss.is_nan() || next_loss > loss {
            // overshoot; keep the best iterate
            break;
        }
        let delta = loss - next_loss;
        params = candidate;
        loss = next_loss;
        grad = next_grad;
        if delta < cfg.tolerance {
            break;
        }
    }

    Ok(LrModel {
        weights: [params[0], params[1]],
        bias: params[2],
        decision_threshold: cfg.decision_threshold,
        training: Some(TrainingMeta {
            learning_rate: cfg.learning_rate,
            epochs_run: epochs,
            initial_loss,
            final_loss: loss,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    /// Records one decision. Positive = ACCEPT; "actual positive" = the local answer is correct.
    pub fn record(&mut self, decision: Decision, device_correct: bool) {
        match (decision, device_correct) {
            (Decision::Accept, true) => self.tp += 1,
            (Decision::Accept, false) => self.fp += 1,
            (Decision::Offload, true) => self.fn_ += 1,
            (Decision::Offload, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

impl From<Confusion> for Score {
    fn from(confusion: Confusion) -> Self {
        Score {
            precision: confusion.precision(),
            recall: confusion.recall(),
            f1: confusion.f1(),
            confusion,
        }
    }
}

/// Scores the decider on every sample's final exit.
pub fn score(model: &LrModel, trace: &Trace) -> Score {
    let last = trace.num_exits - 1;
    let mut confusion = Confusion::default();
    for r in &trace.records {
        let (decision, _) = model.predict(r.final_softmax());
        confusion.record(decision, r.device_correct(last));
    }
    confusion.into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn features_examples() {
        assert_eq!(extract_features(&[0.7, 0.2, 0.1]).unwrap(), (0.7, 0.2));
        assert_eq!(extract_features(&[0.25; 4]).unwrap(), (0.25, 0.25));
        assert_eq!(extract_features(&[0.1, 0.83, 0.07]).unwrap(), (0.83, 0.1));
        assert!(extract_features(&[1.0]).is_err());
    }

    #[test]
    fn zero_weights_loss_is_ln2() {
        let (loss, _) = loss_and_grad(&[0.0; 3], &[(0.9, 0.05)], &[1], 0.0).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn balanced_labels_zero_bias_gradient() {
        let feats = [(0.9, 0.1), (0.4, 0.3), (0.7, 0.2), (0.5, 0.45)];
        let (_, g) = loss_and_grad(&[0.0; 3], &feats, &[1, 0, 0, 1], 0.0).unwrap();
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn loss_rejects_bad_shapes() {
        assert!(matches!(loss_and_grad(&[0.0; 3], &[], &[], 0.0), Err(Error::EmptyDataset)));
        assert!(loss_and_grad(&[0.0; 3], &[(0.5, 0.5)], &[1, 0], 0.0).is_err());
    }

    #[test]
    fn predict_examples() {
        let zero = LrModel::new([0.0, 0.0], 0.0, 0.5).unwrap();
        let (d, p) = zero.predict(&[0.6, 0.4]);
        assert_eq!((d, p), (Decision::Accept, 0.5));

        let m = LrModel::new([10.0, 0.0], -5.0, 0.5).unwrap();
        let (d, p) = m.predict(&[0.9, 0.1]);
        assert_eq!(d, Decision::Accept);
        assert!((p - 0.982_013_790_037_908_5).abs() < 1e-12);

        let m = LrModel::new([10.0, 0.0], -9.0, 0.5).unwrap();
        let (d, p) = m.predict(&[0.6, 0.4]);
        assert_eq!(d, Decision::Offload);
        assert!((p - 0.047_425_873_177_566_78).abs() < 1e-12);
    }

    #[test]
    fn model_json_shape() {
        let m = LrModel::new([1.5, -2.0], 0.25, 0.5).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"w":[1.5,-2.0],"b":0.25,"threshold":0.5}"#);
        let back: LrModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(LrModel::new([0.0, 0.0], 0.0, 1.0).is_err());
        assert!(LrModel::new([f64::NAN, 0.0], 0.0, 0.5).is_err());
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..50 {
            feats.push((0.99, 0.01));
            labels.push(1);
            feats.push((0.40, 0.35));
            labels.push(0);
        }
        let model = train_on(&feats, &labels, &LrTrainConfig::default()).unwrap();
        let meta = model.training.as_ref().unwrap();
        assert!(meta.final_loss <= meta.initial_loss);
        let softmax = |&(a, b): &(f64, f64)| vec![a, b, 1.0 - a - b];
        for (f, &y) in feats.iter().zip(&labels) {
            let (d, _) = model.predict(&softmax(f));
            assert_eq!(d as u8, y);
        }
    }

    #[test]
    fn degenerate_labels_rejected() {
        let err = train_on(&[(0.9, 0.1), (0.8, 0.1)], &[1, 1], &LrTrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateTraining { label: 1 }));
    }

    #[test]
    fn training_is_deterministic() {
        let feats = [(0.9, 0.05), (0.5, 0.4), (0.8, 0.1), (0.45, 0.3), (0.6, 0.35)];
        let labels = [1, 0, 1, 0, 1];
        let cfg = LrTrainConfig {
            random_init: true,
            seed: 11,
            ..Default::default()
        };
        let a = train_on(&feats, &labels, &cfg).unwrap();
        let b = train_on(&feats, &labels, &cfg).unwrap();
        assert_eq!(a.weights.map(f64::to_bits), b.weights.map(f64::to_bits));
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn confusion_scores() {
        let c = Confusion { tp: 4, fp: 1, fn_: 2, tn: 3 };
        assert!((c.precision() - 0.8).abs() < 1e-15);
        assert!((c.recall() - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.f1() - 0.727_272_727_272_727_3).abs() < 1e-12);

        let none = Confusion { tp: 0, fp: 0, fn_: 5, tn: 5 };
        assert_eq!((none.recall(), none.f1()), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn probability_moves_with_sign_of_w1(
            w1 in -20.0f64..20.0, w2 in -20.0f64..20.0, b in -5.0f64..5.0,
            top2 in 0.0f64..0.3, lo in 0.3f64..0.6, step in 0.01f64..0.4,
        ) {
            let m = LrModel::new([w1, w2], b, 0.5).unwrap();
            let hi = lo + step;
            let p_lo = sigmoid(w1 * lo + w2 * top2 + b);
            let p_hi = sigmoid(w1 * hi + w2 * top2 + b);
            if w1 > 0.0 { prop_assert!(p_hi >= p_lo); } else { prop_assert!(p_hi <= p_lo); }
            let (_, p) = m.predict(&[hi, top2]);
            prop_assert_eq!(p, p_hi);
        }
    }
}
