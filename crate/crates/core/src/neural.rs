//! A one-hidden-layer perceptron over absolute fingerprint differences.
//!
//! Both layers use the logistic activation; the output is read as the
//! probability that two sessions share a user. Training minimizes mean binary
//! cross-entropy with plain mini-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::corpus::NUM_CATEGORIES;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::pairwise::{fingerprints, ScoredPairs};
use crate::rng::Rng;
use crate::sessions::SessionSet;

pub const INPUT_DIM: usize = NUM_CATEGORIES;
const PROB_CLAMP: f64 = 1e-12;
/// Largest `f64` below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairFeature {
    pub values: [f64; INPUT_DIM],
}

/// `|a - b|` component-wise.
pub fn pair_features(a: &Fingerprint, b: &Fingerprint) -> PairFeature {
    let (pa, pb) = (a.proportions(), b.proportions());
    PairFeature {
        values: std::array::from_fn(|i| (pa[i] - pb[i]).abs()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledPair {
    pub feature: PairFeature,
    pub same_user: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_units: usize,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn zeros(hidden_units: usize) -> Self {
        MlpParams {
            hidden_units,
            w1: vec![vec![0.0; INPUT_DIM]; hidden_units],
            b1: vec![0.0; hidden_units],
            w2: vec![0.0; hidden_units],
            b2: 0.0,
        }
    }

    pub fn check_shape(&self) -> Result<()> {
        let h = self.hidden_units;
        if h == 0
            || self.w1.len() != h
            || self.w1.iter().any(|r| r.len() != INPUT_DIM)
            || self.b1.len() != h
            || self.w2.len() != h
        {
            return Err(Error::invalid(format!(
                "parameter shapes do not match {h} hidden units over {INPUT_DIM} inputs"
            )));
        }
        if !self.values().all(f64::is_finite) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(())
    }

    /// Flattened view in the order W1 (row-major), b1, w2, b2.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .flatten()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
            .copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.w1
            .iter_mut()
            .flatten()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(std::iter::once(&mut self.b2))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: MlpParams = serde_json::from_str(text)?;
        p.check_shape()?;
        Ok(p)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(seed: u64, hidden_units: usize) -> Result<MlpParams> {
    if hidden_units == 0 {
        return Err(Error::invalid("hidden_units must be at least 1"));
    }
    let mut rng = Rng::seeded(seed);
    let r1 = (6.0 / (INPUT_DIM + hidden_units) as f64).sqrt();
    let r2 = (6.0 / (hidden_units + 1) as f64).sqrt();
    let mut p = MlpParams::zeros(hidden_units);
    for w in p.w1.iter_mut().flatten() {
        *w = (2.0 * rng.uniform() - 1.0) * r1;
    }
    for w in &mut p.w2 {
        *w = (2.0 * rng.uniform() - 1.0) * r2;
    }
    Ok(p)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Activations {
    hidden: Vec<f64>,
    output: f64,
}

fn forward_pass(p: &MlpParams, x: &PairFeature) -> Activations {
    let hidden: Vec<f64> =
        p.w1.iter()
            .zip(&p.b1)
            .map(|(row, b)| sigmoid(row.iter().zip(&x.values).map(|(w, v)| w * v).sum::<f64>() + b))
            .collect();
    let z = hidden.iter().zip(&p.w2).map(|(h, w)| h * w).sum::<f64>() + p.b2;
    Activations {
        hidden,
        output: sigmoid(z),
    }
}

/// Probability that the pair is same-user, strictly inside `(0, 1)`.
pub fn forward(p: &MlpParams, x: &PairFeature) -> Result<f64> {
    p.check_shape()?;
    Ok(forward_unchecked(p, x))
}

fn forward_unchecked(p: &MlpParams, x: &PairFeature) -> f64 {
    forward_pass(p, x)
        .output
        .clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// Mean binary cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad(p: &MlpParams, batch: &[LabeledPair]) -> Result<(f64, MlpParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    p.check_shape()?;
    let mut grad = MlpParams::zeros(p.hidden_units);
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let act = forward_pass(p, &ex.feature);
        let y = if ex.same_user { 1.0 } else { 0.0 };
        let q = act.output.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        // d(BCE)/dz for a logistic output; zero where the clamp is active.
        let clamped = act.output != q;
        let dz = if clamped {
            0.0
        } else {
            (act.output - y) * scale
        };
        grad.b2 += dz;
        for h in 0..p.hidden_units {
            let a = act.hidden[h];
            grad.w2[h] += dz * a;
            let dh = dz * p.w2[h] * a * (1.0 - a);
            grad.b1[h] += dh;
            for (g, v) in grad.w1[h].iter_mut().zip(&ex.feature.values) {
                *g += dh * v;
            }
        }
    }
    Ok((loss * scale, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_units: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            seed: 0,
            hidden_units: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite())
            || self.epochs == 0
            || self.batch_size == 0
            || self.hidden_units == 0
        {
            return Err(Error::invalid("training parameters must be positive"));
        }
        Ok(())
    }
}

/// Mean loss over the whole set, for monitoring.
pub fn dataset_loss(p: &MlpParams, data: &[LabeledPair]) -> Result<f64> {
    Ok(loss_and_grad(p, data)?.0)
}

pub fn train(data: &[LabeledPair], config: &TrainConfig) -> Result<MlpParams> {
    Ok(train_with_history(data, config)?.0)
}

/// Trains and also returns the full-dataset loss before training and after each epoch.
pub fn train_with_history(
    data: &[LabeledPair],
    config: &TrainConfig,
) -> Result<(MlpParams, Vec<f64>)> {
    config.validate()?;
    let positives = data.iter().filter(|e| e.same_user).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::invalid("training data must contain both labels"));
    }
    let mut params = init_params(config.seed, config.hidden_units)?;
    let mut shuffle_rng = Rng::stream(config.seed, &[1]);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = vec![dataset_loss(&params, data)?];
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (_, grad) = loss_and_grad(&params, &batch)?;
            for (w, g) in params.values_mut().zip(grad.values()) {
                *w -= config.learning_rate * g;
            }
        }
        history.push(dataset_loss(&params, data)?);
    }
    Ok((params, history))
}

/// All same-user pairs plus as many distinct different-user pairs drawn
/// uniformly (all of them if there are fewer).
pub fn balanced_training_pairs(set: &SessionSet, seed: u64) -> Result<Vec<LabeledPair>> {
    let fps = fingerprints(set)?;
    let n = fps.len();
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if set.sessions[a].user_id == set.sessions[b].user_id {
                positives.push((a, b));
            } else {
                negatives.push((a, b));
            }
        }
    }
    let mut rng = Rng::seeded(seed);
    let take = positives.len().min(negatives.len());
    let chosen = rng.sample_indices(negatives.len(), take);
    let label = |(a, b): (usize, usize), same_user| LabeledPair {
        feature: pair_features(&fps[a], &fps[b]),
        same_user,
    };
    Ok(positives
        .into_iter()
        .map(|p| label(p, true))
        .chain(chosen.into_iter().map(|i| label(negatives[i], false)))
        .collect())
}

pub fn score_all_pairs_nn(model: &MlpParams, set: &SessionSet) -> Result<ScoredPairs> {
    model.check_shape()?;
    let fps = fingerprints(set)?;
    if fps.len() < 2 {
        return Err(Error::invalid("scoring needs at least 2 sessions"));
    }
    Ok(ScoredPairs::from_fn("neural", fps.len(), |a, b| {
        forward_unchecked(model, &pair_features(&fps[a], &fps[b]))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Category;

    fn fp(pages: &[i64]) -> Fingerprint {
        let p: Vec<Category> = pages
            .iter()
            .map(|&v| Category::from_one_based(v).unwrap())
            .collect();
        Fingerprint::from_pages(&p).unwrap()
    }

    #[test]
    fn features() {
        let a = fp(&[1]);
        let b = fp(&[2]);
        assert!(pair_features(&a, &a).values.iter().all(|&v| v == 0.0));
        let f = pair_features(&a, &b);
        assert_eq!(&f.values[..3], &[1.0, 1.0, 0.0]);
        assert_eq!(f, pair_features(&b, &a));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let p = init_params(4, 100).unwrap();
        assert_eq!(p, init_params(4, 100).unwrap());
        let r1 = (6.0f64 / 117.0).sqrt();
        let r2 = (6.0f64 / 101.0).sqrt();
        assert!(p.w1.iter().flatten().all(|w| w.abs() <= r1));
        assert!(p.w2.iter().all(|w| w.abs() <= r2));
        assert!(p.b1.iter().all(|&b| b == 0.0) && p.b2 == 0.0);
        assert!(init_params(4, 0).is_err());
    }

    #[test]
    fn zero_params_give_one_half() {
        let p = MlpParams::zeros(3);
        assert_eq!(
            forward(&p, &pair_features(&fp(&[1]), &fp(&[2]))).unwrap(),
            0.5
        );
    }

    #[test]
    fn hand_built_forward() {
        let mut p = MlpParams::zeros(2);
        p.w1[0][0] = 1.0;
        p.w1[0][1] = -2.0;
        p.w1[1][2] = 0.5;
        p.b1 = vec![0.1, -0.3];
        p.w2 = vec![1.5, -1.0];
        p.b2 = 0.2;
        let mut x = PairFeature {
            values: [0.0; INPUT_DIM],
        };
        x.values[..3].copy_from_slice(&[0.4, 0.2, 0.6]);
        // Desk evaluation:
        // h0 = s(0.4 - 0.4 + 0.1) = s(0.1), h1 = s(0.3 - 0.3) = s(0) = 0.5
        // out = s(1.5 * s(0.1) - 0.5 + 0.2)
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let expected = s(1.5 * s(0.1) - 0.5 + 0.2);
        assert!((forward(&p, &x).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = MlpParams::zeros(2);
        p.w2.pop();
        let x = PairFeature {
            values: [0.0; INPUT_DIM],
        };
        assert!(forward(&p, &x).is_err());
    }

    #[test]
    fn saturated_output_stays_open() {
        let mut p = MlpParams::zeros(1);
        p.b2 = 1e4;
        let x = PairFeature {
            values: [0.0; INPUT_DIM],
        };
        let y = forward(&p, &x).unwrap();
        assert!(y < 1.0 && y > 0.0);
        p.b2 = -1e4;
        let y = forward(&p, &x).unwrap();
        assert!(y < 1.0 && y > 0.0);
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        let mut p = MlpParams::zeros(1);
        p.b2 = 40.0;
        let batch = [LabeledPair {
            feature: PairFeature {
                values: [0.0; INPUT_DIM],
            },
            same_user: true,
        }];
        let (loss, grad) = loss_and_grad(&p, &batch).unwrap();
        assert!(loss <= 1e-6);
        assert!(grad.values().all(|g| g.is_finite()));
    }

    #[test]
    fn duplicated_batch_is_invariant() {
        let p = init_params(2, 5).unwrap();
        let mut rng = Rng::seeded(3);
        let batch: Vec<LabeledPair> = (0..6)
            .map(|i| LabeledPair {
                feature: PairFeature {
                    values: std::array::from_fn(|_| rng.uniform()),
                },
                same_user: i % 2 == 0,
            })
            .collect();
        let doubled: Vec<LabeledPair> = batch.iter().chain(&batch).copied().collect();
        let (l1, g1) = loss_and_grad(&p, &batch).unwrap();
        let (l2, g2) = loss_and_grad(&p, &doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.values().zip(g2.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(loss_and_grad(&p, &[]).is_err());
    }

    #[test]
    fn single_class_training_is_rejected() {
        let data = vec![
            LabeledPair {
                feature: PairFeature {
                    values: [0.0; INPUT_DIM]
                },
                same_user: true
            };
            4
        ];
        assert!(train(&data, &TrainConfig::default()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let p = init_params(6, 4).unwrap();
        let text = p.to_json().unwrap();
        assert!(text.contains("\"W1\""));
        assert_eq!(MlpParams::from_json(&text).unwrap(), p);
    }
}
