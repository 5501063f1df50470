//! Softmax-affine toy learners trained by full-batch gradient descent.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Model;
use crate::simplex::{Dist, LabelSet};
use crate::space::{SampleSpace, SampleSubset};
use crate::{Error, Result};

/// Logits below `max - LOGIT_SPREAD` are clamped so every softmax output
/// stays strictly positive.
const LOGIT_SPREAD: f64 = 700.0;
const MAX_HALVINGS: usize = 60;

/// Explicit feature map applied before the affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    #[default]
    Identity,
    /// Raw features followed by their squares.
    Quadratic,
}

impl FeatureMap {
    pub fn output_dim(self, input_dim: usize) -> usize {
        match self {
            FeatureMap::Identity => input_dim,
            FeatureMap::Quadratic => 2 * input_dim,
        }
    }

    /// Mapped features with a trailing bias coordinate.
    fn apply(self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.output_dim(x.len()) + 1);
        out.extend_from_slice(x);
        if self == FeatureMap::Quadratic {
            out.extend(x.iter().map(|v| v * v));
        }
        out.push(1.0);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSample {
    pub id: String,
    pub features: Vec<f64>,
    pub label: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LabeledBatch {
    pub samples: Vec<LabeledSample>,
}

impl LabeledBatch {
    pub fn new(samples: Vec<LabeledSample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn concat<'a>(batches: impl IntoIterator<Item = &'a LabeledBatch>) -> LabeledBatch {
        LabeledBatch {
            samples: batches
                .into_iter()
                .flat_map(|b| b.samples.iter().cloned())
                .collect(),
        }
    }

    /// Samples satisfying `keep`, in order.
    pub fn filter(&self, mut keep: impl FnMut(&LabeledSample) -> bool) -> LabeledBatch {
        LabeledBatch {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Seeded resample with replacement of the same size.
    pub fn bootstrap(&self, seed: u64) -> LabeledBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.samples.len();
        LabeledBatch {
            samples: (0..n)
                .map(|_| self.samples[rng.random_range(0..n)].clone())
                .collect(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|s| s.id.as_str())
    }
}

/// Feature vectors keyed by sample id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    rows: BTreeMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, features: Vec<f64>) {
        self.rows.insert(id.into(), features);
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn from_batches<'a>(batches: impl IntoIterator<Item = &'a LabeledBatch>) -> Self {
        let mut table = Self::new();
        for b in batches {
            for s in &b.samples {
                table.insert(s.id.clone(), s.features.clone());
            }
        }
        table
    }
}

/// Affine map followed by softmax over a target label set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyLearner {
    feature_dim: usize,
    feature_map: FeatureMap,
    target: LabelSet,
    /// `(mapped_dim + 1) × |target|`, row-major; the last row is the bias.
    weights: Vec<f64>,
    learning_rate: f64,
    seed: u64,
}

impl ToyLearner {
    /// Weights start uniform in `[-0.01, 0.01)` from `seed`.
    pub fn new(
        feature_dim: usize,
        target: LabelSet,
        feature_map: FeatureMap,
        learning_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidConfig("feature_dim must be positive".into()));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        let rows = feature_map.output_dim(feature_dim) + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..rows * target.len())
            .map(|_| rng.random_range(-0.01..0.01))
            .collect();
        Ok(Self {
            feature_dim,
            feature_map,
            target,
            weights,
            learning_rate,
            seed,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature_map(&self) -> FeatureMap {
        self.feature_map
    }

    pub fn target(&self) -> &LabelSet {
        &self.target
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same weights with a new step size.
    pub fn with_learning_rate(mut self, learning_rate: f64) -> Self {
        self.learning_rate = learning_rate;
        self
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::LengthMismatch {
                expected: self.feature_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn probs_mapped(&self, phi: &[f64], weights: &[f64]) -> Vec<f64> {
        let t = self.target.len();
        let mut z = vec![0.0; t];
        for (j, &v) in phi.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let row = &weights[j * t..(j + 1) * t];
            for (zc, &w) in z.iter_mut().zip(row) {
                *zc += v * w;
            }
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for zc in z.iter_mut() {
            *zc = (*zc - max).max(-LOGIT_SPREAD).exp();
            sum += *zc;
        }
        z.iter_mut().for_each(|p| *p /= sum);
        z
    }

    /// Softmax output over the target.
    pub fn predict(&self, x: &[f64]) -> Result<Dist> {
        self.check_features(x)?;
        let p = self.probs_mapped(&self.feature_map.apply(x), &self.weights);
        Dist::new(self.target.clone(), p)
    }

    /// Mean natural-log cross-entropy loss on `data`.
    pub fn loss(&self, data: &LabeledBatch) -> Result<f64> {
        let prepared = self.prepare(data)?;
        Ok(self.loss_prepared(&prepared, &self.weights))
    }

    fn prepare(&self, data: &LabeledBatch) -> Result<Vec<(Vec<f64>, usize)>> {
        if data.is_empty() {
            return Err(Error::NoData);
        }
        data.samples
            .iter()
            .map(|s| {
                self.check_features(&s.features)?;
                let y = self
                    .target
                    .index_of(&s.label)
                    .ok_or_else(|| Error::NotASubset(s.label.clone()))?;
                Ok((self.feature_map.apply(&s.features), y))
            })
            .collect()
    }

    fn loss_prepared(&self, data: &[(Vec<f64>, usize)], weights: &[f64]) -> f64 {
        let total: f64 = data
            .iter()
            .map(|(phi, y)| -self.probs_mapped(phi, weights)[*y].ln())
            .sum();
        total / data.len() as f64
    }

    fn gradient(&self, data: &[(Vec<f64>, usize)]) -> Vec<f64> {
        let t = self.target.len();
        let mut grad = vec![0.0; self.weights.len()];
        for (phi, y) in data {
            let mut g = self.probs_mapped(phi, &self.weights);
            g[*y] -= 1.0;
            for (j, &v) in phi.iter().enumerate() {
                let row = &mut grad[j * t..(j + 1) * t];
                for (r, &gc) in row.iter_mut().zip(&g) {
                    *r += v * gc;
                }
            }
        }
        let n = data.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        grad
    }
}

/// `epochs` full-batch gradient steps on the mean cross-entropy loss.
///
/// A step that would raise the loss is retried with half the step size; the
/// halved rate is kept for later epochs.
pub fn train_learner(learner: &ToyLearner, data: &LabeledBatch, epochs: usize) -> Result<ToyLearner> {
    train_learner_logged(learner, data, epochs).map(|(l, _)| l)
}

/// [`train_learner`] also returning the loss before each epoch and after the last.
pub fn train_learner_logged(
    learner: &ToyLearner,
    data: &LabeledBatch,
    epochs: usize,
) -> Result<(ToyLearner, Vec<f64>)> {
    let prepared = learner.prepare(data)?;
    let mut l = learner.clone();
    let mut loss = l.loss_prepared(&prepared, &l.weights);
    let mut history = vec![loss];
    for _ in 0..epochs {
        let grad = l.gradient(&prepared);
        for _ in 0..MAX_HALVINGS {
            let candidate: Vec<f64> = l
                .weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - l.learning_rate * g)
                .collect();
            let next = l.loss_prepared(&prepared, &candidate);
            if next <= loss {
                l.weights = candidate;
                loss = next;
                break;
            }
            l.learning_rate /= 2.0;
        }
        history.push(loss);
    }
    Ok((l, history))
}

/// Prediction table of `learner` on the samples of `domain`.
pub fn learner_as_model(
    id: impl Into<String>,
    learner: &ToyLearner,
    space: Arc<SampleSpace>,
    features: &FeatureTable,
    domain: &SampleSubset,
) -> Result<Model> {
    space.check(domain)?;
    let mut table = vec![None; space.len()];
    for i in domain.indices() {
        let sample = space.id(i);
        let x = features
            .get(sample)
            .ok_or_else(|| Error::MissingFeatures(sample.to_owned()))?;
        table[i] = Some(learner.predict(x)?);
    }
    Model::from_table(id, space, learner.target().clone(), table)
}

/// Training accuracy by argmax.
pub fn learner_accuracy(learner: &ToyLearner, data: &LabeledBatch) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::NoData);
    }
    let mut hits = 0usize;
    for s in &data.samples {
        let d = learner.predict(&s.features)?;
        let arg = crate::simplex::argmax_label(&d);
        if d.support().get(arg.index) == Some(s.label.as_str()) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
