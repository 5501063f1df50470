//! Probability-simplex arithmetic over finite label sets.
//!
//! Every logarithm is taken in natural log and rescaled by `1 / ln(base)`, so
//! each operation takes the base explicitly. The conventions are:
//!
//! * `0 · log 0 = 0`;
//! * a cross entropy term with `y_a > 0` and `g_a = 0` is `+∞` (an actual
//!   [`f64::INFINITY`], never a sentinel).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute tolerance on `Σ p = 1` for a [`Dist`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// An ordered set of distinct labels.
///
/// Labels are kept sorted so two sets with the same members compare equal.
/// Cloning is cheap (shared storage).
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet(Arc<[String]>);

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateLabel(w[0].clone()));
        }
        Ok(Self(labels.into()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.0.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.0.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn is_subset_of(&self, other: &LabelSet) -> bool {
        self.same_as(other) || self.0.iter().all(|l| other.contains(l))
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        if self.same_as(other) {
            return self.clone();
        }
        let mut all: Vec<String> = self.0.iter().chain(other.0.iter()).cloned().collect();
        all.sort();
        all.dedup();
        LabelSet(all.into())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    fn same_as(&self, other: &LabelSet) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl PartialEq for LabelSet {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other) || self.0 == other.0
    }
}

impl Eq for LabelSet {}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.0.iter()).finish()
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        LabelSet::new(labels)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(set: LabelSet) -> Self {
        set.0.to_vec()
    }
}

/// A point of the probability simplex over `support`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    support: LabelSet,
    probs: Vec<f64>,
}

impl Dist {
    /// `probs` follow the canonical (sorted) order of `support`.
    pub fn new(support: LabelSet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != support.len() {
            return Err(Error::LengthMismatch {
                expected: support.len(),
                found: probs.len(),
            });
        }
        if let Some(&p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self { support, probs })
    }

    /// Builds a distribution from `(label, probability)` pairs in any order.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let pairs: Vec<(String, f64)> = pairs.into_iter().map(|(l, p)| (l.into(), p)).collect();
        let support = LabelSet::new(pairs.iter().map(|(l, _)| l.clone()))?;
        let mut probs = vec![0.0; support.len()];
        for (label, p) in pairs {
            probs[support.index_of(&label).expect("label in support")] = p;
        }
        Self::new(support, probs)
    }

    pub fn uniform(support: LabelSet) -> Self {
        let t = support.len();
        Self {
            probs: vec![1.0 / t as f64; t],
            support,
        }
    }

    pub fn one_hot(support: LabelSet, label: &str) -> Result<Self> {
        let idx = support
            .index_of(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?;
        let mut probs = vec![0.0; support.len()];
        probs[idx] = 1.0;
        Ok(Self { support, probs })
    }

    pub fn support(&self) -> &LabelSet {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of `label`; zero for labels outside the support.
    pub fn prob(&self, label: &str) -> f64 {
        self.support.index_of(label).map_or(0.0, |i| self.probs[i])
    }

    pub fn is_interior(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn is_one_hot(&self) -> bool {
        self.probs.iter().filter(|&&p| p == 1.0).count() == 1
            && self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Raises every probability to at least `eps` and renormalizes.
    ///
    /// Intended for ingested tables that contain hard zeros.
    pub fn floored(&self, eps: f64) -> Dist {
        if self.probs.iter().all(|&p| p >= eps) {
            return self.clone();
        }
        let raised: Vec<f64> = self.probs.iter().map(|&p| p.max(eps)).collect();
        let total: f64 = raised.iter().sum();
        Dist {
            support: self.support.clone(),
            probs: raised.into_iter().map(|p| p / total).collect(),
        }
    }
}

fn log_scale(base: usize) -> Result<f64> {
    if base < 2 {
        return Err(Error::InvalidBase(base));
    }
    Ok(1.0 / (base as f64).ln())
}

/// `-Σ d_a log_base d_a`.
pub fn shannon_entropy(d: &Dist, base: usize) -> Result<f64> {
    let scale = log_scale(base)?;
    let nats: f64 = d
        .probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(nats * scale)
}

/// `-Σ y_a log_base g_a`, with `+∞` when some `y_a > 0` meets `g_a = 0`.
pub fn cross_entropy(y: &Dist, g: &Dist, base: usize) -> Result<f64> {
    if y.support != g.support {
        return Err(Error::SupportMismatch);
    }
    cross_entropy_linear(&y.probs, g, base)
}

/// Cross entropy extended linearly in its first argument.
///
/// `coeffs` may be any real vector over `g`'s support (e.g. a tangent
/// direction with `Σ coeffs = 0`).
pub fn cross_entropy_linear(coeffs: &[f64], g: &Dist, base: usize) -> Result<f64> {
    let scale = log_scale(base)?;
    if coeffs.len() != g.len() {
        return Err(Error::LengthMismatch {
            expected: g.len(),
            found: coeffs.len(),
        });
    }
    let mut nats = 0.0;
    for (&c, &q) in coeffs.iter().zip(&g.probs) {
        if c == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(if c > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            });
        }
        nats -= c * q.ln();
    }
    Ok(nats * scale)
}

/// Gradient of [`shannon_entropy`] at an interior point: `-(log_base d_a + 1/ln base)`.
pub fn entropy_gradient(d: &Dist, base: usize) -> Result<Vec<f64>> {
    let scale = log_scale(base)?;
    if !d.is_interior() {
        return Err(Error::BoundaryPoint);
    }
    Ok(d.probs.iter().map(|&p| -(p.ln() + 1.0) * scale).collect())
}

/// Copies `d` into the larger support `target`; new labels get probability 0.
pub fn embed(d: &Dist, target: &LabelSet) -> Result<Dist> {
    if d.support == *target {
        return Ok(d.clone());
    }
    let mut probs = vec![0.0; target.len()];
    for (label, &p) in d.support.iter().zip(&d.probs) {
        let idx = target
            .index_of(label)
            .ok_or_else(|| Error::NotASubset(label.to_owned()))?;
        probs[idx] = p;
    }
    Ok(Dist {
        support: target.clone(),
        probs,
    })
}

/// Inverse of [`embed`]: drops labels outside `support`, which must carry zero mass.
pub fn restrict(d: &Dist, support: &LabelSet) -> Result<Dist> {
    if d.support == *support {
        return Ok(d.clone());
    }
    if !support.is_subset_of(&d.support) {
        return Err(Error::NotASubset(
            support
                .iter()
                .find(|l| !d.support.contains(l))
                .unwrap_or_default()
                .to_owned(),
        ));
    }
    for (label, &p) in d.support.iter().zip(&d.probs) {
        if !support.contains(label) && p != 0.0 {
            return Err(Error::MassOutsideSupport(label.to_owned()));
        }
    }
    let probs = support.iter().map(|l| d.prob(l)).collect();
    Dist::new(support.clone(), probs)
}

/// Result of [`argmax_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Argmax {
    /// Index into the distribution's support.
    pub index: usize,
    /// More than one label attains the maximum.
    pub tie: bool,
}

/// Largest probability; ties go to the first label in canonical order.
pub fn argmax_label(d: &Dist) -> Argmax {
    let mut index = 0;
    let mut tie = false;
    for (i, &p) in d.probs.iter().enumerate().skip(1) {
        if p > d.probs[index] {
            index = i;
            tie = false;
        } else if p == d.probs[index] {
            tie = true;
        }
    }
    Argmax { index, tie }
}
