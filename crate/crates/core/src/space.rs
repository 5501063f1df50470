//! Finite weighted sample spaces.
//!
//! Integrals over the sample space are weighted sums `Σ_i w_i φ(x_i)`,
//! reduced with [`pairwise_sum`] so totals do not depend on thread
//! scheduling or accumulation order.

use std::collections::HashMap;

use crate::simplex::LabelSet;
use crate::{Error, Result};

/// Samples with positive weights, a label universe `Y` and optional truth.
#[derive(Debug, Clone)]
pub struct SampleSpace {
    ids: Vec<String>,
    weights: Vec<f64>,
    index: HashMap<String, usize>,
    universe: LabelSet,
    /// Index into `universe` per sample.
    truth: Option<Vec<usize>>,
}

impl PartialEq for SampleSpace {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.weights == other.weights
            && self.universe == other.universe
            && self.truth == other.truth
    }
}

impl SampleSpace {
    pub fn new<S: Into<String>>(
        samples: impl IntoIterator<Item = (S, f64)>,
        universe: LabelSet,
    ) -> Result<Self> {
        if universe.len() < 2 {
            return Err(Error::UniverseTooSmall(universe.len()));
        }
        let mut ids = Vec::new();
        let mut weights = Vec::new();
        let mut index = HashMap::new();
        for (id, weight) in samples {
            let id = id.into();
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::InvalidWeight { id, weight });
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::DuplicateSample(id));
            }
            ids.push(id);
            weights.push(weight);
        }
        Ok(Self {
            ids,
            weights,
            index,
            universe,
            truth: None,
        })
    }

    /// Every sample gets weight `1/N`, so the total mass is 1.
    pub fn uniform<S: Into<String>>(
        ids: impl IntoIterator<Item = S>,
        universe: LabelSet,
    ) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        let w = 1.0 / ids.len().max(1) as f64;
        Self::new(ids.into_iter().map(|id| (id, w)), universe)
    }

    /// Attaches a total truth labeling, one label per sample in order.
    pub fn with_truth<S: AsRef<str>>(mut self, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut truth = Vec::with_capacity(self.ids.len());
        for label in labels {
            let label = label.as_ref();
            truth.push(
                self.universe
                    .index_of(label)
                    .ok_or_else(|| Error::UnknownLabel(label.to_owned()))?,
            );
        }
        if truth.len() != self.ids.len() {
            return Err(Error::LengthMismatch {
                expected: self.ids.len(),
                found: truth.len(),
            });
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weights[idx]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownSample(id.to_owned()))
    }

    pub fn universe(&self) -> &LabelSet {
        &self.universe
    }

    pub fn has_truth(&self) -> bool {
        self.truth.is_some()
    }

    /// True label of sample `idx` as an index into the universe.
    pub fn truth_index(&self, idx: usize) -> Result<usize> {
        self.truth
            .as_ref()
            .map(|t| t[idx])
            .ok_or(Error::MissingTruth)
    }

    pub fn truth_label(&self, idx: usize) -> Result<&str> {
        let t = self.truth_index(idx)?;
        Ok(self.universe.get(t).expect("truth index in universe"))
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    pub fn empty_subset(&self) -> SampleSubset {
        SampleSubset {
            mask: vec![false; self.len()],
        }
    }

    pub fn full_subset(&self) -> SampleSubset {
        SampleSubset {
            mask: vec![true; self.len()],
        }
    }

    pub fn subset<S: AsRef<str>>(&self, ids: impl IntoIterator<Item = S>) -> Result<SampleSubset> {
        let mut subset = self.empty_subset();
        for id in ids {
            subset.mask[self.index_of(id.as_ref())?] = true;
        }
        Ok(subset)
    }

    pub fn subset_from_indices(&self, indices: impl IntoIterator<Item = usize>) -> SampleSubset {
        let mut subset = self.empty_subset();
        for i in indices {
            subset.mask[i] = true;
        }
        subset
    }

    pub fn subset_where(&self, mut pred: impl FnMut(usize) -> bool) -> SampleSubset {
        SampleSubset {
            mask: (0..self.len()).map(&mut pred).collect(),
        }
    }

    /// Σ weights of the members.
    pub fn measure(&self, subset: &SampleSubset) -> Result<f64> {
        self.check(subset)?;
        Ok(self.weighted_sum(subset.indices().map(|_| 1.0).zip(subset.indices())))
    }

    pub fn complement(&self, subset: &SampleSubset) -> Result<SampleSubset> {
        self.check(subset)?;
        Ok(SampleSubset {
            mask: subset.mask.iter().map(|m| !m).collect(),
        })
    }

    pub fn check(&self, subset: &SampleSubset) -> Result<()> {
        if subset.mask.len() == self.len() {
            Ok(())
        } else {
            Err(Error::ForeignSubset)
        }
    }

    /// `Σ w_i v_i` over `(v_i, i)` pairs, reduced pairwise.
    pub fn weighted_sum(&self, values: impl IntoIterator<Item = (f64, usize)>) -> f64 {
        let terms: Vec<f64> = values
            .into_iter()
            .map(|(v, i)| if v == 0.0 { 0.0 } else { self.weights[i] * v })
            .collect();
        pairwise_sum(&terms)
    }
}

/// A set of samples of one [`SampleSpace`], stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleSubset {
    mask: Vec<bool>,
}

impl SampleSubset {
    pub fn contains(&self, idx: usize) -> bool {
        self.mask.get(idx).copied().unwrap_or(false)
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn is_subset_of(&self, other: &SampleSubset) -> bool {
        self.mask.len() == other.mask.len()
            && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    pub fn union(&self, other: &SampleSubset) -> SampleSubset {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &SampleSubset) -> SampleSubset {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &SampleSubset) -> SampleSubset {
        self.zip_with(other, |a, b| a && !b)
    }

    fn zip_with(&self, other: &SampleSubset, f: impl Fn(bool, bool) -> bool) -> SampleSubset {
        assert_eq!(self.mask.len(), other.mask.len(), "subsets of different spaces");
        SampleSubset {
            mask: self
                .mask
                .iter()
                .zip(&other.mask)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Pairwise (cascade) summation with a fixed split order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
