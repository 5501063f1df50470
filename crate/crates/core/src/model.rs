//! Partial-domain models as prediction tables.
//!
//! A model stores only the composite `F = f∘Φ` restricted to the sample
//! space: one [`Dist`] over its target `T` for every sample in its domain.
//! Entropies are measured in base `|T|`; a single-label target is non-fuzzy
//! by construction and contributes zero entropy.

use std::sync::Arc;

use crate::simplex::{self, Dist, LabelSet};
use crate::space::{SampleSpace, SampleSubset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    id: String,
    space: Arc<SampleSpace>,
    target: LabelSet,
    domain: SampleSubset,
    predictions: Vec<Option<Dist>>,
}

/// The two sides of the single-model conservation identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conservation {
    /// `Σ_x w_x grad H|_{F(x)} · (onehot(𝒯(x)) − F(x))` over the domain.
    pub work: f64,
    /// Truth cross entropy minus total entropy.
    pub potential_gap: f64,
}

impl Conservation {
    pub fn residual(&self) -> f64 {
        self.work - self.potential_gap
    }
}

impl Model {
    /// Builds a model from `(sample_id, prediction)` rows; absent samples are
    /// outside the domain.
    pub fn new<S: AsRef<str>>(
        id: impl Into<String>,
        space: Arc<SampleSpace>,
        target: LabelSet,
        rows: impl IntoIterator<Item = (S, Dist)>,
    ) -> Result<Self> {
        let mut predictions = vec![None; space.len()];
        for (sample, dist) in rows {
            let idx = space.index_of(sample.as_ref())?;
            if predictions[idx].is_some() {
                return Err(Error::DuplicateSample(sample.as_ref().to_owned()));
            }
            predictions[idx] = Some(dist);
        }
        Self::from_table(id, space, target, predictions)
    }

    /// `predictions[i]` is the prediction for sample `i`, `None` outside the domain.
    pub fn from_table(
        id: impl Into<String>,
        space: Arc<SampleSpace>,
        target: LabelSet,
        predictions: Vec<Option<Dist>>,
    ) -> Result<Self> {
        let id = id.into();
        if !target.is_subset_of(space.universe()) {
            return Err(Error::TargetOutsideUniverse(id));
        }
        if predictions.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                found: predictions.len(),
            });
        }
        for (i, p) in predictions.iter().enumerate() {
            if let Some(d) = p {
                if *d.support() != target {
                    return Err(Error::PredictionSupport {
                        model: id,
                        sample: space.id(i).to_owned(),
                    });
                }
            }
        }
        let domain = space.subset_where(|i| predictions[i].is_some());
        Ok(Self {
            id,
            space,
            target,
            domain,
            predictions,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn target(&self) -> &LabelSet {
        &self.target
    }

    pub fn domain(&self) -> &SampleSubset {
        &self.domain
    }

    pub fn covers(&self, idx: usize) -> bool {
        self.domain.contains(idx)
    }

    pub fn prediction(&self, idx: usize) -> Option<&Dist> {
        self.predictions.get(idx).and_then(Option::as_ref)
    }

    pub fn predictions(&self) -> impl Iterator<Item = (usize, &Dist)> {
        self.predictions
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.as_ref().map(|d| (i, d)))
    }

    /// Same model with its domain intersected with `subset`.
    pub fn restricted(&self, subset: &SampleSubset) -> Result<Model> {
        self.space.check(subset)?;
        let predictions = self
            .predictions
            .iter()
            .enumerate()
            .map(|(i, p)| if subset.contains(i) { p.clone() } else { None })
            .collect();
        Model::from_table(self.id.clone(), self.space.clone(), self.target.clone(), predictions)
    }

    /// Same model with every prediction raised to at least `eps`.
    pub fn floored(&self, eps: f64) -> Model {
        Model {
            predictions: self
                .predictions
                .iter()
                .map(|p| p.as_ref().map(|d| d.floored(eps)))
                .collect(),
            ..self.clone()
        }
    }

    /// Shannon entropy of `F(x)` in base `|T|`; zero when `|T| = 1`.
    pub fn entropy_at(&self, idx: usize) -> Option<f64> {
        let d = self.prediction(idx)?;
        Some(if self.target.len() == 1 {
            0.0
        } else {
            simplex::shannon_entropy(d, self.target.len()).expect("base >= 2")
        })
    }

    /// `−log_{|T|} F_{𝒯(x)}(x)`; `+∞` when the true label has probability 0
    /// or lies outside `T`.
    pub fn truth_term_at(&self, idx: usize) -> Result<Option<f64>> {
        let Some(d) = self.prediction(idx) else {
            return Ok(None);
        };
        let label = self.space.truth_label(idx)?;
        let p = d.prob(label);
        Ok(Some(if p == 0.0 {
            f64::INFINITY
        } else if self.target.len() == 1 {
            0.0
        } else {
            -p.ln() / (self.target.len() as f64).ln()
        }))
    }

    /// `Σ_{x ∈ Dom} w_x H(F(x))`, plus `μ(X − Dom)` when `include_complement`.
    pub fn total_entropy(&self, include_complement: bool) -> f64 {
        let inside = self
            .space
            .weighted_sum(self.domain.indices().map(|i| (self.entropy_at(i).unwrap(), i)));
        inside + self.complement_term(include_complement)
    }

    /// Cross entropy between the truth and the model.
    pub fn truth_cross_entropy(&self, include_complement: bool) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.domain.count());
        for i in self.domain.indices() {
            terms.push((self.truth_term_at(i)?.unwrap(), i));
        }
        Ok(self.space.weighted_sum(terms) + self.complement_term(include_complement))
    }

    /// Both sides of the conservation identity, computed independently.
    ///
    /// Requires interior predictions and `𝒯(Dom) ⊆ T`.
    pub fn conservation(&self, include_complement: bool) -> Result<Conservation> {
        let t = self.target.len();
        let mut work_terms = Vec::with_capacity(self.domain.count());
        for (i, d) in self.predictions() {
            let label = self.space.truth_label(i)?;
            let truth_idx = self
                .target
                .index_of(label)
                .ok_or_else(|| Error::TruthOutsideTarget {
                    sample: self.space.id(i).to_owned(),
                    label: label.to_owned(),
                })?;
            if t == 1 {
                // the only tangent direction at a single label is zero
                work_terms.push((0.0, i));
                continue;
            }
            let grad = simplex::entropy_gradient(d, t)?;
            let work: f64 = grad
                .iter()
                .zip(d.probs())
                .enumerate()
                .map(|(a, (g, p))| {
                    let onehot = if a == truth_idx { 1.0 } else { 0.0 };
                    g * (onehot - p)
                })
                .sum();
            work_terms.push((work, i));
        }
        let work = self.space.weighted_sum(work_terms);
        let potential_gap =
            self.truth_cross_entropy(include_complement)? - self.total_entropy(include_complement);
        Ok(Conservation {
            work,
            potential_gap,
        })
    }

    /// `work − potential_gap` of [`Model::conservation`].
    pub fn conservation_residual(&self) -> Result<f64> {
        Ok(self.conservation(true)?.residual())
    }

    /// In-domain samples whose true label lies outside the target.
    pub fn truth_violations(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for i in self.domain.indices() {
            let label = self.space.truth_label(i)?;
            if !self.target.contains(label) {
                out.push((self.space.id(i).to_owned(), label.to_owned()));
            }
        }
        Ok(out)
    }

    fn complement_term(&self, include: bool) -> f64 {
        if !include {
            return 0.0;
        }
        let outside = self.space.complement(&self.domain).expect("own subset");
        self.space.measure(&outside).expect("own subset")
    }
}
