//! Ensemble entropy calculus.
//!
//! The pointwise entropy of an ensemble at `x` averages the cross entropies
//! `h(F_l(x), F_r(x))` over all ordered pairs of models covering `x`,
//! diagonal included, each pair measured in base `|T_l ∪ T_r|`:
//!
//! ```text
//! H_x(U) = 1/K_x² Σ_{l,r ∋ x} h(F_l(x), F_r(x))      (K_x > 0)
//! H_x(U) = 1                                         (K_x = 0)
//! ```
//!
//! Unlike the entropy of the averaged prediction, `H_x` grows with
//! disagreement between members.

use std::collections::HashSet;
use std::sync::Arc;

use serde::Serialize;

use crate::model::{Conservation, Model};
use crate::simplex::{self, Dist, LabelSet};
use crate::space::{pairwise_sum, SampleSpace, SampleSubset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    name: String,
    space: Arc<SampleSpace>,
    members: Vec<Model>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseReport {
    pub sample_id: String,
    pub entropy: f64,
    /// Number of members whose domain contains the sample.
    pub covering: usize,
    pub in_knowledge_domain: bool,
}

/// Outcome of [`Ensemble::strictness`].
#[derive(Debug, Clone, PartialEq)]
pub struct Strictness {
    pub strict: bool,
    /// First sample that breaks strictness, with the reason.
    pub witness: Option<(String, StrictnessFailure)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrictnessFailure {
    Uncovered,
    NotOneHot,
    Disagreement,
}

impl Ensemble {
    pub fn new(name: impl Into<String>, space: Arc<SampleSpace>, members: Vec<Model>) -> Result<Self> {
        let mut seen = HashSet::new();
        for m in &members {
            if !Arc::ptr_eq(m.space(), &space) && **m.space() != *space {
                return Err(Error::SpaceMismatch);
            }
            if !seen.insert(m.id().to_owned()) {
                return Err(Error::DuplicateModel(m.id().to_owned()));
            }
        }
        Ok(Self {
            name: name.into(),
            space,
            members,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn members(&self) -> &[Model] {
        &self.members
    }

    pub fn universe(&self) -> &LabelSet {
        self.space.universe()
    }

    /// Union of member domains.
    pub fn knowledge_domain(&self) -> SampleSubset {
        self.space
            .subset_where(|i| self.members.iter().any(|m| m.covers(i)))
    }

    pub fn covering(&self, idx: usize) -> impl Iterator<Item = &Model> {
        self.members.iter().filter(move |m| m.covers(idx))
    }

    /// Pointwise entropy at sample index `idx`.
    pub fn entropy_at(&self, idx: usize) -> f64 {
        let preds: Vec<&Dist> = self.covering(idx).map(|m| m.prediction(idx).unwrap()).collect();
        if preds.is_empty() {
            return 1.0;
        }
        let k = preds.len() as f64;
        let mut total = 0.0;
        for y in &preds {
            for g in &preds {
                total += pair_cross_entropy(y, g);
            }
        }
        total / (k * k)
    }

    pub fn pointwise_at(&self, idx: usize) -> PointwiseReport {
        let covering = self.covering(idx).count();
        PointwiseReport {
            sample_id: self.space.id(idx).to_owned(),
            entropy: self.entropy_at(idx),
            covering,
            in_knowledge_domain: covering > 0,
        }
    }

    pub fn pointwise_entropy(&self, sample_id: &str) -> Result<PointwiseReport> {
        Ok(self.pointwise_at(self.space.index_of(sample_id)?))
    }

    /// `H_x` for every sample, in space order.
    pub fn pointwise_entropies(&self) -> Vec<f64> {
        (0..self.space.len()).map(|i| self.entropy_at(i)).collect()
    }

    /// `Σ_x w_x H_x` over the knowledge domain, plus the complement's mass when
    /// `include_complement`.
    pub fn total_entropy(&self, include_complement: bool) -> f64 {
        self.total_entropy_over(&self.space.full_subset(), include_complement)
    }

    /// [`Ensemble::total_entropy`] restricted to the samples of `batch`.
    pub fn total_entropy_over(&self, batch: &SampleSubset, include_complement: bool) -> f64 {
        let terms = batch.indices().filter_map(|i| {
            let covered = self.members.iter().any(|m| m.covers(i));
            match (covered, include_complement) {
                (true, _) => Some((self.entropy_at(i), i)),
                (false, true) => Some((1.0, i)),
                (false, false) => None,
            }
        });
        self.space.weighted_sum(terms)
    }

    /// Average cross entropy between the truth and the covering models.
    pub fn truth_entropy_at(&self, idx: usize) -> Result<f64> {
        let mut terms = Vec::new();
        for m in self.covering(idx) {
            terms.push(m.truth_term_at(idx)?.unwrap());
        }
        if terms.is_empty() {
            // still demand truth so a missing labeling is never silent
            self.space.truth_index(idx)?;
            return Ok(1.0);
        }
        Ok(terms.iter().sum::<f64>() / terms.len() as f64)
    }

    pub fn truth_pointwise_cross_entropy(&self, sample_id: &str) -> Result<f64> {
        self.truth_entropy_at(self.space.index_of(sample_id)?)
    }

    pub fn truth_total_cross_entropy(&self, include_complement: bool) -> Result<f64> {
        self.truth_total_cross_entropy_over(&self.space.full_subset(), include_complement)
    }

    pub fn truth_total_cross_entropy_over(
        &self,
        batch: &SampleSubset,
        include_complement: bool,
    ) -> Result<f64> {
        let mut terms = Vec::new();
        for i in batch.indices() {
            let covered = self.members.iter().any(|m| m.covers(i));
            if covered || include_complement {
                terms.push((self.truth_entropy_at(i)?, i));
            }
        }
        Ok(self.space.weighted_sum(terms))
    }

    /// Mean of the covering predictions embedded into `Y`; uniform over `Y`
    /// when nothing covers the sample.
    pub fn average_at(&self, idx: usize) -> Dist {
        let universe = self.universe();
        let mut acc = vec![0.0; universe.len()];
        let mut count = 0usize;
        for m in self.covering(idx) {
            let d = m.prediction(idx).unwrap();
            for (label, &p) in d.support().iter().zip(d.probs()) {
                acc[universe.index_of(label).expect("target within universe")] += p;
            }
            count += 1;
        }
        if count == 0 {
            return Dist::uniform(universe.clone());
        }
        let k = count as f64;
        let probs: Vec<f64> = acc.into_iter().map(|p| p / k).collect();
        Dist::new(universe.clone(), probs).expect("mean of distributions is a distribution")
    }

    pub fn average_function(&self, sample_id: &str) -> Result<Dist> {
        Ok(self.average_at(self.space.index_of(sample_id)?))
    }

    /// Decides whether the ensemble covers every sample with unanimous
    /// one-hot predictions, by building the labeling sample by sample.
    ///
    /// On finite spaces with positive weights this holds exactly when
    /// `total_entropy(true) == 0`.
    pub fn strictness(&self) -> Strictness {
        let universe = self.universe();
        for i in 0..self.space.len() {
            let mut label: Option<usize> = None;
            let mut covered = false;
            for m in self.covering(i) {
                covered = true;
                let d = m.prediction(i).unwrap();
                if !d.is_one_hot() {
                    return Strictness::fail(self.space.id(i), StrictnessFailure::NotOneHot);
                }
                let hot = simplex::argmax_label(d).index;
                let y = universe
                    .index_of(d.support().get(hot).unwrap())
                    .expect("target within universe");
                match label {
                    None => label = Some(y),
                    Some(prev) if prev != y => {
                        return Strictness::fail(self.space.id(i), StrictnessFailure::Disagreement)
                    }
                    Some(_) => {}
                }
            }
            if !covered {
                return Strictness::fail(self.space.id(i), StrictnessFailure::Uncovered);
            }
        }
        Strictness {
            strict: true,
            witness: None,
        }
    }

    /// Both sides of the ensemble conservation identity.
    ///
    /// Needs truth, a single target shared by every member and interior
    /// predictions.
    pub fn conservation(&self, include_complement: bool) -> Result<Conservation> {
        let target = match self.members.first() {
            Some(m) => m.target().clone(),
            None => {
                return Ok(Conservation {
                    work: 0.0,
                    potential_gap: self.truth_total_cross_entropy(include_complement)?
                        - self.total_entropy(include_complement),
                })
            }
        };
        if self.members.iter().any(|m| *m.target() != target) {
            return Err(Error::HeterogeneousTargets);
        }
        let t = target.len();
        let mut work_terms = Vec::new();
        for i in 0..self.space.len() {
            let preds: Vec<&Dist> = self.covering(i).map(|m| m.prediction(i).unwrap()).collect();
            if preds.is_empty() {
                continue;
            }
            let label = self.space.truth_label(i)?;
            let truth_idx = target.index_of(label).ok_or_else(|| Error::TruthOutsideTarget {
                sample: self.space.id(i).to_owned(),
                label: label.to_owned(),
            })?;
            if t == 1 {
                work_terms.push((0.0, i));
                continue;
            }
            let l = preds.len() as f64;
            let mut mean = vec![0.0; t];
            let mut mean_grad = vec![0.0; t];
            for d in &preds {
                let grad = simplex::entropy_gradient(d, t)?;
                for a in 0..t {
                    mean[a] += d.probs()[a] / l;
                    mean_grad[a] += grad[a] / l;
                }
            }
            let work: f64 = (0..t)
                .map(|a| {
                    let onehot = if a == truth_idx { 1.0 } else { 0.0 };
                    mean_grad[a] * (onehot - mean[a])
                })
                .sum();
            work_terms.push((work, i));
        }
        let work = self.space.weighted_sum(work_terms);
        let potential_gap = self.truth_total_cross_entropy(include_complement)?
            - self.total_entropy(include_complement);
        Ok(Conservation {
            work,
            potential_gap,
        })
    }

    pub fn conservation_residual(&self) -> Result<f64> {
        Ok(self.conservation(true)?.residual())
    }

    /// Same ensemble with every member's domain intersected with `subset`.
    pub fn restricted(&self, subset: &SampleSubset) -> Result<Ensemble> {
        let members = self
            .members
            .iter()
            .map(|m| m.restricted(subset))
            .collect::<Result<Vec<_>>>()?;
        Ensemble::new(self.name.clone(), self.space.clone(), members)
    }

    pub fn floored(&self, eps: f64) -> Ensemble {
        Ensemble {
            members: self.members.iter().map(|m| m.floored(eps)).collect(),
            ..self.clone()
        }
    }

    /// Union of two ensembles over the same space.
    pub fn union(&self, other: &Ensemble, name: impl Into<String>) -> Result<Ensemble> {
        let members = self.members.iter().chain(&other.members).cloned().collect();
        Ensemble::new(name, self.space.clone(), members)
    }
}

impl Strictness {
    fn fail(sample: &str, reason: StrictnessFailure) -> Self {
        Strictness {
            strict: false,
            witness: Some((sample.to_owned(), reason)),
        }
    }
}

/// `h(embed(y), embed(g))` in base `|T_y ∪ T_g|`.
///
/// A single-label union holds only one-hot distributions, so the value is 0.
pub fn pair_cross_entropy(y: &Dist, g: &Dist) -> f64 {
    if y.support() == g.support() {
        let t = y.support().len();
        if t == 1 {
            return 0.0;
        }
        return simplex::cross_entropy(y, g, t).expect("same support, base >= 2");
    }
    let union = y.support().union(g.support());
    let y = simplex::embed(y, &union).expect("subset of union");
    let g = simplex::embed(g, &union).expect("subset of union");
    simplex::cross_entropy(&y, &g, union.len()).expect("same support, base >= 2")
}

/// Cross entropy of two models over the intersection of their domains.
pub fn pairwise_cross_entropy(m1: &Model, m2: &Model) -> Result<f64> {
    if !Arc::ptr_eq(m1.space(), m2.space()) && **m1.space() != **m2.space() {
        return Err(Error::SpaceMismatch);
    }
    let space = m1.space();
    let terms = m1.domain().intersection(m2.domain());
    Ok(space.weighted_sum(terms.indices().map(|i| {
        (
            pair_cross_entropy(m1.prediction(i).unwrap(), m2.prediction(i).unwrap()),
            i,
        )
    })))
}

/// Pointwise cross entropy of two ensembles at sample index `idx`.
///
/// * both cover `x`: mean of `h(F_l(x), G_r(x))` over covering pairs;
/// * only `v` covers `x`: `−1/(R_x |Y|) Σ_r log_{t_r} Π_a G_{r,a}(x)`;
/// * `v` does not cover `x`: 1.
pub fn pointwise_cross_entropy_at(u: &Ensemble, v: &Ensemble, idx: usize) -> Result<f64> {
    if !Arc::ptr_eq(u.space(), v.space()) && **u.space() != **v.space() {
        return Err(Error::SpaceMismatch);
    }
    let left: Vec<&Dist> = u.covering(idx).map(|m| m.prediction(idx).unwrap()).collect();
    let right: Vec<&Dist> = v.covering(idx).map(|m| m.prediction(idx).unwrap()).collect();
    if right.is_empty() {
        return Ok(1.0);
    }
    let r = right.len() as f64;
    if left.is_empty() {
        let y = u.universe().len() as f64;
        let mut sum = 0.0;
        for g in &right {
            let t = g.len();
            if t == 1 {
                continue;
            }
            let scale = 1.0 / (t as f64).ln();
            for &p in g.probs() {
                sum += p.ln() * scale;
            }
        }
        return Ok(-sum / (r * y));
    }
    let l = left.len() as f64;
    let mut total = 0.0;
    for y in &left {
        for g in &right {
            total += pair_cross_entropy(y, g);
        }
    }
    Ok(total / (l * r))
}

pub fn pointwise_cross_entropy(u: &Ensemble, v: &Ensemble, sample_id: &str) -> Result<f64> {
    pointwise_cross_entropy_at(u, v, u.space().index_of(sample_id)?)
}

/// Weighted sum of [`pointwise_cross_entropy_at`] over the whole space.
pub fn total_cross_entropy(u: &Ensemble, v: &Ensemble) -> Result<f64> {
    let space = u.space();
    let mut terms = Vec::with_capacity(space.len());
    for i in 0..space.len() {
        let value = pointwise_cross_entropy_at(u, v, i)?;
        terms.push(if value == 0.0 { 0.0 } else { space.weight(i) * value });
    }
    Ok(pairwise_sum(&terms))
}
