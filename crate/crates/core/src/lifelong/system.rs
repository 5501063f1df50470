//! Multi-generation systems and entropy-based routing.
//!
//! A sample is handled by the first active generation whose core contains
//! it; whatever no core claims falls through to the last active generation.
//! Each generation answers with the probability average of its members.

use std::collections::HashSet;
use std::sync::Arc;

use serde::Serialize;

use crate::cores::{self, SweepCurve};
use crate::ensemble::Ensemble;
use crate::lifelong::environment::derive_seed;
use crate::lifelong::learner::{learner_as_model, train_learner, FeatureTable, LabeledBatch, ToyLearner};
use crate::simplex::{self, Dist};
use crate::space::{SampleSpace, SampleSubset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationStatus {
    Active,
    Annihilated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub index: usize,
    pub ensemble: Ensemble,
    pub threshold: Option<f64>,
    /// Core coverage on reference validation data when the threshold was set.
    pub baseline_coverage: Option<f64>,
    pub status: GenerationStatus,
}

impl Generation {
    pub fn is_active(&self) -> bool {
        self.status == GenerationStatus::Active
    }

    /// Whether the core of this generation contains sample `idx`.
    pub fn claims(&self, idx: usize) -> bool {
        self.is_active() && self.threshold.is_some_and(|tau| self.ensemble.entropy_at(idx) < tau)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogifoldSystem {
    space: Arc<SampleSpace>,
    generations: Vec<Generation>,
    pub trigger_delta: f64,
    pub accuracy_target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Routed {
    pub dist: Dist,
    pub generation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChangeReport {
    pub coverage: f64,
    pub baseline_coverage: f64,
    pub triggered: bool,
}

/// How a new generation is trained.
#[derive(Debug, Clone)]
pub struct SpawnSpec {
    pub count: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Starting points, used in turn; learner `i` copies `templates[i % len]`.
    pub templates: Vec<ToyLearner>,
    /// Each learner trains on its own seeded bootstrap resample.
    pub bootstrap: bool,
    /// Extra clean samples lying outside the existing cores.
    pub clean_outside_core: Option<LabeledBatch>,
}

impl LogifoldSystem {
    /// One active generation without a threshold.
    pub fn new(first: Ensemble, trigger_delta: f64, accuracy_target: f64) -> Result<Self> {
        if !(trigger_delta >= 0.0 && trigger_delta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "trigger delta must be nonnegative, got {trigger_delta}"
            )));
        }
        if !(accuracy_target > 0.0 && accuracy_target <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "accuracy target must lie in (0, 1], got {accuracy_target}"
            )));
        }
        Ok(Self {
            space: first.space().clone(),
            generations: vec![Generation {
                index: 0,
                ensemble: first,
                threshold: None,
                baseline_coverage: None,
                status: GenerationStatus::Active,
            }],
            trigger_delta,
            accuracy_target,
        })
    }

    pub fn space(&self) -> &Arc<SampleSpace> {
        &self.space
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    pub fn generation(&self, index: usize) -> Result<&Generation> {
        self.generations
            .get(index)
            .ok_or(Error::UnknownGeneration(index))
    }

    pub fn active(&self) -> impl Iterator<Item = &Generation> {
        self.generations.iter().filter(|g| g.is_active())
    }

    /// Appends an active generation without a threshold.
    pub fn push_generation(&self, ensemble: Ensemble) -> Result<Self> {
        if ensemble.space() != &self.space && **ensemble.space() != *self.space {
            return Err(Error::SpaceMismatch);
        }
        let mut next = self.clone();
        next.generations.push(Generation {
            index: self.generations.len(),
            ensemble,
            threshold: None,
            baseline_coverage: None,
            status: GenerationStatus::Active,
        });
        Ok(next)
    }

    /// Sets `tau` on a generation and records its baseline coverage on `reference`.
    pub fn with_threshold(&self, index: usize, tau: f64, reference: &SampleSubset) -> Result<Self> {
        let generation = self.generation(index)?;
        let baseline = cores::compute_core_over(&generation.ensemble, tau, reference)?.coverage;
        let mut next = self.clone();
        let g = &mut next.generations[index];
        g.threshold = Some(tau);
        g.baseline_coverage = Some(baseline);
        Ok(next)
    }

    /// Sweeps `grid` on `validation`, selects the largest threshold meeting
    /// the accuracy target and records the baseline on `reference`.
    ///
    /// Returns the new system and the curve; the threshold stays unset when
    /// nothing qualifies.
    pub fn select_threshold(
        &self,
        index: usize,
        validation: &SampleSubset,
        reference: &SampleSubset,
        grid: &[f64],
    ) -> Result<(Self, SweepCurve)> {
        let generation = self.generation(index)?;
        let curve = cores::threshold_sweep_over(&generation.ensemble, validation, grid)?;
        let next = match cores::select_threshold(&curve, self.accuracy_target)? {
            Some(tau) => self.with_threshold(index, tau, reference)?,
            None => self.clone(),
        };
        Ok((next, curve))
    }

    fn last_active(&self) -> Result<&Generation> {
        self.active().last().ok_or(Error::NoActiveGeneration)
    }

    fn handler(&self, idx: usize) -> Result<&Generation> {
        let last = self.last_active()?;
        Ok(self.active().find(|g| g.claims(idx)).unwrap_or(last))
    }

    /// Samples of `batch` handled by each active generation, in order.
    pub fn routing_partition(&self, batch: &SampleSubset) -> Result<Vec<(usize, SampleSubset)>> {
        self.space.check(batch)?;
        let mut parts: Vec<(usize, Vec<usize>)> = self.active().map(|g| (g.index, Vec::new())).collect();
        for i in batch.indices() {
            let h = self.handler(i)?.index;
            parts.iter_mut().find(|(g, _)| *g == h).unwrap().1.push(i);
        }
        if parts.is_empty() {
            return Err(Error::NoActiveGeneration);
        }
        Ok(parts
            .into_iter()
            .map(|(g, idx)| (g, self.space.subset_from_indices(idx)))
            .collect())
    }
}

/// Routed prediction for sample `idx` and the generation that produced it.
pub fn imm_route(sys: &LogifoldSystem, idx: usize) -> Result<Routed> {
    let g = sys.handler(idx)?;
    Ok(Routed {
        dist: g.ensemble.average_at(idx),
        generation: g.index,
    })
}

pub fn imm_route_id(sys: &LogifoldSystem, sample_id: &str) -> Result<Routed> {
    imm_route(sys, sys.space.index_of(sample_id)?)
}

fn nonempty_mass(space: &SampleSpace, batch: &SampleSubset) -> Result<f64> {
    let mass = space.measure(batch)?;
    if batch.is_empty() || mass == 0.0 {
        return Err(Error::NoData);
    }
    Ok(mass)
}

/// Weighted argmax accuracy of `predict` over `batch`.
pub fn weighted_accuracy(
    space: &SampleSpace,
    batch: &SampleSubset,
    mut predict: impl FnMut(usize) -> Result<Dist>,
) -> Result<f64> {
    let mass = nonempty_mass(space, batch)?;
    let mut hits = Vec::new();
    for i in batch.indices() {
        let d = predict(i)?;
        let predicted = d.support().get(simplex::argmax_label(&d).index).unwrap();
        let hit = predicted == space.truth_label(i)?;
        hits.push((if hit { 1.0 } else { 0.0 }, i));
    }
    Ok(space.weighted_sum(hits) / mass)
}

/// Accuracy `P` of the routed predictions on `batch`.
pub fn evaluate_p(sys: &LogifoldSystem, batch: &SampleSubset) -> Result<f64> {
    weighted_accuracy(&sys.space, batch, |i| imm_route(sys, i).map(|r| r.dist))
}

/// Memory proxy `I`: total entropy of the union of all active generations,
/// each restricted to the samples it handles, with the complement dropped
/// and normalized by the batch mass.
///
/// Inside the region a generation handles only its own members remain, so
/// the pointwise entropy there is that generation's.
pub fn memory_i(sys: &LogifoldSystem, batch: &SampleSubset) -> Result<f64> {
    let mass = nonempty_mass(&sys.space, batch)?;
    let mut terms = Vec::new();
    for i in batch.indices() {
        let g = sys.handler(i)?;
        if g.ensemble.covering(i).next().is_some() {
            terms.push((g.ensemble.entropy_at(i), i));
        }
    }
    Ok(sys.space.weighted_sum(terms) / mass)
}

/// Normalized total entropy of a single ensemble on `batch`, complement dropped.
pub fn ensemble_memory(e: &Ensemble, batch: &SampleSubset) -> Result<f64> {
    let mass = nonempty_mass(e.space(), batch)?;
    Ok(e.total_entropy_over(batch, false) / mass)
}

/// Coverage drop of `g`'s core on `batch` relative to its baseline.
pub fn detect_environment_change(g: &Generation, batch: &SampleSubset, delta: f64) -> Result<ChangeReport> {
    let (Some(tau), Some(baseline), true) = (g.threshold, g.baseline_coverage, g.is_active()) else {
        return Err(Error::NoThreshold(g.index));
    };
    nonempty_mass(g.ensemble.space(), batch)?;
    let coverage = cores::compute_core_over(&g.ensemble, tau, batch)?.coverage;
    Ok(ChangeReport {
        coverage,
        baseline_coverage: baseline,
        triggered: baseline - coverage > delta,
    })
}

/// Trains `spec.count` learners on the out-of-core samples and appends them
/// as a new generation whose domain is the region no existing core claims.
pub fn spawn_generation(
    sys: &LogifoldSystem,
    out_of_core: &LabeledBatch,
    features: &FeatureTable,
    spec: &SpawnSpec,
) -> Result<LogifoldSystem> {
    let learners = train_spawn_learners(out_of_core, spec)?;
    push_learner_generation(sys, &learners, features)
}

/// Learners of a new generation, trained as [`spawn_generation`] would.
pub fn train_spawn_learners(out_of_core: &LabeledBatch, spec: &SpawnSpec) -> Result<Vec<ToyLearner>> {
    if spec.count == 0 {
        return Err(Error::InvalidConfig("spawn count must be positive".into()));
    }
    if spec.templates.is_empty() {
        return Err(Error::InvalidConfig("spawn needs at least one template learner".into()));
    }
    if out_of_core.is_empty() {
        return Err(Error::NoData);
    }
    let data = match &spec.clean_outside_core {
        Some(clean) => {
            let seen: HashSet<&str> = out_of_core.ids().collect();
            let extra = clean.filter(|s| !seen.contains(s.id.as_str()));
            LabeledBatch::concat([out_of_core, &extra])
        }
        None => out_of_core.clone(),
    };
    (0..spec.count)
        .map(|k| {
            let template = &spec.templates[k % spec.templates.len()];
            let train = if spec.bootstrap {
                data.bootstrap(derive_seed(spec.seed, k as u64))
            } else {
                data.clone()
            };
            train_learner(template, &train, spec.epochs)
        })
        .collect()
}

/// Appends `learners` as a generation covering the samples no active core claims.
pub fn push_learner_generation(
    sys: &LogifoldSystem,
    learners: &[ToyLearner],
    features: &FeatureTable,
) -> Result<LogifoldSystem> {
    let space = sys.space.clone();
    let domain = space.subset_where(|i| !sys.active().any(|g| g.claims(i)));
    let index = sys.generations.len();
    let members = learners
        .iter()
        .enumerate()
        .map(|(k, l)| learner_as_model(format!("g{index}-{k}"), l, space.clone(), features, &domain))
        .collect::<Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(format!("generation-{index}"), space, members)?;
    sys.push_generation(ensemble)
}

/// Annihilates generation `index` when `curve` has no threshold meeting the
/// accuracy target; refuses if it is the only active generation.
pub fn annihilate_if_unusable(sys: &LogifoldSystem, index: usize, curve: &SweepCurve) -> Result<LogifoldSystem> {
    let g = sys.generation(index)?;
    if !g.is_active() || cores::select_threshold(curve, sys.accuracy_target)?.is_some() {
        return Ok(sys.clone());
    }
    if sys.active().count() == 1 {
        return Err(Error::LastActiveGeneration(index));
    }
    let mut next = sys.clone();
    let g = &mut next.generations[index];
    g.status = GenerationStatus::Annihilated;
    g.threshold = None;
    g.baseline_coverage = None;
    Ok(next)
}
