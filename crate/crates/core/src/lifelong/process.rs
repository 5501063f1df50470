//! Learning processes: repeated training with an admission rule.
//!
//! A step is admitted only when the truth cross entropy strictly decreases
//! and the knowledge domain does not shrink, so the logged cross-entropy
//! column is strictly decreasing by construction.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::lifelong::learner::{learner_as_model, train_learner, FeatureTable, LabeledBatch, LabeledSample, ToyLearner};
use crate::lifelong::system::weighted_accuracy;
use crate::space::{SampleSpace, SampleSubset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningSchedule {
    /// Domain of step `i` is the first `fraction[min(i, len-1)]` of the space.
    pub domain_fractions: Vec<f64>,
    pub epochs_per_step: usize,
    pub max_steps: usize,
    /// Stop once the truth cross entropy drops below this.
    pub floor: f64,
    /// Consecutive rejected attempts before giving up.
    pub patience: usize,
}

impl Default for LearningSchedule {
    fn default() -> Self {
        Self {
            domain_fractions: vec![0.25, 0.5, 0.75, 1.0],
            epochs_per_step: 25,
            max_steps: 60,
            floor: 1e-3,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningRecord {
    pub step: usize,
    pub truth_cross_entropy: f64,
    pub total_entropy: f64,
    pub accuracy: f64,
    /// Total entropy over the knowledge domain, complement dropped.
    pub memory: f64,
    pub domain_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Floor,
    MaxSteps,
    Patience,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningLog {
    pub records: Vec<LearningRecord>,
    pub stop: StopReason,
}

impl LearningLog {
    pub fn last(&self) -> &LearningRecord {
        self.records.last().expect("a log holds at least the initial record")
    }

    pub fn cross_entropy_strictly_decreasing(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].truth_cross_entropy < w[0].truth_cross_entropy)
    }

    pub fn domain_nondecreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].domain_mass >= w[0].domain_mass)
    }

    /// Some subsequence of the entropy column decreases to the final value.
    pub fn entropy_reaches_final_from_above(&self) -> bool {
        let last = self.last().total_entropy;
        self.records.iter().any(|r| r.total_entropy > last) || self.records.len() == 1
    }
}

impl LearningSchedule {
    fn validate(&self) -> Result<()> {
        if self.domain_fractions.is_empty()
            || self
                .domain_fractions
                .iter()
                .any(|f| !(*f > 0.0 && *f <= 1.0))
        {
            return Err(Error::InvalidConfig(
                "domain fractions must be nonempty and lie in (0, 1]".into(),
            ));
        }
        if self.domain_fractions.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("domain fractions must be nondecreasing".into()));
        }
        if self.epochs_per_step == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "epochs_per_step and patience must be positive".into(),
            ));
        }
        Ok(())
    }

    fn domain(&self, space: &SampleSpace, step: usize) -> SampleSubset {
        let f = self.domain_fractions[step.min(self.domain_fractions.len() - 1)];
        let n = ((f * space.len() as f64).ceil() as usize).min(space.len());
        space.subset_from_indices(0..n)
    }
}

fn training_batch(space: &SampleSpace, features: &FeatureTable, domain: &SampleSubset) -> Result<LabeledBatch> {
    let mut samples = Vec::new();
    for i in domain.indices() {
        let id = space.id(i);
        samples.push(LabeledSample {
            id: id.to_owned(),
            features: features
                .get(id)
                .ok_or_else(|| Error::MissingFeatures(id.to_owned()))?
                .to_vec(),
            label: space.truth_label(i)?.to_owned(),
            weight: space.weight(i),
        });
    }
    Ok(LabeledBatch::new(samples))
}

fn snapshot(
    space: &Arc<SampleSpace>,
    features: &FeatureTable,
    learners: &[ToyLearner],
    domain: &SampleSubset,
    step: usize,
) -> Result<LearningRecord> {
    let members = learners
        .iter()
        .enumerate()
        .map(|(k, l)| learner_as_model(format!("l{k}"), l, space.clone(), features, domain))
        .collect::<Result<Vec<_>>>()?;
    let e = Ensemble::new(format!("step-{step}"), space.clone(), members)?;
    Ok(LearningRecord {
        step,
        truth_cross_entropy: e.truth_total_cross_entropy(true)?,
        total_entropy: e.total_entropy(true),
        accuracy: weighted_accuracy(space, &space.full_subset(), |i| Ok(e.average_at(i)))?,
        memory: e.total_entropy(false),
        domain_mass: space.measure(domain)?,
    })
}

/// Trains `learners` as one ensemble on a growing domain and logs every
/// admitted step.
pub fn run_learning_process(
    space: Arc<SampleSpace>,
    features: &FeatureTable,
    learners: Vec<ToyLearner>,
    schedule: &LearningSchedule,
) -> Result<LearningLog> {
    schedule.validate()?;
    if !space.has_truth() {
        return Err(Error::MissingTruth);
    }
    if learners.is_empty() {
        return Err(Error::InvalidConfig("a learning process needs at least one learner".into()));
    }
    let mut learners = learners;
    let mut domain = schedule.domain(&space, 0);
    let mut records = vec![snapshot(&space, features, &learners, &domain, 0)?];
    let mut rejected = 0usize;
    let stop = loop {
        let current = records.last().unwrap();
        if current.truth_cross_entropy < schedule.floor {
            break StopReason::Floor;
        }
        if records.len() > schedule.max_steps {
            break StopReason::MaxSteps;
        }
        let step = records.len();
        let candidate_domain = schedule.domain(&space, step);
        let batch = training_batch(&space, features, &candidate_domain)?;
        let candidate = learners
            .iter()
            .map(|l| train_learner(l, &batch, schedule.epochs_per_step))
            .collect::<Result<Vec<_>>>()?;
        let record = snapshot(&space, features, &candidate, &candidate_domain, step)?;
        learners = candidate;
        if record.truth_cross_entropy < current.truth_cross_entropy && domain.is_subset_of(&candidate_domain) {
            domain = candidate_domain;
            records.push(record);
            rejected = 0;
        } else {
            rejected += 1;
            if rejected >= schedule.patience {
                break StopReason::Patience;
            }
        }
    };
    Ok(LearningLog { records, stop })
}
