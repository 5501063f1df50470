//! Seeded end-to-end immunization scenario.
//!
//! 1. Train a base generation on clean data.
//! 2. Fine-tune copies of some base learners on weakly perturbed data and
//!    add them, giving the immunized generation.
//! 3. For each environment (clean, weak, strong, union) select a threshold
//!    on validation data, test for a coverage drop and, when triggered,
//!    spawn out-of-core specialists as a second generation.
//! 4. Compare the base and immunized generations, the naive average of all
//!    models and the routed system on held-out test data.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cores::{self, SweepCurve};
use crate::ensemble::Ensemble;
use crate::lifelong::environment::{derive_seed, Environment, Perturbation};
use crate::lifelong::learner::{learner_as_model, train_learner, FeatureMap, FeatureTable, LabeledBatch, ToyLearner};
use crate::lifelong::system::{
    detect_environment_change, ensemble_memory, evaluate_p, memory_i, push_learner_generation, train_spawn_learners,
    weighted_accuracy, ChangeReport, LogifoldSystem, SpawnSpec,
};
use crate::space::{SampleSpace, SampleSubset};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub classes: usize,
    pub radius: f64,
    pub noise: f64,
    pub signature_noise: f64,
    pub weak: Perturbation,
    pub strong: Perturbation,
    pub train_per_env: usize,
    pub validation_per_env: usize,
    pub test_per_env: usize,
    pub base_models: usize,
    pub specialists: usize,
    pub out_of_core_models: usize,
    pub base_epochs: usize,
    pub specialist_epochs: usize,
    pub out_of_core_epochs: usize,
    pub learning_rate: f64,
    pub accuracy_target: f64,
    pub trigger_delta: f64,
    pub union_with_clean: bool,
    /// Specialists are fine-tuned on weak and clean training data together.
    pub specialist_clean_mix: bool,
    /// Feature map of the out-of-core generation.
    pub out_of_core_features: FeatureMap,
    /// Clean validation coverage defining the fixed comparison and detection thresholds.
    pub reference_coverage: f64,
    /// Slack for the lifelong admission inequalities.
    pub epsilon: f64,
    pub grid: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            classes: 4,
            radius: 3.0,
            noise: 1.0,
            signature_noise: 0.3,
            weak: Perturbation { shift: 0.6, signature: 1.5 },
            strong: Perturbation { shift: 0.9, signature: 1.5 },
            train_per_env: 400,
            validation_per_env: 400,
            test_per_env: 400,
            base_models: 8,
            specialists: 4,
            out_of_core_models: 4,
            base_epochs: 150,
            specialist_epochs: 100,
            out_of_core_epochs: 150,
            learning_rate: 0.5,
            accuracy_target: 0.95,
            trigger_delta: 0.2,
            union_with_clean: true,
            specialist_clean_mix: true,
            out_of_core_features: FeatureMap::Identity,
            reference_coverage: 0.9,
            epsilon: 0.01,
            grid: cores::default_grid(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train_per_env", self.train_per_env),
            ("validation_per_env", self.validation_per_env),
            ("test_per_env", self.test_per_env),
            ("base_models", self.base_models),
            ("specialists", self.specialists),
            ("out_of_core_models", self.out_of_core_models),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.classes < 2 {
            return Err(Error::InvalidConfig("classes must be at least 2".into()));
        }
        if !(self.reference_coverage > 0.0 && self.reference_coverage <= 1.0) {
            return Err(Error::InvalidConfig("reference_coverage must lie in (0, 1]".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidConfig("epsilon must be nonnegative".into()));
        }
        if self.grid.is_empty() || self.grid.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
            return Err(Error::InvalidConfig("grid must be nonempty and strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCell {
    pub ensemble: String,
    pub environment: String,
    pub coverage: f64,
    pub core_accuracy: Option<f64>,
}

/// Coverage and core accuracy at one fixed threshold for the base,
/// specialist and immunized ensembles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedThresholdTable {
    pub tau: f64,
    pub cells: Vec<CoverageCell>,
}

impl FixedThresholdTable {
    pub fn cell(&self, ensemble: &str, environment: &str) -> Option<&CoverageCell> {
        self.cells
            .iter()
            .find(|c| c.ensemble == ensemble && c.environment == environment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifelongStep {
    pub system: String,
    pub generations: usize,
    pub accuracy: f64,
    pub memory: f64,
    /// `P` did not drop and `I` did not rise by more than the slack.
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentReport {
    pub environment: String,
    /// Routing threshold selected on this environment's validation data.
    pub threshold: Option<f64>,
    pub sweep: SweepCurve,
    /// Coverage drop of the immunized generation on the incoming training batch.
    pub change: ChangeReport,
    pub spawned: bool,
    pub out_of_core_training_samples: usize,
    pub accuracy_base: f64,
    pub accuracy_immunized: f64,
    pub accuracy_all_average: f64,
    pub accuracy_routed: f64,
    pub memory_immunized: f64,
    pub memory_routed: f64,
    pub routed_core_coverage: f64,
    pub steps: Vec<LifelongStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioLog {
    pub seed: u64,
    /// Threshold at which the immunized generation covers the reference fraction of clean validation data.
    pub detection_threshold: f64,
    pub fixed_threshold: FixedThresholdTable,
    pub environments: Vec<EnvironmentReport>,
}

impl ScenarioLog {
    pub fn environment(&self, name: &str) -> Option<&EnvironmentReport> {
        self.environments.iter().find(|e| e.environment == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }
}

pub struct ScenarioOutcome {
    pub log: ScenarioLog,
    /// Routed system of each environment, in log order.
    pub systems: Vec<LogifoldSystem>,
}

struct Splits {
    train: LabeledBatch,
    validation: LabeledBatch,
    test: LabeledBatch,
}

const ENVIRONMENTS: [&str; 3] = ["clean", "weak", "strong"];

fn train_many(
    templates: &[ToyLearner],
    count: usize,
    data: &LabeledBatch,
    epochs: usize,
    seed: u64,
) -> Result<Vec<ToyLearner>> {
    (0..count)
        .map(|k| {
            let sample = data.bootstrap(derive_seed(seed, k as u64));
            train_learner(&templates[k % templates.len()], &sample, epochs)
        })
        .collect()
}

fn as_ensemble(
    name: &str,
    prefix: &str,
    learners: &[ToyLearner],
    space: &Arc<SampleSpace>,
    features: &FeatureTable,
) -> Result<Ensemble> {
    let full = space.full_subset();
    let members = learners
        .iter()
        .enumerate()
        .map(|(k, l)| learner_as_model(format!("{prefix}-{k}"), l, space.clone(), features, &full))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::new(name, space.clone(), members)
}

fn subset_of(space: &SampleSpace, batches: &[&LabeledBatch]) -> Result<SampleSubset> {
    space.subset(batches.iter().flat_map(|b| b.ids()))
}

fn core_cell(e: &Ensemble, env: &str, tau: f64, batch: &SampleSubset) -> Result<CoverageCell> {
    let row = cores::evaluate_threshold(e, batch, tau)?;
    Ok(CoverageCell {
        ensemble: e.name().to_owned(),
        environment: env.to_owned(),
        coverage: row.core_coverage,
        core_accuracy: row.core_accuracy,
    })
}

/// Smallest grid threshold whose core covers the reference fraction of `batch`.
fn reference_threshold(e: &Ensemble, batch: &SampleSubset, config: &ScenarioConfig) -> f64 {
    config
        .grid
        .iter()
        .copied()
        .find(|&tau| {
            cores::compute_core_over(e, tau, batch)
                .map(|c| c.coverage >= config.reference_coverage)
                .unwrap_or(false)
        })
        .unwrap_or(*config.grid.last().unwrap())
}

/// Runs the full pipeline; identical configurations give identical logs.
pub fn run_immunization_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome> {
    config.validate()?;
    let clean = Environment::clean("clean", config.classes, config.radius, config.noise, config.signature_noise);
    let envs = [
        clean.clone(),
        clean.perturbed("weak", config.weak),
        clean.perturbed("strong", config.strong),
    ];
    let mut splits = Vec::new();
    for (e, env) in envs.iter().enumerate() {
        let stream = |k: u64| derive_seed(config.seed, 16 * e as u64 + k);
        splits.push(Splits {
            train: env.sample(config.train_per_env, stream(0), &format!("{}/train/", env.env_id))?,
            validation: env.sample(config.validation_per_env, stream(1), &format!("{}/val/", env.env_id))?,
            test: env.sample(config.test_per_env, stream(2), &format!("{}/test/", env.env_id))?,
        });
    }
    let all: Vec<&LabeledBatch> = splits
        .iter()
        .flat_map(|s| [&s.train, &s.validation, &s.test])
        .collect();
    let space = Arc::new(
        SampleSpace::uniform(all.iter().flat_map(|b| b.ids()), clean.labels())?
            .with_truth(all.iter().flat_map(|b| b.samples.iter().map(|s| s.label.as_str())))?,
    );
    let features = FeatureTable::from_batches(all.iter().copied());
    let labels = clean.labels();
    let dim = clean.feature_dim();

    let fresh = |stream: u64, map: FeatureMap| -> Result<Vec<ToyLearner>> {
        (0..config.base_models.max(config.out_of_core_models))
            .map(|k| {
                ToyLearner::new(
                    dim,
                    labels.clone(),
                    map,
                    config.learning_rate,
                    derive_seed(config.seed, stream * 1000 + k as u64),
                )
            })
            .collect()
    };

    let base = train_many(
        &fresh(100, FeatureMap::Identity)?[..config.base_models],
        config.base_models,
        &splits[0].train,
        config.base_epochs,
        derive_seed(config.seed, 200),
    )?;
    let specialist_data = if config.specialist_clean_mix {
        LabeledBatch::concat([&splits[1].train, &splits[0].train])
    } else {
        splits[1].train.clone()
    };
    let specialists = train_many(
        &base,
        config.specialists,
        &specialist_data,
        config.specialist_epochs,
        derive_seed(config.seed, 300),
    )?;
    let u0 = as_ensemble("base", "u0", &base, &space, &features)?;
    let sp = as_ensemble("specialists", "sp", &specialists, &space, &features)?;
    let u1 = u0.union(&sp, "immunized")?;

    let clean_val = subset_of(&space, &[&splits[0].validation])?;
    let fixed_tau = reference_threshold(&u0, &clean_val, config);
    let mut cells = Vec::new();
    for e in [&u0, &sp, &u1] {
        for (name, s) in ENVIRONMENTS.iter().zip(&splits) {
            cells.push(core_cell(e, name, fixed_tau, &subset_of(&space, &[&s.test])?)?);
        }
    }
    let fixed_threshold = FixedThresholdTable { tau: fixed_tau, cells };

    let env_batches: Vec<(String, Vec<usize>)> = ENVIRONMENTS
        .iter()
        .enumerate()
        .map(|(i, n)| (n.to_string(), vec![i]))
        .chain(std::iter::once(("union".to_string(), vec![0, 1, 2])))
        .collect();

    let detection_threshold = reference_threshold(&u1, &clean_val, config);
    let detector = LogifoldSystem::new(u1.clone(), config.trigger_delta, config.accuracy_target)?
        .with_threshold(0, detection_threshold, &clean_val)?;

    let out_of_core_templates = fresh(400, config.out_of_core_features)?;
    let mut environments = Vec::new();
    let mut systems = Vec::new();
    for (name, parts) in env_batches {
        let pick = |f: fn(&Splits) -> &LabeledBatch| -> Vec<&LabeledBatch> {
            parts.iter().map(|&p| f(&splits[p])).collect()
        };
        let validation = subset_of(&space, &pick(|s| &s.validation))?;
        let test = subset_of(&space, &pick(|s| &s.test))?;
        let train = LabeledBatch::concat(pick(|s| &s.train));

        let change = detect_environment_change(
            &detector.generations()[0],
            &subset_of(&space, &[&train])?,
            config.trigger_delta,
        )?;
        let sys = LogifoldSystem::new(u1.clone(), config.trigger_delta, config.accuracy_target)?;
        let (sys, sweep) = sys.select_threshold(0, &validation, &clean_val, &config.grid)?;
        let threshold = sys.generations()[0].threshold;
        let routed_core_coverage = match threshold {
            Some(tau) => cores::compute_core_over(&u1, tau, &test)?.coverage,
            None => 0.0,
        };

        let gen1 = &sys.generations()[0];
        let outside = |b: &LabeledBatch| -> Result<LabeledBatch> {
            let mut keep = HashSet::new();
            for s in &b.samples {
                let i = space.index_of(&s.id)?;
                if !gen1.claims(i) {
                    keep.insert(i);
                }
            }
            Ok(b.filter(|s| keep.contains(&space.index_of(&s.id).unwrap())))
        };
        let out_of_core = outside(&train)?;
        let spawned = change.triggered && !out_of_core.is_empty();
        let mut all_models = u1.clone();
        let routed = if spawned {
            let spec = SpawnSpec {
                count: config.out_of_core_models,
                epochs: config.out_of_core_epochs,
                seed: derive_seed(config.seed, 500),
                templates: out_of_core_templates[..config.out_of_core_models].to_vec(),
                bootstrap: true,
                clean_outside_core: if config.union_with_clean {
                    Some(outside(&splits[0].train)?)
                } else {
                    None
                },
            };
            let learners = train_spawn_learners(&out_of_core, &spec)?;
            let full = as_ensemble("out-of-core", "oc", &learners, &space, &features)?;
            all_models = u1.union(&full, "all-average")?;
            push_learner_generation(&sys, &learners, &features)?
        } else {
            sys.clone()
        };
        let avg_accuracy = |e: &Ensemble| weighted_accuracy(&space, &test, |i| Ok(e.average_at(i)));

        let accuracy_immunized = avg_accuracy(&u1)?;
        let memory_immunized = ensemble_memory(&u1, &test)?;
        let accuracy_routed = evaluate_p(&routed, &test)?;
        let memory_routed = memory_i(&routed, &test)?;
        let steps = vec![
            LifelongStep {
                system: "immunized".into(),
                generations: 1,
                accuracy: accuracy_immunized,
                memory: memory_immunized,
                admitted: true,
            },
            LifelongStep {
                system: "routed".into(),
                generations: routed.active().count(),
                accuracy: accuracy_routed,
                memory: memory_routed,
                admitted: accuracy_routed >= accuracy_immunized - config.epsilon
                    && memory_routed <= memory_immunized + config.epsilon,
            },
        ];
        environments.push(EnvironmentReport {
            environment: name,
            threshold,
            sweep,
            change,
            spawned,
            out_of_core_training_samples: if spawned { out_of_core.len() } else { 0 },
            accuracy_base: avg_accuracy(&u0)?,
            accuracy_immunized,
            accuracy_all_average: avg_accuracy(&all_models)?,
            accuracy_routed,
            memory_immunized,
            memory_routed,
            routed_core_coverage,
            steps,
        });
        systems.push(routed);
    }
    Ok(ScenarioOutcome {
        log: ScenarioLog {
            seed: config.seed,
            detection_threshold,
            fixed_threshold,
            environments,
        },
        systems,
    })
}
