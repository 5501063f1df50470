//! Toy learners, learning processes and multi-generation systems.

pub mod environment;
pub mod learner;
pub mod process;
pub mod scenario;
pub mod system;

pub use environment::{class_labels, derive_seed, separable_fixture, Environment, Perturbation};
pub use learner::{
    learner_accuracy, learner_as_model, train_learner, train_learner_logged, FeatureMap, FeatureTable,
    LabeledBatch, LabeledSample, ToyLearner,
};
pub use process::{run_learning_process, LearningLog, LearningRecord, LearningSchedule, StopReason};
pub use scenario::{run_immunization_scenario, ScenarioConfig, ScenarioLog, ScenarioOutcome};
pub use system::{
    annihilate_if_unusable, detect_environment_change, evaluate_p, imm_route, imm_route_id, memory_i,
    spawn_generation, ChangeReport, Generation, GenerationStatus, LogifoldSystem, Routed, SpawnSpec,
};
