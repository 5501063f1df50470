//! Entropy calculus for ensembles of partial-domain classifiers.
//!
//! The crate works over finite weighted sample spaces. A [`Model`] is a
//! prediction table defined on part of the space; an [`Ensemble`] collects
//! models and measures their fuzziness and disagreement through the
//! pointwise ensemble entropy `H_x`. Low-entropy regions form *cores*
//! ([`cores`]), which drive threshold selection and the multi-generation
//! routing of [`lifelong`].
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`simplex`] | entropy, cross entropy, gradients, embeddings, argmax |
//! | [`space`] | weighted sample spaces and subsets |
//! | [`model`] | single-model entropy, truth cross entropy, conservation residual |
//! | [`ensemble`] | pointwise/total ensemble entropy, strictness, ensemble conservation |
//! | [`cores`] | cores, non-fuzzy limits, threshold sweeps |
//! | [`lifelong`] | toy learners, learning processes, generations and routing |
//! | [`laws`] | randomized checks of the conservation and core identities |

use thiserror::Error;

pub mod cores;
pub mod ensemble;
pub mod laws;
pub mod lifelong;
pub mod model;
pub mod simplex;
pub mod space;

pub use cores::{CoreResult, NonFuzzyLimit, SweepCurve, SweepRow};
pub use ensemble::{Ensemble, PointwiseReport, Strictness};
pub use model::Model;
pub use simplex::{Dist, LabelSet};
pub use space::{SampleSpace, SampleSubset};

#[derive(Debug, Error)]
pub enum Error {
    #[error("label set must contain at least one label")]
    EmptyLabelSet,

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),

    #[error("logarithm base must be at least 2, got {0}")]
    InvalidBase(usize),

    #[error("distributions have different supports")]
    SupportMismatch,

    #[error("label `{0}` is not in the target label set")]
    NotASubset(String),

    #[error("label `{0}` carries mass outside the restricted support")]
    MassOutsideSupport(String),

    #[error("gradient undefined on the simplex boundary")]
    BoundaryPoint,

    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),

    #[error("unknown sample id `{0}`")]
    UnknownSample(String),

    #[error("sample weight {weight} for `{id}` must be positive and finite")]
    InvalidWeight { id: String, weight: f64 },

    #[error("label universe needs at least 2 labels, got {0}")]
    UniverseTooSmall(usize),

    #[error("subset belongs to a different sample space")]
    ForeignSubset,

    #[error("no truth labels attached to the sample space")]
    MissingTruth,

    #[error("sample `{sample}`: true label `{label}` is outside the model target")]
    TruthOutsideTarget { sample: String, label: String },

    #[error("model `{0}`: target is not contained in the label universe")]
    TargetOutsideUniverse(String),

    #[error("model `{model}`: prediction for `{sample}` has the wrong support")]
    PredictionSupport { model: String, sample: String },

    #[error("models live on different sample spaces")]
    SpaceMismatch,

    #[error("duplicate model id `{0}`")]
    DuplicateModel(String),

    #[error("ensemble members have different targets; the identity needs one common base")]
    HeterogeneousTargets,

    #[error("threshold {threshold} is not below the non-fuzzy bound {bound}")]
    BoundViolated { threshold: f64, bound: f64 },

    #[error("non-fuzzy limit violated at sample `{sample}`: {reason}")]
    NonFuzzyViolation { sample: String, reason: String },

    #[error("no data")]
    NoData,

    #[error("sweep curve is empty")]
    EmptyCurve,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("generation {0} has no selected threshold")]
    NoThreshold(usize),

    #[error("no active generation")]
    NoActiveGeneration,

    #[error("refusing to annihilate generation {0}: it is the only active generation")]
    LastActiveGeneration(usize),

    #[error("unknown generation {0}")]
    UnknownGeneration(usize),

    #[error("features missing for sample `{0}`")]
    MissingFeatures(String),
}

pub type Result<T> = std::result::Result<T, Error>;
