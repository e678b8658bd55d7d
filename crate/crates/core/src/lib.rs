//! Reconstruction of binary classifiers from one-sided counterfactual
//! explanations: surrogate training with a counterfactual clamping loss,
//! tangent-hyperplane polytope surrogates, and desk-scale checks of the
//! query-complexity bounds that motivate both.

pub mod attack;
pub mod cf;
pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod theory;

pub use error::{Error, Result};
pub use nn::{BinaryClassifier, DenseNetwork, LabeledPoint, NetworkArchitecture, TrainingConfig};
