//! Rule-based patching of binary classifiers.
//!
//! Users correct boolean-rule explanations of a model's predictions; each
//! correction is compiled into an instance transformation that is applied at
//! prediction time, so the underlying model never has to be retrained.

pub mod rules;
pub mod simulation;
pub mod data;
pub mod explainer;
pub mod model;
pub mod overlay;
pub mod transform;
