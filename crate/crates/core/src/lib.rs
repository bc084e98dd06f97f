//! Contextual grounding toolkit for bias-detection classifiers.

pub mod context;
pub mod corpus;
pub mod encoder;
pub mod metrics;
pub mod ontology;
pub mod trainer;
