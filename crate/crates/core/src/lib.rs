//! Detection of temporal-relation bias in annotated corpora, conflict subset
//! selection, counterfactual augmentation and evaluation.

pub mod bias;
pub mod cda;
pub mod config;
pub mod conflict;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod relation;

pub use config::{DatasetConfig, NarrativeRule, Thresholds};
pub use error::{Error, Result};
pub use relation::{BiasType, DatasetKind, RelationLabel};
