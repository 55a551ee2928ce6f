//! Validation toolkit for object detectors on segmentation-annotated data:
//! localization criteria, one-to-one matching, counting metrics and average
//! precision, ensemble postprocessing, and multi-center analyses.

pub mod analysis;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fusion;
pub mod geometry;
pub mod localization;
pub mod matching;
pub mod metrics;

pub use error::{Error, Result};
pub use eval::EvalSet;
pub use exec::Exec;
pub use localization::{CriterionKind, CriterionSpec, TauUnit};
pub use matching::AssignmentStrategy;
