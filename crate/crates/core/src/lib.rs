//! Supervised feature scaling with decision-tree-derived factors.
//!
//! The crate is organised the same way the workflow runs:
//!
//! - [`dataset`] loads numeric CSV tables, computes quartiles and performs
//!   seeded train/test splits.
//! - [`tree`] grows an unpruned CART-style tree and turns the depth at which
//!   each feature is first used into a per-feature scaling factor.
//! - [`scalers`] fits and applies DTization and the four baseline scalers
//!   (min-max, standard, log, robust) and persists fitted scalers.
//! - [`metrics`] and [`models`] provide the evaluation side: KNN, ordinary
//!   least squares and the classification/regression metric suites.
//! - [`bench`] wires everything into the scaler comparison protocol.

pub mod bench;
pub mod dataset;
pub mod metrics;
pub mod models;
pub mod scalers;
pub mod tree;

pub use dataset::{Dataset, QuartileSummary, SplitDataset, Target, TaskKind};
pub use scalers::{FittedScaler, ScalerMethod};
pub use tree::{FactorMode, ScalingFactorTable};
