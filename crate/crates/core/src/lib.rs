//! Decision-support core for urban nature-based solutions (NBS).
//!
//! The crate bundles the common 32-NBS catalogue with its three-level
//! classification, turns per-project binary assessments into crossed
//! urban-challenge / ecosystem-service scores, runs the multivariate
//! statistics (evenness, PCA with iterative imputation, one-sample
//! chi-square) and replays the terminology decision procedure.
//!
//! Everything here is synchronous and operates on immutable snapshots;
//! the HTTP service and CLI live in sibling crates.

pub mod analysis;
pub mod catalogue;
pub mod consensus;
pub mod dataset;
pub mod export;
pub mod ids;
pub mod query;
pub mod scoring;
pub mod stats;
pub mod tsv;

pub use analysis::{Analysis, AnalysisConfig, AnalysisError};
pub use catalogue::{Catalogue, CatalogueError};
pub use dataset::{DataSource, Dataset, DatasetError};
pub use ids::{FacetId, NbsId, ProjectId, TaxonomyCode};
pub use scoring::ScoreMatrix;
