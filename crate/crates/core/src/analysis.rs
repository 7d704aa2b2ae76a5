//! The full batch pipeline over one dataset: crossed scores, evenness,
//! pretreated and imputed PCA, and the name decisions.

use serde::Serialize;
use thiserror::Error;

use crate::consensus::{self, ConsensusError, NameDecision, DEFAULT_ALPHA};
use crate::dataset::Dataset;
use crate::scoring::{self, ScoreMatrix, ScoringError};
use crate::stats::{self, EvennessResult, PcaInput, PcaResult, StatsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("scoring: {0}")]
    Scoring(#[from] ScoringError),
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("name resolution: {0}")]
    Consensus(#[from] ConsensusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisConfig {
    /// Components used by the imputation reconstruction.
    pub k: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub alpha: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            k: 2,
            tol: 1e-8,
            max_iter: 1000,
            alpha: DEFAULT_ALPHA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub config: AnalysisConfig,
    pub matrix: ScoreMatrix,
    /// Urban challenges plus the four ES category means; evenness is read from here.
    pub category_matrix: ScoreMatrix,
    pub evenness: Vec<EvennessResult>,
    pub pca_input: PcaInput,
    pub pca: PcaResult,
    pub names: Vec<NameDecision>,
}

impl Analysis {
    pub fn run(dataset: &Dataset, config: &AnalysisConfig) -> Result<Self, AnalysisError> {
        let matrix = scoring::score_matrix(&dataset.catalogue, &dataset.raw_scores)?;
        Self::from_matrix(dataset, matrix, config)
    }

    /// Runs everything downstream of scoring on a given matrix, e.g. one
    /// re-imported from an export.
    pub fn from_matrix(dataset: &Dataset, matrix: ScoreMatrix, config: &AnalysisConfig) -> Result<Self, AnalysisError> {
        let category_matrix = matrix.with_es_categories();
        let evenness = stats::evenness_all(&category_matrix)?;
        let pca_input = stats::pretreat_for_pca(&matrix)?;
        let completed = stats::impute_iterative_pca(&pca_input, config.k, config.tol, config.max_iter)?;
        let pca = stats::pca(&completed)?;
        let names = consensus::resolve_all(&dataset.catalogue.ids(), &dataset.names, config.alpha)?;
        Ok(Self {
            config: *config,
            matrix,
            category_matrix,
            evenness,
            pca_input,
            pca,
            names,
        })
    }
}
