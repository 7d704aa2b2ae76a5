//! Diversity, evenness, PCA with iterative imputation, and the df = 1
//! chi-square test.

mod chisq;
mod impute;
mod pca;
mod shannon;

use thiserror::Error;

pub use chisq::{chi_square_one_sample, ChiSquareResult};
pub use impute::{impute_iterative_pca, CompletedInput, ImputedCell};
pub use pca::{pca, pretreat_for_pca, PcaInput, PcaResult};
pub use shannon::{evenness, evenness_all, shannon_diversity, EvennessResult};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("scores must be finite and non-negative, got {0}")]
    InvalidScore(f64),
    #[error("diversity needs at least one positive score")]
    AllZero,
    #[error("unknown NBS id `{0}`")]
    UnknownNbs(String),
    #[error("no variables retained after pretreatment")]
    NoVariables,
    #[error("variable `{0}` has zero variance and cannot be standardized")]
    ZeroVariance(String),
    #[error("{0} cells are still missing; impute first")]
    MissingCells(usize),
    #[error("need at least 2 rows and 2 variables, got {rows} x {cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("component count {k} must satisfy 1 <= k < {limit}")]
    InvalidRank { k: usize, limit: usize },
    #[error("row `{0}` has no observed values")]
    EmptyRow(String),
    #[error("variable `{0}` has no observed values")]
    EmptyColumn(String),
    #[error("a chi-square test needs at least one observation")]
    EmptySample,
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Column means and sample standard deviations (n - 1 denominator).
pub(crate) fn column_moments(data: &nalgebra::DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = data.nrows() as f64;
    let mut means = Vec::with_capacity(data.ncols());
    let mut sds = Vec::with_capacity(data.ncols());
    for col in data.column_iter() {
        let mean = col.sum() / n;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        means.push(mean);
        sds.push((ss / (n - 1.0)).sqrt());
    }
    (means, sds)
}
