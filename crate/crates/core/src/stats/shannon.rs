use serde::Serialize;

use super::StatsError;
use crate::ids::NbsId;
use crate::scoring::ScoreMatrix;

/// Shannon diversity (natural log) of a score vector read as relative
/// abundances. Zero entries contribute nothing.
pub fn shannon_diversity(scores: &[f64]) -> Result<f64, StatsError> {
    if let Some(&bad) = scores.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(StatsError::InvalidScore(bad));
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(StatsError::AllZero);
    }
    let h = -scores
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| {
            let p = s / total;
            p * p.ln()
        })
        .sum::<f64>();
    // -0.0 for single support
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvennessResult {
    pub nbs: NbsId,
    pub diversity: f64,
    /// Number of variables scoring above zero.
    pub facet_count: usize,
    /// `None` when fewer than two variables score above zero.
    pub evenness: Option<f64>,
}

/// Pielou evenness of one matrix row, missing cells counted as zero.
pub fn evenness(nbs: &NbsId, matrix: &ScoreMatrix) -> Result<EvennessResult, StatsError> {
    let row = matrix
        .row_index(nbs)
        .ok_or_else(|| StatsError::UnknownNbs(nbs.to_string()))?;
    let values: Vec<f64> = matrix.row(row).iter().map(|c| c.unwrap_or(0.0)).collect();
    let facet_count = values.iter().filter(|&&v| v > 0.0).count();
    let diversity = if facet_count == 0 { 0.0 } else { shannon_diversity(&values)? };
    let evenness = (facet_count >= 2).then(|| diversity / (facet_count as f64).ln());
    Ok(EvennessResult {
        nbs: nbs.clone(),
        diversity,
        facet_count,
        evenness,
    })
}

pub fn evenness_all(matrix: &ScoreMatrix) -> Result<Vec<EvennessResult>, StatsError> {
    matrix.rows().iter().map(|id| evenness(id, matrix)).collect()
}
