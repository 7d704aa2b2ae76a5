use serde::Serialize;
use statrs::function::erf::erfc;

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Goodness-of-fit of two counts against an even split, no continuity
/// correction. For one degree of freedom the upper tail is
/// `P(chi2 >= x) = erfc(sqrt(x / 2))`.
pub fn chi_square_one_sample(a: u64, b: u64) -> Result<ChiSquareResult, StatsError> {
    let n = a + b;
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    let diff = a.abs_diff(b) as f64;
    let statistic = diff * diff / n as f64;
    Ok(ChiSquareResult {
        statistic,
        df: 1,
        p_value: erfc((statistic / 2.0).sqrt()),
    })
}
