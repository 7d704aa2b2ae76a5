use nalgebra::DMatrix;
use serde::Serialize;

use super::pca::{correlation, sorted_eigen, standardize, PcaInput};
use super::{column_moments, StatsError};
use crate::catalogue::FacetDef;
use crate::ids::{FacetId, NbsId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImputedCell {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// A dense data set ready for [`super::pca`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedInput {
    pub rows: Vec<NbsId>,
    pub variables: Vec<FacetDef>,
    pub data: DMatrix<f64>,
    pub imputed_cells: Vec<ImputedCell>,
    pub iterations: usize,
    pub converged: bool,
}

impl CompletedInput {
    /// Wraps an input that has no missing cells.
    pub fn from_complete(input: &PcaInput) -> Result<Self, StatsError> {
        let missing = input.missing_count();
        if missing > 0 {
            return Err(StatsError::MissingCells(missing));
        }
        Ok(Self {
            rows: input.rows.clone(),
            variables: input.variables.clone(),
            data: DMatrix::from_fn(input.rows.len(), input.variables.len(), |i, j| {
                input.values[i][j].expect("checked complete")
            }),
            imputed_cells: Vec::new(),
            iterations: 0,
            converged: true,
        })
    }
}

/// Fills missing cells by alternating a rank-`k` standardized PCA
/// reconstruction with overwriting only the missing cells, starting from
/// column means. Observed cells are never touched.
///
/// Hitting `max_iter` is not an error; the result carries `converged = false`.
pub fn impute_iterative_pca(input: &PcaInput, k: usize, tol: f64, max_iter: usize) -> Result<CompletedInput, StatsError> {
    let (n, p) = (input.rows.len(), input.variables.len());
    let limit = n.min(p);
    if k == 0 || k >= limit {
        return Err(StatsError::InvalidRank { k, limit });
    }
    for (i, row) in input.values.iter().enumerate() {
        if row.iter().all(Option::is_none) {
            return Err(StatsError::EmptyRow(input.rows[i].to_string()));
        }
    }
    let mut col_means = Vec::with_capacity(p);
    for (j, var) in input.variables.iter().enumerate() {
        let observed: Vec<f64> = input.values.iter().filter_map(|r| r[j]).collect();
        if observed.is_empty() {
            return Err(StatsError::EmptyColumn(var.id.to_string()));
        }
        col_means.push(observed.iter().sum::<f64>() / observed.len() as f64);
    }

    let missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .filter(|&(i, j)| input.values[i][j].is_none())
        .collect();
    let mut data = DMatrix::from_fn(n, p, |i, j| input.values[i][j].unwrap_or(col_means[j]));
    let names: Vec<FacetId> = input.variables.iter().map(|v| v.id.clone()).collect();

    let mut iterations = 0;
    let mut converged = missing.is_empty();
    while !converged && iterations < max_iter {
        iterations += 1;
        let (z, _, _) = standardize(&data, &names)?;
        let (means, sds) = column_moments(&data);
        let (_, vectors) = sorted_eigen(correlation(&z));
        let vk = vectors.columns(0, k);
        let fitted = &z * vk * vk.transpose();
        let mut change = 0.0f64;
        for &(i, j) in &missing {
            let value = fitted[(i, j)] * sds[j] + means[j];
            change = change.max((value - data[(i, j)]).abs());
            data[(i, j)] = value;
        }
        converged = change < tol;
    }

    Ok(CompletedInput {
        rows: input.rows.clone(),
        variables: input.variables.clone(),
        imputed_cells: missing
            .iter()
            .map(|&(row, col)| ImputedCell {
                row,
                col,
                value: data[(row, col)],
            })
            .collect(),
        data,
        iterations,
        converged,
    })
}
