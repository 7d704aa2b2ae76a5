use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::impute::{CompletedInput, ImputedCell};
use super::{column_moments, StatsError};
use crate::catalogue::{EsCategory, FacetDef, FacetKind};
use crate::ids::{FacetId, NbsId};
use crate::scoring::ScoreMatrix;

/// Variables prepared for PCA; cells may still be missing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaInput {
    pub rows: Vec<NbsId>,
    pub variables: Vec<FacetDef>,
    /// Row-major, one inner vector per NBS.
    pub values: Vec<Vec<Option<f64>>>,
    pub standardized: bool,
    /// Urban-challenge columns removed for having too many missing cells.
    pub dropped: Vec<FacetId>,
}

impl PcaInput {
    pub fn new(rows: Vec<NbsId>, variables: Vec<FacetDef>, values: Vec<Vec<Option<f64>>>) -> Result<Self, StatsError> {
        if values.len() != rows.len() || values.iter().any(|r| r.len() != variables.len()) {
            return Err(StatsError::Shape(format!(
                "{} rows x {} variables with {} value rows",
                rows.len(),
                variables.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().flatten().flatten().find(|v| !v.is_finite()) {
            return Err(StatsError::InvalidScore(*bad));
        }
        Ok(Self {
            rows,
            variables,
            values,
            standardized: true,
            dropped: Vec::new(),
        })
    }

    /// Uses every column of `matrix` as is.
    pub fn from_matrix(matrix: &ScoreMatrix) -> Self {
        Self {
            rows: matrix.rows().to_vec(),
            variables: matrix.columns().to_vec(),
            values: (0..matrix.n_rows()).map(|r| matrix.row(r).to_vec()).collect(),
            standardized: true,
            dropped: Vec::new(),
        }
    }

    pub fn variable_ids(&self) -> Vec<FacetId> {
        self.variables.iter().map(|v| v.id.clone()).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().flatten().filter(|c| c.is_none()).count()
    }
}

/// Keeps urban challenges with at most one missing cell and replaces the
/// ecosystem services by their four per-category means.
pub fn pretreat_for_pca(matrix: &ScoreMatrix) -> Result<PcaInput, StatsError> {
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, col) in matrix.columns().iter().enumerate() {
        if col.kind != FacetKind::UrbanChallenge {
            continue;
        }
        if matrix.column(j).filter(Option::is_none).count() > 1 {
            dropped.push(col.id.clone());
        } else {
            keep.push(j);
        }
    }
    let categories: Vec<EsCategory> = EsCategory::ALL
        .into_iter()
        .filter(|c| matrix.columns().iter().any(|f| f.es_category == Some(*c)))
        .collect();

    let mut variables: Vec<FacetDef> = keep.iter().map(|&j| matrix.columns()[j].clone()).collect();
    variables.extend(categories.iter().map(|&c| FacetDef::category_aggregate(c)));
    if variables.is_empty() {
        return Err(StatsError::NoVariables);
    }
    let values = (0..matrix.n_rows())
        .map(|r| {
            keep.iter()
                .map(|&j| matrix.get(r, j))
                .chain(categories.iter().map(|&c| matrix.category_mean(r, c)))
                .collect()
        })
        .collect();
    Ok(PcaInput {
        rows: matrix.rows().to_vec(),
        variables,
        values,
        standardized: true,
        dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaResult {
    pub rows: Vec<NbsId>,
    pub variables: Vec<FacetId>,
    /// Non-increasing, clamped at zero.
    pub eigenvalues: Vec<f64>,
    pub variance_fraction: Vec<f64>,
    /// `loadings[variable][component]`; columns are orthonormal.
    pub loadings: Vec<Vec<f64>>,
    /// `component_scores[row][component]`.
    pub component_scores: Vec<Vec<f64>>,
    pub imputed_cells: Vec<ImputedCell>,
    pub imputation_iterations: usize,
    pub imputation_converged: bool,
}

impl PcaResult {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Share of variance carried by the first `m` components.
    pub fn cumulative_fraction(&self, m: usize) -> f64 {
        self.variance_fraction.iter().take(m).sum()
    }
}

/// Standardizes each column with its sample standard deviation.
pub(crate) fn standardize(data: &DMatrix<f64>, names: &[FacetId]) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>), StatsError> {
    let (means, sds) = column_moments(data);
    for (j, sd) in sds.iter().enumerate() {
        if !(*sd > 1e-12 * means[j].abs().max(1.0)) {
            return Err(StatsError::ZeroVariance(names[j].to_string()));
        }
    }
    let mut z = data.clone();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.apply(|v| *v = (*v - means[j]) / sds[j]);
    }
    Ok((z, means, sds))
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue, with
/// each eigenvector's largest-magnitude entry made positive.
pub(crate) fn sorted_eigen(sym: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(dst, &v);
    }
    (values, vectors)
}

pub(crate) fn correlation(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = z.transpose() * z / (z.nrows() as f64 - 1.0);
    // exact symmetry for the solver
    let n = c.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = (c[(i, j)] + c[(j, i)]) / 2.0;
            c[(i, j)] = m;
            c[(j, i)] = m;
        }
    }
    c
}

/// Standardized PCA of a complete data set.
pub fn pca(input: &CompletedInput) -> Result<PcaResult, StatsError> {
    let data = &input.data;
    if data.nrows() < 2 || data.ncols() < 2 {
        return Err(StatsError::TooSmall {
            rows: data.nrows(),
            cols: data.ncols(),
        });
    }
    let names: Vec<FacetId> = input.variables.iter().map(|v| v.id.clone()).collect();
    let (z, _, _) = standardize(data, &names)?;
    let (eigenvalues, vectors) = sorted_eigen(correlation(&z));
    let total: f64 = eigenvalues.iter().sum();
    let scores = &z * &vectors;
    Ok(PcaResult {
        rows: input.rows.clone(),
        variables: names,
        variance_fraction: eigenvalues.iter().map(|l| l / total).collect(),
        eigenvalues,
        loadings: vectors.row_iter().map(|r| r.iter().copied().collect()).collect(),
        component_scores: scores.row_iter().map(|r| r.iter().copied().collect()).collect(),
        imputed_cells: input.imputed_cells.clone(),
        imputation_iterations: input.iterations,
        imputation_converged: input.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::impute_iterative_pca;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn var(id: &str) -> FacetDef {
        FacetDef {
            id: FacetId::from(id),
            kind: FacetKind::UrbanChallenge,
            es_category: None,
            label: id.into(),
        }
    }

    fn dense(rows: &[Vec<f64>]) -> CompletedInput {
        let ids = (0..rows.len()).map(|i| NbsId::new(format!("NBS{}", i + 1))).collect();
        let vars = (0..rows[0].len()).map(|j| var(&format!("v{j}"))).collect();
        let values = rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
        CompletedInput::from_complete(&PcaInput::new(ids, vars, values).unwrap()).unwrap()
    }

    /// Cyclic Jacobi rotations on a dense symmetric matrix.
    fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = a.len();
        let mut a = a.to_vec();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let vkp = row[p];
                        let vkq = row[q];
                        row[p] = c * vkp - s * vkq;
                        row[q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..n).map(|j| (a[j][j], v.iter().map(|r| r[j]).collect())).collect();
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
        for (_, vec) in pairs.iter_mut() {
            let pivot = vec.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            if pivot < 0.0 {
                vec.iter_mut().for_each(|x| *x = -*x);
            }
        }
        (pairs.iter().map(|p| p.0).collect(), pairs.into_iter().map(|p| p.1).collect())
    }

    /// Pearson correlation computed pairwise from raw columns.
    fn correlation_oracle(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows.len() as f64;
        let p = rows[0].len();
        let mean = |j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / n;
        (0..p)
            .map(|a| {
                (0..p)
                    .map(|b| {
                        let (ma, mb) = (mean(a), mean(b));
                        let cov: f64 = rows.iter().map(|r| (r[a] - ma) * (r[b] - mb)).sum();
                        let va: f64 = rows.iter().map(|r| (r[a] - ma).powi(2)).sum();
                        let vb: f64 = rows.iter().map(|r| (r[b] - mb).powi(2)).sum();
                        cov / (va * vb).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    fn random_rows(seed: u64, n: usize, p: usize) -> Vec<Vec<f64>> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..n).map(|_| (0..p).map(|_| rng.gen_range(0.0..1.0)).collect()).collect()
    }

    #[test]
    fn matches_jacobi_oracle_on_random_5x4() {
        for seed in 0..20 {
            let rows = random_rows(seed, 5, 4);
            let r = pca(&dense(&rows)).unwrap();
            let (values, vectors) = jacobi_eigen(&correlation_oracle(&rows));
            for m in 0..4 {
                assert!((r.eigenvalues[m] - values[m].max(0.0)).abs() < 1e-9, "seed {seed} eigenvalue {m}");
                // 5 rows give a rank-4 correlation at most; the null-space
                // vector is only determined up to sign when it is unique.
                if values[m] > 1e-6 {
                    for j in 0..4 {
                        assert!((r.loadings[j][m] - vectors[m][j]).abs() < 1e-9, "seed {seed} loading {j},{m}");
                    }
                }
            }
        }
    }

    #[test]
    fn perfectly_correlated_pair() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 3.0 * i as f64 + 1.0]).collect();
        let r = pca(&dense(&rows)).unwrap();
        assert!((r.variance_fraction[0] - 1.0).abs() < 1e-9);
        assert!(r.variance_fraction[1].abs() < 1e-9);
    }

    #[test]
    fn uncorrelated_equal_variance_gives_equal_eigenvalues() {
        // Full 2^3 factorial design: columns are exactly orthogonal.
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..3).map(|b| if i >> b & 1 == 1 { 1.0 } else { -1.0 }).collect())
            .collect();
        let r = pca(&dense(&rows)).unwrap();
        for l in &r.eigenvalues {
            assert!((l - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_variance_names_the_variable() {
        let rows = vec![vec![1.0, 0.5], vec![2.0, 0.5], vec![3.0, 0.5]];
        assert_eq!(pca(&dense(&rows)), Err(StatsError::ZeroVariance("v1".into())));
    }

    #[test]
    fn too_small() {
        let rows = vec![vec![1.0, 0.5]];
        assert!(matches!(pca(&dense(&rows)), Err(StatsError::TooSmall { .. })));
    }

    fn matrix_with(cols: Vec<FacetDef>, values: Vec<Vec<Option<f64>>>) -> ScoreMatrix {
        let ids = (0..values.len()).map(|i| NbsId::new(format!("NBS{}", i + 1))).collect();
        ScoreMatrix::from_rows(ids, cols, values).unwrap()
    }

    fn es(id: &str, c: EsCategory) -> FacetDef {
        FacetDef {
            id: FacetId::from(id),
            kind: FacetKind::EcosystemService,
            es_category: Some(c),
            label: id.into(),
        }
    }

    #[test]
    fn pretreatment_drops_and_groups() {
        let cols = vec![
            var("keep"),
            var("one_missing"),
            var("two_missing"),
            es("r1", EsCategory::Regulating),
            es("r2", EsCategory::Regulating),
            es("r3", EsCategory::Regulating),
            es("r4", EsCategory::Regulating),
        ];
        let m = matrix_with(
            cols,
            vec![
                vec![Some(0.1), None, None, Some(1.0), Some(0.0), None, Some(1.0)],
                vec![Some(0.2), Some(0.3), None, Some(1.0), Some(1.0), Some(1.0), Some(1.0)],
                vec![Some(0.3), Some(0.4), Some(1.0), None, None, None, None],
            ],
        );
        let input = pretreat_for_pca(&m).unwrap();
        assert_eq!(input.variable_ids(), ["keep", "one_missing", "regulating"].map(FacetId::from));
        assert_eq!(input.dropped, [FacetId::from("two_missing")]);
        assert!((input.values[0][2].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(input.values[1][2], Some(1.0));
        assert_eq!(input.values[2][2], None);
        assert!(input.standardized);
    }

    #[test]
    fn pretreatment_needs_a_variable() {
        let m = matrix_with(vec![var("a")], vec![vec![None], vec![None]]);
        assert_eq!(pretreat_for_pca(&m), Err(StatsError::NoVariables));
    }

    #[test]
    fn bundled_complete_matrix_keeps_all_fourteen() {
        let ds = crate::Dataset::bundled().unwrap();
        let m = crate::scoring::score_matrix(&ds.catalogue, &ds.raw_scores).unwrap();
        let filled = ScoreMatrix::new(
            m.rows().to_vec(),
            m.columns().to_vec(),
            (0..m.n_rows()).flat_map(|r| m.row(r).iter().map(|c| Some(c.unwrap_or(0.5))).collect::<Vec<_>>()).collect(),
        )
        .unwrap();
        let input = pretreat_for_pca(&filled).unwrap();
        assert_eq!(input.variables.len(), 14);
        assert!(input.dropped.is_empty());
    }

    proptest! {
        #[test]
        fn decomposition_invariants(seed in any::<u64>(), n in 3usize..12, p in 2usize..6) {
            let rows = random_rows(seed, n, p);
            let r = pca(&dense(&rows)).unwrap();
            prop_assert!((r.eigenvalues.iter().sum::<f64>() - p as f64).abs() < 1e-9);
            prop_assert!((r.variance_fraction.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(r.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(r.eigenvalues.iter().all(|&l| l >= 0.0));
            for a in 0..p {
                for b in 0..p {
                    let dot: f64 = (0..p).map(|j| r.loadings[j][a] * r.loadings[j][b]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    prop_assert!((dot - want).abs() < 1e-9);
                }
            }
            // scores x loadings^T recovers the standardized data
            let names: Vec<FacetId> = (0..p).map(|j| FacetId::new(format!("v{j}"))).collect();
            let data = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
            let (z, _, _) = standardize(&data, &names).unwrap();
            for i in 0..n {
                for j in 0..p {
                    let back: f64 = (0..p).map(|m| r.component_scores[i][m] * r.loadings[j][m]).sum();
                    prop_assert!((back - z[(i, j)]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn imputed_input_feeds_pca() {
        let rows = random_rows(7, 8, 4);
        let ids = (0..8).map(|i| NbsId::new(format!("NBS{}", i + 1))).collect();
        let vars = (0..4).map(|j| var(&format!("v{j}"))).collect();
        let mut values: Vec<Vec<Option<f64>>> = rows.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
        values[3][2] = None;
        let input = PcaInput::new(ids, vars, values).unwrap();
        let done = impute_iterative_pca(&input, 2, 1e-8, 1000).unwrap();
        let r = pca(&done).unwrap();
        assert_eq!(r.imputed_cells.len(), 1);
        assert_eq!((r.imputed_cells[0].row, r.imputed_cells[0].col), (3, 2));
    }
}
