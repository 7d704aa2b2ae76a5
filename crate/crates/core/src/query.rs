//! Planner-facing queries: per-solution profiles, rankings by a facet, an
//! ES category or a weighted blend, and PCA scatter coordinates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::{Catalogue, EsCategory, FacetKind};
use crate::ids::{FacetId, NbsId, TaxonomyCode};
use crate::scoring::ScoreMatrix;
use crate::stats::{evenness, EvennessResult, PcaResult, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("unknown NBS id `{0}`")]
    UnknownNbs(String),
    #[error("unknown facet `{0}`")]
    UnknownFacet(String),
    #[error("unknown taxonomy code `{0}`")]
    UnknownCode(String),
    #[error("weight for `{facet}` must be finite and >= 0, got {weight}")]
    InvalidWeight { facet: String, weight: f64 },
    #[error("at least one weight must be positive")]
    NoPositiveWeight,
    #[error("top_n must be at least 1")]
    ZeroTopN,
    #[error("no NBS left after filtering by `{0}`")]
    EmptyResult(String),
    #[error("component {dim} requested but only {available} exist (dimensions are 1-based)")]
    DimOutOfRange { dim: usize, available: usize },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankTarget {
    Facet(FacetId),
    Category(EsCategory),
    /// Additive blend; weights are normalized to sum 1.
    Weights(BTreeMap<FacetId, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRequest {
    pub target: RankTarget,
    #[serde(default)]
    pub filter: Option<TaxonomyCode>,
    #[serde(default = "default_top_n")]
    pub top_n: usize,
}

fn default_top_n() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub nbs: NbsId,
    pub name: String,
    pub value: f64,
    /// Some contributing cell was missing and counted as zero.
    pub unassessed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub request: RankingRequest,
    pub entries: Vec<RankedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacetScore {
    pub facet: FacetId,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<EsCategory>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryMean {
    pub category: EsCategory,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbsProfile {
    pub nbs: NbsId,
    pub name: String,
    pub uc_scores: Vec<FacetScore>,
    pub es_scores: Vec<FacetScore>,
    pub es_category_means: Vec<CategoryMean>,
    pub evenness: EvennessResult,
    pub taxonomy_path: Vec<TaxonomyCode>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub nbs: NbsId,
    pub x: f64,
    pub y: f64,
    /// Second-level taxonomy code, used to colour the point.
    pub color_key: TaxonomyCode,
}

/// Read-only view over one catalogue and its score matrix.
#[derive(Debug, Clone, Copy)]
pub struct Explorer<'a> {
    pub catalogue: &'a Catalogue,
    pub matrix: &'a ScoreMatrix,
}

const TIE_SCALE: f64 = 1e12;

struct Weighted {
    col: Option<usize>,
    weight: f64,
}

impl<'a> Explorer<'a> {
    pub fn new(catalogue: &'a Catalogue, matrix: &'a ScoreMatrix) -> Self {
        Self { catalogue, matrix }
    }

    pub fn profile(&self, nbs: &NbsId) -> Result<NbsProfile, QueryError> {
        let entry = self
            .catalogue
            .entry(nbs)
            .map_err(|_| QueryError::UnknownNbs(nbs.to_string()))?;
        let row = self.matrix.row_index(nbs);
        let cell = |facet: &FacetId| row.zip(self.matrix.column_index(facet)).and_then(|(r, c)| self.matrix.get(r, c));
        let mut uc_scores = Vec::new();
        let mut es_scores = Vec::new();
        for f in self.catalogue.facets() {
            let score = FacetScore {
                facet: f.id.clone(),
                label: f.label.clone(),
                category: f.es_category,
                value: cell(&f.id),
            };
            match f.kind {
                FacetKind::UrbanChallenge => uc_scores.push(score),
                FacetKind::EcosystemService => es_scores.push(score),
            }
        }
        let es_category_means = EsCategory::ALL
            .into_iter()
            .map(|category| CategoryMean {
                category,
                value: row.and_then(|r| self.matrix.category_mean(r, category)),
            })
            .collect();
        let view = self.matrix.with_es_categories();
        let evenness = match row {
            Some(_) => evenness(nbs, &view)?,
            None => EvennessResult {
                nbs: nbs.clone(),
                diversity: 0.0,
                facet_count: 0,
                evenness: None,
            },
        };
        Ok(NbsProfile {
            nbs: nbs.clone(),
            name: entry.final_name.clone(),
            uc_scores,
            es_scores,
            es_category_means,
            evenness,
            taxonomy_path: self
                .catalogue
                .taxonomy()
                .path(&entry.taxonomy_leaf)
                .map_err(|e| QueryError::UnknownCode(e.to_string()))?,
        })
    }

    fn weights(&self, target: &RankTarget) -> Result<Vec<Weighted>, QueryError> {
        let column = |f: &FacetId| -> Result<Option<usize>, QueryError> {
            if self.catalogue.facet(f).is_none() && self.matrix.column_index(f).is_none() {
                return Err(QueryError::UnknownFacet(f.to_string()));
            }
            Ok(self.matrix.column_index(f))
        };
        match target {
            RankTarget::Facet(f) => Ok(vec![Weighted {
                col: column(f)?,
                weight: 1.0,
            }]),
            RankTarget::Category(_) => Ok(Vec::new()),
            RankTarget::Weights(map) => {
                for (f, &w) in map {
                    if !w.is_finite() || w < 0.0 {
                        return Err(QueryError::InvalidWeight {
                            facet: f.to_string(),
                            weight: w,
                        });
                    }
                }
                let total: f64 = map.values().sum();
                if !(total > 0.0) {
                    return Err(QueryError::NoPositiveWeight);
                }
                map.iter()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(f, &w)| {
                        Ok(Weighted {
                            col: column(f)?,
                            weight: w / total,
                        })
                    })
                    .collect()
            }
        }
    }

    /// Composite value and unassessed flag for one matrix row.
    fn composite(&self, row: usize, target: &RankTarget, weights: &[Weighted]) -> (f64, bool) {
        if let RankTarget::Category(c) = target {
            return match self.matrix.category_mean(row, *c) {
                Some(v) => (v, false),
                None => (0.0, true),
            };
        }
        let mut value = 0.0;
        let mut unassessed = false;
        for w in weights {
            match w.col.and_then(|c| self.matrix.get(row, c)) {
                Some(v) => value += w.weight * v,
                None => unassessed = true,
            }
        }
        (value, unassessed)
    }

    pub fn rank(&self, request: &RankingRequest) -> Result<RankedList, QueryError> {
        if request.top_n == 0 {
            return Err(QueryError::ZeroTopN);
        }
        let weights = self.weights(&request.target)?;
        let tax = self.catalogue.taxonomy();
        if let Some(code) = &request.filter {
            if !tax.contains(code) {
                return Err(QueryError::UnknownCode(code.to_string()));
            }
        }
        let mut scored = Vec::new();
        for (row, nbs) in self.matrix.rows().iter().enumerate() {
            let Ok(entry) = self.catalogue.entry(nbs) else { continue };
            if let Some(code) = &request.filter {
                if !tax.descends_from(&entry.taxonomy_leaf, code) {
                    continue;
                }
            }
            let (value, unassessed) = self.composite(row, &request.target, &weights);
            scored.push((nbs, entry.final_name.as_str(), value, unassessed));
        }
        if scored.is_empty() {
            return Err(QueryError::EmptyResult(
                request.filter.as_ref().map_or_else(|| "no filter".into(), ToString::to_string),
            ));
        }
        // Composites that differ only by summation rounding count as ties.
        let key = |v: f64| (v * TIE_SCALE).round() as i64;
        scored.sort_by(|a, b| key(b.2).cmp(&key(a.2)).then_with(|| a.0.cmp(b.0)));
        Ok(RankedList {
            request: request.clone(),
            entries: scored
                .into_iter()
                .take(request.top_n)
                .enumerate()
                .map(|(i, (nbs, name, value, unassessed))| RankedEntry {
                    rank: i + 1,
                    nbs: nbs.clone(),
                    name: name.to_owned(),
                    value,
                    unassessed,
                })
                .collect(),
        })
    }

    /// Coordinates on components `dims` (1-based) keyed by second-level class.
    pub fn scatter_data(&self, pca: &PcaResult, dims: (usize, usize)) -> Result<Vec<ScatterPoint>, QueryError> {
        let available = pca.n_components();
        for dim in [dims.0, dims.1] {
            if dim == 0 || dim > available {
                return Err(QueryError::DimOutOfRange { dim, available });
            }
        }
        pca.rows
            .iter()
            .zip(&pca.component_scores)
            .map(|(nbs, scores)| {
                let entry = self
                    .catalogue
                    .entry(nbs)
                    .map_err(|_| QueryError::UnknownNbs(nbs.to_string()))?;
                let tax = self.catalogue.taxonomy();
                let color_key = tax
                    .ancestor_at_level(&entry.taxonomy_leaf, 2)
                    .unwrap_or_else(|| entry.taxonomy_leaf.clone());
                Ok(ScatterPoint {
                    nbs: nbs.clone(),
                    x: scores[dims.0 - 1],
                    y: scores[dims.1 - 1],
                    color_key,
                })
            })
            .collect()
    }
}
