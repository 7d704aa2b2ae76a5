//! Crossed scores: binary per-project assessments are mapped onto the
//! baseline facets, averaged over the sub-facets a project used for one
//! baseline facet, then averaged across projects.
//!
//! Cells nobody assessed stay `None` throughout; zero-filling is left to
//! the consumers that need it (evenness, ranking).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::{Catalogue, Crosswalk, EsCategory, FacetDef, FacetKind};
use crate::ids::{FacetId, NbsId, ProjectId};
use crate::tsv::{self, ParseError};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("no crosswalk rule for {project} facet label `{label}`")]
    NoCrosswalk { project: ProjectId, label: String },
    #[error("{project} source label `{label}` does not match any catalogue entry")]
    UnknownSourceLabel { project: ProjectId, label: String },
    #[error("records from several projects ({0}) passed to a single-project normalization")]
    MixedProjects(String),
    #[error("unknown NBS id `{0}`")]
    UnknownNbs(String),
    #[error("unknown facet `{0}`")]
    UnknownFacet(String),
    #[error("{project} contributes twice to ({nbs}, {facet})")]
    DuplicateContribution { project: ProjectId, nbs: NbsId, facet: FacetId },
    #[error("score {value} for ({nbs}, {facet}) is outside [0, 1]")]
    OutOfRange { nbs: NbsId, facet: FacetId, value: f64 },
    #[error("facet `{0}` has no assessed cells")]
    NoData(String),
    #[error("matrix shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// A 0/1 assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Binary(bool);

impl Binary {
    pub const ZERO: Binary = Binary(false);
    pub const ONE: Binary = Binary(true);

    pub fn as_f64(self) -> f64 {
        if self.0 {
            1.0
        } else {
            0.0
        }
    }
}

impl TryFrom<u8> for Binary {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Binary(false)),
            1 => Ok(Binary(true)),
            other => Err(format!("expected 0 or 1, got {other}")),
        }
    }
}

impl From<Binary> for u8 {
    fn from(b: Binary) -> u8 {
        u8::from(b.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawScoreRecord {
    pub project: ProjectId,
    pub source_nbs_label: String,
    pub project_facet_label: String,
    pub value: Binary,
}

impl RawScoreRecord {
    pub fn new(project: &str, source: &str, facet_label: &str, value: u8) -> Self {
        Self {
            project: ProjectId::from(project),
            source_nbs_label: source.to_owned(),
            project_facet_label: facet_label.to_owned(),
            value: Binary::try_from(value).expect("binary value"),
        }
    }
}

pub fn parse_raw_scores(file: &str, text: &str) -> Result<Vec<RawScoreRecord>, ParseError> {
    Ok(tsv::read_records(file, text)?.into_iter().map(|l| l.record).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizedScore {
    pub project: ProjectId,
    pub nbs: NbsId,
    pub facet: FacetId,
    pub value: f64,
}

/// Resolves a record's project facet label to its baseline facet.
pub fn map_to_baseline(record: &RawScoreRecord, crosswalk: &Crosswalk) -> Result<(FacetId, Binary), ScoringError> {
    crosswalk
        .lookup(&record.project, &record.project_facet_label)
        .map(|rule| (rule.baseline_facet.clone(), record.value))
        .ok_or_else(|| ScoringError::NoCrosswalk {
            project: record.project.clone(),
            label: record.project_facet_label.clone(),
        })
}

/// Averages one project's binaries for one (NBS, baseline facet) pair.
/// Returns `None` when the project did not assess the pair.
pub fn normalize_project(
    nbs: &NbsId,
    facet: &FacetId,
    records: &[&RawScoreRecord],
) -> Result<Option<NormalizedScore>, ScoringError> {
    let Some(first) = records.first() else {
        return Ok(None);
    };
    if records.iter().any(|r| r.project != first.project) {
        let mut projects: Vec<&str> = records.iter().map(|r| r.project.as_str()).collect();
        projects.sort_unstable();
        projects.dedup();
        return Err(ScoringError::MixedProjects(projects.join(", ")));
    }
    let sum: f64 = records.iter().map(|r| r.value.as_f64()).sum();
    Ok(Some(NormalizedScore {
        project: first.project.clone(),
        nbs: nbs.clone(),
        facet: facet.clone(),
        value: sum / records.len() as f64,
    }))
}

/// NBS x facet matrix of crossed scores in `[0, 1]`, `None` where unassessed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMatrix {
    rows: Vec<NbsId>,
    columns: Vec<FacetDef>,
    cells: Vec<Option<f64>>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<NbsId>, columns: Vec<FacetDef>, cells: Vec<Option<f64>>) -> Result<Self, ScoringError> {
        if cells.len() != rows.len() * columns.len() {
            return Err(ScoringError::Shape(format!(
                "{} cells for {} rows x {} columns",
                cells.len(),
                rows.len(),
                columns.len()
            )));
        }
        for (i, cell) in cells.iter().enumerate() {
            if let Some(v) = *cell {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ScoringError::OutOfRange {
                        nbs: rows[i / columns.len()].clone(),
                        facet: columns[i % columns.len()].id.clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self { rows, columns, cells })
    }

    /// Builds a matrix from dense rows (tests and fixtures).
    pub fn from_rows(rows: Vec<NbsId>, columns: Vec<FacetDef>, values: Vec<Vec<Option<f64>>>) -> Result<Self, ScoringError> {
        if values.len() != rows.len() || values.iter().any(|r| r.len() != columns.len()) {
            return Err(ScoringError::Shape("ragged rows".into()));
        }
        Self::new(rows, columns, values.into_iter().flatten().collect())
    }

    pub fn rows(&self) -> &[NbsId] {
        &self.rows
    }

    pub fn columns(&self) -> &[FacetDef] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.columns.len() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        let n = self.columns.len();
        &self.cells[row * n..(row + 1) * n]
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.rows.len()).map(move |r| self.get(r, col))
    }

    pub fn row_index(&self, nbs: &NbsId) -> Option<usize> {
        self.rows.iter().position(|r| r == nbs)
    }

    pub fn column_index(&self, facet: &FacetId) -> Option<usize> {
        self.columns.iter().position(|c| &c.id == facet)
    }

    pub fn cell(&self, nbs: &NbsId, facet: &FacetId) -> Option<f64> {
        Some(self.get(self.row_index(nbs)?, self.column_index(facet)?)).flatten()
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    /// Mean of the present cells in `row` belonging to `category`;
    /// `None` when every such cell is missing or the category has no column.
    pub fn category_mean(&self, row: usize, category: EsCategory) -> Option<f64> {
        let (sum, n) = self
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == FacetKind::EcosystemService && c.es_category == Some(category))
            .filter_map(|(j, _)| self.get(row, j))
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Urban-challenge columns followed by the four per-category ES means.
    pub fn with_es_categories(&self) -> ScoreMatrix {
        let uc: Vec<usize> = (0..self.n_cols()).filter(|&j| self.columns[j].is_urban_challenge()).collect();
        let mut columns: Vec<FacetDef> = uc.iter().map(|&j| self.columns[j].clone()).collect();
        columns.extend(EsCategory::ALL.into_iter().map(FacetDef::category_aggregate));
        let mut cells = Vec::with_capacity(self.n_rows() * columns.len());
        for r in 0..self.n_rows() {
            cells.extend(uc.iter().map(|&j| self.get(r, j)));
            cells.extend(EsCategory::ALL.into_iter().map(|c| self.category_mean(r, c)));
        }
        ScoreMatrix {
            rows: self.rows.clone(),
            columns,
            cells,
        }
    }

    /// Tab-separated export: header `nbs` then facet ids; missing cells empty.
    /// Values use the shortest exact decimal form so re-import is lossless.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("nbs");
        for c in &self.columns {
            out.push('\t');
            out.push_str(c.id.as_str());
        }
        out.push('\n');
        for (r, id) in self.rows.iter().enumerate() {
            out.push_str(id.as_str());
            for v in self.row(r) {
                out.push('\t');
                if let Some(v) = v {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`ScoreMatrix::to_tsv`] output. Columns must be catalogue facets
    /// or ES category aggregates; rows must be catalogue ids.
    pub fn from_tsv(file: &str, text: &str, catalogue: &Catalogue) -> Result<Self, ScoringError> {
        let (headers, lines) = tsv::read_rows(file, text)?;
        if headers.first().map(String::as_str) != Some("nbs") {
            return Err(ParseError::field(file, 1, "nbs", "first column must be `nbs`").into());
        }
        let mut columns = Vec::new();
        for h in &headers[1..] {
            let id = FacetId::from(h.as_str());
            let def = catalogue
                .facet(&id)
                .cloned()
                .or_else(|| EsCategory::parse(h).filter(|c| c.aggregate_id() == id).map(FacetDef::category_aggregate))
                .ok_or_else(|| ScoringError::UnknownFacet(h.clone()))?;
            columns.push(def);
        }
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for tsv::Line { line, record } in lines {
            let id = NbsId::from(record[0].as_str());
            catalogue.entry(&id).map_err(|_| ScoringError::UnknownNbs(id.to_string()))?;
            for (j, raw) in record[1..].iter().enumerate() {
                let raw = raw.trim();
                cells.push(if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse::<f64>().map_err(|e| {
                        ParseError::field(file, line, headers[j + 1].as_str(), e.to_string())
                    })?)
                });
            }
            rows.push(id);
        }
        Self::new(rows, columns, cells)
    }
}

/// Averages per-project normalized scores into a matrix over `rows` x `columns`.
pub fn cross_scores(
    normalized: &[NormalizedScore],
    rows: &[NbsId],
    columns: &[FacetDef],
) -> Result<ScoreMatrix, ScoringError> {
    let row_of: BTreeMap<&NbsId, usize> = rows.iter().enumerate().map(|(i, r)| (r, i)).collect();
    let col_of: BTreeMap<&FacetId, usize> = columns.iter().enumerate().map(|(i, c)| (&c.id, i)).collect();
    let mut acc: BTreeMap<(usize, usize), BTreeMap<&ProjectId, f64>> = BTreeMap::new();
    for s in normalized {
        let r = *row_of.get(&s.nbs).ok_or_else(|| ScoringError::UnknownNbs(s.nbs.to_string()))?;
        let c = *col_of.get(&s.facet).ok_or_else(|| ScoringError::UnknownFacet(s.facet.to_string()))?;
        if acc.entry((r, c)).or_default().insert(&s.project, s.value).is_some() {
            return Err(ScoringError::DuplicateContribution {
                project: s.project.clone(),
                nbs: s.nbs.clone(),
                facet: s.facet.clone(),
            });
        }
    }
    let mut cells = vec![None; rows.len() * columns.len()];
    for ((r, c), by_project) in acc {
        let sum: f64 = by_project.values().sum();
        cells[r * columns.len() + c] = Some(sum / by_project.len() as f64);
    }
    ScoreMatrix::new(rows.to_vec(), columns.to_vec(), cells)
}

/// Maps, groups and normalizes raw records per (project, NBS, baseline facet).
pub fn normalize_all(catalogue: &Catalogue, records: &[RawScoreRecord]) -> Result<Vec<NormalizedScore>, ScoringError> {
    let mut groups: BTreeMap<(ProjectId, NbsId, FacetId), Vec<&RawScoreRecord>> = BTreeMap::new();
    for record in records {
        let (facet, _) = map_to_baseline(record, catalogue.crosswalk())?;
        let ids = catalogue
            .resolve_source_label(&record.project, &record.source_nbs_label)
            .ok_or_else(|| ScoringError::UnknownSourceLabel {
                project: record.project.clone(),
                label: record.source_nbs_label.clone(),
            })?;
        for id in ids {
            groups
                .entry((record.project.clone(), id.clone(), facet.clone()))
                .or_default()
                .push(record);
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((_, nbs, facet), recs) in &groups {
        out.extend(normalize_project(nbs, facet, recs)?);
    }
    Ok(out)
}

/// Full pipeline over the whole catalogue and facet baseline.
pub fn score_matrix(catalogue: &Catalogue, records: &[RawScoreRecord]) -> Result<ScoreMatrix, ScoringError> {
    let normalized = normalize_all(catalogue, records)?;
    cross_scores(&normalized, &catalogue.ids(), catalogue.facets())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacetSummary {
    pub facet: FacetId,
    pub median: f64,
    pub mean: f64,
    pub count_nonmissing: usize,
}

/// Median (midpoint for even counts) and mean over the assessed cells of a column.
pub fn facet_summary(matrix: &ScoreMatrix, facet: &FacetId) -> Result<FacetSummary, ScoringError> {
    let col = matrix
        .column_index(facet)
        .ok_or_else(|| ScoringError::UnknownFacet(facet.to_string()))?;
    let mut values: Vec<f64> = matrix.column(col).flatten().collect();
    if values.is_empty() {
        return Err(ScoringError::NoData(facet.to_string()));
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    Ok(FacetSummary {
        facet: facet.clone(),
        median,
        mean: values.iter().sum::<f64>() / n as f64,
        count_nonmissing: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue::{CrosswalkRule, FacetKind};
    use crate::dataset::Bundled;

    fn uc(id: &str) -> FacetDef {
        FacetDef {
            id: FacetId::from(id),
            kind: FacetKind::UrbanChallenge,
            es_category: None,
            label: id.to_owned(),
        }
    }

    fn es(id: &str, cat: EsCategory) -> FacetDef {
        FacetDef {
            id: FacetId::from(id),
            kind: FacetKind::EcosystemService,
            es_category: Some(cat),
            label: id.to_owned(),
        }
    }

    fn unl_crosswalk() -> Crosswalk {
        let rule = |label: &str| CrosswalkRule {
            project: ProjectId::from("UNL"),
            project_facet_label: label.into(),
            baseline_facet: FacetId::from("water_management"),
            inferred: false,
        };
        Crosswalk::new(vec![rule("water scarcity"), rule("flood management"), rule("water pollution")]).unwrap()
    }

    #[test]
    fn map_to_baseline_examples() {
        let cw = unl_crosswalk();
        let (f, v) = map_to_baseline(&RawScoreRecord::new("UNL", "x", "flood management", 1), &cw).unwrap();
        assert_eq!((f.as_str(), v), ("water_management", Binary::ONE));
        let (f, v) = map_to_baseline(&RawScoreRecord::new("UNL", "x", "water scarcity", 0), &cw).unwrap();
        assert_eq!((f.as_str(), v), ("water_management", Binary::ZERO));
        let err = map_to_baseline(&RawScoreRecord::new("GU", "x", "unknown label", 1), &cw).unwrap_err();
        assert!(matches!(err, ScoringError::NoCrosswalk { .. }));
    }

    #[test]
    fn normalize_project_examples() {
        let nbs = NbsId::from("NBS1");
        let facet = FacetId::from("water_management");
        let recs = |vals: &[u8]| -> Vec<RawScoreRecord> {
            vals.iter().map(|&v| RawScoreRecord::new("UNL", "a", "b", v)).collect()
        };
        let value = |vals: &[u8]| {
            let owned = recs(vals);
            let refs: Vec<&RawScoreRecord> = owned.iter().collect();
            normalize_project(&nbs, &facet, &refs).unwrap().unwrap().value
        };
        assert!((value(&[1, 1, 0]) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(value(&[1]), 1.0);
        assert_eq!(value(&[0, 0, 0]), 0.0);
        assert!(normalize_project(&nbs, &facet, &[]).unwrap().is_none());

        let a = RawScoreRecord::new("UNL", "a", "b", 1);
        let b = RawScoreRecord::new("GU", "a", "b", 1);
        assert!(matches!(
            normalize_project(&nbs, &facet, &[&a, &b]),
            Err(ScoringError::MixedProjects(_))
        ));
    }

    fn ns(project: &str, value: f64) -> NormalizedScore {
        NormalizedScore {
            project: ProjectId::from(project),
            nbs: NbsId::from("NBS1"),
            facet: FacetId::from("f"),
            value,
        }
    }

    #[test]
    fn cross_scores_examples() {
        let rows = [NbsId::from("NBS1")];
        let cols = [uc("f")];
        let cell = |s: &[NormalizedScore]| cross_scores(s, &rows, &cols).unwrap().get(0, 0);
        assert_eq!(cell(&[ns("GU", 1.0), ns("UNL", 0.5)]), Some(0.75));
        assert_eq!(cell(&[ns("GU", 1.0)]), Some(1.0));
        assert_eq!(cell(&[]), None);
        // mean of {2/3, 1, 0} computed directly
        let got = cell(&[ns("GU", 2.0 / 3.0), ns("UNL", 1.0), ns("TN", 0.0)]).unwrap();
        assert!((got - 0.555_555_555_555_555_6).abs() < 1e-12);
    }

    #[test]
    fn cross_scores_rejects_duplicates_and_unknown_ids() {
        let rows = [NbsId::from("NBS1")];
        let cols = [uc("f")];
        assert!(matches!(
            cross_scores(&[ns("GU", 1.0), ns("GU", 0.0)], &rows, &cols),
            Err(ScoringError::DuplicateContribution { .. })
        ));
        let mut stray = ns("GU", 1.0);
        stray.nbs = NbsId::from("NBS99");
        assert!(matches!(cross_scores(&[stray], &rows, &cols), Err(ScoringError::UnknownNbs(_))));
    }

    fn column_matrix(values: &[Option<f64>]) -> ScoreMatrix {
        let rows = (0..values.len()).map(|i| NbsId::new(format!("NBS{}", i + 1))).collect();
        ScoreMatrix::new(rows, vec![uc("f")], values.to_vec()).unwrap()
    }

    #[test]
    fn facet_summary_examples() {
        let f = FacetId::from("f");
        let s = facet_summary(&column_matrix(&[Some(0.2), Some(0.6), Some(1.0)]), &f).unwrap();
        assert!((s.median - 0.6).abs() < 1e-15);
        assert_eq!(s.count_nonmissing, 3);
        let s = facet_summary(&column_matrix(&[Some(0.0), None, Some(1.0)]), &f).unwrap();
        assert_eq!(s.median, 0.5);
        assert_eq!(s.count_nonmissing, 2);
        assert!(matches!(
            facet_summary(&column_matrix(&[None, None]), &f),
            Err(ScoringError::NoData(_))
        ));
        assert!(matches!(
            facet_summary(&column_matrix(&[Some(1.0)]), &FacetId::from("g")),
            Err(ScoringError::UnknownFacet(_))
        ));
    }

    #[test]
    fn matrix_rejects_out_of_range() {
        let err = ScoreMatrix::new(vec![NbsId::from("NBS1")], vec![uc("f")], vec![Some(1.5)]).unwrap_err();
        assert!(matches!(err, ScoringError::OutOfRange { .. }));
    }

    #[test]
    fn category_means_skip_missing() {
        let cols = vec![
            uc("u"),
            es("r1", EsCategory::Regulating),
            es("r2", EsCategory::Regulating),
            es("r3", EsCategory::Regulating),
            es("r4", EsCategory::Regulating),
            es("p1", EsCategory::Provisioning),
        ];
        let m = ScoreMatrix::from_rows(
            vec![NbsId::from("NBS1")],
            cols,
            vec![vec![Some(0.3), Some(1.0), Some(0.0), None, Some(1.0), None]],
        )
        .unwrap();
        assert!((m.category_mean(0, EsCategory::Regulating).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.category_mean(0, EsCategory::Provisioning), None);
        assert_eq!(m.category_mean(0, EsCategory::Cultural), None);
        let agg = m.with_es_categories();
        let ids: Vec<&str> = agg.columns().iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, ["u", "provisioning", "regulating", "cultural", "supporting"]);
        assert_eq!(agg.get(0, 0), Some(0.3));
        assert_eq!(agg.get(0, 1), None);
        // Re-aggregating an aggregated matrix is a no-op.
        assert_eq!(agg.with_es_categories(), agg);
    }

    #[test]
    fn bundled_pipeline_produces_valid_matrix() {
        let ds = crate::Dataset::load(&Bundled).unwrap();
        let m = score_matrix(&ds.catalogue, &ds.raw_scores).unwrap();
        assert_eq!(m.n_rows(), 32);
        assert_eq!(m.n_cols(), 29);
        // Coastal resilience is only assessed by one project.
        let coastal = m.column_index(&FacetId::from("coastal_resilience")).unwrap();
        assert!(m.column(coastal).filter(Option::is_none).count() > 1);
    }

    #[test]
    fn tsv_round_trip_is_exact() {
        let ds = crate::Dataset::load(&Bundled).unwrap();
        let m = score_matrix(&ds.catalogue, &ds.raw_scores).unwrap();
        let back = ScoreMatrix::from_tsv("m.tsv", &m.to_tsv(), &ds.catalogue).unwrap();
        assert_eq!(back, m);
        let agg = m.with_es_categories();
        let back = ScoreMatrix::from_tsv("m.tsv", &agg.to_tsv(), &ds.catalogue).unwrap();
        assert_eq!(back, agg);
    }

    #[test]
    fn unknown_source_label_is_reported() {
        let ds = crate::Dataset::load(&Bundled).unwrap();
        let rec = RawScoreRecord::new("GU", "No such solution", "Air quality", 1);
        assert!(matches!(
            score_matrix(&ds.catalogue, &[rec]),
            Err(ScoringError::UnknownSourceLabel { .. })
        ));
    }
}
