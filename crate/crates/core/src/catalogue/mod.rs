//! The common NBS list, its classification, the facet baseline and the
//! project crosswalk. A [`Catalogue`] is validated once on load and never
//! mutated afterwards.

mod taxonomy;
mod types;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Deserialize;
use thiserror::Error;

pub use taxonomy::{Prompt, Taxonomy, MAX_DEPTH};
pub use types::{
    CrosswalkRule, EsCategory, ExclusionReason, ExclusionRecord, FacetDef, FacetKind, NameProvenance, NbsEntry,
    TaxonomyNode,
};

use crate::dataset::{DataSource, DatasetError};
use crate::ids::{FacetId, NbsId, ProjectId, TaxonomyCode};
use crate::tsv::{self, ParseError};

pub const ENTRIES_FILE: &str = "entries.tsv";
pub const PROJECT_LABELS_FILE: &str = "project_labels.tsv";
pub const TAXONOMY_FILE: &str = "taxonomy.tsv";
pub const FACETS_FILE: &str = "facets.tsv";
pub const CROSSWALK_FILE: &str = "crosswalk.tsv";
pub const EXCLUSIONS_FILE: &str = "exclusions.tsv";

/// Minimum number of distinct projects that must list an NBS.
pub const MIN_SOURCE_PROJECTS: usize = 2;

#[derive(Debug, Error)]
pub enum CatalogueError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invariant violated ({invariant}): {detail}")]
    Invalid { invariant: &'static str, detail: String },
    #[error("unknown taxonomy code `{0}`")]
    UnknownCode(String),
    #[error("unknown NBS id `{0}`")]
    UnknownNbs(String),
    #[error("answers ran out at {at}; next question: {pending_question}")]
    IncompleteAnswers { at: String, pending_question: String },
    #[error("reached leaf `{leaf}` with {extra} answer(s) left over")]
    TooManyAnswers { leaf: String, extra: usize },
}

/// Baseline facets mapped from project-specific labels.
#[derive(Debug, Clone, Default)]
pub struct Crosswalk {
    rules: Vec<CrosswalkRule>,
    index: HashMap<(ProjectId, String), usize>,
}

impl Crosswalk {
    pub fn new(rules: Vec<CrosswalkRule>) -> Result<Self, CatalogueError> {
        let mut index = HashMap::new();
        for (i, rule) in rules.iter().enumerate() {
            let key = (rule.project.clone(), rule.project_facet_label.clone());
            if let Some(prev) = index.insert(key, i) {
                if rules[prev].baseline_facet != rule.baseline_facet {
                    return Err(CatalogueError::Invalid {
                        invariant: "each project facet label maps to exactly one baseline facet",
                        detail: format!(
                            "{} `{}` maps to both `{}` and `{}`",
                            rule.project, rule.project_facet_label, rules[prev].baseline_facet, rule.baseline_facet
                        ),
                    });
                }
                return Err(CatalogueError::Invalid {
                    invariant: "crosswalk rules are unique",
                    detail: format!("{} `{}` listed twice", rule.project, rule.project_facet_label),
                });
            }
        }
        Ok(Self { rules, index })
    }

    pub fn lookup(&self, project: &ProjectId, label: &str) -> Option<&CrosswalkRule> {
        self.index
            .get(&(project.clone(), label.to_owned()))
            .map(|&i| &self.rules[i])
    }

    pub fn rules(&self) -> &[CrosswalkRule] {
        &self.rules
    }

    pub fn projects(&self) -> BTreeSet<&ProjectId> {
        self.rules.iter().map(|r| &r.project).collect()
    }
}

/// Validated, immutable catalogue snapshot.
#[derive(Debug, Clone)]
pub struct Catalogue {
    entries: Vec<NbsEntry>,
    taxonomy: Taxonomy,
    facets: Vec<FacetDef>,
    crosswalk: Crosswalk,
    exclusions: Vec<ExclusionRecord>,
    source_labels: HashMap<(ProjectId, String), Vec<NbsId>>,
}

#[derive(Debug, Deserialize)]
struct EntryRow {
    id: NbsId,
    final_name: String,
    taxonomy_leaf: TaxonomyCode,
    #[serde(default)]
    leaf_inferred: bool,
    name_provenance: NameProvenance,
    aliases: String,
    description: String,
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    nbs: NbsId,
    project: ProjectId,
    source_label: String,
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    code: TaxonomyCode,
    parent: Option<TaxonomyCode>,
    level: u8,
    order: u32,
    name: String,
    question: String,
}

impl Catalogue {
    /// Reads and validates the catalogue files from `source`.
    pub fn load(source: &dyn DataSource) -> Result<Self, DatasetError> {
        let read = |name: &str| source.read(name);

        let entries: Vec<tsv::Line<EntryRow>> = tsv::read_records(ENTRIES_FILE, &read(ENTRIES_FILE)?)?;
        let labels: Vec<tsv::Line<LabelRow>> = tsv::read_records(PROJECT_LABELS_FILE, &read(PROJECT_LABELS_FILE)?)?;
        let nodes: Vec<tsv::Line<NodeRow>> = tsv::read_records(TAXONOMY_FILE, &read(TAXONOMY_FILE)?)?;
        let facets: Vec<tsv::Line<FacetDef>> = tsv::read_records(FACETS_FILE, &read(FACETS_FILE)?)?;
        let rules: Vec<tsv::Line<CrosswalkRule>> = tsv::read_records(CROSSWALK_FILE, &read(CROSSWALK_FILE)?)?;
        let exclusions: Vec<tsv::Line<ExclusionRecord>> = tsv::read_records(EXCLUSIONS_FILE, &read(EXCLUSIONS_FILE)?)?;

        let mut by_id: BTreeMap<NbsId, NbsEntry> = BTreeMap::new();
        let mut order = Vec::new();
        for tsv::Line { record: row, .. } in entries {
            order.push(row.id.clone());
            let entry = NbsEntry {
                id: row.id.clone(),
                final_name: row.final_name,
                aliases: tsv::split_list(&row.aliases),
                description: row.description,
                taxonomy_leaf: row.taxonomy_leaf,
                leaf_inferred: row.leaf_inferred,
                project_labels: BTreeMap::new(),
                name_provenance: row.name_provenance,
            };
            if by_id.insert(row.id.clone(), entry).is_some() {
                return Err(CatalogueError::Invalid {
                    invariant: "NBS ids are unique",
                    detail: format!("`{}` appears twice in {ENTRIES_FILE}", row.id),
                }
                .into());
            }
        }
        for tsv::Line { line, record } in labels {
            let entry = by_id.get_mut(&record.nbs).ok_or_else(|| {
                ParseError::field(PROJECT_LABELS_FILE, line, "nbs", format!("unknown NBS id `{}`", record.nbs))
            })?;
            entry
                .project_labels
                .entry(record.project)
                .or_default()
                .push(record.source_label);
        }
        let entries = order.into_iter().map(|id| by_id.remove(&id).expect("collected above")).collect();

        let nodes = nodes
            .into_iter()
            .map(|l| TaxonomyNode {
                code: l.record.code,
                parent: l.record.parent,
                level: l.record.level,
                order: l.record.order,
                name: l.record.name,
                question: l.record.question,
            })
            .collect();

        Ok(Self::new(
            entries,
            Taxonomy::new(nodes)?,
            facets.into_iter().map(|l| l.record).collect(),
            Crosswalk::new(rules.into_iter().map(|l| l.record).collect())?,
            exclusions.into_iter().map(|l| l.record).collect(),
        )?)
    }

    /// Assembles a catalogue from parts, validating every invariant.
    pub fn new(
        mut entries: Vec<NbsEntry>,
        taxonomy: Taxonomy,
        facets: Vec<FacetDef>,
        crosswalk: Crosswalk,
        exclusions: Vec<ExclusionRecord>,
    ) -> Result<Self, CatalogueError> {
        let invalid = |invariant: &'static str, detail: String| CatalogueError::Invalid { invariant, detail };

        entries.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in entries.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(invalid("NBS ids are unique", format!("`{}` appears twice", pair[0].id)));
            }
        }
        for e in &entries {
            if !taxonomy.contains(&e.taxonomy_leaf) {
                return Err(invalid(
                    "taxonomy leaf exists",
                    format!("{} refers to unknown code `{}`", e.id, e.taxonomy_leaf),
                ));
            }
            if !taxonomy.is_leaf(&e.taxonomy_leaf) {
                return Err(invalid(
                    "NBS maps to a leaf",
                    format!("{} is assigned to non-leaf `{}`", e.id, e.taxonomy_leaf),
                ));
            }
            let projects = e.project_labels.values().filter(|v| !v.is_empty()).count();
            if projects < MIN_SOURCE_PROJECTS {
                return Err(invalid(
                    "NBS is listed by at least two projects",
                    format!("{} has labels from {projects} project(s)", e.id),
                ));
            }
            if e.final_name.trim().is_empty() {
                return Err(invalid("final name is non-empty", format!("{} has no name", e.id)));
            }
        }

        let mut facet_ids = BTreeSet::new();
        for f in &facets {
            if !facet_ids.insert(&f.id) {
                return Err(invalid("facet ids are unique", format!("`{}` appears twice", f.id)));
            }
            let has_category = f.es_category.is_some();
            if has_category != (f.kind == FacetKind::EcosystemService) {
                return Err(invalid(
                    "es_category present iff kind = EcosystemService",
                    format!("facet `{}`", f.id),
                ));
            }
        }
        for rule in crosswalk.rules() {
            if !facet_ids.contains(&rule.baseline_facet) {
                return Err(invalid(
                    "crosswalk targets a baseline facet",
                    format!("{} `{}` maps to unknown `{}`", rule.project, rule.project_facet_label, rule.baseline_facet),
                ));
            }
        }

        let mut source_labels: HashMap<(ProjectId, String), Vec<NbsId>> = HashMap::new();
        for e in &entries {
            for (project, labels) in &e.project_labels {
                for label in labels {
                    let ids = source_labels.entry((project.clone(), label.clone())).or_default();
                    if !ids.contains(&e.id) {
                        ids.push(e.id.clone());
                    }
                }
            }
        }

        Ok(Self {
            entries,
            taxonomy,
            facets,
            crosswalk,
            exclusions,
            source_labels,
        })
    }

    /// Entries ordered by id.
    pub fn entries(&self) -> &[NbsEntry] {
        &self.entries
    }

    pub fn entry(&self, id: &NbsId) -> Result<&NbsEntry, CatalogueError> {
        self.entries
            .binary_search_by(|e| e.id.cmp(id))
            .map(|i| &self.entries[i])
            .map_err(|_| CatalogueError::UnknownNbs(id.to_string()))
    }

    pub fn ids(&self) -> Vec<NbsId> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn facets(&self) -> &[FacetDef] {
        &self.facets
    }

    pub fn facet(&self, id: &FacetId) -> Option<&FacetDef> {
        self.facets.iter().find(|f| &f.id == id)
    }

    pub fn crosswalk(&self) -> &Crosswalk {
        &self.crosswalk
    }

    pub fn exclusions(&self) -> &[ExclusionRecord] {
        &self.exclusions
    }

    /// Catalogue ids a project used `label` for. Several ids share a label
    /// when a project grouped solutions that the common list keeps apart.
    pub fn resolve_source_label(&self, project: &ProjectId, label: &str) -> Option<&[NbsId]> {
        self.source_labels
            .get(&(project.clone(), label.to_owned()))
            .map(Vec::as_slice)
    }

    /// All entries classified under `code` (itself or any descendant), by id.
    pub fn taxonomy_members(&self, code: &TaxonomyCode) -> Result<Vec<NbsId>, CatalogueError> {
        if !self.taxonomy.contains(code) {
            return Err(CatalogueError::UnknownCode(code.to_string()));
        }
        Ok(self
            .entries
            .iter()
            .filter(|e| self.taxonomy.descends_from(&e.taxonomy_leaf, code))
            .map(|e| e.id.clone())
            .collect())
    }

    pub fn classify(&self, answers: &[bool]) -> Result<TaxonomyCode, CatalogueError> {
        self.taxonomy.classify(answers)
    }

    pub fn count_facets(&self, kind: FacetKind) -> usize {
        self.facets.iter().filter(|f| f.kind == kind).count()
    }
}
