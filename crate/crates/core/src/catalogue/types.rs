use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{FacetId, NbsId, ProjectId, TaxonomyCode};

/// How an entry's final name was settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NameProvenance {
    Round1,
    Round2,
    CitationArbitration,
    ExpertOverride,
}

impl fmt::Display for NameProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One solution of the common list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NbsEntry {
    pub id: NbsId,
    pub final_name: String,
    pub aliases: Vec<String>,
    /// Carried as opaque text.
    pub description: String,
    pub taxonomy_leaf: TaxonomyCode,
    /// The leaf was assigned from the description rather than stated outright.
    pub leaf_inferred: bool,
    /// Names the source projects used for this solution.
    pub project_labels: BTreeMap<ProjectId, Vec<String>>,
    pub name_provenance: NameProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonomyNode {
    pub code: TaxonomyCode,
    pub parent: Option<TaxonomyCode>,
    pub level: u8,
    /// Position among siblings; the question of every sibling but the last is
    /// asked in this order during classification.
    pub order: u32,
    pub name: String,
    pub question: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FacetKind {
    UrbanChallenge,
    EcosystemService,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EsCategory {
    Provisioning,
    Regulating,
    Cultural,
    Supporting,
}

impl EsCategory {
    pub const ALL: [EsCategory; 4] = [
        EsCategory::Provisioning,
        EsCategory::Regulating,
        EsCategory::Cultural,
        EsCategory::Supporting,
    ];

    /// Column id used when the category is aggregated into a single variable.
    pub fn aggregate_id(self) -> FacetId {
        FacetId::new(match self {
            EsCategory::Provisioning => "provisioning",
            EsCategory::Regulating => "regulating",
            EsCategory::Cultural => "cultural",
            EsCategory::Supporting => "supporting",
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            EsCategory::Provisioning => "Provisioning services",
            EsCategory::Regulating => "Regulating services",
            EsCategory::Cultural => "Cultural services",
            EsCategory::Supporting => "Supporting services",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|c| format!("{c:?}").eq_ignore_ascii_case(s) || c.aggregate_id().as_str() == s)
    }
}

impl fmt::Display for EsCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A baseline urban challenge or ecosystem service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetDef {
    pub id: FacetId,
    pub kind: FacetKind,
    pub es_category: Option<EsCategory>,
    pub label: String,
}

impl FacetDef {
    /// The synthetic column standing for a whole ES category.
    pub fn category_aggregate(category: EsCategory) -> Self {
        Self {
            id: category.aggregate_id(),
            kind: FacetKind::EcosystemService,
            es_category: Some(category),
            label: category.label().to_owned(),
        }
    }

    pub fn is_urban_challenge(&self) -> bool {
        self.kind == FacetKind::UrbanChallenge
    }
}

/// Relates one project's facet label to a baseline facet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosswalkRule {
    pub project: ProjectId,
    pub project_facet_label: String,
    pub baseline_facet: FacetId,
    /// Reconstructed rather than read from the published crosswalk.
    #[serde(default)]
    pub inferred: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExclusionReason {
    BenefitNotSolution,
    InspiredNotEmploying,
    PlanningManagementApproach,
    TooIntensiveNotInNature,
    CategoryNotSolution,
    NoAssessment,
    NotCrossProject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub item_name: String,
    pub project: ProjectId,
    pub reason: ExclusionReason,
}
