//! The scoring pipeline against a brute-force recomputation on small
//! random catalogues.

use std::collections::BTreeMap;

use nbs_core::catalogue::{Catalogue, Crosswalk, CrosswalkRule, FacetDef, FacetKind, NameProvenance, NbsEntry};
use nbs_core::dataset::Bundled;
use nbs_core::scoring::{score_matrix, RawScoreRecord};
use nbs_core::{FacetId, NbsId, ProjectId, TaxonomyCode};
use proptest::prelude::*;

const PROJECTS: [&str; 3] = ["P0", "P1", "P2"];

/// Each project names facet `f` with `subs` sub-labels `"{p}/f{f}/s{k}"`,
/// and names NBS `i` as `"{p}-n{i}"`.
#[derive(Debug, Clone)]
struct Fixture {
    n_nbs: usize,
    n_facets: usize,
    subs: usize,
}

impl Fixture {
    fn catalogue(&self) -> Catalogue {
        let base = Catalogue::load(&Bundled).unwrap();
        let leaf = TaxonomyCode::from("NBS_thu");
        let entries = (0..self.n_nbs)
            .map(|i| NbsEntry {
                id: NbsId::new(format!("NBS{}", i + 1)),
                final_name: format!("solution {i}"),
                aliases: Vec::new(),
                description: String::new(),
                taxonomy_leaf: leaf.clone(),
                leaf_inferred: false,
                project_labels: PROJECTS
                    .iter()
                    .map(|p| (ProjectId::from(*p), vec![format!("{p}-n{i}")]))
                    .collect(),
                name_provenance: NameProvenance::Round1,
            })
            .collect();
        let facets = (0..self.n_facets)
            .map(|f| FacetDef {
                id: FacetId::new(format!("f{f}")),
                kind: FacetKind::UrbanChallenge,
                es_category: None,
                label: format!("facet {f}"),
            })
            .collect();
        let mut rules = Vec::new();
        for p in PROJECTS {
            for f in 0..self.n_facets {
                for k in 0..self.subs {
                    rules.push(CrosswalkRule {
                        project: ProjectId::from(p),
                        project_facet_label: format!("{p}/f{f}/s{k}"),
                        baseline_facet: FacetId::new(format!("f{f}")),
                        inferred: false,
                    });
                }
            }
        }
        Catalogue::new(entries, base.taxonomy().clone(), facets, Crosswalk::new(rules).unwrap(), Vec::new()).unwrap()
    }
}

/// (project, nbs, facet, sub-label, value)
type Raw = (usize, usize, usize, usize, u8);

fn records(raw: &[Raw]) -> Vec<RawScoreRecord> {
    raw.iter()
        .map(|&(p, i, f, k, v)| {
            let proj = PROJECTS[p];
            RawScoreRecord::new(proj, &format!("{proj}-n{i}"), &format!("{proj}/f{f}/s{k}"), v)
        })
        .collect()
}

/// Per project: mean of its binaries for the cell; then mean over projects
/// that had any.
fn oracle(raw: &[Raw], nbs: usize, facet: usize) -> Option<f64> {
    let mut per_project: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for &(p, i, f, _, v) in raw {
        if i == nbs && f == facet {
            let e = per_project.entry(p).or_insert((0.0, 0.0));
            e.0 += f64::from(v);
            e.1 += 1.0;
        }
    }
    if per_project.is_empty() {
        return None;
    }
    let sum: f64 = per_project.values().map(|(s, n)| s / n).sum();
    Some(sum / per_project.len() as f64)
}

fn fixture_and_raw() -> impl Strategy<Value = (Fixture, Vec<Raw>)> {
    (1usize..=5, 1usize..=4, 1usize..=3).prop_flat_map(|(n, m, s)| {
        let rec = (0usize..3, 0..n, 0..m, 0..s, 0u8..=1);
        (Just(Fixture { n_nbs: n, n_facets: m, subs: s }), prop::collection::vec(rec, 0..40))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pipeline_equals_brute_force((fx, raw) in fixture_and_raw()) {
        let cat = fx.catalogue();
        let m = score_matrix(&cat, &records(&raw)).unwrap();
        for i in 0..fx.n_nbs {
            for f in 0..fx.n_facets {
                match (m.get(i, f), oracle(&raw, i, f)) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12, "({i},{f}) {a} vs {b}"),
                    (None, None) => {}
                    (a, b) => prop_assert!(false, "({i},{f}) {a:?} vs {b:?}"),
                }
                if let Some(v) = m.get(i, f) {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn record_order_is_irrelevant((fx, raw) in fixture_and_raw(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let cat = fx.catalogue();
        let mut shuffled = raw.clone();
        shuffled.shuffle(&mut rand::rngs::StdRng::seed_from_u64(seed));
        let a = score_matrix(&cat, &records(&raw)).unwrap();
        let b = score_matrix(&cat, &records(&shuffled)).unwrap();
        for i in 0..fx.n_nbs {
            for f in 0..fx.n_facets {
                match (a.get(i, f), b.get(i, f)) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }
    }

    #[test]
    fn single_project_binaries_pass_through(values in prop::collection::vec(0u8..=1, 1..=20)) {
        let fx = Fixture { n_nbs: 5, n_facets: 4, subs: 1 };
        let cat = fx.catalogue();
        let raw: Vec<Raw> = values.iter().enumerate().map(|(c, &v)| (0, c / 4, c % 4, 0, v)).collect();
        let m = score_matrix(&cat, &records(&raw)).unwrap();
        for &(_, i, f, _, v) in &raw {
            prop_assert_eq!(m.get(i, f), Some(f64::from(v)));
        }
    }

    #[test]
    fn adding_a_contribution_fills_the_cell((fx, raw) in fixture_and_raw(), p in 0usize..3, v in 0u8..=1) {
        let cat = fx.catalogue();
        let before = score_matrix(&cat, &records(&raw)).unwrap();
        let mut more = raw.clone();
        more.push((p, 0, 0, 0, v));
        let after = score_matrix(&cat, &records(&more)).unwrap();
        prop_assert!(after.get(0, 0).is_some());
        for i in 0..fx.n_nbs {
            for f in 0..fx.n_facets {
                if (i, f) != (0, 0) {
                    prop_assert_eq!(before.get(i, f).is_some(), after.get(i, f).is_some());
                }
            }
        }
    }
}

#[test]
fn unl_water_example() {
    // Three water sub-facets of one project fold into one baseline cell.
    let fx = Fixture { n_nbs: 1, n_facets: 1, subs: 3 };
    let cat = fx.catalogue();
    let raw = [(0, 0, 0, 0, 1), (0, 0, 0, 1, 1), (0, 0, 0, 2, 0)];
    let m = score_matrix(&cat, &records(&raw)).unwrap();
    assert!((m.get(0, 0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let raw = [(0, 0, 0, 0, 1), (0, 0, 0, 1, 1), (0, 0, 0, 2, 0), (1, 0, 0, 0, 1), (2, 0, 0, 0, 0)];
    let m = score_matrix(&cat, &records(&raw)).unwrap();
    assert!((m.get(0, 0).unwrap() - (2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-12);
}
