//! Plot-ready tab-separated tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::Analysis;
use crate::catalogue::{Catalogue, FacetKind};
use crate::ids::NbsId;
use crate::query::{Explorer, QueryError, RankTarget, RankingRequest};
use crate::scoring::facet_summary;
use crate::stats::{EvennessResult, PcaResult};

/// Rounds to 9 significant digits and prints the shortest decimal for it.
pub fn sig9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn opt(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

pub fn evenness_tsv(results: &[EvennessResult]) -> String {
    let mut out = String::from("nbs\tdiversity\tfacet_count\tevenness\n");
    for r in results {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.nbs, sig9(r.diversity), r.facet_count, opt(r.evenness));
    }
    out
}

pub fn pca_eigen_tsv(pca: &PcaResult) -> String {
    let mut out = String::from("component\teigenvalue\tvariance_fraction\tcumulative_fraction\n");
    for m in 0..pca.n_components() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            m + 1,
            sig9(pca.eigenvalues[m]),
            sig9(pca.variance_fraction[m]),
            sig9(pca.cumulative_fraction(m + 1))
        );
    }
    out
}

fn component_header(first: &str, extra: &[&str], n: usize) -> String {
    let mut h = String::from(first);
    for e in extra {
        h.push('\t');
        h.push_str(e);
    }
    for m in 1..=n {
        let _ = write!(h, "\tpc{m}");
    }
    h.push('\n');
    h
}

/// Per-NBS coordinates with the level-2 class for colouring.
pub fn pca_scores_tsv(pca: &PcaResult, catalogue: &Catalogue) -> String {
    let mut out = component_header("nbs", &["class"], pca.n_components());
    for (nbs, scores) in pca.rows.iter().zip(&pca.component_scores) {
        let class = catalogue
            .entry(nbs)
            .ok()
            .and_then(|e| catalogue.taxonomy().ancestor_at_level(&e.taxonomy_leaf, 2))
            .map(|c| c.to_string())
            .unwrap_or_default();
        out.push_str(nbs.as_str());
        out.push('\t');
        out.push_str(&class);
        for s in scores {
            out.push('\t');
            out.push_str(&sig9(*s));
        }
        out.push('\n');
    }
    out
}

pub fn pca_loadings_tsv(pca: &PcaResult) -> String {
    let mut out = component_header("variable", &[], pca.n_components());
    for (var, row) in pca.variables.iter().zip(&pca.loadings) {
        out.push_str(var.as_str());
        for l in row {
            out.push('\t');
            out.push_str(&sig9(*l));
        }
        out.push('\n');
    }
    out
}

pub fn imputed_tsv(pca: &PcaResult) -> String {
    let mut out = String::from("nbs\tvariable\tvalue\n");
    for c in &pca.imputed_cells {
        let _ = writeln!(out, "{}\t{}\t{}", pca.rows[c.row], pca.variables[c.col], sig9(c.value));
    }
    out
}

/// Median, mean and coverage of every baseline facet.
pub fn facet_summary_tsv(analysis: &Analysis) -> String {
    let mut out = String::from("facet\tkind\tcategory\tmedian\tmean\tcount\n");
    for col in analysis.matrix.columns() {
        let kind = match col.kind {
            FacetKind::UrbanChallenge => "UrbanChallenge",
            FacetKind::EcosystemService => "EcosystemService",
        };
        let cat = col.es_category.map(|c| c.to_string()).unwrap_or_default();
        match facet_summary(&analysis.matrix, &col.id) {
            Ok(s) => {
                let _ = writeln!(out, "{}\t{kind}\t{cat}\t{}\t{}\t{}", col.id, sig9(s.median), sig9(s.mean), s.count_nonmissing);
            }
            Err(_) => {
                let _ = writeln!(out, "{}\t{kind}\t{cat}\t\t\t0", col.id);
            }
        }
    }
    out
}

/// Long-format profiles: one line per (NBS, facet).
pub fn profiles_tsv(analysis: &Analysis, catalogue: &Catalogue) -> Result<String, QueryError> {
    let ex = Explorer::new(catalogue, &analysis.matrix);
    let mut out = String::from("nbs\tfacet\tkind\tcategory\tvalue\n");
    for id in analysis.matrix.rows() {
        let p = ex.profile(id)?;
        for (kind, scores) in [("UrbanChallenge", &p.uc_scores), ("EcosystemService", &p.es_scores)] {
            for s in scores {
                let cat = s.category.map(|c| c.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{id}\t{}\t{kind}\t{cat}\t{}", s.facet, opt(s.value));
            }
        }
    }
    Ok(out)
}

/// Top `n` solutions for every facet.
pub fn top_n_tsv(analysis: &Analysis, catalogue: &Catalogue, n: usize) -> Result<String, QueryError> {
    let ex = Explorer::new(catalogue, &analysis.matrix);
    let mut out = String::from("facet\trank\tnbs\tname\tvalue\tunassessed\n");
    for col in analysis.matrix.columns() {
        let list = ex.rank(&RankingRequest {
            target: RankTarget::Facet(col.id.clone()),
            filter: None,
            top_n: n,
        })?;
        for e in list.entries {
            let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", col.id, e.rank, e.nbs, e.name, sig9(e.value), e.unassessed);
        }
    }
    Ok(out)
}

/// Writes every plot table into `dir` and returns the paths written.
pub fn write_all(dir: &Path, analysis: &Analysis, catalogue: &Catalogue, top_n: usize) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let io = |e: QueryError| std::io::Error::other(e.to_string());
    let names = serde_json::to_string_pretty(&analysis.names).map_err(std::io::Error::other)?;
    let files = [
        ("scores.tsv", analysis.matrix.to_tsv()),
        ("category_scores.tsv", analysis.category_matrix.to_tsv()),
        ("facet_summary.tsv", facet_summary_tsv(analysis)),
        ("profiles.tsv", profiles_tsv(analysis, catalogue).map_err(io)?),
        ("top_n.tsv", top_n_tsv(analysis, catalogue, top_n).map_err(io)?),
        ("evenness.tsv", evenness_tsv(&analysis.evenness)),
        ("pca_eigen.tsv", pca_eigen_tsv(&analysis.pca)),
        ("pca_scores.tsv", pca_scores_tsv(&analysis.pca, catalogue)),
        ("pca_loadings.tsv", pca_loadings_tsv(&analysis.pca)),
        ("pca_imputed.tsv", imputed_tsv(&analysis.pca)),
        ("names.json", names),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// The evenness row for `nbs`, if present.
pub fn find_evenness<'a>(results: &'a [EvennessResult], nbs: &NbsId) -> Option<&'a EvennessResult> {
    results.iter().find(|r| &r.nbs == nbs)
}
