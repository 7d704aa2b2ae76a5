//! `nbs`: batch driver over the NBS catalogue, scores and statistics.

mod table;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nbs_core::catalogue::{EsCategory, NameProvenance};
use nbs_core::consensus;
use nbs_core::dataset::source_from_arg;
use nbs_core::export;
use nbs_core::query::{Explorer, RankTarget, RankingRequest};
use nbs_core::scoring::{self, facet_summary};
use nbs_core::stats::{self, EvennessResult};
use nbs_core::{Analysis, AnalysisConfig, Dataset, FacetId, NbsId, ScoreMatrix, TaxonomyCode};

use table::{opt, Table};

// Standard output writes that tolerate a closed pipe (e.g. `| head`).
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "nbs", version, about = "Urban nature-based solutions: scoring, statistics and name resolution")]
struct Cli {
    /// Dataset directory, or `bundled`.
    #[arg(long, global = true, default_value = "bundled")]
    data: String,
    /// Score matrix TSV to use instead of scoring the raw records.
    #[arg(long, global = true)]
    matrix: Option<PathBuf>,
    /// Directory for machine-readable outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Significance level for the round-2 test.
    #[arg(long, global = true, default_value_t = consensus::DEFAULT_ALPHA)]
    alpha: f64,
    /// Components used by the imputation reconstruction.
    #[arg(long, global = true, default_value_t = 2)]
    k: usize,
    /// Imputation convergence tolerance.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 1000)]
    max_iter: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    /// JSON on standard output.
    Structured,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and check every catalogue, survey and score invariant.
    Validate,
    /// Crossed score matrix (urban challenges and ecosystem services).
    Score,
    /// Shannon evenness per NBS over the category view.
    Evenness {
        /// An NBS id, or `all`.
        #[arg(long, default_value = "all")]
        nbs: String,
    },
    /// Principal component analysis after pretreatment and imputation.
    Pca,
    /// One-sample chi-square test of an a/b split against 50/50.
    Chisq { a: u64, b: u64 },
    /// Replay the naming procedure for every NBS.
    Names {
        /// Print the audit trail of each decision.
        #[arg(long)]
        audit: bool,
    },
    /// Rank NBS on a facet, an ES category or a weighted composite.
    Rank {
        #[arg(long, conflicts_with_all = ["category", "weights"])]
        facet: Option<String>,
        #[arg(long, conflicts_with = "weights")]
        category: Option<String>,
        /// Comma-separated `facet=weight` pairs.
        #[arg(long)]
        weights: Option<String>,
        /// Restrict to members of a taxonomy node.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Write every plot-ready table into --out.
    Export {
        #[arg(long, default_value_t = 10)]
        top_n: usize,
    },
    /// Start the HTTP service; SIGHUP reloads --data.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::FAILURE
        }
    }
}

/// Joins the error chain, skipping causes already quoted by their wrapper.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn run(cli: &Cli) -> Result<()> {
    let config = AnalysisConfig {
        k: cli.k,
        tol: cli.tol,
        max_iter: cli.max_iter,
        alpha: cli.alpha,
    };
    if !(cli.alpha > 0.0 && cli.alpha < 1.0) {
        bail!("--alpha must lie in (0, 1), got {}", cli.alpha);
    }
    match &cli.command {
        Command::Chisq { a, b } => chisq(cli, *a, *b),
        Command::Serve { bind } => serve(cli, bind, config),
        command => {
            let dataset = load_dataset(&cli.data)?;
            match command {
                Command::Validate => validate(cli, &dataset),
                Command::Score => score(cli, &dataset),
                Command::Evenness { nbs } => evenness(cli, &dataset, nbs),
                Command::Pca => pca(cli, &dataset, &config),
                Command::Names { audit } => names(cli, &dataset, &config, *audit),
                Command::Rank {
                    facet,
                    category,
                    weights,
                    filter,
                    top_n,
                } => {
                    let target = rank_target(facet.as_deref(), category.as_deref(), weights.as_deref())?;
                    let request = RankingRequest {
                        target,
                        filter: filter.as_deref().map(TaxonomyCode::from),
                        top_n: *top_n,
                    };
                    rank(cli, &dataset, &request)
                }
                Command::Export { top_n } => export_all(cli, &dataset, &config, *top_n),
                Command::Chisq { .. } | Command::Serve { .. } => unreachable!(),
            }
        }
    }
}

fn load_dataset(data: &str) -> Result<Dataset> {
    let source = source_from_arg(data);
    Dataset::load(source.as_ref()).with_context(|| format!("loading dataset `{}`", source.describe()))
}

fn load_matrix(cli: &Cli, dataset: &Dataset) -> Result<ScoreMatrix> {
    match &cli.matrix {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let name = path.display().to_string();
            ScoreMatrix::from_tsv(&name, &text, &dataset.catalogue).with_context(|| format!("ingesting score matrix {name}"))
        }
        None => scoring::score_matrix(&dataset.catalogue, &dataset.raw_scores).context("scoring raw records"),
    }
}

fn emit_json<T: Serialize>(value: &T) -> Result<()> {
    outln!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_out(cli: &Cli, files: &[(&str, String)]) -> Result<()> {
    let Some(dir) = &cli.out else { return Ok(()) };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn name_of<'a>(dataset: &'a Dataset, nbs: &NbsId) -> &'a str {
    dataset.catalogue.entry(nbs).map_or("", |e| e.final_name.as_str())
}

fn validate(cli: &Cli, dataset: &Dataset) -> Result<()> {
    let cat = &dataset.catalogue;
    let matrix = load_matrix(cli, dataset)?;
    let decisions = consensus::resolve_all(&cat.ids(), &dataset.names, cli.alpha).context("resolving names")?;
    let mismatched: Vec<String> = decisions
        .iter()
        .filter_map(|d| {
            let e = cat.entry(&d.nbs).ok()?;
            (e.final_name != d.final_name || e.name_provenance != d.path)
                .then(|| format!("{} (catalogue `{}` {}, replay `{}` {})", d.nbs, e.final_name, e.name_provenance, d.final_name, d.path))
        })
        .collect();
    if !mismatched.is_empty() {
        bail!("catalogue names agree with the naming replay: {}", mismatched.join("; "));
    }
    #[derive(Serialize)]
    struct Summary {
        entries: usize,
        taxonomy_nodes: usize,
        leaves: usize,
        facets: usize,
        crosswalk_rules: usize,
        exclusions: usize,
        raw_scores: usize,
        missing_cells: usize,
    }
    let s = Summary {
        entries: cat.entries().len(),
        taxonomy_nodes: cat.taxonomy().nodes().count(),
        leaves: cat.taxonomy().leaves().len(),
        facets: cat.facets().len(),
        crosswalk_rules: cat.crosswalk().rules().len(),
        exclusions: cat.exclusions().len(),
        raw_scores: dataset.raw_scores.len(),
        missing_cells: matrix.missing_count(),
    };
    match cli.format {
        Format::Structured => emit_json(&s),
        Format::Table => {
            outln!(
                "ok: {} NBS, {} taxonomy nodes ({} leaves), {} facets, {} crosswalk rules, {} exclusions, {} raw scores, {} missing cells",
                s.entries, s.taxonomy_nodes, s.leaves, s.facets, s.crosswalk_rules, s.exclusions, s.raw_scores, s.missing_cells
            );
            Ok(())
        }
    }
}

fn score(cli: &Cli, dataset: &Dataset) -> Result<()> {
    let matrix = load_matrix(cli, dataset)?;
    write_out(cli, &[("scores.tsv", matrix.to_tsv())])?;
    match cli.format {
        Format::Structured => emit_json(&matrix),
        Format::Table => {
            out!("{}", matrix.to_tsv());
            Ok(())
        }
    }
}

fn evenness(cli: &Cli, dataset: &Dataset, which: &str) -> Result<()> {
    let matrix = load_matrix(cli, dataset)?;
    let view = matrix.with_es_categories();
    let results: Vec<EvennessResult> = if which == "all" {
        stats::evenness_all(&view)?
    } else {
        vec![stats::evenness(&NbsId::from(which), &view)?]
    };
    write_out(cli, &[("evenness.tsv", export::evenness_tsv(&results))])?;
    match cli.format {
        Format::Structured => emit_json(&results),
        Format::Table => {
            let mut t = Table::new(["nbs", "name", "diversity", "facets", "evenness"]);
            for r in &results {
                t.row([
                    r.nbs.to_string(),
                    name_of(dataset, &r.nbs).to_owned(),
                    format!("{:.6}", r.diversity),
                    r.facet_count.to_string(),
                    r.evenness.map_or_else(|| "undefined".into(), |e| format!("{e:.6}")),
                ]);
            }
            out!("{}", t.render());
            Ok(())
        }
    }
}

fn analysis(cli: &Cli, dataset: &Dataset, config: &AnalysisConfig) -> Result<Analysis> {
    let matrix = load_matrix(cli, dataset)?;
    Ok(Analysis::from_matrix(dataset, matrix, config)?)
}

fn pca(cli: &Cli, dataset: &Dataset, config: &AnalysisConfig) -> Result<()> {
    let a = analysis(cli, dataset, config)?;
    let p = &a.pca;
    write_out(
        cli,
        &[
            ("pca_eigen.tsv", export::pca_eigen_tsv(p)),
            ("pca_scores.tsv", export::pca_scores_tsv(p, &dataset.catalogue)),
            ("pca_loadings.tsv", export::pca_loadings_tsv(p)),
            ("pca_imputed.tsv", export::imputed_tsv(p)),
        ],
    )?;
    match cli.format {
        Format::Structured => emit_json(&serde_json::json!({
            "result": p,
            "dropped_variables": a.pca_input.dropped,
        })),
        Format::Table => {
            let dropped: Vec<String> = a.pca_input.dropped.iter().map(ToString::to_string).collect();
            outln!(
                "variables: {}  dropped: {}  imputed cells: {}  iterations: {}{}",
                p.variables.len(),
                if dropped.is_empty() { "none".into() } else { dropped.join(", ") },
                p.imputed_cells.len(),
                p.imputation_iterations,
                if p.imputation_converged { "" } else { " (not converged)" }
            );
            let mut t = Table::new(["component", "eigenvalue", "variance %", "cumulative %"]);
            for m in 0..p.n_components() {
                t.row([
                    format!("PC{}", m + 1),
                    format!("{:.4}", p.eigenvalues[m]),
                    format!("{:.2}", 100.0 * p.variance_fraction[m]),
                    format!("{:.2}", 100.0 * p.cumulative_fraction(m + 1)),
                ]);
            }
            out!("{}", t.render());
            outln!();
            let mut t = Table::new(["nbs", "class", "PC1", "PC2"]);
            for (i, nbs) in p.rows.iter().enumerate() {
                let class = dataset
                    .catalogue
                    .entry(nbs)
                    .ok()
                    .and_then(|e| dataset.catalogue.taxonomy().ancestor_at_level(&e.taxonomy_leaf, 2))
                    .map(|c| c.to_string())
                    .unwrap_or_default();
                let s = &p.component_scores[i];
                t.row([
                    nbs.to_string(),
                    class,
                    opt(s.first().copied(), 4),
                    opt(s.get(1).copied(), 4),
                ]);
            }
            out!("{}", t.render());
            Ok(())
        }
    }
}

fn format_p(p: f64) -> String {
    if p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.2e}")
    }
}

fn chisq(cli: &Cli, a: u64, b: u64) -> Result<()> {
    let r = stats::chi_square_one_sample(a, b)?;
    match cli.format {
        Format::Structured => emit_json(&r),
        Format::Table => {
            outln!("X2={:.2} p={}", r.statistic, format_p(r.p_value));
            Ok(())
        }
    }
}

fn names(cli: &Cli, dataset: &Dataset, config: &AnalysisConfig, audit: bool) -> Result<()> {
    let decisions = consensus::resolve_all(&dataset.catalogue.ids(), &dataset.names, config.alpha)?;
    write_out(cli, &[("names.json", serde_json::to_string_pretty(&decisions)?)])?;
    match cli.format {
        Format::Structured => emit_json(&decisions),
        Format::Table => {
            let mut t = Table::new(["nbs", "path", "final name"]);
            for d in &decisions {
                t.row([d.nbs.to_string(), d.path.to_string(), d.final_name.clone()]);
            }
            out!("{}", t.render());
            let mut counts: BTreeMap<NameProvenance, usize> = BTreeMap::new();
            for d in &decisions {
                *counts.entry(d.path).or_default() += 1;
            }
            let summary: Vec<String> = counts.iter().map(|(p, n)| format!("{p}: {n}")).collect();
            outln!("{} decisions ({})", decisions.len(), summary.join(", "));
            if audit {
                for d in &decisions {
                    outln!("\n{} {}", d.nbs, d.final_name);
                    for s in &d.audit {
                        outln!("  [{:?}] {}: {} -> {}", s.stage, s.rule, s.inputs, s.outcome);
                        if let Some(w) = &s.warning {
                            outln!("    warning: {w}");
                        }
                    }
                }
            }
            Ok(())
        }
    }
}

fn parse_weights(text: &str) -> Result<BTreeMap<FacetId, f64>> {
    let mut out = BTreeMap::new();
    for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((facet, w)) = pair.split_once('=') else {
            bail!("--weights expects `facet=weight` pairs, got `{pair}`");
        };
        let w: f64 = w
            .trim()
            .parse()
            .with_context(|| format!("--weights: `{}` is not a number", w.trim()))?;
        if out.insert(FacetId::from(facet.trim()), w).is_some() {
            bail!("--weights names `{}` twice", facet.trim());
        }
    }
    Ok(out)
}

fn rank_target(facet: Option<&str>, category: Option<&str>, weights: Option<&str>) -> Result<RankTarget> {
    match (facet, category, weights) {
        (Some(f), None, None) => Ok(RankTarget::Facet(FacetId::from(f))),
        (None, Some(c), None) => EsCategory::parse(c)
            .map(RankTarget::Category)
            .with_context(|| format!("unknown ES category `{c}`")),
        (None, None, Some(w)) => Ok(RankTarget::Weights(parse_weights(w)?)),
        _ => bail!("rank needs exactly one of --facet, --category or --weights"),
    }
}

fn rank(cli: &Cli, dataset: &Dataset, request: &RankingRequest) -> Result<()> {
    let matrix = load_matrix(cli, dataset)?;
    let list = Explorer::new(&dataset.catalogue, &matrix).rank(request)?;
    write_out(cli, &[("ranking.json", serde_json::to_string_pretty(&list)?)])?;
    match cli.format {
        Format::Structured => emit_json(&list),
        Format::Table => {
            let mut t = Table::new(["rank", "nbs", "value", "name"]);
            for e in &list.entries {
                let value = if e.unassessed {
                    format!("{:.4}*", e.value)
                } else {
                    format!("{:.4}", e.value)
                };
                t.row([e.rank.to_string(), e.nbs.to_string(), value, e.name.clone()]);
            }
            out!("{}", t.render());
            if list.entries.iter().any(|e| e.unassessed) {
                outln!("* includes unassessed cells counted as 0");
            }
            Ok(())
        }
    }
}

fn export_all(cli: &Cli, dataset: &Dataset, config: &AnalysisConfig, top_n: usize) -> Result<()> {
    let Some(dir) = &cli.out else {
        bail!("export needs --out <dir>");
    };
    let a = analysis(cli, dataset, config)?;
    let written = export::write_all(dir, &a, &dataset.catalogue, top_n).with_context(|| format!("writing into {}", dir.display()))?;
    for path in &written {
        outln!("{}", path.display());
    }
    if cli.format == Format::Table {
        let mut t = Table::new(["facet", "median", "mean", "assessed"]);
        for f in a.matrix.columns() {
            let s = facet_summary(&a.matrix, &f.id)?;
            t.row([f.id.to_string(), format!("{:.4}", s.median), format!("{:.4}", s.mean), s.count_nonmissing.to_string()]);
        }
        outln!();
        out!("{}", t.render());
    }
    Ok(())
}

fn serve(cli: &Cli, bind: &str, config: AnalysisConfig) -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let source = source_from_arg(&cli.data);
    let service = match &cli.matrix {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let snapshot = nbs_service::Snapshot::with_matrix(1, source.as_ref(), &text, &config)?;
            nbs_service::Service::from_snapshot(snapshot, config)
        }
        None => nbs_service::Service::new(source.as_ref(), config)?,
    };
    let data = cli.data.clone();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        spawn_reload_on_hangup(service.clone(), data);
        nbs_service::serve(listener, service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

#[cfg(unix)]
fn spawn_reload_on_hangup(service: nbs_service::Service, data: String) {
    use tokio::signal::unix::{signal, SignalKind};
    tokio::spawn(async move {
        let Ok(mut hup) = signal(SignalKind::hangup()) else {
            tracing::warn!("SIGHUP handler unavailable; reload disabled");
            return;
        };
        while hup.recv().await.is_some() {
            let source = source_from_arg(&data);
            let svc = service.clone();
            match tokio::task::spawn_blocking(move || svc.reload(source.as_ref())).await {
                Ok(Ok(version)) => tracing::info!(version, "reloaded"),
                Ok(Err(e)) => tracing::error!(error = %e, "reload failed; keeping previous snapshot"),
                Err(e) => tracing::error!(error = %e, "reload task failed"),
            }
        }
    });
}

#[cfg(not(unix))]
fn spawn_reload_on_hangup(_service: nbs_service::Service, _data: String) {}
