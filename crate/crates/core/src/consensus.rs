//! Replays how each solution's final name was chosen: a first survey round
//! with a simple-majority threshold, a two-option second round settled by a
//! chi-square test, and for the remainder an arbitration on bibliographic
//! document counts with explicit vetoes and expert-supplied candidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::{Catalogue, NameProvenance};
use crate::dataset::{DataSource, DatasetError};
use crate::ids::NbsId;
use crate::stats::{chi_square_one_sample, ChiSquareResult, StatsError};
use crate::tsv::{self, ParseError};

pub const ROUND1_FILE: &str = "round1.tsv";
pub const ROUND2_FILE: &str = "round2.tsv";
pub const CITATIONS_FILE: &str = "citations.tsv";

/// Minimum share, in percent, that settles a first-round vote.
pub const ROUND1_THRESHOLD: f64 = 50.0;
/// Minimum document count for a surveyed name to win on citations alone.
pub const MIN_CITATIONS: u64 = 10;
pub const DEFAULT_ALPHA: f64 = 0.05;

pub type DecisionPath = NameProvenance;

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("{nbs}: options {options:?} all reach the 50% threshold")]
    Tie { nbs: NbsId, options: Vec<String> },
    #[error("{nbs}: malformed tally: {detail}")]
    BadTally { nbs: NbsId, detail: String },
    #[error("cannot reconstruct counts from {percentage_a}% of {total_valid}")]
    Reconstruct { percentage_a: f64, total_valid: u64 },
    #[error("{0}: every citation candidate is vetoed")]
    AllVetoed(NbsId),
    #[error("no citation candidates")]
    NoCandidates,
    #[error("{nbs}: escalated to {stage} but no data is available for it")]
    MissingStage { nbs: NbsId, stage: Stage },
    #[error("{0}: no first-round tally")]
    NoRound1(NbsId),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Round {
    One,
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteOption {
    pub name: String,
    /// Percentage of valid votes.
    pub percentage: f64,
    /// An aggregate of low-vote write-ins rather than a real name.
    pub bucket: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoteTally {
    pub nbs: NbsId,
    pub round: Round,
    /// In survey order.
    pub options: Vec<VoteOption>,
    /// Votes minus blanks; second round only.
    pub total_valid: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    Surveyed,
    ExpertSupplied,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CitationCount {
    pub candidate: String,
    pub count: u64,
    pub source: CandidateSource,
    /// Reason the name was ruled out, if it was.
    pub veto: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    Round1,
    Round2,
    Citations,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Round1 => "round 1",
            Stage::Round2 => "round 2",
            Stage::Citations => "citation arbitration",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditStep {
    pub stage: Stage,
    pub rule: String,
    pub inputs: String,
    pub outcome: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NameDecision {
    pub nbs: NbsId,
    pub final_name: String,
    pub path: DecisionPath,
    pub audit: Vec<AuditStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Round1Outcome {
    Selected(String),
    /// The two best-ranked real options, best first.
    Escalate(Vec<String>),
}

pub fn round1_select(tally: &VoteTally) -> Result<Round1Outcome, ConsensusError> {
    if tally.round != Round::One {
        return Err(ConsensusError::BadTally {
            nbs: tally.nbs.clone(),
            detail: "expected a first-round tally".into(),
        });
    }
    let real: Vec<&VoteOption> = tally.options.iter().filter(|o| !o.bucket).collect();
    let winners: Vec<&VoteOption> = real.iter().copied().filter(|o| o.percentage >= ROUND1_THRESHOLD).collect();
    match winners.as_slice() {
        [one] => return Ok(Round1Outcome::Selected(one.name.clone())),
        [] => {}
        many => {
            return Err(ConsensusError::Tie {
                nbs: tally.nbs.clone(),
                options: many.iter().map(|o| o.name.clone()).collect(),
            })
        }
    }
    if real.len() < 2 {
        return Err(ConsensusError::BadTally {
            nbs: tally.nbs.clone(),
            detail: "fewer than two options and no majority".into(),
        });
    }
    let mut ranked = real;
    // stable: equal shares keep survey order
    ranked.sort_by(|a, b| b.percentage.total_cmp(&a.percentage));
    Ok(Round1Outcome::Escalate(ranked.iter().take(2).map(|o| o.name.clone()).collect()))
}

/// Recovers integer vote counts from a reported percentage split.
pub fn reconstruct_counts(percentage_a: f64, _percentage_b: f64, total_valid: u64) -> Result<(u64, u64), ConsensusError> {
    let a = (percentage_a / 100.0 * total_valid as f64).round();
    if total_valid == 0 || !a.is_finite() || a < 0.0 || a > total_valid as f64 {
        return Err(ConsensusError::Reconstruct { percentage_a, total_valid });
    }
    let a = a as u64;
    Ok((a, total_valid - a))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Round2Report {
    pub counts: (u64, u64),
    pub test: ChiSquareResult,
    /// Option with more votes (the first on a tie).
    pub majority: String,
    pub significant: bool,
}

pub fn round2_test(tally: &VoteTally, alpha: f64) -> Result<Round2Report, ConsensusError> {
    let bad = |detail: &str| ConsensusError::BadTally {
        nbs: tally.nbs.clone(),
        detail: detail.into(),
    };
    if tally.round != Round::Two {
        return Err(bad("expected a second-round tally"));
    }
    let [a, b] = tally.options.as_slice() else {
        return Err(bad("second round needs exactly two options"));
    };
    let total = tally.total_valid.ok_or_else(|| bad("missing total valid votes"))?;
    let counts = reconstruct_counts(a.percentage, b.percentage, total)?;
    let test = chi_square_one_sample(counts.0, counts.1)?;
    let majority = if counts.1 > counts.0 { &b.name } else { &a.name };
    Ok(Round2Report {
        counts,
        test,
        majority: majority.clone(),
        significant: test.p_value < alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arbitration {
    pub final_name: String,
    pub path: DecisionPath,
    pub steps: Vec<AuditStep>,
}

fn best<'a>(cands: &[&'a CitationCount]) -> (&'a CitationCount, bool) {
    let top = cands.iter().map(|c| c.count).max().expect("non-empty");
    let mut at_top = cands.iter().filter(|c| c.count == top);
    let first = at_top.next().expect("max exists");
    (first, at_top.next().is_some())
}

fn list(cands: &[&CitationCount]) -> String {
    cands
        .iter()
        .map(|c| format!("{} ({})", c.candidate, c.count))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Chooses among candidate names by document count.
///
/// Vetoed names are dropped first. A surveyed name with at least
/// [`MIN_CITATIONS`] documents wins by count. Failing that, every surviving
/// name, expert-supplied ones included, competes on count. The decision is
/// an expert override when that fallback is used or when a vetoed name
/// outranked the winner.
pub fn citation_arbitrate(candidates: &[CitationCount]) -> Result<Arbitration, ConsensusError> {
    if candidates.is_empty() {
        return Err(ConsensusError::NoCandidates);
    }
    let mut steps = Vec::new();
    let vetoed: Vec<&CitationCount> = candidates.iter().filter(|c| c.veto.is_some()).collect();
    let survivors: Vec<&CitationCount> = candidates.iter().filter(|c| c.veto.is_none()).collect();
    steps.push(AuditStep {
        stage: Stage::Citations,
        rule: "discard names that do not distinguish the solution".into(),
        inputs: list(&candidates.iter().collect::<Vec<_>>()),
        outcome: if vetoed.is_empty() {
            "no vetoes".into()
        } else {
            vetoed
                .iter()
                .map(|c| format!("vetoed {}: {}", c.candidate, c.veto.as_deref().unwrap_or_default()))
                .collect::<Vec<_>>()
                .join("; ")
        },
        warning: None,
    });
    if survivors.is_empty() {
        return Err(ConsensusError::AllVetoed(NbsId::from("?")));
    }

    let qualified: Vec<&CitationCount> = survivors
        .iter()
        .copied()
        .filter(|c| c.source == CandidateSource::Surveyed && c.count >= MIN_CITATIONS)
        .collect();
    let tie_note = |tied: bool, w: &CitationCount| tied.then(|| format!("tie at {} documents, first listed kept", w.count));
    let (winner, fallback) = if qualified.is_empty() {
        steps.push(AuditStep {
            stage: Stage::Citations,
            rule: format!("surveyed name with at least {MIN_CITATIONS} documents"),
            inputs: list(&survivors),
            outcome: "none qualifies".into(),
            warning: None,
        });
        let (w, tied) = best(&survivors);
        steps.push(AuditStep {
            stage: Stage::Citations,
            rule: "most documents among remaining and expert-supplied names".into(),
            inputs: list(&survivors),
            outcome: format!("selected {}", w.candidate),
            warning: tie_note(tied, w),
        });
        (w, true)
    } else {
        let (w, tied) = best(&qualified);
        steps.push(AuditStep {
            stage: Stage::Citations,
            rule: format!("surveyed name with at least {MIN_CITATIONS} documents, most documents wins"),
            inputs: list(&qualified),
            outcome: format!("selected {}", w.candidate),
            warning: tie_note(tied, w),
        });
        (w, false)
    };
    let outranked = vetoed.iter().any(|v| v.count > winner.count);
    let path = if fallback || outranked {
        DecisionPath::ExpertOverride
    } else {
        DecisionPath::CitationArbitration
    };
    Ok(Arbitration {
        final_name: winner.candidate.clone(),
        path,
        steps,
    })
}

/// Survey and citation tables for every solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NameInputs {
    pub round1: BTreeMap<NbsId, VoteTally>,
    pub round2: BTreeMap<NbsId, VoteTally>,
    pub citations: BTreeMap<NbsId, Vec<CitationCount>>,
}

fn fmt_options(tally: &VoteTally) -> String {
    tally
        .options
        .iter()
        .map(|o| format!("{} {:.1}%{}", o.name, o.percentage, if o.bucket { " [bucket]" } else { "" }))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn resolve_name(nbs: &NbsId, inputs: &NameInputs, alpha: f64) -> Result<NameDecision, ConsensusError> {
    let r1 = inputs.round1.get(nbs).ok_or_else(|| ConsensusError::NoRound1(nbs.clone()))?;
    let mut audit = Vec::new();
    let decided = |final_name: String, path, audit| NameDecision {
        nbs: nbs.clone(),
        final_name,
        path,
        audit,
    };

    match round1_select(r1)? {
        Round1Outcome::Selected(name) => {
            audit.push(AuditStep {
                stage: Stage::Round1,
                rule: format!("option with at least {ROUND1_THRESHOLD}% of valid votes"),
                inputs: fmt_options(r1),
                outcome: format!("selected {name}"),
                warning: None,
            });
            return Ok(decided(name, DecisionPath::Round1, audit));
        }
        Round1Outcome::Escalate(top) => {
            let mut shares: Vec<f64> = r1.options.iter().filter(|o| !o.bucket).map(|o| o.percentage).collect();
            shares.sort_by(|a, b| b.total_cmp(a));
            let tied = shares.len() > 2 && shares[1] == shares[2];
            audit.push(AuditStep {
                stage: Stage::Round1,
                rule: format!("option with at least {ROUND1_THRESHOLD}% of valid votes"),
                inputs: fmt_options(r1),
                outcome: format!("no majority, escalate {}", top.join(" vs ")),
                warning: tied.then(|| "tie for second place, first listed kept".into()),
            });
        }
    }

    let r2 = inputs.round2.get(nbs).ok_or_else(|| ConsensusError::MissingStage {
        nbs: nbs.clone(),
        stage: Stage::Round2,
    })?;
    let report = round2_test(r2, alpha)?;
    audit.push(AuditStep {
        stage: Stage::Round2,
        rule: format!("one-sample chi-square on reconstructed counts, p < {alpha}"),
        inputs: format!(
            "{} (n = {}) -> counts {} / {}",
            fmt_options(r2),
            r2.total_valid.unwrap_or_default(),
            report.counts.0,
            report.counts.1
        ),
        outcome: format!(
            "X2 = {:.2}, p = {:.3}: {}",
            report.test.statistic,
            report.test.p_value,
            if report.significant {
                format!("selected {}", report.majority)
            } else {
                "not significant, escalate".into()
            }
        ),
        warning: None,
    });
    if report.significant {
        return Ok(decided(report.majority, DecisionPath::Round2, audit));
    }

    let cands = inputs.citations.get(nbs).ok_or_else(|| ConsensusError::MissingStage {
        nbs: nbs.clone(),
        stage: Stage::Citations,
    })?;
    let arb = citation_arbitrate(cands).map_err(|e| match e {
        ConsensusError::AllVetoed(_) => ConsensusError::AllVetoed(nbs.clone()),
        other => other,
    })?;
    audit.extend(arb.steps);
    Ok(decided(arb.final_name, arb.path, audit))
}

pub fn resolve_all(ids: &[NbsId], inputs: &NameInputs, alpha: f64) -> Result<Vec<NameDecision>, ConsensusError> {
    ids.iter().map(|id| resolve_name(id, inputs, alpha)).collect()
}

#[derive(Deserialize)]
struct Round1Row {
    nbs: NbsId,
    option: String,
    percentage: f64,
    bucket: bool,
}

#[derive(Deserialize)]
struct Round2Row {
    nbs: NbsId,
    option: String,
    percentage: f64,
    total_valid: u64,
}

#[derive(Deserialize)]
struct CitationRow {
    nbs: NbsId,
    candidate: String,
    count: u64,
    source: CandidateSource,
    vetoed: bool,
    veto_reason: String,
}

fn check_nbs(file: &str, line: u64, nbs: &NbsId, catalogue: &Catalogue) -> Result<(), ParseError> {
    catalogue
        .entry(nbs)
        .map(|_| ())
        .map_err(|_| ParseError::field(file, line, "nbs", format!("unknown NBS id `{nbs}`")))
}

fn check_percentage(file: &str, line: u64, p: f64) -> Result<(), ParseError> {
    if p.is_finite() && (0.0..=100.0).contains(&p) {
        Ok(())
    } else {
        Err(ParseError::field(file, line, "percentage", format!("{p} is not a percentage")))
    }
}

/// Parses the three decision tables and checks them against the catalogue.
pub fn parse_name_inputs(round1: &str, round2: &str, citations: &str, catalogue: &Catalogue) -> Result<NameInputs, ParseError> {
    let mut inputs = NameInputs::default();
    for tsv::Line { line, record: r } in tsv::read_records::<Round1Row>(ROUND1_FILE, round1)? {
        check_nbs(ROUND1_FILE, line, &r.nbs, catalogue)?;
        check_percentage(ROUND1_FILE, line, r.percentage)?;
        inputs
            .round1
            .entry(r.nbs.clone())
            .or_insert_with(|| VoteTally {
                nbs: r.nbs,
                round: Round::One,
                options: Vec::new(),
                total_valid: None,
            })
            .options
            .push(VoteOption {
                name: r.option,
                percentage: r.percentage,
                bucket: r.bucket,
            });
    }
    let mut last_line = BTreeMap::new();
    for tsv::Line { line, record: r } in tsv::read_records::<Round2Row>(ROUND2_FILE, round2)? {
        check_nbs(ROUND2_FILE, line, &r.nbs, catalogue)?;
        check_percentage(ROUND2_FILE, line, r.percentage)?;
        let tally = inputs.round2.entry(r.nbs.clone()).or_insert_with(|| VoteTally {
            nbs: r.nbs.clone(),
            round: Round::Two,
            options: Vec::new(),
            total_valid: Some(r.total_valid),
        });
        if tally.total_valid != Some(r.total_valid) {
            return Err(ParseError::field(ROUND2_FILE, line, "total_valid", "differs from the other option of the same NBS"));
        }
        if tally.options.len() == 2 {
            return Err(ParseError::record(ROUND2_FILE, line, format!("{} has more than two second-round options", r.nbs)));
        }
        tally.options.push(VoteOption {
            name: r.option,
            percentage: r.percentage,
            bucket: false,
        });
        last_line.insert(r.nbs, line);
    }
    for (nbs, tally) in &inputs.round2 {
        if tally.options.len() != 2 {
            return Err(ParseError::record(ROUND2_FILE, last_line[nbs], format!("{nbs} has a single second-round option")));
        }
    }
    for tsv::Line { line, record: r } in tsv::read_records::<CitationRow>(CITATIONS_FILE, citations)? {
        check_nbs(CITATIONS_FILE, line, &r.nbs, catalogue)?;
        let reason = r.veto_reason.trim();
        let veto = match (r.vetoed, reason.is_empty()) {
            (true, true) => return Err(ParseError::field(CITATIONS_FILE, line, "veto_reason", "a vetoed name needs a reason")),
            (true, false) => Some(reason.to_owned()),
            (false, true) => None,
            (false, false) => {
                return Err(ParseError::field(CITATIONS_FILE, line, "veto_reason", "reason given for a name that is not vetoed"))
            }
        };
        inputs.citations.entry(r.nbs).or_default().push(CitationCount {
            candidate: r.candidate,
            count: r.count,
            source: r.source,
            veto,
        });
    }
    Ok(inputs)
}

pub fn load_name_inputs(source: &dyn DataSource, catalogue: &Catalogue) -> Result<NameInputs, DatasetError> {
    Ok(parse_name_inputs(
        &source.read(ROUND1_FILE)?,
        &source.read(ROUND2_FILE)?,
        &source.read(CITATIONS_FILE)?,
        catalogue,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r1(options: &[(&str, f64)]) -> VoteTally {
        VoteTally {
            nbs: NbsId::from("NBS1"),
            round: Round::One,
            options: options
                .iter()
                .map(|&(n, p)| VoteOption {
                    name: n.into(),
                    percentage: p,
                    bucket: n == "Others",
                })
                .collect(),
            total_valid: None,
        }
    }

    fn r2(a: (&str, f64), b: (&str, f64), total: u64) -> VoteTally {
        VoteTally {
            nbs: NbsId::from("NBS1"),
            round: Round::Two,
            options: [a, b]
                .iter()
                .map(|&(n, p)| VoteOption {
                    name: n.into(),
                    percentage: p,
                    bucket: false,
                })
                .collect(),
            total_valid: Some(total),
        }
    }

    fn cand(name: &str, count: u64, source: CandidateSource, veto: Option<&str>) -> CitationCount {
        CitationCount {
            candidate: name.into(),
            count,
            source,
            veto: veto.map(Into::into),
        }
    }

    use CandidateSource::{ExpertSupplied as E, Surveyed as S};

    #[test]
    fn round1_examples() {
        let t = r1(&[("(Wet) Retention Pond", 63.7), ("Grassed swales and water retention ponds", 27.4), ("Others", 8.9)]);
        assert_eq!(round1_select(&t).unwrap(), Round1Outcome::Selected("(Wet) Retention Pond".into()));
        let t = r1(&[
            ("Infiltration basin", 41.1),
            ("(Dry) Detention Pond", 34.2),
            ("Floodable park", 17.1),
            ("Others", 7.5),
        ]);
        assert_eq!(
            round1_select(&t).unwrap(),
            Round1Outcome::Escalate(vec!["Infiltration basin".into(), "(Dry) Detention Pond".into()])
        );
        assert!(matches!(round1_select(&r1(&[("A", 50.0), ("B", 50.0)])), Err(ConsensusError::Tie { .. })));
        assert_eq!(round1_select(&r1(&[("A", 50.0), ("B", 30.0)])).unwrap(), Round1Outcome::Selected("A".into()));
    }

    #[test]
    fn round1_ignores_bucket_and_breaks_ties_by_order() {
        let t = r1(&[("A", 30.0), ("Others", 60.0), ("B", 5.0)]);
        assert_eq!(round1_select(&t).unwrap(), Round1Outcome::Escalate(vec!["A".into(), "B".into()]));
        let t = r1(&[("A", 25.5), ("B", 14.5), ("C", 14.5), ("Others", 21.8)]);
        assert_eq!(round1_select(&t).unwrap(), Round1Outcome::Escalate(vec!["A".into(), "B".into()]));
    }

    #[test]
    fn reconstruct_examples() {
        assert_eq!(reconstruct_counts(64.0, 36.0, 86).unwrap(), (55, 31));
        assert_eq!(reconstruct_counts(61.2, 38.8, 85).unwrap(), (52, 33));
        assert_eq!(reconstruct_counts(50.0, 50.0, 10).unwrap(), (5, 5));
        assert!(reconstruct_counts(150.0, 0.0, 10).is_err());
        assert!(reconstruct_counts(50.0, 50.0, 0).is_err());
    }

    #[test]
    fn round2_examples() {
        let rep = round2_test(&r2(("Large urban public park", 38.8), ("Large urban park", 61.2), 85), 0.05).unwrap();
        assert_eq!(rep.counts, (33, 52));
        assert!(rep.significant);
        assert_eq!(rep.majority, "Large urban park");
        assert!((rep.test.p_value - 0.04).abs() < 0.005);

        let rep = round2_test(&r2(("Constructed wetlands", 51.7), ("Other", 48.3), 87), 0.05).unwrap();
        assert_eq!(rep.counts, (45, 42));
        assert!(!rep.significant);
        assert!((rep.test.p_value - 0.75).abs() < 0.005);

        let rep = round2_test(&r2(("A", 50.0), ("B", 50.0), 10), 0.05).unwrap();
        assert_eq!(rep.test.p_value, 1.0);
        assert!(!rep.significant);
        assert!(round2_test(&r1(&[("A", 60.0), ("B", 40.0)]), 0.05).is_err());
    }

    #[test]
    fn citation_examples() {
        let a = citation_arbitrate(&[cand("Swale", 2068, S, None), cand("Bioswale", 135, S, None)]).unwrap();
        assert_eq!((a.final_name.as_str(), a.path), ("Swale", DecisionPath::CitationArbitration));

        let a = citation_arbitrate(&[
            cand("Floodplain", 30330, S, Some("indistinct")),
            cand("Reprofiling/Extending floodplain area", 19, S, None),
        ])
        .unwrap();
        assert_eq!(
            (a.final_name.as_str(), a.path),
            ("Reprofiling/Extending floodplain area", DecisionPath::ExpertOverride)
        );

        let a = citation_arbitrate(&[
            cand("Vegetation engineering systems for riverbank erosion control", 0, S, None),
            cand("Systems for erosion control", 7, S, Some("no site")),
            cand("Riverbank engineering", 1, E, None),
        ])
        .unwrap();
        assert_eq!((a.final_name.as_str(), a.path), ("Riverbank engineering", DecisionPath::ExpertOverride));

        assert_eq!(
            citation_arbitrate(&[cand("A", 5, S, Some("x"))]),
            Err(ConsensusError::AllVetoed(NbsId::from("?")))
        );
        assert_eq!(citation_arbitrate(&[]), Err(ConsensusError::NoCandidates));
    }

    #[test]
    fn expert_names_do_not_win_on_count_alone() {
        // A qualifying surveyed name beats a bigger expert-supplied count.
        let a = citation_arbitrate(&[cand("A", 12, S, None), cand("B", 500, E, None)]).unwrap();
        assert_eq!((a.final_name.as_str(), a.path), ("A", DecisionPath::CitationArbitration));
    }

    #[test]
    fn citation_tie_keeps_first_with_warning() {
        let a = citation_arbitrate(&[cand("A", 40, S, None), cand("B", 40, S, None)]).unwrap();
        assert_eq!(a.final_name, "A");
        assert!(a.steps.iter().any(|s| s.warning.is_some()));
    }

    fn bundled_inputs() -> (Catalogue, NameInputs) {
        let ds = crate::Dataset::bundled().unwrap();
        (ds.catalogue, ds.names)
    }

    #[test]
    fn bundled_replay_matches_catalogue() {
        let (cat, inputs) = bundled_inputs();
        let decisions = resolve_all(&cat.ids(), &inputs, DEFAULT_ALPHA).unwrap();
        let mut paths = BTreeMap::new();
        for d in &decisions {
            let entry = cat.entry(&d.nbs).unwrap();
            assert_eq!(d.final_name, entry.final_name, "{}", d.nbs);
            assert_eq!(d.path, entry.name_provenance, "{}", d.nbs);
            assert!(!d.audit.is_empty());
            *paths.entry(d.path).or_insert(0) += 1;
        }
        assert_eq!(paths[&DecisionPath::Round1], 20);
        assert_eq!(paths[&DecisionPath::Round2], 7);
        let beyond: Vec<&str> = decisions
            .iter()
            .filter(|d| matches!(d.path, DecisionPath::CitationArbitration | DecisionPath::ExpertOverride))
            .map(|d| d.nbs.as_str())
            .collect();
        assert_eq!(beyond, ["NBS4", "NBS5", "NBS6", "NBS28", "NBS30"]);
    }

    #[test]
    fn bundled_second_round_statistics() {
        let (_, inputs) = bundled_inputs();
        let expected = [
            ("NBS1", 6.70),
            ("NBS4", 0.97),
            ("NBS5", 0.10),
            ("NBS6", 2.78),
            ("NBS17", 4.25),
            ("NBS26", 4.57),
            ("NBS27", 16.90),
            ("NBS28", 0.21),
            ("NBS29", 22.34),
            ("NBS30", 0.45),
            ("NBS31", 4.76),
            ("NBS32", 4.15),
        ];
        assert_eq!(inputs.round2.len(), expected.len());
        for (id, x2) in expected {
            let rep = round2_test(&inputs.round2[&NbsId::from(id)], DEFAULT_ALPHA).unwrap();
            assert!((rep.test.statistic - x2).abs() <= 0.01, "{id}: {}", rep.test.statistic);
        }
    }

    #[test]
    fn tight_threshold() {
        let (cat, mut inputs) = bundled_inputs();
        let id = NbsId::from("NBS2");
        let opt = &mut inputs.round1.get_mut(&id).unwrap().options[0];
        opt.percentage = 49.9;
        let err = resolve_name(&id, &inputs, DEFAULT_ALPHA).unwrap_err();
        assert!(matches!(err, ConsensusError::MissingStage { stage: Stage::Round2, .. }));
        assert!(cat.entry(&id).is_ok());
    }

    #[test]
    fn decisions_are_deterministic() {
        let (cat, inputs) = bundled_inputs();
        assert_eq!(
            resolve_all(&cat.ids(), &inputs, DEFAULT_ALPHA).unwrap(),
            resolve_all(&cat.ids(), &inputs, DEFAULT_ALPHA).unwrap()
        );
    }

    #[test]
    fn lowering_alpha_never_adds_round2_decisions() {
        let (cat, inputs) = bundled_inputs();
        for id in cat.ids() {
            let mut prev_round2 = true;
            for alpha in [0.2, 0.1, 0.05, 0.01, 0.001, 1e-6] {
                let Ok(d) = resolve_name(&id, &inputs, alpha) else { continue };
                let is_round2 = d.path == DecisionPath::Round2;
                assert!(prev_round2 || !is_round2, "{id} at alpha {alpha}");
                prev_round2 = is_round2;
            }
        }
    }

    #[test]
    fn vetoed_without_reason_is_rejected() {
        let (cat, _) = bundled_inputs();
        let cites = "nbs\tcandidate\tcount\tsource\tvetoed\tveto_reason\nNBS4\tSwale\t3\tSurveyed\ttrue\t\n";
        let err = parse_name_inputs("nbs\toption\tpercentage\tbucket\n", "nbs\toption\tpercentage\ttotal_valid\n", cites, &cat).unwrap_err();
        assert!(matches!(err, ParseError::Field { ref field, line: 2, .. } if field == "veto_reason"), "{err}");
    }

    #[test]
    fn unknown_nbs_in_tallies_is_rejected() {
        let (cat, _) = bundled_inputs();
        let r1 = "nbs\toption\tpercentage\tbucket\nNBS77\tA\t60\tfalse\n";
        let err = parse_name_inputs(r1, "nbs\toption\tpercentage\ttotal_valid\n", "nbs\tcandidate\tcount\tsource\tvetoed\tveto_reason\n", &cat)
            .unwrap_err();
        assert!(err.to_string().contains("NBS77"));
    }

    proptest! {
        #[test]
        fn reconstruction_sums_to_total(p in 0.0f64..=100.0, total in 1u64..100_000) {
            let (a, b) = reconstruct_counts(p, 100.0 - p, total).unwrap();
            prop_assert_eq!(a + b, total);
        }

        #[test]
        fn round1_selects_iff_some_real_option_reaches_half(shares in prop::collection::vec(0.0f64..100.0, 2..6)) {
            let names: Vec<String> = (0..shares.len()).map(|i| format!("opt{i}")).collect();
            let opts: Vec<(&str, f64)> = names.iter().map(String::as_str).zip(shares.iter().copied()).collect();
            let reaching = shares.iter().filter(|&&s| s >= 50.0).count();
            match round1_select(&r1(&opts)) {
                Ok(Round1Outcome::Selected(n)) => {
                    prop_assert_eq!(reaching, 1);
                    let i: usize = n[3..].parse().unwrap();
                    prop_assert!(shares[i] >= 50.0);
                }
                Ok(Round1Outcome::Escalate(top)) => {
                    prop_assert_eq!(reaching, 0);
                    prop_assert_eq!(top.len(), 2);
                }
                Err(ConsensusError::Tie { .. }) => prop_assert!(reaching >= 2),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
