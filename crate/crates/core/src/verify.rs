//! Cross-checking of recorded claims and of engine against oracle.
//!
//! Claims live in a small line-oriented file:
//!
//! ```text
//! morphclaims 1
//! quality tau1_S1 structure tau1 select L2*R1*E2*M0 = (2;4,0,0)
//! quality alpha trajectory stages mode adjacent select tau0.S1*tau1.S2 = (3;4,0,0) note "reported"
//! front tau1 structure tau1 = L2*R1*E2*M0 (2;4,0,0) L2*R1*E1*M0 (3;3,1,0)
//! front stages trajectory stages mode all-pairs = S1*S2 S1*S3
//! ```
//!
//! `quality` pins the quality vector of one selection; `front` pins the
//! exact first Pareto layer (qualities optional). Structure claims accept
//! `node <id>` and `rule declared|pareto`.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::morphfile::MorphDocument;
use crate::oracle::{diff_solutions, diff_trajectories, oracle_synthesize, oracle_trajectories, DEFAULT_CAP};
use crate::quality::QualityVector;
use crate::synthesis::{evaluate_selection, synthesize_node, PriorityRule, SynthesisConfig};
use crate::trajectory::{evaluate_assignment, solve, AggregationMode, TrajectoryProblem};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Subject {
    Structure {
        structure: String,
        node: Option<String>,
        rule: PriorityRule,
    },
    Trajectory {
        network: String,
        mode: AggregationMode,
    },
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Structure {
                structure,
                node,
                rule,
            } => {
                write!(f, "structure {structure}")?;
                if let Some(n) = node {
                    write!(f, " node {n}")?;
                }
                if *rule == PriorityRule::Declared {
                    write!(f, " rule declared")?;
                }
                Ok(())
            }
            Subject::Trajectory { network, mode } => {
                write!(f, "trajectory {network} mode {}", mode.keyword())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "claim", rename_all = "lowercase")]
pub enum Assertion {
    Quality {
        selection: Vec<String>,
        expected: QualityVector,
    },
    Front {
        members: Vec<(Vec<String>, Option<QualityVector>)>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Claim {
    pub label: String,
    pub line: usize,
    pub subject: Subject,
    pub assertion: Assertion,
    pub note: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("claims line {line}: {message}")]
pub struct ClaimsError {
    pub line: usize,
    pub message: String,
}

fn words(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut s = String::from("\"");
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some(c) => s.push(c),
                    None => return Err("unterminated string".into()),
                }
            }
            out.push(s);
        } else {
            let mut s = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                s.push(c);
                chars.next();
            }
            out.push(s);
        }
    }
    Ok(out)
}

fn split_selection(s: &str) -> Vec<String> {
    s.split('*').map(str::to_string).collect()
}

fn parse_claim(ws: &[String], line: usize) -> Result<Claim, String> {
    let mut it = ws.iter().map(String::as_str).peekable();
    let kind = it.next().ok_or("empty claim")?;
    let label = it.next().ok_or("missing label")?.to_string();
    let subject = match it.next() {
        Some("structure") => {
            let structure = it.next().ok_or("missing structure name")?.to_string();
            let mut node = None;
            let mut rule = PriorityRule::ParetoLayer;
            loop {
                match it.peek() {
                    Some(&"node") => {
                        it.next();
                        node = Some(it.next().ok_or("missing node id")?.to_string());
                    }
                    Some(&"rule") => {
                        it.next();
                        rule = match it.next() {
                            Some("declared") => PriorityRule::Declared,
                            Some("pareto") => PriorityRule::ParetoLayer,
                            other => return Err(format!("unknown rule {other:?}")),
                        };
                    }
                    _ => break,
                }
            }
            Subject::Structure {
                structure,
                node,
                rule,
            }
        }
        Some("trajectory") => {
            let network = it.next().ok_or("missing network name")?.to_string();
            let mut mode = AggregationMode::Adjacent;
            if it.peek() == Some(&"mode") {
                it.next();
                let m = it.next().ok_or("missing mode")?;
                mode = AggregationMode::from_keyword(m).ok_or_else(|| format!("unknown mode {m}"))?;
            }
            Subject::Trajectory { network, mode }
        }
        other => return Err(format!("expected `structure` or `trajectory`, found {other:?}")),
    };
    let mut note = None;
    let assertion = match kind {
        "quality" => {
            if it.next() != Some("select") {
                return Err("expected `select`".into());
            }
            let selection = split_selection(it.next().ok_or("missing selection")?);
            if it.next() != Some("=") {
                return Err("expected `=`".into());
            }
            let q = it.next().ok_or("missing quality vector")?;
            let expected = q.parse::<QualityVector>().map_err(|e| e.to_string())?;
            Assertion::Quality { selection, expected }
        }
        "front" => {
            if it.next() != Some("=") {
                return Err("expected `=`".into());
            }
            let mut members: Vec<(Vec<String>, Option<QualityVector>)> = Vec::new();
            while let Some(&w) = it.peek() {
                if w == "note" {
                    break;
                }
                it.next();
                if w.starts_with('(') {
                    let q = w.parse::<QualityVector>().map_err(|e| e.to_string())?;
                    match members.last_mut() {
                        Some(m) if m.1.is_none() => m.1 = Some(q),
                        _ => return Err(format!("quality {w} does not follow a selection")),
                    }
                } else {
                    members.push((split_selection(w), None));
                }
            }
            Assertion::Front { members }
        }
        other => return Err(format!("unknown claim kind {other}")),
    };
    if it.peek() == Some(&"note") {
        it.next();
        let n = it.next().ok_or("missing note text")?;
        note = Some(n.trim_start_matches('"').to_string());
    }
    if let Some(extra) = it.next() {
        return Err(format!("unexpected {extra}"));
    }
    Ok(Claim {
        label,
        line,
        subject,
        assertion,
        note,
    })
}

/// Parses a claims file. The `morphclaims 1` header is optional.
pub fn parse_claims(text: &str) -> Result<Vec<Claim>, ClaimsError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let ws = words(raw).map_err(|message| ClaimsError { line, message })?;
        if ws.is_empty() {
            continue;
        }
        if ws[0] == "morphclaims" {
            if ws.get(1).map(String::as_str) != Some("1") || ws.len() != 2 {
                return Err(ClaimsError {
                    line,
                    message: "unsupported claims header".into(),
                });
            }
            continue;
        }
        out.push(parse_claim(&ws, line).map_err(|message| ClaimsError { line, message })?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Verdict {
    Match,
    Mismatch { recomputed: String },
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClaimResult {
    pub label: String,
    pub subject: String,
    pub statement: String,
    pub note: Option<String>,
    pub verdict: Verdict,
}

impl fmt::Display for ClaimResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "claim {} [{}] {}: ", self.label, self.subject, self.statement)?;
        match &self.verdict {
            Verdict::Match => f.write_str("MATCH")?,
            Verdict::Mismatch { recomputed } => write!(f, "MISMATCH(recomputed={recomputed})")?,
            Verdict::Error { message } => write!(f, "ERROR({message})")?,
        }
        if let Some(n) = &self.note {
            write!(f, " # {n}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OracleCheck {
    pub subject: String,
    /// `None` when engine and oracle agree.
    pub disagreement: Option<String>,
    /// Set when the check could not run on either side (same error).
    pub skipped: Option<String>,
    pub solutions: usize,
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.disagreement, &self.skipped) {
            (Some(d), _) => write!(f, "oracle [{}]: DISAGREE {d}", self.subject),
            (None, Some(s)) => write!(f, "oracle [{}]: skipped ({s})", self.subject),
            (None, None) => write!(
                f,
                "oracle [{}]: agree ({} solutions)",
                self.subject, self.solutions
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub claims: Vec<ClaimResult>,
    pub oracle: Vec<OracleCheck>,
}

impl VerifyReport {
    pub fn engine_agrees(&self) -> bool {
        self.oracle.iter().all(|c| c.disagreement.is_none())
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &ClaimResult> {
        self.claims
            .iter()
            .filter(|c| matches!(c.verdict, Verdict::Mismatch { .. }))
    }
}

/// `q` printed with at least `len` tiers, dropping surplus trailing zeros.
fn shown(q: &QualityVector, len: usize) -> String {
    let keep = q.n.iter().rposition(|&x| x != 0).map_or(0, |i| i + 1).max(len);
    q.with_tiers(keep).to_string()
}

fn structure_cfg(rule: PriorityRule) -> SynthesisConfig {
    SynthesisConfig::default().with_rule(rule)
}

fn node_of(doc: &MorphDocument, structure: &str, node: &Option<String>) -> Result<String, String> {
    let s = doc
        .structure(structure)
        .ok_or_else(|| format!("unknown structure {structure}"))?;
    match node {
        Some(n) => Ok(n.clone()),
        None => s
            .root()
            .map(|r| r.id.clone())
            .ok_or_else(|| format!("structure {structure} has no root")),
    }
}

fn check_claim(doc: &MorphDocument, claim: &Claim) -> Result<Verdict, String> {
    match (&claim.subject, &claim.assertion) {
        (
            Subject::Structure {
                structure,
                node,
                rule,
            },
            Assertion::Quality { selection, expected },
        ) => {
            let s = &doc.structures[structure];
            let node = node_of(doc, structure, node)?;
            let q =
                evaluate_selection(s, &node, selection, &structure_cfg(*rule)).map_err(|e| e.to_string())?;
            Ok(if &q == expected {
                Verdict::Match
            } else {
                Verdict::Mismatch {
                    recomputed: shown(&q, expected.n.len()),
                }
            })
        }
        (Subject::Trajectory { network, mode }, Assertion::Quality { selection, expected }) => {
            let net = doc
                .network(network)
                .ok_or_else(|| format!("unknown network {network}"))?;
            let mut assignment = Vec::new();
            for x in selection {
                let (p, s) = x
                    .split_once('.')
                    .ok_or_else(|| format!("trajectory selection {x} must be point.solution"))?;
                assignment.push((p.to_string(), s.to_string()));
            }
            let q = evaluate_assignment(
                net,
                &doc.structures,
                &assignment,
                *mode,
                &SynthesisConfig::default(),
            )
            .map_err(|e| e.to_string())?;
            Ok(if &q == expected {
                Verdict::Match
            } else {
                Verdict::Mismatch {
                    recomputed: shown(&q, expected.n.len()),
                }
            })
        }
        (subject, Assertion::Front { members }) => {
            let got: Vec<(Vec<String>, QualityVector)> = match subject {
                Subject::Structure {
                    structure,
                    node,
                    rule,
                } => {
                    let node = node_of(doc, structure, node)?;
                    synthesize_node(&doc.structures[structure], &node, &structure_cfg(*rule))
                        .map_err(|e| e.to_string())?
                        .into_iter()
                        .filter(|s| s.layer == 1)
                        .map(|s| (s.selection.iter().map(|i| i.item.clone()).collect(), s.quality))
                        .collect()
                }
                Subject::Trajectory { network, mode } => {
                    let net = doc
                        .network(network)
                        .ok_or_else(|| format!("unknown network {network}"))?;
                    let cfg = SynthesisConfig::default();
                    let p = TrajectoryProblem::network(net, &doc.structures, *mode, &cfg)
                        .map_err(|e| e.to_string())?;
                    solve(&p, &net.compat, &cfg)
                        .map_err(|e| e.to_string())?
                        .into_iter()
                        .filter(|t| t.layer == 1)
                        .map(|t| (t.assignment.into_iter().map(|(_, s)| s).collect(), t.quality))
                        .collect()
                }
            };
            let got_sel: BTreeSet<&Vec<String>> = got.iter().map(|g| &g.0).collect();
            let want_sel: BTreeSet<&Vec<String>> = members.iter().map(|m| &m.0).collect();
            let qualities_ok = members.iter().all(|(sel, q)| match q {
                None => true,
                Some(q) => got.iter().any(|(s, gq)| s == sel && gq == q),
            });
            Ok(if got_sel == want_sel && qualities_ok {
                Verdict::Match
            } else {
                let width = members
                    .iter()
                    .filter_map(|m| m.1.as_ref())
                    .map(|q| q.n.len())
                    .max()
                    .unwrap_or(0);
                let listing: Vec<String> = got
                    .iter()
                    .map(|(s, q)| format!("{} {}", s.join("*"), shown(q, width)))
                    .collect();
                Verdict::Mismatch {
                    recomputed: format!("{{{}}}", listing.join(", ")),
                }
            })
        }
    }
}

fn statement(claim: &Claim) -> String {
    match &claim.assertion {
        Assertion::Quality { selection, expected } => format!("N({}) = {expected}", selection.join("*")),
        Assertion::Front { members } => {
            let items: Vec<String> = members
                .iter()
                .map(|(s, q)| match q {
                    Some(q) => format!("{} {q}", s.join("*")),
                    None => s.join("*"),
                })
                .collect();
            format!("layer 1 = {{{}}}", items.join(", "))
        }
    }
}

fn oracle_structure(doc: &MorphDocument, structure: &str, node: &str, rule: PriorityRule) -> OracleCheck {
    let s = &doc.structures[structure];
    let cfg = structure_cfg(rule).with_layers(usize::MAX);
    let subject = Subject::Structure {
        structure: structure.to_string(),
        node: Some(node.to_string()),
        rule,
    }
    .to_string();
    let engine = synthesize_node(s, node, &cfg);
    let oracle = oracle_synthesize(s, node, &cfg, DEFAULT_CAP);
    match (engine, oracle) {
        (Ok(e), Ok(o)) => OracleCheck {
            subject,
            disagreement: diff_solutions(&e, &o),
            skipped: None,
            solutions: e.len(),
        },
        (Err(e), Err(_)) => OracleCheck {
            subject,
            disagreement: None,
            skipped: Some(e.to_string()),
            solutions: 0,
        },
        (Ok(_), Err(o)) => OracleCheck {
            subject,
            disagreement: Some(format!("oracle failed: {o}")),
            skipped: None,
            solutions: 0,
        },
        (Err(e), Ok(_)) => OracleCheck {
            subject,
            disagreement: Some(format!("engine failed: {e}")),
            skipped: None,
            solutions: 0,
        },
    }
}

fn oracle_network(doc: &MorphDocument, network: &str, mode: AggregationMode) -> OracleCheck {
    let net = &doc.networks[network];
    let cfg = SynthesisConfig::default().with_layers(usize::MAX);
    let subject = Subject::Trajectory {
        network: network.to_string(),
        mode,
    }
    .to_string();
    let problem = match TrajectoryProblem::network(net, &doc.structures, mode, &cfg) {
        Ok(p) => p,
        Err(e) => {
            return OracleCheck {
                subject,
                disagreement: None,
                skipped: Some(e.to_string()),
                solutions: 0,
            }
        }
    };
    let engine = solve(&problem, &net.compat, &cfg);
    let oracle = oracle_trajectories(&problem, &net.compat, &cfg, DEFAULT_CAP);
    match (engine, oracle) {
        (Ok(e), Ok(o)) => OracleCheck {
            subject,
            disagreement: diff_trajectories(&e, &o),
            skipped: None,
            solutions: e.len(),
        },
        (Err(e), Err(_)) => OracleCheck {
            subject,
            disagreement: None,
            skipped: Some(e.to_string()),
            solutions: 0,
        },
        (e, o) => OracleCheck {
            subject,
            disagreement: Some(format!(
                "engine {:?} vs oracle {:?}",
                e.err().map(|x| x.to_string()),
                o.err().map(|x| x.to_string())
            )),
            skipped: None,
            solutions: 0,
        },
    }
}

/// Checks every claim, then compares engine and oracle on every composite
/// node (under the declared rule where solutions are declared) and on every
/// network that admits trajectory synthesis.
pub fn verify(doc: &MorphDocument, claims: &[Claim]) -> VerifyReport {
    let mut report = VerifyReport::default();
    for c in claims {
        let verdict = match &c.subject {
            Subject::Structure { structure, .. } if doc.structure(structure).is_none() => Verdict::Error {
                message: format!("unknown structure {structure}"),
            },
            _ => check_claim(doc, c).unwrap_or_else(|message| Verdict::Error { message }),
        };
        report.claims.push(ClaimResult {
            label: c.label.clone(),
            subject: c.subject.to_string(),
            statement: statement(c),
            note: c.note.clone(),
            verdict,
        });
    }
    for s in doc.structures.values() {
        let rule = if s.declared.is_empty() {
            PriorityRule::ParetoLayer
        } else {
            PriorityRule::Declared
        };
        for n in s.post_order() {
            report.oracle.push(oracle_structure(doc, &s.name, &n.id, rule));
        }
    }
    for (name, net) in &doc.networks {
        if net.has_analysis_points() {
            continue;
        }
        for mode in [AggregationMode::Adjacent, AggregationMode::AllPairs] {
            report.oracle.push(oracle_network(doc, name, mode));
        }
    }
    report
}
