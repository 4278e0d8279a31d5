//! Command-line driver. [`run`] returns the exit code and both output
//! streams so the binary stays a thin shell and tests need no subprocess.
//!
//! Exit codes: 0 success, 1 validation or parse failure (and bad usage),
//! 2 empty result, 3 engine/oracle disagreement.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::model::{
    is_acyclic, validate_network, validate_structure_as, MissingEntryPolicy, Severity, TopLevelNetwork,
};
use crate::morphfile::{export_graph, parse, MorphDocument};
use crate::synthesis::{
    synthesize_hierarchy, synthesize_node, CompositeSolution, Feasibility, PriorityRule, SynthesisConfig,
};
use crate::trajectory::{
    chain_for_path, execute_decision_path, network_trajectories, simplify_network, spanning_tree,
    spanning_tree_reachable, AggregationMode, OutcomeAssignment, Trajectory,
};
use crate::verify::{parse_claims, verify, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;
pub const EXIT_BREACH: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "morphsynth",
    version,
    about = "Hierarchical morphological synthesis and system trajectories"
)]
struct Cli {
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and check a .morph file.
    Validate {
        file: PathBuf,
        /// Treat warnings as failures.
        #[arg(long)]
        strict: bool,
    },
    /// Pareto-efficient compositions of a structure node.
    Synth(SynthArgs),
    /// Pareto-efficient trajectories over a network.
    Trajectory(TrajectoryArgs),
    /// Check recorded claims and compare engine against the oracle.
    Verify {
        file: PathBuf,
        /// Claims file (default: the input with a .claims extension, if present).
        #[arg(long)]
        claims: Option<PathBuf>,
    },
    /// Graph description of a network in DOT form.
    Export {
        file: PathBuf,
        #[arg(long)]
        network: String,
        /// A trajectory declared in the network.
        #[arg(long)]
        trajectory: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Knobs {
    /// Number of Pareto layers to report.
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Accept missing compatibility entries (valued by --assume, default 0).
    #[arg(long)]
    partial: bool,
    /// Value used for missing compatibility entries.
    #[arg(long, value_name = "V")]
    assume: Option<u32>,
    /// Keep compositions whose weakest pair is 0.
    #[arg(long)]
    admit_zero: bool,
}

impl Knobs {
    fn config(&self, rule: PriorityRule) -> SynthesisConfig {
        let policy = match (self.partial, self.assume) {
            (_, Some(v)) => MissingEntryPolicy::AssumeValue(v),
            (true, None) => MissingEntryPolicy::AssumeValue(0),
            (false, None) => MissingEntryPolicy::StrictError,
        };
        SynthesisConfig {
            layer_depth: self.layers,
            missing_entry_policy: policy,
            feasibility: if self.admit_zero {
                Feasibility::AdmitZero
            } else {
                Feasibility::RequirePositive
            },
            priority_rule: rule,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RuleArg {
    Pareto,
    Declared,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Adjacent,
    AllPairs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    file: PathBuf,
    #[arg(long)]
    structure: String,
    /// Composite node to solve (default: the root).
    #[arg(long)]
    node: Option<String>,
    /// Print every composite node, bottom-up.
    #[arg(long, conflicts_with = "node")]
    all_nodes: bool,
    /// How child solutions get their priority at the parent.
    #[arg(long, value_enum, default_value = "pareto")]
    priority_rule: RuleArg,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    file: PathBuf,
    #[arg(long)]
    network: String,
    #[arg(long, value_enum, default_value = "adjacent")]
    mode: ModeArg,
    /// Outcomes at analysis points, e.g. a0=good,a4=insufficient.
    #[arg(long, value_name = "POINT=LABEL,...")]
    outcomes: Option<String>,
    /// Start of the decision path (default: the network root).
    #[arg(long)]
    start: Option<String>,
    /// Node visits allowed on the decision path.
    #[arg(long, default_value_t = 64)]
    step_limit: usize,
    /// Replace the network by its breadth-first spanning tree from ROOT.
    #[arg(long, value_name = "ROOT", conflicts_with = "simplify")]
    spanning_tree: Option<String>,
    /// With --spanning-tree: drop nodes unreachable from ROOT instead of failing.
    #[arg(long, requires = "spanning_tree")]
    reachable_only: bool,
    /// Remove depth-first back edges first.
    #[arg(long)]
    simplify: bool,
    #[command(flatten)]
    knobs: Knobs,
}

/// What a command produced.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn fail(code: i32, msg: impl AsRef<str>) -> Self {
        Outcome {
            code,
            stdout: String::new(),
            stderr: format!("error: {}\n", msg.as_ref()),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let json = cli.json;
    match cli.command {
        Command::Validate { file, strict } => cmd_validate(&file, strict, json),
        Command::Synth(a) => with_doc(&a.file, |doc| cmd_synth(doc, &a, json)),
        Command::Trajectory(a) => with_doc(&a.file, |doc| cmd_trajectory(doc, &a, json)),
        Command::Verify { file, claims } => {
            with_doc(&file, |doc| cmd_verify(doc, &file, claims.as_deref(), json))
        }
        Command::Export {
            file,
            network,
            trajectory,
        } => with_doc(&file, |doc| cmd_export(doc, &network, trajectory.as_deref())),
    }
}

fn load(path: &Path) -> Result<MorphDocument, Outcome> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Outcome::fail(EXIT_INVALID, format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|errs| {
        let mut stderr = String::new();
        for e in &errs.0 {
            let _ = writeln!(stderr, "{}:{}:{}: {}", path.display(), e.line, e.col, e.message);
        }
        Outcome {
            code: EXIT_INVALID,
            stdout: String::new(),
            stderr,
        }
    })
}

fn with_doc(path: &Path, f: impl FnOnce(&MorphDocument) -> Outcome) -> Outcome {
    match load(path) {
        Ok(doc) => f(&doc),
        Err(o) => o,
    }
}

fn json_out(v: Value, code: i32) -> Outcome {
    Outcome {
        code,
        stdout: format!("{}\n", serde_json::to_string_pretty(&v).expect("json")),
        stderr: String::new(),
    }
}

fn cmd_validate(path: &Path, strict: bool, json: bool) -> Outcome {
    let doc = match load(path) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let mut lines = Vec::new();
    let (mut errors, mut warnings) = (0, 0);
    let mut record = |kind: &str, name: &str, report: crate::model::ValidationReport| {
        for i in report.issues {
            match i.severity {
                Severity::Error => errors += 1,
                Severity::Warning => warnings += 1,
            }
            lines.push(json!({"kind": kind, "name": name, "severity": i.severity, "message": i.message}));
        }
    };
    for s in doc.structures.values() {
        record("structure", &s.name, validate_structure_as(s, s.partial));
    }
    for n in doc.networks.values() {
        record("network", &n.name, validate_network(n));
    }
    let failed = errors > 0 || (strict && warnings > 0);
    let code = if failed { EXIT_INVALID } else { EXIT_OK };
    if json {
        return json_out(
            json!({"file": path.display().to_string(), "structures": doc.structures.len(),
                   "networks": doc.networks.len(), "issues": lines, "ok": !failed}),
            code,
        );
    }
    let mut out = String::new();
    for l in &lines {
        let _ = writeln!(
            out,
            "{} {}: {}: {}",
            l["kind"].as_str().unwrap_or_default(),
            l["name"].as_str().unwrap_or_default(),
            l["severity"].as_str().unwrap_or_default(),
            l["message"].as_str().unwrap_or_default()
        );
    }
    let _ = writeln!(
        out,
        "{}: {} structures, {} networks, {errors} errors, {warnings} warnings{}",
        if failed { "invalid" } else { "ok" },
        doc.structures.len(),
        doc.networks.len(),
        if strict { " (strict)" } else { "" }
    );
    Outcome {
        code,
        stdout: out,
        stderr: String::new(),
    }
}

fn solution_line(s: &CompositeSolution) -> String {
    format!("{} = {} N={} layer={}", s.name, s.formula(), s.quality, s.layer)
}

fn solution_json(s: &CompositeSolution) -> Value {
    json!({"name": s.name, "node": s.node, "selection": s.formula(), "leaves": s.leaf_formula(),
           "quality": s.quality.to_string(), "layer": s.layer})
}

fn cmd_synth(doc: &MorphDocument, a: &SynthArgs, json: bool) -> Outcome {
    let Some(s) = doc.structure(&a.structure) else {
        return Outcome::fail(EXIT_INVALID, format!("unknown structure {}", a.structure));
    };
    let rule = match a.priority_rule {
        RuleArg::Pareto => PriorityRule::ParetoLayer,
        RuleArg::Declared => PriorityRule::Declared,
    };
    let cfg = a.knobs.config(rule);
    let groups: Vec<(String, Vec<CompositeSolution>)> = if a.all_nodes {
        match synthesize_hierarchy(s, &cfg) {
            Ok(all) => s
                .post_order()
                .iter()
                .map(|n| (n.id.clone(), all.get(&n.id).cloned().unwrap_or_default()))
                .collect(),
            Err(e) => return Outcome::fail(EXIT_INVALID, e.to_string()),
        }
    } else {
        let node = match a.node.clone().or_else(|| s.root().map(|r| r.id.clone())) {
            Some(n) => n,
            None => return Outcome::fail(EXIT_INVALID, format!("structure {} has no root", s.name)),
        };
        match synthesize_node(s, &node, &cfg) {
            Ok(v) => vec![(node, v)],
            Err(e) => return Outcome::fail(EXIT_INVALID, e.to_string()),
        }
    };
    let target_empty = groups.last().is_none_or(|g| g.1.is_empty());
    let code = if target_empty { EXIT_EMPTY } else { EXIT_OK };
    if json {
        let v: Vec<Value> = groups
            .iter()
            .map(|(n, sols)| json!({"node": n, "solutions": sols.iter().map(solution_json).collect::<Vec<_>>()}))
            .collect();
        return json_out(json!({"structure": s.name, "nodes": v}), code);
    }
    let mut out = String::new();
    for (n, sols) in &groups {
        if a.all_nodes {
            let _ = writeln!(out, "[{n}]");
        }
        for x in sols {
            let _ = writeln!(out, "{}", solution_line(x));
        }
    }
    let stderr = if target_empty {
        "no feasible composition\n".to_string()
    } else {
        String::new()
    };
    Outcome {
        code,
        stdout: out,
        stderr,
    }
}

fn parse_outcomes(s: &str) -> Result<OutcomeAssignment, String> {
    let mut out = OutcomeAssignment::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("outcome {part:?} must be POINT=LABEL"))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn trajectory_line(t: &Trajectory) -> String {
    format!("{} = {} N={} layer={}", t.name, t.formula(), t.quality, t.layer)
}

fn trajectory_json(t: &Trajectory) -> Value {
    json!({"name": t.name, "kind": t.kind, "assignment": t.assignment.iter().map(|(p, s)| json!([p, s])).collect::<Vec<_>>(),
           "quality": t.quality.to_string(), "layer": t.layer})
}

fn cmd_trajectory(doc: &MorphDocument, a: &TrajectoryArgs, json: bool) -> Outcome {
    let Some(original) = doc.network(&a.network) else {
        return Outcome::fail(EXIT_INVALID, format!("unknown network {}", a.network));
    };
    let report = validate_network(original);
    if let Some(e) = report.errors().find(|e| !e.message.starts_with("cycle detected")) {
        return Outcome::fail(EXIT_INVALID, format!("network {}: {}", original.name, e.message));
    }
    let mut notes: Vec<String> = Vec::new();
    let net: TopLevelNetwork = if let Some(root) = &a.spanning_tree {
        let t = if a.reachable_only {
            spanning_tree_reachable(original, root)
        } else {
            spanning_tree(original, root)
        };
        match t {
            Ok(t) => {
                let dropped: Vec<&str> = original
                    .nodes
                    .iter()
                    .map(|n| n.id())
                    .filter(|id| t.node(id).is_none())
                    .collect();
                let arcs: Vec<String> = t.arcs.iter().map(ToString::to_string).collect();
                notes.push(format!("spanning tree rooted at {root}: {}", arcs.join(", ")));
                if !dropped.is_empty() {
                    notes.push(format!("dropped unreachable: {}", dropped.join(", ")));
                }
                t
            }
            Err(e) => return Outcome::fail(EXIT_INVALID, e.to_string()),
        }
    } else if a.simplify {
        let (s, removed) = simplify_network(original);
        let r: Vec<String> = removed.iter().map(ToString::to_string).collect();
        notes.push(format!(
            "simplified: removed {}",
            if r.is_empty() {
                "nothing".to_string()
            } else {
                r.join(", ")
            }
        ));
        s
    } else {
        original.clone()
    };

    let mode = match a.mode {
        ModeArg::Adjacent => AggregationMode::Adjacent,
        ModeArg::AllPairs => AggregationMode::AllPairs,
    };
    let cfg = a.knobs.config(PriorityRule::ParetoLayer);

    let mut path_info: Option<Value> = None;
    let result = if let Some(spec) = &a.outcomes {
        let outcomes = match parse_outcomes(spec) {
            Ok(o) => o,
            Err(e) => return Outcome::fail(EXIT_INVALID, e),
        };
        let start = match a
            .start
            .clone()
            .or_else(|| net.roots().first().map(|s| s.to_string()))
        {
            Some(s) => s,
            None => return Outcome::fail(EXIT_INVALID, "empty network"),
        };
        let path = match execute_decision_path(&net, &start, &outcomes, a.step_limit) {
            Ok(p) => p,
            Err(e) => return Outcome::fail(EXIT_INVALID, e.to_string()),
        };
        notes.push(format!(
            "path: {}{}",
            path.points.join(" -> "),
            if path.truncated {
                format!(" (truncated after {} steps)", a.step_limit)
            } else {
                String::new()
            }
        ));
        path_info =
            Some(json!({"visited": path.visited, "points": path.points, "truncated": path.truncated}));
        chain_for_path(&net, &doc.structures, &path.points, mode, &cfg)
    } else {
        if !is_acyclic(&net) {
            return Outcome::fail(
                EXIT_INVALID,
                format!(
                    "cyclic network {}; use --spanning-tree ROOT or --simplify",
                    net.name
                ),
            );
        }
        network_trajectories(&net, &doc.structures, mode, &cfg)
    };
    let trajectories = match result {
        Ok(t) => t,
        Err(e) => {
            let mut o = Outcome::fail(EXIT_INVALID, e.to_string());
            o.stdout = notes.iter().map(|n| format!("# {n}\n")).collect();
            return o;
        }
    };
    let code = if trajectories.is_empty() {
        EXIT_EMPTY
    } else {
        EXIT_OK
    };
    if json {
        return json_out(
            json!({"network": net.name, "mode": mode, "notes": notes, "path": path_info,
                   "trajectories": trajectories.iter().map(trajectory_json).collect::<Vec<_>>()}),
            code,
        );
    }
    let mut out = String::new();
    for n in &notes {
        let _ = writeln!(out, "# {n}");
    }
    for t in &trajectories {
        let _ = writeln!(out, "{}", trajectory_line(t));
    }
    let stderr = if trajectories.is_empty() {
        "no feasible trajectory\n".to_string()
    } else {
        String::new()
    };
    Outcome {
        code,
        stdout: out,
        stderr,
    }
}

fn cmd_verify(doc: &MorphDocument, file: &Path, claims: Option<&Path>, json: bool) -> Outcome {
    let claims_path = claims.map(Path::to_path_buf).or_else(|| {
        let p = file.with_extension("claims");
        p.exists().then_some(p)
    });
    let claims = match &claims_path {
        Some(p) => {
            let text = match std::fs::read_to_string(p) {
                Ok(t) => t,
                Err(e) => return Outcome::fail(EXIT_INVALID, format!("{}: {e}", p.display())),
            };
            match parse_claims(&text) {
                Ok(c) => c,
                Err(e) => return Outcome::fail(EXIT_INVALID, format!("{}: {e}", p.display())),
            }
        }
        None => Vec::new(),
    };
    let report = verify(doc, &claims);
    let code = if report.engine_agrees() {
        EXIT_OK
    } else {
        EXIT_BREACH
    };
    if json {
        return json_out(serde_json::to_value(&report).expect("json"), code);
    }
    let mut out = String::new();
    for c in &report.claims {
        let _ = writeln!(out, "{c}");
    }
    for o in &report.oracle {
        let _ = writeln!(out, "{o}");
    }
    let count = |f: fn(&Verdict) -> bool| report.claims.iter().filter(|c| f(&c.verdict)).count();
    let _ = writeln!(
        out,
        "summary: {} claims, {} match, {} mismatch, {} error; engine/oracle {}",
        report.claims.len(),
        count(|v| matches!(v, Verdict::Match)),
        count(|v| matches!(v, Verdict::Mismatch { .. })),
        count(|v| matches!(v, Verdict::Error { .. })),
        if report.engine_agrees() {
            "agree"
        } else {
            "DISAGREE"
        }
    );
    Outcome {
        code,
        stdout: out,
        stderr: String::new(),
    }
}

fn cmd_export(doc: &MorphDocument, network: &str, trajectory: Option<&str>) -> Outcome {
    let Some(net) = doc.network(network) else {
        return Outcome::fail(EXIT_INVALID, format!("unknown network {network}"));
    };
    let assignment = match trajectory {
        None => None,
        Some(t) => match net.trajectories.iter().find(|x| x.name == t) {
            Some(x) => Some(x.assignment.as_slice()),
            None => {
                return Outcome::fail(
                    EXIT_INVALID,
                    format!("unknown trajectory {t} in network {network}"),
                )
            }
        },
    };
    Outcome {
        code: EXIT_OK,
        stdout: export_graph(net, assignment),
        stderr: String::new(),
    }
}

/// Sizes the global thread pool from `MORPHSYNTH_THREADS`, if set.
pub fn init_threads() {
    if let Some(n) = std::env::var("MORPHSYNTH_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
