//! System trajectories over a top-level network.
//!
//! A trajectory assigns one local solution to each covered morph point. Its
//! quality is a meta-composition: `w` is the minimum inter-point
//! compatibility over a pair set (consecutive points, tree edges or all
//! pairs) and `n` counts the priorities of the chosen local solutions.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{
    is_tree, Arc, CompatTable, ItemRef, MissingEntry, MorphPoint, MorphStructure, NetNode, ShapeHint,
    TopLevelNetwork,
};
use crate::quality::{pareto_layers, tier_counts, QualityVector};
use crate::synthesis::{
    all_pairs, enumerate_selections, synthesize_root, Feasibility, SynthesisConfig, SynthesisError,
};

/// Structures by name, as referenced by morph points.
pub type Structures = BTreeMap<String, MorphStructure>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// Only neighbouring points are compared.
    #[default]
    Adjacent,
    /// Every pair of covered points is compared.
    AllPairs,
}

impl AggregationMode {
    pub fn keyword(self) -> &'static str {
        match self {
            AggregationMode::Adjacent => "adjacent",
            AggregationMode::AllPairs => "all-pairs",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "adjacent" => Some(AggregationMode::Adjacent),
            "all-pairs" | "all_pairs" | "allpairs" => Some(AggregationMode::AllPairs),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    Chain,
    Tree,
    Network,
}

/// Outcome label chosen at each analysis point.
pub type OutcomeAssignment = BTreeMap<String, String>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrajectoryError {
    #[error("unknown point {0}")]
    UnknownPoint(String),
    #[error("path must contain morph points only ({0} is an analysis point)")]
    AnalysisInPath(String),
    #[error("point {point} uses unknown structure {structure}")]
    UnknownStructure { point: String, structure: String },
    #[error("point {0} has no local solutions")]
    NoSolutions(String),
    #[error("point {point}: {source}")]
    Synthesis { point: String, source: SynthesisError },
    #[error(transparent)]
    Missing(#[from] MissingEntry),
    #[error("network {0} is not a tree of morph points")]
    NotATree(String),
    #[error("network {0} has analysis points; give outcomes or a path")]
    HasAnalysisPoints(String),
    #[error("cyclic network {0}; use a spanning tree or simplification first")]
    Cyclic(String),
    #[error("no directed connection from {from} to {to}")]
    NotAPath { from: String, to: String },
    #[error("point {0} occurs twice in the path")]
    RevisitedPoint(String),
    #[error("empty path")]
    EmptyPath,
    #[error("no outcome given for analysis point {0}")]
    UnresolvedAnalysis(String),
    #[error("{point} has no branch labelled {label:?}")]
    UnknownOutcome { point: String, label: String },
    #[error("{0} is not an analysis point")]
    NotAnalysis(String),
    #[error("morph point {0} has more than one successor")]
    AmbiguousSuccessor(String),
    #[error("unreachable from {root}: {nodes}")]
    Unreachable { root: String, nodes: String },
    #[error("point {point} has no solution {solution}")]
    UnknownSolution { point: String, solution: String },
}

/// A candidate local solution of a point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LocalSolution {
    pub name: String,
    pub priority: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    pub name: String,
    pub kind: TrajectoryKind,
    /// (point, solution), in point order.
    pub assignment: Vec<(String, String)>,
    /// Covered structure: consecutive points of a chain, or network arcs.
    pub edges: Vec<(String, String)>,
    pub quality: QualityVector,
    pub layer: usize,
}

impl Trajectory {
    pub fn solution(&self, point: &str) -> Option<&str> {
        self.assignment
            .iter()
            .find(|(p, _)| p == point)
            .map(|(_, s)| s.as_str())
    }

    pub fn points(&self) -> impl Iterator<Item = &str> {
        self.assignment.iter().map(|(p, _)| p.as_str())
    }

    /// `<S1 * S2 * S3>` for chains, `{p:S, q:T}` otherwise.
    pub fn formula(&self) -> String {
        match self.kind {
            TrajectoryKind::Chain => format!(
                "<{}>",
                self.assignment
                    .iter()
                    .map(|(_, s)| s.as_str())
                    .collect::<Vec<_>>()
                    .join(" * ")
            ),
            _ => format!(
                "{{{}}}",
                self.assignment
                    .iter()
                    .map(|(p, s)| format!("{p}:{s}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
        }
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} N={} layer={}", self.formula(), self.quality, self.layer)
    }
}

/// A fully prepared trajectory search: candidates per point and the pairs
/// whose compatibility enters `w`. Shared by the engine and the oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryProblem {
    pub kind: TrajectoryKind,
    pub points: Vec<String>,
    pub candidates: Vec<Vec<LocalSolution>>,
    /// Index pairs into `points`, `i < j`.
    pub pairs: Vec<(usize, usize)>,
    /// Structural edges reported with each trajectory.
    pub edges: Vec<(usize, usize)>,
    pub tiers: usize,
}

impl TrajectoryProblem {
    /// Chain over `points` in the given order.
    pub fn chain(
        net: &TopLevelNetwork,
        structures: &Structures,
        points: &[String],
        mode: AggregationMode,
        cfg: &SynthesisConfig,
    ) -> Result<Self, TrajectoryError> {
        if points.is_empty() {
            return Err(TrajectoryError::EmptyPath);
        }
        let (candidates, tiers) = gather(net, structures, points, cfg)?;
        let edges: Vec<(usize, usize)> = (1..points.len()).map(|i| (i - 1, i)).collect();
        let pairs = match mode {
            AggregationMode::Adjacent => edges.clone(),
            AggregationMode::AllPairs => all_pairs(points.len()),
        };
        Ok(Self {
            kind: TrajectoryKind::Chain,
            points: points.to_vec(),
            candidates,
            pairs,
            edges,
            tiers,
        })
    }

    /// Tree of morph points; `w` over the tree's arcs.
    pub fn tree(
        net: &TopLevelNetwork,
        structures: &Structures,
        cfg: &SynthesisConfig,
    ) -> Result<Self, TrajectoryError> {
        if net.has_analysis_points() || !is_tree(net) {
            return Err(TrajectoryError::NotATree(net.name.clone()));
        }
        let mut p = Self::network(net, structures, AggregationMode::Adjacent, cfg)?;
        p.kind = TrajectoryKind::Tree;
        Ok(p)
    }

    /// Any acyclic network of morph points. Points are taken in topological
    /// order (declaration order among ready nodes); adjacent mode compares
    /// the endpoints of every arc.
    pub fn network(
        net: &TopLevelNetwork,
        structures: &Structures,
        mode: AggregationMode,
        cfg: &SynthesisConfig,
    ) -> Result<Self, TrajectoryError> {
        if net.has_analysis_points() {
            return Err(TrajectoryError::HasAnalysisPoints(net.name.clone()));
        }
        let order = topological_order(net).ok_or_else(|| TrajectoryError::Cyclic(net.name.clone()))?;
        let (candidates, tiers) = gather(net, structures, &order, cfg)?;
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let mut edges = Vec::new();
        for a in &net.arcs {
            if let (Some(&f), Some(&t)) = (pos.get(a.from.as_str()), pos.get(a.to.as_str())) {
                let e = (f.min(t), f.max(t));
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }
        let pairs = match mode {
            AggregationMode::Adjacent => edges.clone(),
            AggregationMode::AllPairs => all_pairs(order.len()),
        };
        let kind = if net.shape == ShapeHint::Chain {
            TrajectoryKind::Chain
        } else {
            TrajectoryKind::Network
        };
        Ok(Self {
            kind,
            points: order,
            candidates,
            pairs,
            edges,
            tiers,
        })
    }

    /// Size of the assignment space.
    pub fn assignments(&self) -> u128 {
        self.candidates.iter().map(|c| c.len() as u128).product()
    }

    pub(crate) fn slots(&self) -> Vec<Vec<ItemRef>> {
        self.points
            .iter()
            .zip(&self.candidates)
            .map(|(p, c)| {
                c.iter()
                    .map(|s| ItemRef::new(p.clone(), s.name.clone()))
                    .collect()
            })
            .collect()
    }

    pub(crate) fn edge_names(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(i, j)| (self.points[i].clone(), self.points[j].clone()))
            .collect()
    }

    /// Builds a named trajectory from candidate indices.
    pub fn trajectory(
        &self,
        idx: &[usize],
        quality: QualityVector,
        layer: usize,
        name: String,
    ) -> Trajectory {
        Trajectory {
            name,
            kind: self.kind,
            assignment: self
                .points
                .iter()
                .zip(idx)
                .map(|(p, &k)| (p.clone(), self.candidates_of(p)[k].name.clone()))
                .collect(),
            edges: self.edge_names(),
            quality,
            layer,
        }
    }

    fn candidates_of(&self, point: &str) -> &[LocalSolution] {
        let i = self.points.iter().position(|p| p == point).expect("own point");
        &self.candidates[i]
    }
}

/// Generated trajectory name.
pub fn trajectory_name(index: usize) -> String {
    format!("alpha_{index}")
}

/// Local solutions of a point: the declared ones (priority 1 unless given),
/// else the retained solutions of its structure's root, named
/// `S_<point>_<k>` with their layer as priority.
pub fn local_solutions(
    net: &TopLevelNetwork,
    structures: &Structures,
    point: &str,
    cfg: &SynthesisConfig,
) -> Result<Vec<LocalSolution>, TrajectoryError> {
    let p = morph_point(net, point)?;
    if !p.solutions.is_empty() {
        return Ok(p
            .solutions
            .iter()
            .map(|s| LocalSolution {
                name: s.name.clone(),
                priority: s.priority.unwrap_or(1),
            })
            .collect());
    }
    let s = structure_of(structures, p)?;
    let sols = synthesize_root(s, cfg).map_err(|source| TrajectoryError::Synthesis {
        point: point.to_string(),
        source,
    })?;
    Ok(sols
        .iter()
        .enumerate()
        .map(|(k, x)| LocalSolution {
            name: format!("S_{point}_{}", k + 1),
            priority: x.layer as u32,
        })
        .collect())
}

fn morph_point<'a>(net: &'a TopLevelNetwork, id: &str) -> Result<&'a MorphPoint, TrajectoryError> {
    match net.node(id) {
        Some(NetNode::Morph(p)) => Ok(p),
        Some(NetNode::Analysis(_)) => Err(TrajectoryError::AnalysisInPath(id.to_string())),
        None => Err(TrajectoryError::UnknownPoint(id.to_string())),
    }
}

fn structure_of<'a>(
    structures: &'a Structures,
    p: &MorphPoint,
) -> Result<&'a MorphStructure, TrajectoryError> {
    structures
        .get(&p.structure)
        .ok_or_else(|| TrajectoryError::UnknownStructure {
            point: p.id.clone(),
            structure: p.structure.clone(),
        })
}

fn gather(
    net: &TopLevelNetwork,
    structures: &Structures,
    points: &[String],
    cfg: &SynthesisConfig,
) -> Result<(Vec<Vec<LocalSolution>>, usize), TrajectoryError> {
    let mut seen = BTreeSet::new();
    let mut candidates = Vec::with_capacity(points.len());
    let mut tiers = 1usize;
    for p in points {
        if !seen.insert(p.as_str()) {
            return Err(TrajectoryError::RevisitedPoint(p.clone()));
        }
        let sols = local_solutions(net, structures, p, cfg)?;
        if sols.is_empty() {
            return Err(TrajectoryError::NoSolutions(p.clone()));
        }
        if let Some(s) = structures.get(&morph_point(net, p)?.structure) {
            tiers = tiers.max(s.priority_depth() as usize);
        }
        for s in &sols {
            tiers = tiers.max(s.priority as usize);
        }
        candidates.push(sols);
    }
    Ok((candidates, tiers))
}

/// Kahn's algorithm picking the earliest declared ready node; `None` on a cycle.
fn topological_order(net: &TopLevelNetwork) -> Option<Vec<String>> {
    let (index, adj) = net.adjacency();
    let n = net.nodes.len();
    let mut indeg = vec![0usize; n];
    for a in &net.arcs {
        if let (Some(_), Some(&t)) = (index.get(a.from.as_str()), index.get(a.to.as_str())) {
            indeg[t] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut out = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        out.push(net.nodes[v].id().to_string());
        for &(w, _) in &adj[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    (out.len() == n).then_some(out)
}

/// Pareto-layered trajectories of a prepared problem.
pub fn solve(
    problem: &TrajectoryProblem,
    compat: &CompatTable,
    cfg: &SynthesisConfig,
) -> Result<Vec<Trajectory>, TrajectoryError> {
    let slots = problem.slots();
    let found = enumerate_selections(
        &slots,
        &problem.pairs,
        compat,
        cfg.missing_entry_policy,
        cfg.min_w(),
        cfg.feasibility == Feasibility::RequirePositive,
    )?;
    let scored: Vec<(Vec<usize>, QualityVector)> = found
        .into_iter()
        .map(|(idx, w)| {
            let n = tier_counts(
                idx.iter()
                    .enumerate()
                    .map(|(i, &k)| problem.candidates[i][k].priority),
                problem.tiers,
            );
            (idx, QualityVector { w, n })
        })
        .collect();
    let mut out = Vec::new();
    for (l, layer) in pareto_layers(scored, cfg.layer_depth).into_iter().enumerate() {
        for (idx, q) in layer {
            let name = trajectory_name(out.len() + 1);
            out.push(problem.trajectory(&idx, q, l + 1, name));
        }
    }
    Ok(out)
}

/// Pareto trajectories over an ordered list of points.
pub fn chain_trajectories(
    net: &TopLevelNetwork,
    structures: &Structures,
    points: &[String],
    mode: AggregationMode,
    cfg: &SynthesisConfig,
) -> Result<Vec<Trajectory>, TrajectoryError> {
    let p = TrajectoryProblem::chain(net, structures, points, mode, cfg)?;
    solve(&p, &net.compat, cfg)
}

/// Pareto trajectories over a tree network, `w` along tree edges.
pub fn tree_trajectories(
    net: &TopLevelNetwork,
    structures: &Structures,
    cfg: &SynthesisConfig,
) -> Result<Vec<Trajectory>, TrajectoryError> {
    let p = TrajectoryProblem::tree(net, structures, cfg)?;
    solve(&p, &net.compat, cfg)
}

/// Pareto trajectories over any acyclic network without analysis points.
pub fn network_trajectories(
    net: &TopLevelNetwork,
    structures: &Structures,
    mode: AggregationMode,
    cfg: &SynthesisConfig,
) -> Result<Vec<Trajectory>, TrajectoryError> {
    let p = TrajectoryProblem::network(net, structures, mode, cfg)?;
    solve(&p, &net.compat, cfg)
}

/// True if `to` is reachable from `from` through analysis points only
/// (or directly).
fn contracted_arc(net: &TopLevelNetwork, from: &str, to: &str) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        for a in net.outgoing(v) {
            if a.to == to {
                return true;
            }
            if matches!(net.node(&a.to), Some(NetNode::Analysis(_))) && seen.insert(a.to.as_str()) {
                stack.push(a.to.as_str());
            }
        }
    }
    false
}

/// Pareto trajectories along a directed path of morph points. Consecutive
/// points may be joined through analysis points.
pub fn chain_for_path(
    net: &TopLevelNetwork,
    structures: &Structures,
    path: &[String],
    mode: AggregationMode,
    cfg: &SynthesisConfig,
) -> Result<Vec<Trajectory>, TrajectoryError> {
    if path.is_empty() {
        return Err(TrajectoryError::EmptyPath);
    }
    for p in path {
        morph_point(net, p)?;
    }
    for w in path.windows(2) {
        if !contracted_arc(net, &w[0], &w[1]) {
            return Err(TrajectoryError::NotAPath {
                from: w[0].clone(),
                to: w[1].clone(),
            });
        }
    }
    chain_trajectories(net, structures, path, mode, cfg)
}

/// Quality of a given assignment. Adjacent mode compares assigned points
/// joined by an arc (possibly through analysis points); all-pairs compares
/// every pair.
pub fn evaluate_assignment(
    net: &TopLevelNetwork,
    structures: &Structures,
    assignment: &[(String, String)],
    mode: AggregationMode,
    cfg: &SynthesisConfig,
) -> Result<QualityVector, TrajectoryError> {
    let points: Vec<String> = assignment.iter().map(|(p, _)| p.clone()).collect();
    let (candidates, tiers) = gather(net, structures, &points, cfg)?;
    let mut w = net.compat.scale_max;
    let mut prios = Vec::with_capacity(points.len());
    for ((p, s), c) in assignment.iter().zip(&candidates) {
        let sol = c
            .iter()
            .find(|x| &x.name == s)
            .ok_or_else(|| TrajectoryError::UnknownSolution {
                point: p.clone(),
                solution: s.clone(),
            })?;
        prios.push(sol.priority);
    }
    for i in 0..assignment.len() {
        for j in i + 1..assignment.len() {
            let (pi, pj) = (&assignment[i].0, &assignment[j].0);
            let counted = match mode {
                AggregationMode::AllPairs => true,
                AggregationMode::Adjacent => contracted_arc(net, pi, pj) || contracted_arc(net, pj, pi),
            };
            if counted {
                let v = net.compat.lookup(
                    &ItemRef::new(pi.clone(), assignment[i].1.clone()),
                    &ItemRef::new(pj.clone(), assignment[j].1.clone()),
                    cfg.missing_entry_policy,
                )?;
                w = w.min(v);
            }
        }
    }
    Ok(QualityVector::new(w, tier_counts(prios, tiers)))
}

/// Result of walking a network with fixed outcomes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecisionPath {
    /// Every node visited, analysis points included.
    pub visited: Vec<String>,
    /// The morph points among them, in order.
    pub points: Vec<String>,
    /// The walk was cut by the step limit rather than reaching a terminal.
    pub truncated: bool,
}

/// Walks from `start`: a morph point goes to its single successor, an
/// analysis point to the branch named in `outcomes`. Stops at a node without
/// successors or after `step_limit` node visits.
pub fn execute_decision_path(
    net: &TopLevelNetwork,
    start: &str,
    outcomes: &OutcomeAssignment,
    step_limit: usize,
) -> Result<DecisionPath, TrajectoryError> {
    if net.node(start).is_none() {
        return Err(TrajectoryError::UnknownPoint(start.to_string()));
    }
    for (point, label) in outcomes {
        match net.node(point) {
            None => return Err(TrajectoryError::UnknownPoint(point.clone())),
            Some(NetNode::Morph(_)) => return Err(TrajectoryError::NotAnalysis(point.clone())),
            Some(NetNode::Analysis(_)) => {
                if !net.branches(point).iter().any(|(o, _)| o == label) {
                    return Err(TrajectoryError::UnknownOutcome {
                        point: point.clone(),
                        label: label.clone(),
                    });
                }
            }
        }
    }
    let mut path = DecisionPath {
        visited: Vec::new(),
        points: Vec::new(),
        truncated: false,
    };
    let mut cur = start.to_string();
    loop {
        if path.visited.len() >= step_limit {
            path.truncated = true;
            break;
        }
        path.visited.push(cur.clone());
        let next = match net.node(&cur).expect("arcs validated") {
            NetNode::Morph(_) => {
                path.points.push(cur.clone());
                let mut succ = net.outgoing(&cur);
                match (succ.next(), succ.next()) {
                    (None, _) => break,
                    (Some(a), None) => a.to.clone(),
                    _ => return Err(TrajectoryError::AmbiguousSuccessor(cur)),
                }
            }
            NetNode::Analysis(_) => {
                let label = outcomes
                    .get(&cur)
                    .ok_or_else(|| TrajectoryError::UnresolvedAnalysis(cur.clone()))?;
                net.branches(&cur)
                    .into_iter()
                    .find(|(o, _)| o == label)
                    .map(|(_, t)| t.to_string())
                    .expect("label checked above")
            }
        };
        if net.node(&next).is_none() {
            return Err(TrajectoryError::UnknownPoint(next));
        }
        cur = next;
    }
    Ok(path)
}

fn bfs_tree(net: &TopLevelNetwork, root: &str) -> Result<(Vec<bool>, Vec<usize>), TrajectoryError> {
    let (index, adj) = net.adjacency();
    let r = *index
        .get(root)
        .ok_or_else(|| TrajectoryError::UnknownPoint(root.to_string()))?;
    let mut seen = vec![false; net.nodes.len()];
    let mut used = Vec::new();
    let mut queue = VecDeque::from([r]);
    seen[r] = true;
    while let Some(v) = queue.pop_front() {
        for &(w, arc) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                used.push(arc);
                queue.push_back(w);
            }
        }
    }
    used.sort_unstable();
    Ok((seen, used))
}

fn restrict(net: &TopLevelNetwork, keep: &[bool], arcs: &[usize], root: &str) -> TopLevelNetwork {
    let nodes: Vec<NetNode> = net
        .nodes
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(n, _)| n.clone())
        .collect();
    let ids: BTreeSet<&str> = nodes.iter().map(NetNode::id).collect();
    let trajectories = net
        .trajectories
        .iter()
        .filter(|t| t.assignment.iter().all(|(p, _)| ids.contains(p.as_str())))
        .cloned()
        .collect();
    TopLevelNetwork {
        name: net.name.clone(),
        shape: ShapeHint::Tree,
        explicit_root: Some(root.to_string()),
        arcs: arcs.iter().map(|&k| net.arcs[k].clone()).collect(),
        nodes,
        compat: net.compat.clone(),
        trajectories,
    }
}

/// Breadth-first spanning arborescence rooted at `root`, expanding arcs in
/// declaration order. Every node must be reachable.
pub fn spanning_tree(net: &TopLevelNetwork, root: &str) -> Result<TopLevelNetwork, TrajectoryError> {
    let (seen, used) = bfs_tree(net, root)?;
    let missing: Vec<&str> = net
        .nodes
        .iter()
        .zip(&seen)
        .filter(|(_, &s)| !s)
        .map(|(n, _)| n.id())
        .collect();
    if !missing.is_empty() {
        return Err(TrajectoryError::Unreachable {
            root: root.to_string(),
            nodes: missing.join(", "),
        });
    }
    Ok(restrict(net, &seen, &used, root))
}

/// Like [`spanning_tree`], dropping nodes not reachable from `root`.
pub fn spanning_tree_reachable(
    net: &TopLevelNetwork,
    root: &str,
) -> Result<TopLevelNetwork, TrajectoryError> {
    let (seen, used) = bfs_tree(net, root)?;
    Ok(restrict(net, &seen, &used, root))
}

/// Removes every back arc of a depth-first search from the roots. Returns
/// the acyclic network and the removed arcs.
pub fn simplify_network(net: &TopLevelNetwork) -> (TopLevelNetwork, Vec<Arc>) {
    let back: BTreeSet<usize> = net.back_arcs().into_iter().collect();
    let mut out = net.clone();
    out.arcs = net
        .arcs
        .iter()
        .enumerate()
        .filter(|(k, _)| !back.contains(k))
        .map(|(_, a)| a.clone())
        .collect();
    if out.shape == ShapeHint::General {
        out.shape = ShapeHint::Dag;
    }
    let removed = back.iter().map(|&k| net.arcs[k].clone()).collect();
    (out, removed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{is_acyclic, AnalysisPoint, CompatValue, PointSolution};

    fn point(id: &str, sols: &[&str]) -> NetNode {
        let mut p = MorphPoint::new(id, "s");
        p.solutions = sols
            .iter()
            .map(|s| PointSolution {
                name: s.to_string(),
                selection: vec![],
                priority: None,
            })
            .collect();
        NetNode::Morph(p)
    }

    fn analysis(id: &str) -> NetNode {
        NetNode::Analysis(AnalysisPoint { id: id.into() })
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn two_points(v: u32) -> TopLevelNetwork {
        let mut g = TopLevelNetwork::new("g", ShapeHint::Chain, 3);
        g.nodes = vec![point("p", &["A"]), point("q", &["B"])];
        g.arcs = vec![Arc::new("p", "q")];
        g.compat
            .insert(
                ItemRef::new("p", "A"),
                ItemRef::new("q", "B"),
                CompatValue::plain(v),
            )
            .unwrap();
        g
    }

    #[test]
    fn forced_two_point_chain() {
        let g = two_points(3);
        let out = chain_trajectories(
            &g,
            &Structures::new(),
            &ids(&["p", "q"]),
            AggregationMode::Adjacent,
            &SynthesisConfig::default(),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].quality, QualityVector::new(3, [2]));
        assert_eq!(out[0].formula(), "<A * B>");
        assert!(two_points(0)
            .compat
            .value(&ItemRef::new("p", "A"), &ItemRef::new("q", "B"))
            .is_some());
        let none = chain_trajectories(
            &two_points(0),
            &Structures::new(),
            &ids(&["p", "q"]),
            AggregationMode::Adjacent,
            &SynthesisConfig::default(),
        )
        .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn single_point_chain_has_vacuous_w() {
        let g = two_points(1);
        let out = chain_trajectories(
            &g,
            &Structures::new(),
            &ids(&["p"]),
            AggregationMode::AllPairs,
            &SynthesisConfig::default(),
        )
        .unwrap();
        assert_eq!(out[0].quality, QualityVector::new(3, [1]));
    }

    fn decision_net() -> TopLevelNetwork {
        let mut g = TopLevelNetwork::new("d", ShapeHint::Tree, 3);
        g.nodes = vec![
            point("m0", &[]),
            analysis("a0"),
            point("m1", &[]),
            point("m2", &[]),
        ];
        g.arcs = vec![
            Arc::new("m0", "a0"),
            Arc::branch("a0", "good", "m1"),
            Arc::branch("a0", "bad", "m2"),
        ];
        g
    }

    #[test]
    fn decision_path_follows_outcomes() {
        let g = decision_net();
        let o = OutcomeAssignment::from([("a0".to_string(), "bad".to_string())]);
        let p = execute_decision_path(&g, "m0", &o, 10).unwrap();
        assert_eq!(p.points, ids(&["m0", "m2"]));
        assert!(!p.truncated);
        let err = execute_decision_path(&g, "m0", &OutcomeAssignment::new(), 10).unwrap_err();
        assert_eq!(err, TrajectoryError::UnresolvedAnalysis("a0".into()));
        let o = OutcomeAssignment::from([("a0".to_string(), "meh".to_string())]);
        assert!(matches!(
            execute_decision_path(&g, "m0", &o, 10),
            Err(TrajectoryError::UnknownOutcome { .. })
        ));
    }

    #[test]
    fn path_through_analysis_point_is_rejected_as_chain() {
        let g = decision_net();
        let err = chain_for_path(
            &g,
            &Structures::new(),
            &ids(&["m0", "a0", "m1"]),
            AggregationMode::Adjacent,
            &SynthesisConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("path must contain morph points only"));
    }

    #[test]
    fn two_cycle_spanning_tree_and_simplify() {
        let mut g = TopLevelNetwork::new("c", ShapeHint::General, 3);
        g.nodes = vec![point("x", &[]), point("y", &[])];
        g.arcs = vec![Arc::new("x", "y"), Arc::new("y", "x")];
        for r in ["x", "y"] {
            let t = spanning_tree(&g, r).unwrap();
            assert_eq!(t.arcs.len(), 1);
            assert!(is_tree(&t));
        }
        let (s, removed) = simplify_network(&g);
        assert_eq!(removed, vec![Arc::new("y", "x")]);
        assert!(is_acyclic(&s));
        let (again, none) = simplify_network(&s);
        assert!(none.is_empty());
        assert_eq!(again, s);
    }

    #[test]
    fn self_loop_is_removed() {
        let mut g = TopLevelNetwork::new("l", ShapeHint::General, 3);
        g.nodes = vec![point("x", &[])];
        g.arcs = vec![Arc::new("x", "x")];
        let (s, removed) = simplify_network(&g);
        assert!(s.arcs.is_empty());
        assert_eq!(removed.len(), 1);
    }

    #[test]
    fn tree_input_is_its_own_spanning_tree() {
        let mut g = TopLevelNetwork::new("t", ShapeHint::Tree, 3);
        g.nodes = vec![point("r", &[]), point("a", &[]), point("b", &[])];
        g.arcs = vec![Arc::new("r", "a"), Arc::new("r", "b")];
        let t = spanning_tree(&g, "r").unwrap();
        assert_eq!(t.arcs, g.arcs);
        assert_eq!(t.nodes, g.nodes);
    }
}
