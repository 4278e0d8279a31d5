//! Morphological structures, compatibility tables and top-level networks.
//!
//! Everything here is plain immutable data plus well-formedness checks. A
//! value can be built in an invalid state (the parser and tests do this on
//! purpose); `validate_structure` and `validate_network` report what is wrong
//! without failing.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// One design alternative (DA) of a component. Priority 1 is the best tier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DesignAlternative {
    pub id: String,
    pub priority: u32,
    pub label: Option<String>,
}

impl DesignAlternative {
    pub fn new(id: impl Into<String>, priority: u32) -> Self {
        Self {
            id: id.into(),
            priority,
            label: None,
        }
    }
}

/// A leaf of the morphological tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Component {
    pub id: String,
    pub alternatives: Vec<DesignAlternative>,
}

impl Component {
    pub fn new(id: impl Into<String>, alternatives: Vec<DesignAlternative>) -> Self {
        Self {
            id: id.into(),
            alternatives,
        }
    }

    pub fn alternative(&self, id: &str) -> Option<&DesignAlternative> {
        self.alternatives.iter().find(|a| a.id == id)
    }
}

/// An inner node `id = child * child * ...`. Children name components or
/// other composite nodes of the same structure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompositeNode {
    pub id: String,
    pub children: Vec<String>,
}

impl CompositeNode {
    pub fn new<I, S>(id: impl Into<String>, children: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            id: id.into(),
            children: children.into_iter().map(Into::into).collect(),
        }
    }
}

/// Reference to something that can be selected for one child of a composite
/// node: a DA of a component, or a named solution of a composite child. The
/// same shape is reused for (point, solution) pairs in inter-point tables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ItemRef {
    pub owner: String,
    pub item: String,
}

impl ItemRef {
    pub fn new(owner: impl Into<String>, item: impl Into<String>) -> Self {
        Self {
            owner: owner.into(),
            item: item.into(),
        }
    }
}

impl fmt::Display for ItemRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.owner, self.item)
    }
}

/// A single compatibility estimate. `assumed` marks values that were not
/// taken from a source table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompatValue {
    pub value: u32,
    pub assumed: bool,
    pub note: Option<String>,
}

impl CompatValue {
    pub fn plain(value: u32) -> Self {
        Self {
            value,
            assumed: false,
            note: None,
        }
    }
}

/// What to do when a required compatibility estimate is absent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MissingEntryPolicy {
    StrictError,
    AssumeValue(u32),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("missing compatibility entry ({a},{b})")]
pub struct MissingEntry {
    pub a: ItemRef,
    pub b: ItemRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CompatInsertError {
    #[error("value {value} exceeds scale {scale}")]
    ExceedsScale { value: u32, scale: u32 },
    #[error("entry relates two items of the same owner `{0}`")]
    SameOwner(String),
    #[error("contradictory duplicate entry ({a},{b}): {old} vs {new}")]
    Contradiction {
        a: ItemRef,
        b: ItemRef,
        old: u32,
        new: u32,
    },
}

/// Symmetric ordinal compatibility table over `0..=scale_max`.
///
/// Keys are unordered pairs; the smaller `ItemRef` is always stored first.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CompatTable {
    pub scale_max: u32,
    entries: BTreeMap<(ItemRef, ItemRef), CompatValue>,
}

fn ordered(a: ItemRef, b: ItemRef) -> (ItemRef, ItemRef) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl CompatTable {
    pub fn new(scale_max: u32) -> Self {
        Self {
            scale_max,
            entries: BTreeMap::new(),
        }
    }

    /// Inserts an entry. Re-inserting the same value is a no-op; a different
    /// value for the same pair is rejected.
    pub fn insert(&mut self, a: ItemRef, b: ItemRef, value: CompatValue) -> Result<(), CompatInsertError> {
        if a.owner == b.owner {
            return Err(CompatInsertError::SameOwner(a.owner));
        }
        if value.value > self.scale_max {
            return Err(CompatInsertError::ExceedsScale {
                value: value.value,
                scale: self.scale_max,
            });
        }
        let key = ordered(a, b);
        if let Some(old) = self.entries.get(&key) {
            if old.value != value.value {
                return Err(CompatInsertError::Contradiction {
                    a: key.0,
                    b: key.1,
                    old: old.value,
                    new: value.value,
                });
            }
            return Ok(());
        }
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn entry(&self, a: &ItemRef, b: &ItemRef) -> Option<&CompatValue> {
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        self.entries.get(&key)
    }

    pub fn value(&self, a: &ItemRef, b: &ItemRef) -> Option<u32> {
        self.entry(a, b).map(|e| e.value)
    }

    pub fn lookup(&self, a: &ItemRef, b: &ItemRef, policy: MissingEntryPolicy) -> Result<u32, MissingEntry> {
        match (self.value(a, b), policy) {
            (Some(v), _) => Ok(v),
            (None, MissingEntryPolicy::AssumeValue(v)) => Ok(v),
            (None, MissingEntryPolicy::StrictError) => Err(MissingEntry {
                a: a.clone(),
                b: b.clone(),
            }),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ItemRef, &ItemRef, &CompatValue)> {
        self.entries.iter().map(|((a, b), v)| (a, b, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Compatibility between local solutions of different network points.
/// `ItemRef::owner` is the point id, `ItemRef::item` the solution name.
pub type InterPointCompat = CompatTable;

/// A named solution declared by hand for a composite node, e.g. `X3 = J8*M2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeclaredSolution {
    pub name: String,
    pub selection: Vec<ItemRef>,
    pub priority: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChildKind {
    Component,
    Node,
}

/// Tree of composite nodes over leaf components, with one compatibility
/// table per composite node.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct MorphStructure {
    pub name: String,
    pub scale_max: u32,
    pub partial: bool,
    pub components: Vec<Component>,
    pub nodes: Vec<CompositeNode>,
    /// Keyed by composite node id.
    pub compat: BTreeMap<String, CompatTable>,
    /// Hand-declared solutions keyed by composite node id.
    pub declared: BTreeMap<String, Vec<DeclaredSolution>>,
}

impl MorphStructure {
    pub fn new(name: impl Into<String>, scale_max: u32) -> Self {
        Self {
            name: name.into(),
            scale_max,
            ..Self::default()
        }
    }

    pub fn component(&self, id: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&CompositeNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn kind_of(&self, id: &str) -> Option<ChildKind> {
        if self.component(id).is_some() {
            Some(ChildKind::Component)
        } else if self.node(id).is_some() {
            Some(ChildKind::Node)
        } else {
            None
        }
    }

    /// First composite node (in declaration order) that is nobody's child.
    pub fn root(&self) -> Option<&CompositeNode> {
        let referenced: HashSet<&str> = self
            .nodes
            .iter()
            .flat_map(|n| n.children.iter().map(String::as_str))
            .collect();
        self.nodes.iter().find(|n| !referenced.contains(n.id.as_str()))
    }

    pub fn parent_of(&self, child: &str) -> Option<&CompositeNode> {
        self.nodes.iter().find(|n| n.children.iter().any(|c| c == child))
    }

    /// `l`: the largest priority declared anywhere, at least 1.
    pub fn priority_depth(&self) -> u32 {
        let alts = self
            .components
            .iter()
            .flat_map(|c| c.alternatives.iter().map(|a| a.priority));
        let declared = self.declared.values().flatten().filter_map(|s| s.priority);
        alts.chain(declared).max().unwrap_or(1).max(1)
    }

    /// Compatibility table of a composite node, or an empty one.
    pub fn table(&self, node: &str) -> CompatTableRef<'_> {
        match self.compat.get(node) {
            Some(t) => CompatTableRef::Borrowed(t),
            None => CompatTableRef::Empty(CompatTable::new(self.scale_max)),
        }
    }

    pub fn declared_solutions(&self, node: &str) -> &[DeclaredSolution] {
        self.declared.get(node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Composite nodes in post-order (children before parents), starting at
    /// the root. Nodes unreachable from the root are not listed.
    pub fn post_order(&self) -> Vec<&CompositeNode> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        if let Some(root) = self.root() {
            self.post_order_from(root, &mut seen, &mut out);
        }
        out
    }

    fn post_order_from<'a>(
        &'a self,
        node: &'a CompositeNode,
        seen: &mut HashSet<&'a str>,
        out: &mut Vec<&'a CompositeNode>,
    ) {
        if !seen.insert(node.id.as_str()) {
            return;
        }
        for child in &node.children {
            if let Some(n) = self.node(child) {
                self.post_order_from(n, seen, out);
            }
        }
        out.push(node);
    }

    /// Leaf components below `id` (itself, if it is a component), in
    /// left-to-right order.
    pub fn leaves_under(&self, id: &str) -> Vec<&Component> {
        let mut out = Vec::new();
        let mut guard = HashSet::new();
        self.collect_leaves(id, &mut out, &mut guard);
        out
    }

    fn collect_leaves<'a>(&'a self, id: &str, out: &mut Vec<&'a Component>, guard: &mut HashSet<String>) {
        if !guard.insert(id.to_string()) {
            return;
        }
        if let Some(c) = self.component(id) {
            out.push(c);
        } else if let Some(n) = self.node(id) {
            for child in &n.children {
                self.collect_leaves(child, out, guard);
            }
        }
    }
}

/// Either a borrowed table or an owned empty one.
pub enum CompatTableRef<'a> {
    Borrowed(&'a CompatTable),
    Empty(CompatTable),
}

impl std::ops::Deref for CompatTableRef<'_> {
    type Target = CompatTable;
    fn deref(&self) -> &CompatTable {
        match self {
            CompatTableRef::Borrowed(t) => t,
            CompatTableRef::Empty(t) => t,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeHint {
    Chain,
    Tree,
    Dag,
    General,
}

impl ShapeHint {
    pub fn keyword(self) -> &'static str {
        match self {
            ShapeHint::Chain => "chain",
            ShapeHint::Tree => "tree",
            ShapeHint::Dag => "dag",
            ShapeHint::General => "general",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "chain" => ShapeHint::Chain,
            "tree" => ShapeHint::Tree,
            "dag" => ShapeHint::Dag,
            "general" => ShapeHint::General,
            _ => return None,
        })
    }
}

/// A local solution of a morph point, selecting one DA per leaf component.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PointSolution {
    pub name: String,
    pub selection: Vec<String>,
    pub priority: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MorphPoint {
    pub id: String,
    pub structure: String,
    pub solutions: Vec<PointSolution>,
}

impl MorphPoint {
    pub fn new(id: impl Into<String>, structure: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            structure: structure.into(),
            solutions: Vec::new(),
        }
    }
}

/// Analysis/decision point. Its branches are the outgoing arcs carrying an
/// outcome label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AnalysisPoint {
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NetNode {
    Morph(MorphPoint),
    Analysis(AnalysisPoint),
}

impl NetNode {
    pub fn id(&self) -> &str {
        match self {
            NetNode::Morph(p) => &p.id,
            NetNode::Analysis(a) => &a.id,
        }
    }

    pub fn is_analysis(&self) -> bool {
        matches!(self, NetNode::Analysis(_))
    }
}

/// Directed arc. Arcs leaving an analysis point carry the outcome label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Arc {
    pub from: String,
    pub to: String,
    pub outcome: Option<String>,
}

impl Arc {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            outcome: None,
        }
    }

    pub fn branch(from: impl Into<String>, outcome: impl Into<String>, to: impl Into<String>) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            outcome: Some(outcome.into()),
        }
    }
}

impl fmt::Display for Arc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// A hand-declared trajectory (point -> solution) used for export.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeclaredTrajectory {
    pub name: String,
    pub assignment: Vec<(String, String)>,
}

/// Successors of each node as (node index, arc index).
pub(crate) type Adjacency = Vec<Vec<(usize, usize)>>;

/// Graph of time/logical points. Arcs are kept in declaration order, which
/// is the tie-break for every traversal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopLevelNetwork {
    pub name: String,
    pub shape: ShapeHint,
    pub explicit_root: Option<String>,
    pub nodes: Vec<NetNode>,
    pub arcs: Vec<Arc>,
    pub compat: InterPointCompat,
    pub trajectories: Vec<DeclaredTrajectory>,
}

impl TopLevelNetwork {
    pub fn new(name: impl Into<String>, shape: ShapeHint, scale_max: u32) -> Self {
        Self {
            name: name.into(),
            shape,
            explicit_root: None,
            nodes: Vec::new(),
            arcs: Vec::new(),
            compat: CompatTable::new(scale_max),
            trajectories: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&NetNode> {
        self.nodes.iter().find(|n| n.id() == id)
    }

    pub fn morph_point(&self, id: &str) -> Option<&MorphPoint> {
        match self.node(id) {
            Some(NetNode::Morph(p)) => Some(p),
            _ => None,
        }
    }

    pub fn morph_points(&self) -> impl Iterator<Item = &MorphPoint> {
        self.nodes.iter().filter_map(|n| match n {
            NetNode::Morph(p) => Some(p),
            NetNode::Analysis(_) => None,
        })
    }

    pub fn outgoing(&self, id: &str) -> impl Iterator<Item = &Arc> {
        let id = id.to_string();
        self.arcs.iter().filter(move |a| a.from == id)
    }

    pub fn in_degree(&self, id: &str) -> usize {
        self.arcs.iter().filter(|a| a.to == id).count()
    }

    /// Branches of an analysis point as (outcome, successor) pairs.
    pub fn branches(&self, id: &str) -> Vec<(&str, &str)> {
        self.arcs
            .iter()
            .filter(|a| a.from == id)
            .filter_map(|a| a.outcome.as_deref().map(|o| (o, a.to.as_str())))
            .collect()
    }

    /// Traversal roots: the explicit root if declared, else every node with
    /// in-degree 0; if there is none, the first declared node.
    pub fn roots(&self) -> Vec<&str> {
        if let Some(r) = &self.explicit_root {
            return vec![r.as_str()];
        }
        let roots: Vec<&str> = self
            .nodes
            .iter()
            .map(NetNode::id)
            .filter(|id| self.in_degree(id) == 0)
            .collect();
        if roots.is_empty() {
            self.nodes.first().map(NetNode::id).into_iter().collect()
        } else {
            roots
        }
    }

    pub fn has_analysis_points(&self) -> bool {
        self.nodes.iter().any(NetNode::is_analysis)
    }

    /// Successor lists by node index, in arc declaration order. Arcs whose
    /// endpoints are unknown are skipped.
    pub(crate) fn adjacency(&self) -> (HashMap<&str, usize>, Adjacency) {
        let index: HashMap<&str, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id(), i)).collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (k, arc) in self.arcs.iter().enumerate() {
            if let (Some(&f), Some(&t)) = (index.get(arc.from.as_str()), index.get(arc.to.as_str())) {
                adj[f].push((t, k));
            }
        }
        (index, adj)
    }

    /// Arcs closing a cycle in a depth-first search from the roots, then from
    /// any still-unvisited node, in declaration order.
    pub fn back_arcs(&self) -> Vec<usize> {
        let (index, adj) = self.adjacency();
        let n = self.nodes.len();
        // 0 = new, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut back = Vec::new();
        let mut starts: Vec<usize> = self
            .roots()
            .iter()
            .filter_map(|r| index.get(r).copied())
            .collect();
        starts.extend(0..n);
        for s in starts {
            if state[s] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, usize)> = vec![(s, 0)];
            state[s] = 1;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < adj[v].len() {
                    let (w, arc) = adj[v][*next];
                    *next += 1;
                    match state[w] {
                        0 => {
                            state[w] = 1;
                            stack.push((w, 0));
                        }
                        1 => back.push(arc),
                        _ => {}
                    }
                } else {
                    state[v] = 2;
                    stack.pop();
                }
            }
        }
        back.sort_unstable();
        back
    }

    /// Node ids reachable from `start` following arc directions.
    pub fn reachable_from(&self, start: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start.to_string()];
        while let Some(v) = stack.pop() {
            if !seen.insert(v.clone()) {
                continue;
            }
            for a in self.outgoing(&v) {
                if !seen.contains(&a.to) {
                    stack.push(a.to.clone());
                }
            }
        }
        seen
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    fn error(&mut self, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Error,
            message: message.into(),
        });
    }

    fn warning(&mut self, message: impl Into<String>) {
        self.issues.push(Issue {
            severity: Severity::Warning,
            message: message.into(),
        });
    }

    pub fn is_valid(&self) -> bool {
        !self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    /// Valid with warnings promoted to errors.
    pub fn is_strictly_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.issues.extend(other.issues);
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.message.contains(needle))
    }
}

/// Items selectable for child `child` of a composite node, if they are known
/// statically: a component's DAs or a composite child's declared solutions.
fn known_items(s: &MorphStructure, child: &str) -> Option<Vec<String>> {
    if let Some(c) = s.component(child) {
        return Some(c.alternatives.iter().map(|a| a.id.clone()).collect());
    }
    let declared = s.declared_solutions(child);
    if declared.is_empty() {
        None
    } else {
        Some(declared.iter().map(|d| d.name.clone()).collect())
    }
}

/// Checks a morphological structure. Missing compatibility entries are
/// warnings when the structure is flagged `partial`, errors otherwise.
pub fn validate_structure(s: &MorphStructure) -> ValidationReport {
    validate_structure_as(s, s.partial)
}

/// Like [`validate_structure`] with the partial flag overridden.
pub fn validate_structure_as(s: &MorphStructure, partial: bool) -> ValidationReport {
    let mut r = ValidationReport::default();
    if s.scale_max == 0 {
        r.error(format!("structure {}: scale must be at least 1", s.name));
    }

    let mut seen_ids = HashSet::new();
    for c in &s.components {
        if !seen_ids.insert(c.id.as_str()) {
            r.error(format!("duplicate id {}", c.id));
        }
        if c.alternatives.is_empty() {
            r.error(format!("empty component {}", c.id));
        }
        let mut alt_ids = HashSet::new();
        for a in &c.alternatives {
            if !alt_ids.insert(a.id.as_str()) {
                r.error(format!("duplicate alternative {} in component {}", a.id, c.id));
            }
            if a.priority == 0 {
                r.error(format!("alternative {} has priority 0 (must be >= 1)", a.id));
            }
        }
    }
    for n in &s.nodes {
        if !seen_ids.insert(n.id.as_str()) {
            r.error(format!("duplicate id {}", n.id));
        }
        if n.children.is_empty() {
            r.error(format!("node {} has no children", n.id));
        }
        for c in &n.children {
            if s.kind_of(c).is_none() {
                r.error(format!("node {} references unknown child {}", n.id, c));
            }
        }
    }

    // Tree shape: each id is a child at most once, no cycles, one root.
    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for n in &s.nodes {
        for c in &n.children {
            parents.entry(c.as_str()).or_default().push(n.id.as_str());
        }
    }
    for (child, ps) in &parents {
        if ps.len() > 1 {
            r.error(format!(
                "{} is referenced more than once (by {})",
                child,
                ps.join(", ")
            ));
        }
    }
    if let Some(cycle) = find_node_cycle(s) {
        r.error(format!("cyclic child references ({})", cycle.join(" -> ")));
    }
    if s.nodes.is_empty() {
        r.error(format!("structure {} has no composite node", s.name));
    } else {
        let roots: Vec<&str> = s
            .nodes
            .iter()
            .filter(|n| !parents.contains_key(n.id.as_str()))
            .map(|n| n.id.as_str())
            .collect();
        match roots.len() {
            0 => r.error(format!("structure {} has no root node", s.name)),
            1 => {}
            _ => r.error(format!(
                "structure {} has several roots ({})",
                s.name,
                roots.join(", ")
            )),
        }
        for c in &s.components {
            if !parents.contains_key(c.id.as_str()) {
                r.error(format!("component {} is not attached to any node", c.id));
            }
        }
    }

    for (node_id, sols) in &s.declared {
        let Some(node) = s.node(node_id) else {
            r.error(format!("solutions declared for unknown node {node_id}"));
            continue;
        };
        let mut names = HashSet::new();
        for sol in sols {
            if !names.insert(sol.name.as_str()) {
                r.error(format!("duplicate solution {} at node {}", sol.name, node_id));
            }
            if sol.priority == Some(0) {
                r.error(format!("solution {} has priority 0 (must be >= 1)", sol.name));
            }
            let owners: Vec<&str> = sol.selection.iter().map(|i| i.owner.as_str()).collect();
            let mut covered = HashSet::new();
            for item in &sol.selection {
                if !node.children.contains(&item.owner) {
                    r.error(format!(
                        "solution {} selects {} which is not below a child of {}",
                        sol.name, item, node_id
                    ));
                } else if !covered.insert(item.owner.as_str()) {
                    r.error(format!(
                        "solution {} selects twice for child {}",
                        sol.name, item.owner
                    ));
                } else if let Some(items) = known_items(s, &item.owner) {
                    if !items.contains(&item.item) {
                        r.error(format!("solution {} selects unknown item {}", sol.name, item));
                    }
                }
            }
            for c in &node.children {
                if !owners.contains(&c.as_str()) {
                    r.error(format!("solution {} selects nothing for child {}", sol.name, c));
                }
            }
        }
    }

    for (node_id, table) in &s.compat {
        let Some(node) = s.node(node_id) else {
            r.error(format!("compatibility table for unknown node {node_id}"));
            continue;
        };
        for (a, b, v) in table.entries() {
            if v.value > s.scale_max {
                r.error(format!(
                    "value exceeds scale: ({},{}) = {} > {}",
                    a.item, b.item, v.value, s.scale_max
                ));
            }
            for x in [a, b] {
                if !node.children.contains(&x.owner) {
                    r.error(format!(
                        "compatibility entry references {} outside node {}",
                        x, node_id
                    ));
                } else if let Some(items) = known_items(s, &x.owner) {
                    if !items.contains(&x.item) {
                        r.error(format!("compatibility entry references unknown item {x}"));
                    }
                }
            }
        }
    }

    // Totality of the compatibility function over cross-child pairs.
    for node in &s.nodes {
        let table = s.table(&node.id);
        for (i, ci) in node.children.iter().enumerate() {
            for cj in &node.children[i + 1..] {
                let (Some(xs), Some(ys)) = (known_items(s, ci), known_items(s, cj)) else {
                    continue;
                };
                for x in &xs {
                    for y in &ys {
                        let a = ItemRef::new(ci.clone(), x.clone());
                        let b = ItemRef::new(cj.clone(), y.clone());
                        if table.value(&a, &b).is_none() {
                            let msg = format!("missing compatibility entry ({x},{y})");
                            if partial {
                                r.warning(msg);
                            } else {
                                r.error(msg);
                            }
                        }
                    }
                }
            }
        }
    }
    r
}

fn find_node_cycle(s: &MorphStructure) -> Option<Vec<String>> {
    fn visit(
        s: &MorphStructure,
        id: &str,
        stack: &mut Vec<String>,
        done: &mut HashSet<String>,
    ) -> Option<Vec<String>> {
        if let Some(pos) = stack.iter().position(|x| x == id) {
            let mut cyc = stack[pos..].to_vec();
            cyc.push(id.to_string());
            return Some(cyc);
        }
        if done.contains(id) {
            return None;
        }
        let node = s.node(id)?;
        stack.push(id.to_string());
        for c in &node.children {
            if let Some(cyc) = visit(s, c, stack, done) {
                return Some(cyc);
            }
        }
        stack.pop();
        done.insert(id.to_string());
        None
    }
    let mut done = HashSet::new();
    for n in &s.nodes {
        if let Some(c) = visit(s, &n.id, &mut Vec::new(), &mut done) {
            return Some(c);
        }
    }
    None
}

/// Checks a top-level network: endpoints, branch labels, reachability and
/// consistency with the declared shape hint.
pub fn validate_network(g: &TopLevelNetwork) -> ValidationReport {
    let mut r = ValidationReport::default();
    let mut ids = HashSet::new();
    for n in &g.nodes {
        if !ids.insert(n.id()) {
            r.error(format!("duplicate network node {}", n.id()));
        }
        if let NetNode::Morph(p) = n {
            let mut names = HashSet::new();
            for s in &p.solutions {
                if !names.insert(s.name.as_str()) {
                    r.error(format!("duplicate solution {} at point {}", s.name, p.id));
                }
                if s.priority == Some(0) {
                    r.error(format!("solution {} has priority 0 (must be >= 1)", s.name));
                }
            }
        }
    }
    if let Some(root) = &g.explicit_root {
        if !ids.contains(root.as_str()) {
            r.error(format!("declared root {root} does not exist"));
        }
    }
    for a in &g.arcs {
        if !ids.contains(a.from.as_str()) {
            r.error(format!("edge source {} does not exist", a.from));
        }
        if !ids.contains(a.to.as_str()) {
            r.error(format!("dangling edge target {} (from {})", a.to, a.from));
        }
        match (g.node(&a.from), &a.outcome) {
            (Some(NetNode::Morph(_)), Some(o)) => r.error(format!(
                "morph point {} cannot have outcome branch \"{o}\"",
                a.from
            )),
            (Some(NetNode::Analysis(_)), None) => r.error(format!(
                "analysis point {} has an unlabeled edge to {}",
                a.from, a.to
            )),
            _ => {}
        }
    }
    for n in &g.nodes {
        if let NetNode::Analysis(a) = n {
            let mut labels = HashSet::new();
            for (o, _) in g.branches(&a.id) {
                if !labels.insert(o) {
                    r.error(format!("analysis point {} has duplicate outcome \"{o}\"", a.id));
                }
            }
        }
    }

    let back = g.back_arcs();
    if g.shape != ShapeHint::General {
        for &k in &back {
            r.error(format!("cycle detected ({})", g.arcs[k]));
        }
    }

    let mut reached = BTreeSet::new();
    for root in g.roots() {
        reached.extend(g.reachable_from(root));
    }
    let unreachable: Vec<&str> = g
        .nodes
        .iter()
        .map(NetNode::id)
        .filter(|id| !reached.contains(*id))
        .collect();
    let shape_needs_reach = matches!(g.shape, ShapeHint::Chain | ShapeHint::Tree);
    for id in &unreachable {
        let msg = format!("node {id} is unreachable from the roots");
        if shape_needs_reach {
            r.error(msg);
        } else {
            r.warning(msg);
        }
    }

    if g.nodes.is_empty() {
        return r;
    }
    let zero_in: Vec<&str> = g
        .nodes
        .iter()
        .map(NetNode::id)
        .filter(|id| g.in_degree(id) == 0)
        .collect();
    match g.shape {
        ShapeHint::Tree | ShapeHint::Chain => {
            if zero_in.len() != 1 {
                r.error(format!(
                    "{} must have exactly one root, found {}",
                    g.shape.keyword(),
                    zero_in.len()
                ));
            }
            for n in &g.nodes {
                let d = g.in_degree(n.id());
                if d > 1 {
                    r.error(format!(
                        "node {} has in-degree {} in a {}",
                        n.id(),
                        d,
                        g.shape.keyword()
                    ));
                }
            }
            if g.arcs.len() + 1 != g.nodes.len() {
                r.error(format!(
                    "{} must have node count - 1 edges ({} nodes, {} edges)",
                    g.shape.keyword(),
                    g.nodes.len(),
                    g.arcs.len()
                ));
            }
            if g.shape == ShapeHint::Chain {
                for n in &g.nodes {
                    let d = g.outgoing(n.id()).count();
                    if d > 1 {
                        r.error(format!("node {} has out-degree {} in a chain", n.id(), d));
                    }
                }
            }
        }
        ShapeHint::Dag | ShapeHint::General => {}
    }
    r
}

/// True iff the network, ignoring its hint, is an arborescence: one root,
/// every other node of in-degree 1, all reachable, no cycle.
pub fn is_tree(g: &TopLevelNetwork) -> bool {
    if g.nodes.is_empty() {
        return true;
    }
    let zero_in: Vec<&str> = g
        .nodes
        .iter()
        .map(NetNode::id)
        .filter(|id| g.in_degree(id) == 0)
        .collect();
    if zero_in.len() != 1 || g.arcs.len() + 1 != g.nodes.len() {
        return false;
    }
    if g.nodes.iter().any(|n| g.in_degree(n.id()) > 1) {
        return false;
    }
    g.reachable_from(zero_in[0]).len() == g.nodes.len()
}

pub fn is_acyclic(g: &TopLevelNetwork) -> bool {
    g.back_arcs().is_empty()
}
