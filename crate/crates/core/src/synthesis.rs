//! Composition of morphological nodes.
//!
//! A composite node is solved by enumerating the cartesian product of its
//! children's options depth-first. A partial selection is abandoned as soon
//! as it contains a pair of compatibility 0 (unless zero is admitted). The
//! surviving compositions are scored with [`quality_of`] semantics and split
//! into Pareto layers. Hierarchies are solved bottom-up: the retained
//! solutions of a node become the options of that node at its parent.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{
    validate_structure_as, CompatTable, ItemRef, MissingEntry, MissingEntryPolicy, MorphStructure,
};
use crate::quality::{pareto_layers, tier_counts, QualityVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Feasibility {
    /// Only compositions with `w >= 1`.
    RequirePositive,
    /// Keep compositions with `w = 0` as well.
    AdmitZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorityRule {
    /// A child solution's priority at the parent is its Pareto layer index.
    ParetoLayer,
    /// Use the solutions and priorities declared in the input.
    Declared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SynthesisConfig {
    pub layer_depth: usize,
    pub missing_entry_policy: MissingEntryPolicy,
    pub feasibility: Feasibility,
    pub priority_rule: PriorityRule,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            layer_depth: 1,
            missing_entry_policy: MissingEntryPolicy::StrictError,
            feasibility: Feasibility::RequirePositive,
            priority_rule: PriorityRule::ParetoLayer,
        }
    }
}

impl SynthesisConfig {
    pub fn with_layers(mut self, depth: usize) -> Self {
        self.layer_depth = depth;
        self
    }

    pub fn with_rule(mut self, rule: PriorityRule) -> Self {
        self.priority_rule = rule;
        self
    }

    pub fn with_policy(mut self, policy: MissingEntryPolicy) -> Self {
        self.missing_entry_policy = policy;
        self
    }

    pub fn with_feasibility(mut self, f: Feasibility) -> Self {
        self.feasibility = f;
        self
    }

    pub(crate) fn min_w(&self) -> u32 {
        match self.feasibility {
            Feasibility::RequirePositive => 1,
            Feasibility::AdmitZero => 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthesisError {
    #[error("structure {structure} is invalid: {reason}")]
    InvalidStructure { structure: String, reason: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error(transparent)]
    Missing(#[from] MissingEntry),
    #[error("solution {solution} of node {node} has no declared priority")]
    UndeclaredPriority { node: String, solution: String },
    #[error("node {0} has no declared solutions (required by the declared priority rule)")]
    NoDeclaredSolutions(String),
    #[error("unknown item {item} for child {child} of node {node}")]
    UnknownItem {
        node: String,
        child: String,
        item: String,
    },
    #[error("selection for node {node} must pick exactly one item per child ({expected}), got {got}")]
    SelectionArity {
        node: String,
        expected: usize,
        got: usize,
    },
    #[error("value {value} is outside the scale 0..={scale}")]
    AssumedOutOfScale { value: u32, scale: u32 },
}

/// One composition: an item per child, its quality and Pareto layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompositeSolution {
    pub name: String,
    pub node: String,
    /// One item per child of `node`, in child order.
    pub selection: Vec<ItemRef>,
    /// The same selection expanded down to leaf components.
    pub leaves: Vec<ItemRef>,
    pub quality: QualityVector,
    pub layer: usize,
}

impl CompositeSolution {
    /// `A1*B2*C1` form of the selection.
    pub fn formula(&self) -> String {
        join_items(&self.selection)
    }

    pub fn leaf_formula(&self) -> String {
        join_items(&self.leaves)
    }
}

pub(crate) fn join_items(items: &[ItemRef]) -> String {
    items
        .iter()
        .map(|i| i.item.as_str())
        .collect::<Vec<_>>()
        .join("*")
}

/// Generated solution name: node id plus 1-based index, with an underscore
/// when the id already ends in a digit (`X1`, `tau1_2`).
pub fn solution_name(node: &str, index: usize) -> String {
    if node.chars().last().is_some_and(|c| c.is_ascii_digit()) {
        format!("{node}_{index}")
    } else {
        format!("{node}{index}")
    }
}

/// Something selectable for one child: its reference, priority at this
/// level and leaf expansion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChildOption {
    pub item: ItemRef,
    pub priority: u32,
    pub leaves: Vec<ItemRef>,
}

/// Values of one checked pair `(i, j)`, `i < j`, flattened as `[a * len_j + b]`.
struct PairMatrix {
    i: usize,
    cols: usize,
    values: Vec<u32>,
}

/// Enumerates one item per slot such that every listed pair `(i, j)` has a
/// compatibility of at least `min_w`, returning item indices and `w` (the
/// minimum over the listed pairs, `scale_max` when there are none).
///
/// Missing entries on listed pairs are resolved by `policy` up front; under
/// the strict policy the first one (in pair order) is an error. Work is split
/// over the first slot; the result is in lexicographic index order whatever
/// the scheduling.
pub(crate) fn enumerate_selections(
    slots: &[Vec<ItemRef>],
    pairs: &[(usize, usize)],
    table: &CompatTable,
    policy: MissingEntryPolicy,
    min_w: u32,
    prune: bool,
) -> Result<Vec<(Vec<usize>, u32)>, MissingEntry> {
    let k = slots.len();
    if k == 0 || slots.iter().any(Vec::is_empty) {
        return Ok(Vec::new());
    }
    // checks[j]: matrices for pairs whose later slot is j
    let mut checks: Vec<Vec<PairMatrix>> = (0..k).map(|_| Vec::new()).collect();
    for &(x, y) in pairs {
        let (i, j) = if x < y { (x, y) } else { (y, x) };
        let mut values = Vec::with_capacity(slots[i].len() * slots[j].len());
        for a in &slots[i] {
            for b in &slots[j] {
                values.push(table.lookup(a, b, policy)?);
            }
        }
        checks[j].push(PairMatrix {
            i,
            cols: slots[j].len(),
            values,
        });
    }
    let search = Search {
        slots,
        checks: &checks,
        min_w,
        prune,
    };
    let chunks: Vec<Vec<(Vec<usize>, u32)>> = (0..slots[0].len())
        .into_par_iter()
        .map(|first| {
            let mut out = Vec::new();
            let mut picks = vec![first];
            search.dfs(table.scale_max, &mut picks, &mut out);
            out
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

struct Search<'a> {
    slots: &'a [Vec<ItemRef>],
    checks: &'a [Vec<PairMatrix>],
    min_w: u32,
    prune: bool,
}

impl Search<'_> {
    fn dfs(&self, w_so_far: u32, picks: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, u32)>) {
        let depth = picks.len();
        if depth == self.slots.len() {
            if w_so_far >= self.min_w {
                out.push((picks.clone(), w_so_far));
            }
            return;
        }
        'next: for b in 0..self.slots[depth].len() {
            let mut w = w_so_far;
            for m in &self.checks[depth] {
                w = w.min(m.values[picks[m.i] * m.cols + b]);
                if self.prune && w < self.min_w {
                    continue 'next;
                }
            }
            picks.push(b);
            self.dfs(w, picks, out);
            picks.pop();
        }
    }
}

/// Every unordered pair of `k` slots.
pub(crate) fn all_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Scores enumerated compositions, peels Pareto layers and names the result.
pub(crate) fn rank_compositions(
    node: &str,
    options: &[Vec<ChildOption>],
    found: Vec<(Vec<usize>, u32)>,
    tiers: usize,
    depth: usize,
) -> Vec<CompositeSolution> {
    let scored: Vec<(Vec<usize>, QualityVector)> = found
        .into_iter()
        .map(|(idx, w)| {
            let n = tier_counts(
                idx.iter().enumerate().map(|(c, &o)| options[c][o].priority),
                tiers,
            );
            (idx, QualityVector { w, n })
        })
        .collect();
    let mut out = Vec::new();
    for (layer_no, layer) in pareto_layers(scored, depth).into_iter().enumerate() {
        for (idx, quality) in layer {
            let selection: Vec<ItemRef> = idx
                .iter()
                .enumerate()
                .map(|(c, &o)| options[c][o].item.clone())
                .collect();
            let leaves = idx
                .iter()
                .enumerate()
                .flat_map(|(c, &o)| options[c][o].leaves.iter().cloned())
                .collect();
            out.push(CompositeSolution {
                name: String::new(),
                node: node.to_string(),
                selection,
                leaves,
                quality,
                layer: layer_no + 1,
            });
        }
    }
    for (i, s) in out.iter_mut().enumerate() {
        s.name = solution_name(node, i + 1);
    }
    out
}

fn check_structure(s: &MorphStructure, cfg: &SynthesisConfig) -> Result<(), SynthesisError> {
    if let MissingEntryPolicy::AssumeValue(v) = cfg.missing_entry_policy {
        if v > s.scale_max {
            return Err(SynthesisError::AssumedOutOfScale {
                value: v,
                scale: s.scale_max,
            });
        }
    }
    let partial = s.partial || matches!(cfg.missing_entry_policy, MissingEntryPolicy::AssumeValue(_));
    let report = validate_structure_as(s, partial);
    let first = report.errors().next().map(|e| e.message.clone());
    match first {
        Some(reason) => Err(SynthesisError::InvalidStructure {
            structure: s.name.clone(),
            reason,
        }),
        None => Ok(()),
    }
}

/// Expands a declared item of `owner` to leaf DAs.
fn declared_leaves(
    s: &MorphStructure,
    solved: &BTreeMap<String, Vec<CompositeSolution>>,
    item: &ItemRef,
) -> Result<Vec<ItemRef>, SynthesisError> {
    if s.component(&item.owner).is_some() {
        return Ok(vec![item.clone()]);
    }
    if let Some(d) = s
        .declared_solutions(&item.owner)
        .iter()
        .find(|d| d.name == item.item)
    {
        let mut out = Vec::new();
        for x in &d.selection {
            out.extend(declared_leaves(s, solved, x)?);
        }
        return Ok(out);
    }
    if let Some(sol) = solved
        .get(&item.owner)
        .and_then(|v| v.iter().find(|x| x.name == item.item))
    {
        return Ok(sol.leaves.clone());
    }
    Err(SynthesisError::UnknownItem {
        node: s.parent_of(&item.owner).map(|p| p.id.clone()).unwrap_or_default(),
        child: item.owner.clone(),
        item: item.item.clone(),
    })
}

/// Options of every child of `node`, given the already solved descendants.
pub(crate) fn child_options(
    s: &MorphStructure,
    node: &str,
    solved: &BTreeMap<String, Vec<CompositeSolution>>,
    rule: PriorityRule,
) -> Result<Vec<Vec<ChildOption>>, SynthesisError> {
    let n = s
        .node(node)
        .ok_or_else(|| SynthesisError::UnknownNode(node.to_string()))?;
    let mut all = Vec::with_capacity(n.children.len());
    for child in &n.children {
        if let Some(c) = s.component(child) {
            all.push(
                c.alternatives
                    .iter()
                    .map(|a| {
                        let item = ItemRef::new(c.id.clone(), a.id.clone());
                        ChildOption {
                            leaves: vec![item.clone()],
                            item,
                            priority: a.priority,
                        }
                    })
                    .collect(),
            );
            continue;
        }
        let opts = match rule {
            PriorityRule::ParetoLayer => solved
                .get(child)
                .map(|sols| {
                    sols.iter()
                        .map(|x| ChildOption {
                            item: ItemRef::new(child.clone(), x.name.clone()),
                            priority: x.layer as u32,
                            leaves: x.leaves.clone(),
                        })
                        .collect()
                })
                .unwrap_or_default(),
            PriorityRule::Declared => {
                let declared = s.declared_solutions(child);
                if declared.is_empty() {
                    return Err(SynthesisError::NoDeclaredSolutions(child.clone()));
                }
                let mut v = Vec::with_capacity(declared.len());
                for d in declared {
                    let priority = d.priority.ok_or_else(|| SynthesisError::UndeclaredPriority {
                        node: child.clone(),
                        solution: d.name.clone(),
                    })?;
                    let mut leaves = Vec::new();
                    for x in &d.selection {
                        leaves.extend(declared_leaves(s, solved, x)?);
                    }
                    v.push(ChildOption {
                        item: ItemRef::new(child.clone(), d.name.clone()),
                        priority,
                        leaves,
                    });
                }
                v
            }
        };
        all.push(opts);
    }
    Ok(all)
}

/// Solves every composite node bottom-up. Result is keyed by node id.
pub fn synthesize_hierarchy(
    structure: &MorphStructure,
    cfg: &SynthesisConfig,
) -> Result<BTreeMap<String, Vec<CompositeSolution>>, SynthesisError> {
    check_structure(structure, cfg)?;
    solve_nodes(structure, cfg, |_| true)
}

/// Composite node ids at or below `node`.
fn subtree(structure: &MorphStructure, node: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![node.to_string()];
    while let Some(id) = stack.pop() {
        if let Some(n) = structure.node(&id) {
            if out.insert(id) {
                stack.extend(n.children.iter().cloned());
            }
        }
    }
    out
}

fn solve_nodes(
    structure: &MorphStructure,
    cfg: &SynthesisConfig,
    keep: impl Fn(&str) -> bool,
) -> Result<BTreeMap<String, Vec<CompositeSolution>>, SynthesisError> {
    let tiers = structure.priority_depth() as usize;
    let mut solved: BTreeMap<String, Vec<CompositeSolution>> = BTreeMap::new();
    for node in structure.post_order() {
        if !keep(&node.id) {
            continue;
        }
        let options = child_options(structure, &node.id, &solved, cfg.priority_rule)?;
        let table = structure.table(&node.id);
        let slots: Vec<Vec<ItemRef>> = options
            .iter()
            .map(|o| o.iter().map(|x| x.item.clone()).collect())
            .collect();
        let found = enumerate_selections(
            &slots,
            &all_pairs(slots.len()),
            &table,
            cfg.missing_entry_policy,
            cfg.min_w(),
            cfg.feasibility == Feasibility::RequirePositive,
        )?;
        let ranked = rank_compositions(&node.id, &options, found, tiers, cfg.layer_depth);
        solved.insert(node.id.clone(), ranked);
    }
    Ok(solved)
}

/// Pareto-efficient compositions of one node. Composite nodes below it are
/// solved first; the rest of the structure is not touched.
pub fn synthesize_node(
    structure: &MorphStructure,
    node: &str,
    cfg: &SynthesisConfig,
) -> Result<Vec<CompositeSolution>, SynthesisError> {
    if structure.node(node).is_none() {
        return Err(SynthesisError::UnknownNode(node.to_string()));
    }
    check_structure(structure, cfg)?;
    let below = subtree(structure, node);
    let mut all = solve_nodes(structure, cfg, |id| below.contains(id))?;
    all.remove(node)
        .ok_or_else(|| SynthesisError::UnknownNode(node.to_string()))
}

/// Solutions of the structure's root node.
pub fn synthesize_root(
    structure: &MorphStructure,
    cfg: &SynthesisConfig,
) -> Result<Vec<CompositeSolution>, SynthesisError> {
    let root = structure
        .root()
        .ok_or_else(|| SynthesisError::InvalidStructure {
            structure: structure.name.clone(),
            reason: "no root node".into(),
        })?
        .id
        .clone();
    synthesize_node(structure, &root, cfg)
}

/// Quality of an explicit selection at `node`, one item id per child in
/// child order (DA ids, or solution names for composite children).
pub fn evaluate_selection(
    structure: &MorphStructure,
    node: &str,
    items: &[String],
    cfg: &SynthesisConfig,
) -> Result<QualityVector, SynthesisError> {
    if structure.node(node).is_none() {
        return Err(SynthesisError::UnknownNode(node.to_string()));
    }
    check_structure(structure, cfg)?;
    let below = subtree(structure, node);
    let solved = solve_nodes(structure, cfg, |id| id != node && below.contains(id))?;
    let options = child_options(structure, node, &solved, cfg.priority_rule)?;
    if options.len() != items.len() {
        return Err(SynthesisError::SelectionArity {
            node: node.to_string(),
            expected: options.len(),
            got: items.len(),
        });
    }
    let children = &structure.node(node).expect("checked by child_options").children;
    let mut picks = Vec::with_capacity(items.len());
    for ((opts, item), child) in options.iter().zip(items).zip(children) {
        let o = opts
            .iter()
            .find(|o| &o.item.item == item)
            .ok_or_else(|| SynthesisError::UnknownItem {
                node: node.to_string(),
                child: child.clone(),
                item: item.clone(),
            })?;
        picks.push(crate::quality::Pick {
            item: o.item.clone(),
            priority: o.priority,
        });
    }
    let table = structure.table(node);
    Ok(crate::quality::quality_of(
        &picks,
        &table,
        cfg.missing_entry_policy,
        structure.priority_depth() as usize,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CompatValue, Component, CompositeNode, DesignAlternative};

    fn two_by_two(values: [[u32; 2]; 2]) -> MorphStructure {
        let mut s = MorphStructure::new("t", 3);
        s.components.push(Component::new(
            "A",
            vec![DesignAlternative::new("A1", 1), DesignAlternative::new("A2", 2)],
        ));
        s.components.push(Component::new(
            "B",
            vec![DesignAlternative::new("B1", 1), DesignAlternative::new("B2", 1)],
        ));
        s.nodes.push(CompositeNode::new("S", ["A", "B"]));
        let mut t = CompatTable::new(3);
        for (i, row) in values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                t.insert(
                    ItemRef::new("A", format!("A{}", i + 1)),
                    ItemRef::new("B", format!("B{}", j + 1)),
                    CompatValue::plain(*v),
                )
                .unwrap();
            }
        }
        s.compat.insert("S".into(), t);
        s
    }

    #[test]
    fn fully_incompatible_structure_yields_nothing() {
        let s = two_by_two([[0, 0], [0, 0]]);
        let out = synthesize_root(&s, &SynthesisConfig::default()).unwrap();
        assert!(out.is_empty());
        let admitted = synthesize_root(
            &s,
            &SynthesisConfig::default().with_feasibility(Feasibility::AdmitZero),
        )
        .unwrap();
        assert_eq!(admitted.len(), 2);
    }

    #[test]
    fn names_and_order_are_deterministic() {
        let s = two_by_two([[2, 3], [3, 3]]);
        let out = synthesize_root(&s, &SynthesisConfig::default().with_layers(3)).unwrap();
        let listing: Vec<String> = out
            .iter()
            .map(|x| format!("{} {} {} {}", x.name, x.formula(), x.quality, x.layer))
            .collect();
        assert_eq!(
            listing,
            vec![
                "S1 A1*B2 (3;2,0) 1",
                "S2 A2*B1 (3;1,1) 2",
                "S3 A2*B2 (3;1,1) 2",
                "S4 A1*B1 (2;2,0) 2",
            ]
        );
        let again = synthesize_root(&s, &SynthesisConfig::default().with_layers(3)).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn strict_policy_fails_on_missing_entry() {
        let mut s = two_by_two([[1, 1], [1, 1]]);
        s.partial = true;
        s.compat = BTreeMap::new();
        let err = synthesize_root(&s, &SynthesisConfig::default()).unwrap_err();
        assert!(matches!(err, SynthesisError::Missing(_)));
        let ok = synthesize_root(
            &s,
            &SynthesisConfig::default().with_policy(MissingEntryPolicy::AssumeValue(2)),
        )
        .unwrap();
        assert_eq!(ok[0].quality, QualityVector::new(2, [2, 0]));
    }

    #[test]
    fn missing_entries_in_strict_structure_are_rejected_upfront() {
        let mut s = two_by_two([[1, 1], [1, 1]]);
        s.compat = BTreeMap::new();
        let err = synthesize_root(&s, &SynthesisConfig::default()).unwrap_err();
        assert!(matches!(err, SynthesisError::InvalidStructure { .. }));
    }

    #[test]
    fn generated_names() {
        assert_eq!(solution_name("X", 3), "X3");
        assert_eq!(solution_name("tau1", 2), "tau1_2");
    }

    #[test]
    fn one_level_hierarchy_matches_node_synthesis() {
        let s = two_by_two([[2, 3], [3, 1]]);
        let cfg = SynthesisConfig::default().with_layers(2);
        let h = synthesize_hierarchy(&s, &cfg).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h["S"], synthesize_node(&s, "S", &cfg).unwrap());
    }
}
