//! Brute-force reference implementation.
//!
//! Materializes every composition with an odometer, scores it straight from
//! the definition and peels layers by pairwise comparison. Nothing here calls
//! into the synthesis engine; only the data model is shared.

use std::cmp::Ordering;

use thiserror::Error;

use crate::model::{
    validate_structure_as, CompatTable, ItemRef, MissingEntry, MissingEntryPolicy, MorphStructure,
};
use crate::quality::QualityVector;
use crate::synthesis::{CompositeSolution, Feasibility, PriorityRule, SynthesisConfig};
use crate::trajectory::{Trajectory, TrajectoryProblem};

pub const DEFAULT_CAP: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("composition space of {size} exceeds the oracle cap {cap}")]
    CapExceeded { size: u128, cap: u128 },
    #[error(transparent)]
    Missing(#[from] MissingEntry),
    #[error("oracle: {0}")]
    Input(String),
}

struct Opt {
    item: ItemRef,
    priority: u32,
    leaves: Vec<ItemRef>,
}

fn counts(priorities: &[u32], tiers: usize) -> Vec<u32> {
    let top = priorities.iter().copied().max().unwrap_or(0) as usize;
    let mut n = vec![0u32; tiers.max(top)];
    for &p in priorities {
        n[p as usize - 1] += 1;
    }
    n
}

fn prefix(n: &[u32], len: usize) -> Vec<u32> {
    let mut acc = 0;
    (0..len)
        .map(|i| {
            acc += n.get(i).copied().unwrap_or(0);
            acc
        })
        .collect()
}

fn same(a: &QualityVector, b: &QualityVector) -> bool {
    let len = a.n.len().max(b.n.len());
    a.w == b.w && (0..len).all(|i| a.n.get(i).unwrap_or(&0) == b.n.get(i).unwrap_or(&0))
}

/// `a` strictly better than `b`.
fn beats(a: &QualityVector, b: &QualityVector) -> bool {
    let len = a.n.len().max(b.n.len());
    let (pa, pb) = (prefix(&a.n, len), prefix(&b.n, len));
    a.w >= b.w && pa.iter().zip(&pb).all(|(x, y)| x >= y) && !same(a, b)
}

/// Layer numbers (1-based) by repeated removal of the undominated set.
fn peel(qs: &[QualityVector]) -> Vec<usize> {
    let mut layer = vec![0usize; qs.len()];
    let mut k = 0;
    while layer.contains(&0) {
        k += 1;
        let front: Vec<usize> = (0..qs.len())
            .filter(|&i| layer[i] == 0)
            .filter(|&i| !(0..qs.len()).any(|j| layer[j] == 0 && beats(&qs[j], &qs[i])))
            .collect();
        for i in front {
            layer[i] = k;
        }
    }
    layer
}

fn presentation_order(a: &(Vec<usize>, QualityVector), b: &(Vec<usize>, QualityVector)) -> Ordering {
    let len = a.1.n.len().max(b.1.n.len());
    b.1.w
        .cmp(&a.1.w)
        .then_with(|| prefix(&b.1.n, len).cmp(&prefix(&a.1.n, len)))
        .then_with(|| a.0.cmp(&b.0))
}

/// Every index vector of the odometer, first slot most significant.
fn odometer(sizes: &[usize], cap: u128) -> Result<Vec<Vec<usize>>, OracleError> {
    let size: u128 = sizes.iter().map(|&s| s as u128).product();
    if size > cap {
        return Err(OracleError::CapExceeded { size, cap });
    }
    if sizes.is_empty() || size == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(size as usize);
    let mut cur = vec![0usize; sizes.len()];
    loop {
        out.push(cur.clone());
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            cur[k] += 1;
            if cur[k] < sizes[k] {
                break;
            }
            cur[k] = 0;
        }
    }
}

/// Scores all index vectors over `slots`, keeps feasible ones and layers
/// them. Returns (indices, quality, layer) in presentation order.
fn brute_force(
    slots: &[Vec<(ItemRef, u32)>],
    pairs: &[(usize, usize)],
    table: &CompatTable,
    cfg: &SynthesisConfig,
    tiers: usize,
    cap: u128,
) -> Result<Vec<(Vec<usize>, QualityVector, usize)>, OracleError> {
    let sizes: Vec<usize> = slots.iter().map(Vec::len).collect();
    let mut kept: Vec<(Vec<usize>, QualityVector)> = Vec::new();
    for idx in odometer(&sizes, cap)? {
        let mut w = table.scale_max;
        for &(i, j) in pairs {
            let v = match table.entry(&slots[i][idx[i]].0, &slots[j][idx[j]].0) {
                Some(e) => e.value,
                None => match cfg.missing_entry_policy {
                    MissingEntryPolicy::AssumeValue(v) => v,
                    MissingEntryPolicy::StrictError => {
                        return Err(MissingEntry {
                            a: slots[i][idx[i]].0.clone(),
                            b: slots[j][idx[j]].0.clone(),
                        }
                        .into())
                    }
                },
            };
            w = w.min(v);
        }
        if w == 0 && cfg.feasibility == Feasibility::RequirePositive {
            continue;
        }
        let prios: Vec<u32> = idx.iter().enumerate().map(|(s, &k)| slots[s][k].1).collect();
        kept.push((idx, QualityVector::new(w, counts(&prios, tiers))));
    }
    let qs: Vec<QualityVector> = kept.iter().map(|k| k.1.clone()).collect();
    let layers = peel(&qs);
    let mut out: Vec<(Vec<usize>, QualityVector, usize)> = Vec::new();
    let deepest = layers.iter().copied().max().unwrap_or(0);
    for l in 1..=cfg.layer_depth.min(deepest) {
        let mut this: Vec<(Vec<usize>, QualityVector)> = kept
            .iter()
            .zip(&layers)
            .filter(|(_, &x)| x == l)
            .map(|(k, _)| k.clone())
            .collect();
        this.sort_by(presentation_order);
        out.extend(this.into_iter().map(|(i, q)| (i, q, l)));
    }
    Ok(out)
}

fn generated_name(node: &str, k: usize) -> String {
    if node.ends_with(|c: char| c.is_ascii_digit()) {
        format!("{node}_{k}")
    } else {
        format!("{node}{k}")
    }
}

fn expand(s: &MorphStructure, item: &ItemRef) -> Result<Vec<ItemRef>, OracleError> {
    if s.component(&item.owner).is_some() {
        return Ok(vec![item.clone()]);
    }
    let d = s
        .declared_solutions(&item.owner)
        .iter()
        .find(|d| d.name == item.item)
        .ok_or_else(|| OracleError::Input(format!("unknown item {item}")))?;
    let mut out = Vec::new();
    for x in &d.selection {
        out.extend(expand(s, x)?);
    }
    Ok(out)
}

fn options(
    s: &MorphStructure,
    node: &str,
    cfg: &SynthesisConfig,
    cap: u128,
) -> Result<Vec<Vec<Opt>>, OracleError> {
    let n = s
        .node(node)
        .ok_or_else(|| OracleError::Input(format!("unknown node {node}")))?;
    let mut all = Vec::new();
    for child in &n.children {
        let mut v = Vec::new();
        if let Some(c) = s.component(child) {
            for a in &c.alternatives {
                let item = ItemRef::new(child.clone(), a.id.clone());
                v.push(Opt {
                    leaves: vec![item.clone()],
                    item,
                    priority: a.priority,
                });
            }
        } else if cfg.priority_rule == PriorityRule::Declared {
            let declared = s.declared_solutions(child);
            if declared.is_empty() {
                return Err(OracleError::Input(format!(
                    "node {child} has no declared solutions"
                )));
            }
            for d in declared {
                let priority = d
                    .priority
                    .ok_or_else(|| OracleError::Input(format!("{}.{} lacks a priority", child, d.name)))?;
                let mut leaves = Vec::new();
                for x in &d.selection {
                    leaves.extend(expand(s, x)?);
                }
                v.push(Opt {
                    item: ItemRef::new(child.clone(), d.name.clone()),
                    priority,
                    leaves,
                });
            }
        } else {
            for sol in oracle_synthesize(s, child, cfg, cap)? {
                v.push(Opt {
                    item: ItemRef::new(child.clone(), sol.name.clone()),
                    priority: sol.layer as u32,
                    leaves: sol.leaves,
                });
            }
        }
        all.push(v);
    }
    Ok(all)
}

/// Exhaustive counterpart of node synthesis.
pub fn oracle_synthesize(
    structure: &MorphStructure,
    node: &str,
    cfg: &SynthesisConfig,
    cap: u128,
) -> Result<Vec<CompositeSolution>, OracleError> {
    let partial = structure.partial || matches!(cfg.missing_entry_policy, MissingEntryPolicy::AssumeValue(_));
    if let Some(e) = validate_structure_as(structure, partial).errors().next() {
        return Err(OracleError::Input(e.message.clone()));
    }
    let opts = options(structure, node, cfg, cap)?;
    let slots: Vec<Vec<(ItemRef, u32)>> = opts
        .iter()
        .map(|o| o.iter().map(|x| (x.item.clone(), x.priority)).collect())
        .collect();
    let k = slots.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let table = structure.table(node);
    let tiers = structure.priority_depth() as usize;
    let found = brute_force(&slots, &pairs, &table, cfg, tiers, cap)?;
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(r, (idx, quality, layer))| CompositeSolution {
            name: generated_name(node, r + 1),
            node: node.to_string(),
            selection: idx
                .iter()
                .enumerate()
                .map(|(c, &o)| opts[c][o].item.clone())
                .collect(),
            leaves: idx
                .iter()
                .enumerate()
                .flat_map(|(c, &o)| opts[c][o].leaves.iter().cloned())
                .collect(),
            quality,
            layer,
        })
        .collect())
}

/// Exhaustive counterpart of trajectory synthesis on a prepared problem.
pub fn oracle_trajectories(
    problem: &TrajectoryProblem,
    compat: &CompatTable,
    cfg: &SynthesisConfig,
    cap: u128,
) -> Result<Vec<Trajectory>, OracleError> {
    let slots: Vec<Vec<(ItemRef, u32)>> = problem
        .points
        .iter()
        .zip(&problem.candidates)
        .map(|(p, c)| {
            c.iter()
                .map(|s| (ItemRef::new(p.clone(), s.name.clone()), s.priority))
                .collect()
        })
        .collect();
    let found = brute_force(&slots, &problem.pairs, compat, cfg, problem.tiers, cap)?;
    Ok(found
        .into_iter()
        .enumerate()
        .map(|(r, (idx, q, layer))| problem.trajectory(&idx, q, layer, format!("alpha_{}", r + 1)))
        .collect())
}

/// First difference between two solution lists, compared by name,
/// selection, quality (padding-insensitive) and layer.
pub fn diff_solutions(engine: &[CompositeSolution], oracle: &[CompositeSolution]) -> Option<String> {
    if engine.len() != oracle.len() {
        return Some(format!(
            "engine has {} solutions, oracle {}",
            engine.len(),
            oracle.len()
        ));
    }
    engine.iter().zip(oracle).find_map(|(e, o)| {
        (e.name != o.name || e.selection != o.selection || e.quality != o.quality || e.layer != o.layer).then(
            || {
                format!(
                    "engine {} = {} N={} layer={} vs oracle {} = {} N={} layer={}",
                    e.name,
                    e.formula(),
                    e.quality,
                    e.layer,
                    o.name,
                    o.formula(),
                    o.quality,
                    o.layer
                )
            },
        )
    })
}

/// First difference between two trajectory lists.
pub fn diff_trajectories(engine: &[Trajectory], oracle: &[Trajectory]) -> Option<String> {
    if engine.len() != oracle.len() {
        return Some(format!(
            "engine has {} trajectories, oracle {}",
            engine.len(),
            oracle.len()
        ));
    }
    engine.iter().zip(oracle).find_map(|(e, o)| {
        (e.assignment != o.assignment || e.quality != o.quality || e.layer != o.layer)
            .then(|| format!("engine {e} vs oracle {o}"))
    })
}
