//! Quality vectors `N(S) = (w; n)`, their dominance order and Pareto layering.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::model::{CompatTable, ItemRef, MissingEntry, MissingEntryPolicy};

/// `w` is the minimum pairwise compatibility of a composition, `n[r]` the
/// number of selected elements with priority `r + 1`.
///
/// Equality ignores trailing zeros of `n`, so `(3;2,0)` equals `(3;2,0,0)`.
#[derive(Clone, Debug, Eq)]
pub struct QualityVector {
    pub w: u32,
    pub n: Vec<u32>,
}

impl QualityVector {
    pub fn new(w: u32, n: impl Into<Vec<u32>>) -> Self {
        Self { w, n: n.into() }
    }

    /// `(scale; m, 0, ..., 0)`.
    pub fn ideal(scale: u32, m: u32, tiers: usize) -> Self {
        let mut n = vec![0; tiers.max(1)];
        n[0] = m;
        Self { w: scale, n }
    }

    /// Number of composed elements (`sum of n`).
    pub fn size(&self) -> u32 {
        self.n.iter().sum()
    }

    fn trimmed(&self) -> &[u32] {
        let end = self.n.iter().rposition(|&x| x != 0).map_or(0, |i| i + 1);
        &self.n[..end]
    }

    /// Cumulative counts over `len` tiers (zero padded).
    pub fn prefix_sums(&self, len: usize) -> Vec<u32> {
        let mut acc = 0;
        (0..len.max(self.n.len()))
            .map(|i| {
                acc += self.n.get(i).copied().unwrap_or(0);
                acc
            })
            .collect()
    }

    /// Same vector with `n` padded (or trimmed of zeros) to `len` tiers.
    pub fn with_tiers(&self, len: usize) -> Self {
        let mut n = self.trimmed().to_vec();
        if n.len() < len {
            n.resize(len, 0);
        }
        Self { w: self.w, n }
    }

    /// Descending sort key: larger `w` first, then larger prefix sums.
    fn rank_key(&self, len: usize) -> (u32, Vec<u32>) {
        (self.w, self.prefix_sums(len))
    }
}

impl PartialEq for QualityVector {
    fn eq(&self, other: &Self) -> bool {
        self.w == other.w && self.trimmed() == other.trimmed()
    }
}

impl std::hash::Hash for QualityVector {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.w.hash(state);
        self.trimmed().hash(state);
    }
}

impl fmt::Display for QualityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({};", self.w)?;
        for (i, x) in self.n.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{x}")?;
        }
        f.write_str(")")
    }
}

impl Serialize for QualityVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed quality vector `{0}` (expected e.g. `(3;2,1,0)`)")]
pub struct ParseQualityError(pub String);

impl FromStr for QualityVector {
    type Err = ParseQualityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseQualityError(s.to_string());
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|x| x.strip_suffix(')'))
            .ok_or_else(err)?;
        let (w, n) = inner.split_once(';').ok_or_else(err)?;
        let w = w.trim().parse().map_err(|_| err())?;
        let n = n
            .split(',')
            .map(|x| x.trim().parse::<u32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err())?;
        if n.is_empty() {
            return Err(err());
        }
        Ok(QualityVector { w, n })
    }
}

/// Outcome of comparing `a` against `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Dominance {
    StrictlyDominates,
    Equal,
    /// `a` is dominated by `b` or the two are incomparable.
    NotDominating,
}

/// `a` weakly dominates `b`: `a.w >= b.w` and every prefix sum of `a.n` is at
/// least the corresponding prefix sum of `b.n`.
pub fn weakly_dominates(a: &QualityVector, b: &QualityVector) -> bool {
    if a.w < b.w {
        return false;
    }
    let len = a.n.len().max(b.n.len());
    a.prefix_sums(len)
        .iter()
        .zip(b.prefix_sums(len))
        .all(|(x, y)| *x >= y)
}

pub fn dominates(a: &QualityVector, b: &QualityVector) -> Dominance {
    if a == b {
        Dominance::Equal
    } else if weakly_dominates(a, b) {
        Dominance::StrictlyDominates
    } else {
        Dominance::NotDominating
    }
}

/// Deterministic order inside a layer: `w` descending, prefix sums
/// descending, then key ascending.
pub fn layer_order<K: Ord>(a: &(K, QualityVector), b: &(K, QualityVector)) -> Ordering {
    let len = a.1.n.len().max(b.1.n.len());
    b.1.rank_key(len)
        .cmp(&a.1.rank_key(len))
        .then_with(|| a.0.cmp(&b.0))
}

/// Splits solutions into Pareto layers. Layer 1 is the non-dominated set;
/// layer `i + 1` is the non-dominated set after removing layers `1..=i`.
/// At most `depth` layers are returned.
///
/// A solution's layer equals the length of the longest strict-dominance
/// chain ending at it, so the layers are computed in one pass over the
/// distinct quality vectors sorted by rank key (every dominator sorts first).
pub fn pareto_layers<K: Ord + Clone>(
    solutions: Vec<(K, QualityVector)>,
    depth: usize,
) -> Vec<Vec<(K, QualityVector)>> {
    if depth == 0 || solutions.is_empty() {
        return Vec::new();
    }
    let tiers = solutions.iter().map(|(_, q)| q.n.len()).max().unwrap_or(1);
    type Key = (std::cmp::Reverse<(u32, Vec<u32>)>, Vec<u32>);
    let mut distinct: BTreeMap<Key, QualityVector> = BTreeMap::new();
    for (_, q) in &solutions {
        let padded = q.with_tiers(tiers);
        distinct
            .entry((std::cmp::Reverse(padded.rank_key(tiers)), padded.n.clone()))
            .or_insert(padded);
    }
    let order: Vec<QualityVector> = distinct.into_values().collect();
    let mut rank: Vec<usize> = vec![1; order.len()];
    for i in 0..order.len() {
        for j in 0..i {
            if rank[j] >= rank[i] && weakly_dominates(&order[j], &order[i]) {
                rank[i] = rank[j] + 1;
            }
        }
    }
    let deepest = rank.iter().copied().max().unwrap_or(0);
    let rank_of: std::collections::HashMap<QualityVector, usize> = order.into_iter().zip(rank).collect();
    let mut layers: Vec<Vec<(K, QualityVector)>> = vec![Vec::new(); depth.min(deepest)];
    for (k, q) in solutions {
        let r = rank_of[&q];
        if r <= depth {
            layers[r - 1].push((k, q));
        }
    }
    for layer in &mut layers {
        layer.sort_by(layer_order);
    }
    while layers.last().is_some_and(Vec::is_empty) {
        layers.pop();
    }
    layers
}

/// One selected element: where it comes from and its priority.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pick {
    pub item: ItemRef,
    pub priority: u32,
}

impl Pick {
    pub fn new(owner: impl Into<String>, item: impl Into<String>, priority: u32) -> Self {
        Self {
            item: ItemRef::new(owner, item),
            priority,
        }
    }
}

/// Quality of a one-per-child selection under a compatibility table.
///
/// `w` is the minimum over all unordered pairs of picks; for a single pick it
/// is the table's scale maximum. `n` has `tiers` entries (more if a priority
/// exceeds it).
pub fn quality_of(
    selection: &[Pick],
    compat: &CompatTable,
    policy: MissingEntryPolicy,
    tiers: usize,
) -> Result<QualityVector, MissingEntry> {
    let mut w = compat.scale_max;
    for (i, a) in selection.iter().enumerate() {
        for b in &selection[i + 1..] {
            w = w.min(compat.lookup(&a.item, &b.item, policy)?);
        }
    }
    Ok(QualityVector {
        w,
        n: tier_counts(selection.iter().map(|p| p.priority), tiers),
    })
}

/// Counts priorities into tiers `1..=tiers` (extended if needed).
pub fn tier_counts(priorities: impl IntoIterator<Item = u32>, tiers: usize) -> Vec<u32> {
    let mut n = vec![0u32; tiers.max(1)];
    for p in priorities {
        let idx = p.max(1) as usize - 1;
        if idx >= n.len() {
            n.resize(idx + 1, 0);
        }
        n[idx] += 1;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CompatValue;
    use proptest::prelude::*;

    fn q(s: &str) -> QualityVector {
        s.parse().unwrap()
    }

    #[test]
    fn ideal_point_strictly_dominates_interior_point() {
        assert_eq!(
            dominates(&q("(3;4,0,0)"), &q("(3;3,1,0)")),
            Dominance::StrictlyDominates
        );
        assert_eq!(
            dominates(&q("(3;3,1,0)"), &q("(3;4,0,0)")),
            Dominance::NotDominating
        );
    }

    #[test]
    fn smaller_w_with_better_n_is_incomparable() {
        assert_eq!(
            dominates(&q("(2;4,0,0)"), &q("(3;3,1,0)")),
            Dominance::NotDominating
        );
        assert_eq!(
            dominates(&q("(3;3,1,0)"), &q("(2;4,0,0)")),
            Dominance::NotDominating
        );
    }

    #[test]
    fn equal_vectors() {
        assert_eq!(dominates(&q("(3;4,0,0)"), &q("(3;4,0,0)")), Dominance::Equal);
        assert_eq!(dominates(&q("(3;2,0)"), &q("(3;2,0,0,0)")), Dominance::Equal);
    }

    #[test]
    fn parse_and_display_round_trip() {
        let v = q("( 2 ; 4, 0,0 )");
        assert_eq!(v.to_string(), "(2;4,0,0)");
        assert!("(2,4)".parse::<QualityVector>().is_err());
        assert!("(2;)".parse::<QualityVector>().is_err());
    }

    #[test]
    fn singleton_is_its_own_layer() {
        let layers = pareto_layers(vec![("a", q("(1;0,1)"))], 3);
        assert_eq!(layers, vec![vec![("a", q("(1;0,1)"))]]);
    }

    #[test]
    fn layers_are_peeled_in_order() {
        let sols = vec![
            ("c", q("(1;1,1)")),
            ("a", q("(3;2,0)")),
            ("b", q("(2;2,0)")),
            ("d", q("(3;1,1)")),
            ("e", q("(3;2,0)")),
        ];
        let layers = pareto_layers(sols, 5);
        let ids: Vec<Vec<&str>> = layers
            .iter()
            .map(|l| l.iter().map(|(k, _)| *k).collect())
            .collect();
        assert_eq!(ids, vec![vec!["a", "e"], vec!["d", "b"], vec!["c"]]);
        let two = pareto_layers(
            vec![("a", q("(3;2,0)")), ("b", q("(2;2,0)")), ("c", q("(1;2,0)"))],
            2,
        );
        assert_eq!(two.len(), 2);
    }

    #[test]
    fn single_pick_takes_scale_max() {
        let t = CompatTable::new(3);
        let v = quality_of(&[Pick::new("J", "J1", 1)], &t, MissingEntryPolicy::StrictError, 1).unwrap();
        assert_eq!(v, q("(3;1)"));
    }

    #[test]
    fn quality_of_reports_missing_pairs() {
        let mut t = CompatTable::new(3);
        t.insert(
            ItemRef::new("A", "A1"),
            ItemRef::new("B", "B1"),
            CompatValue::plain(2),
        )
        .unwrap();
        let sel = [
            Pick::new("A", "A1", 1),
            Pick::new("B", "B1", 2),
            Pick::new("C", "C1", 1),
        ];
        assert!(quality_of(&sel, &t, MissingEntryPolicy::StrictError, 3).is_err());
        let v = quality_of(&sel, &t, MissingEntryPolicy::AssumeValue(3), 3).unwrap();
        assert_eq!(v, q("(2;2,1,0)"));
    }

    fn vector(max_w: u32, tiers: usize) -> impl Strategy<Value = QualityVector> {
        (0..=max_w, prop::collection::vec(0u32..4, 1..=tiers)).prop_map(|(w, n)| QualityVector { w, n })
    }

    proptest! {
        #[test]
        fn dominance_is_a_partial_order(a in vector(3, 3), b in vector(3, 3), c in vector(3, 3)) {
            prop_assert_eq!(dominates(&a, &a), Dominance::Equal);
            if weakly_dominates(&a, &b) && weakly_dominates(&b, &a) {
                prop_assert_eq!(&a, &b);
            }
            if weakly_dominates(&a, &b) && weakly_dominates(&b, &c) {
                prop_assert!(weakly_dominates(&a, &c));
            }
        }

        #[test]
        fn padding_never_changes_a_verdict(a in vector(3, 3), b in vector(3, 3), extra in 0usize..3) {
            let pa = a.with_tiers(a.n.len() + extra);
            prop_assert_eq!(dominates(&a, &b), dominates(&pa, &b));
            prop_assert_eq!(dominates(&b, &a), dominates(&b, &pa));
        }

        #[test]
        fn first_layer_is_undominated(vs in prop::collection::vec(vector(3, 3), 1..40)) {
            let sols: Vec<(usize, QualityVector)> = vs.iter().cloned().enumerate().collect();
            let layers = pareto_layers(sols, 1);
            for (_, x) in &layers[0] {
                for y in &vs {
                    prop_assert_ne!(dominates(y, x), Dominance::StrictlyDominates);
                }
            }
        }
    }
}
