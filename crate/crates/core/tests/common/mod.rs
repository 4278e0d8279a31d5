#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

use morphsynth::morphfile::{parse, MorphDocument};
use morphsynth::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const FIXTURES: [&str; 3] = ["team", "medical", "schemes"];

pub fn fixture_path(name: &str, ext: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.{ext}"))
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name, "morph")).expect("fixture")
}

pub fn fixture(name: &str) -> MorphDocument {
    parse(&fixture_text(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn q(s: &str) -> QualityVector {
    s.parse().expect("quality vector")
}

/// Layer `k` of a result as (formula, quality) pairs.
pub fn layer(sols: &[CompositeSolution], k: usize) -> Vec<(String, QualityVector)> {
    sols.iter()
        .filter(|s| s.layer == k)
        .map(|s| (s.formula(), s.quality.clone()))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Text of a random one- or two-level structure named `r`: up to five
/// components with up to four DAs each, priorities 1..=3, compat 0..=3.
/// Two-level instances leave the root table empty, so callers must use an
/// assumed value for it.
pub fn random_structure_text(rng: &mut ChaCha8Rng) -> (String, bool) {
    let k = rng.gen_range(1..=5usize);
    let names: Vec<char> = "ABCDE".chars().take(k).collect();
    let mut das: Vec<Vec<String>> = Vec::new();
    let mut t = String::from("structure r {\n  scale 3\n");
    for c in &names {
        let n = rng.gen_range(1..=4);
        let ids: Vec<String> = (1..=n).map(|i| format!("{c}{i}")).collect();
        let alts: Vec<String> = ids
            .iter()
            .map(|id| format!("alt {id} priority {}", rng.gen_range(1..=3)))
            .collect();
        let _ = writeln!(t, "  component {c} {{ {} }}", alts.join("  "));
        das.push(ids);
    }
    let nested = k >= 3 && rng.gen_bool(0.3);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    if nested {
        let _ = writeln!(t, "  node U = {} * {}", names[0], names[1]);
        let rest: Vec<String> = names[2..].iter().map(|c| c.to_string()).collect();
        let _ = writeln!(t, "  node S = U * {}", rest.join(" * "));
        groups.push(vec![0, 1]);
        groups.push((2..k).collect());
    } else {
        let all: Vec<String> = names.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(t, "  node S = {}", all.join(" * "));
        groups.push((0..k).collect());
    }
    for g in &groups {
        for (x, &i) in g.iter().enumerate() {
            for &j in &g[x + 1..] {
                for a in &das[i] {
                    for b in &das[j] {
                        let _ = writeln!(t, "  compat {a} {b} = {}", rng.gen_range(0..=3));
                    }
                }
            }
        }
    }
    t.push_str("}\n");
    (t, nested)
}

/// Text of a random network of 1..=4 points over a one-component structure,
/// each point declaring 1..=4 prioritized solutions, full inter-point compat.
/// Shapes: chain, out-tree or dag.
pub fn random_network_text(rng: &mut ChaCha8Rng) -> String {
    let p = rng.gen_range(1..=4usize);
    let mut t = String::from("structure one {\n  scale 3\n  component A { alt A1 priority 1  alt A2 priority 2  alt A3 priority 3  alt A4 priority 1 }\n  node S = A\n}\n");
    let shape = ["chain", "tree", "dag"][rng.gen_range(0..3)];
    let _ = writeln!(t, "network n {shape} {{\n  scale 3");
    let mut sols = Vec::new();
    for i in 0..p {
        let n = rng.gen_range(1..=4);
        let body: Vec<String> = (1..=n)
            .map(|s| format!("s{s} = A{s} priority {}", rng.gen_range(1..=3)))
            .collect();
        let _ = writeln!(t, "  point p{i} uses one solutions {{ {} }}", body.join("  "));
        sols.push(n);
    }
    for i in 1..p {
        let from = match shape {
            "chain" => i - 1,
            _ => rng.gen_range(0..i),
        };
        let _ = writeln!(t, "  edge p{from} -> p{i}");
        if shape == "dag" && i >= 2 && rng.gen_bool(0.5) {
            let other = rng.gen_range(0..i);
            if other != from {
                let _ = writeln!(t, "  edge p{other} -> p{i}");
            }
        }
    }
    for i in 0..p {
        for j in i + 1..p {
            for a in 1..=sols[i] {
                for b in 1..=sols[j] {
                    let _ = writeln!(t, "  compat p{i}.s{a} p{j}.s{b} = {}", rng.gen_range(0..=3));
                }
            }
        }
    }
    t.push_str("}\n");
    t
}

/// Every pair inside the composite's own selection is positive.
pub fn composite_is_feasible(
    s: &MorphStructure,
    sol: &CompositeSolution,
    policy: MissingEntryPolicy,
) -> bool {
    let table = s.table(&sol.node);
    let sel = &sol.selection;
    (0..sel.len()).all(|i| {
        (i + 1..sel.len()).all(|j| {
            table
                .lookup(&sel[i], &sel[j], policy)
                .map(|v| v > 0)
                .unwrap_or(false)
        })
    })
}

/// Every pair the trajectory is judged on is positive.
pub fn trajectory_is_feasible(net: &TopLevelNetwork, t: &Trajectory, mode: AggregationMode) -> bool {
    let at = |p: &str| ItemRef::new(p, t.solution(p).expect("covered point"));
    let pairs: Vec<(String, String)> = match mode {
        AggregationMode::Adjacent => t.edges.clone(),
        AggregationMode::AllPairs => {
            let pts: Vec<&str> = t.points().collect();
            (0..pts.len())
                .flat_map(|i| (i + 1..pts.len()).map(move |j| (i, j)))
                .map(|(i, j)| (pts[i].to_string(), pts[j].to_string()))
                .collect()
        }
    };
    pairs
        .iter()
        .all(|(a, b)| net.compat.value(&at(a), &at(b)).is_some_and(|v| v > 0))
}
