//! The twelve acceptance criteria, one line each. Runs without the test
//! harness so the lines always show.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use morphsynth::morphfile::{parse, serialize};
use morphsynth::oracle::{
    diff_solutions, diff_trajectories, oracle_synthesize, oracle_trajectories, DEFAULT_CAP,
};
use morphsynth::verify::{parse_claims, verify, Verdict};
use morphsynth::*;

type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn root_layer1(
    doc: &morphfile::MorphDocument,
    structure: &str,
    cfg: &SynthesisConfig,
) -> Vec<(String, QualityVector)> {
    layer(
        &synthesize_root(doc.structure(structure).unwrap(), cfg).unwrap(),
        1,
    )
}

fn same_set(got: &[(String, QualityVector)], want: &[(&str, &str)]) -> Check {
    let mut g: Vec<(String, QualityVector)> = got.to_vec();
    let mut w: Vec<(String, QualityVector)> = want.iter().map(|(f, v)| (f.to_string(), q(v))).collect();
    g.sort_by(|a, b| a.0.cmp(&b.0));
    w.sort_by(|a, b| a.0.cmp(&b.0));
    ensure(g == w, || format!("got {g:?}"))
}

fn tau0() -> Check {
    let got = root_layer1(&fixture("team"), "tau0", &SynthesisConfig::default());
    ensure(got.contains(&("L2*R1*E0*M0".into(), q("(3;4,0,0)"))), || {
        format!("got {got:?}")
    })
}

fn tau1() -> Check {
    let got = root_layer1(&fixture("team"), "tau1", &SynthesisConfig::default());
    same_set(
        &got,
        &[("L2*R1*E2*M0", "(2;4,0,0)"), ("L2*R1*E1*M0", "(3;3,1,0)")],
    )
}

fn tau3() -> Check {
    let got = root_layer1(&fixture("team"), "tau3", &SynthesisConfig::default());
    same_set(
        &got,
        &[("L1*R2*E3*M2", "(2;4,0,0)"), ("L2*R2*E3*M2", "(3;3,1,0)")],
    )
}

fn subsystem_y() -> Check {
    let doc = fixture("medical");
    let sols = synthesize_node(
        doc.structure("medical").unwrap(),
        "Y",
        &SynthesisConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let got = layer(&sols, 1);
    ensure(got.contains(&("P1*H8*G1".into(), q("(3;2,1,0)"))), || {
        format!("got {got:?}")
    })
}

fn medical_top() -> Check {
    let cfg = SynthesisConfig::default().with_rule(PriorityRule::Declared);
    let got: Vec<String> = root_layer1(&fixture("medical"), "medical", &cfg)
        .into_iter()
        .map(|(f, _)| f)
        .collect();
    ensure(got == ["X3*Y1*Z1", "X3*Y1*Z2"], || format!("got {got:?}"))
}

fn team_trajectory() -> Check {
    let doc = fixture("team");
    let net = doc.network("stages").unwrap();
    let cfg = SynthesisConfig::default();
    for mode in [AggregationMode::Adjacent, AggregationMode::AllPairs] {
        let p = TrajectoryProblem::network(net, &doc.structures, mode, &cfg).map_err(|e| e.to_string())?;
        ensure(p.assignments() == 4, || {
            format!("{} assignments", p.assignments())
        })?;
        let engine = solve(&p, &net.compat, &cfg).map_err(|e| e.to_string())?;
        let oracle = oracle_trajectories(&p, &net.compat, &cfg, DEFAULT_CAP).map_err(|e| e.to_string())?;
        if let Some(d) = diff_trajectories(&engine, &oracle) {
            return Err(format!("{mode:?}: {d}"));
        }
    }
    let claims = parse_claims(&std::fs::read_to_string(fixture_path("team", "claims")).unwrap())
        .map_err(|e| e.to_string())?;
    let report = verify(&doc, &claims);
    let c = report
        .claims
        .iter()
        .find(|c| c.label == "alpha_team")
        .ok_or("alpha_team claim missing")?;
    ensure(
        matches!(&c.verdict, Verdict::Mismatch { recomputed } if recomputed == "(2;4,0,0)"),
        || format!("verdict {:?}", c.verdict),
    )
}

fn decision_paths() -> Check {
    let doc = fixture("medical");
    let net = doc.network("plan").unwrap();
    let walk = |o: &[(&str, &str)]| -> Result<Vec<String>, String> {
        let outcomes: OutcomeAssignment = o.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        Ok(execute_decision_path(net, "mu0", &outcomes, 32)
            .map_err(|e| e.to_string())?
            .points)
    };
    let a = walk(&[("a0", "insufficient"), ("a4", "good")])?;
    ensure(a == ["mu0", "mu4", "mu5"], || format!("got {a:?}"))?;
    let b = walk(&[("a0", "good"), ("a1", "good")])?;
    ensure(b == ["mu0", "mu1", "mu2"], || format!("got {b:?}"))?;
    let chain = chain_for_path(
        net,
        &doc.structures,
        &a,
        AggregationMode::Adjacent,
        &SynthesisConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(!chain.is_empty(), || {
        "no trajectory along the realized path".into()
    })
}

fn oracle_suite() -> Check {
    for seed in 0..500u64 {
        let mut r = rng(seed);
        let (text, nested) = random_structure_text(&mut r);
        let doc = parse(&text).map_err(|e| e.to_string())?;
        let s = doc.structure("r").unwrap();
        let mut cfg = SynthesisConfig::default().with_layers(usize::MAX);
        if nested {
            cfg = cfg.with_policy(MissingEntryPolicy::AssumeValue(2));
        }
        let engine = synthesize_node(s, "S", &cfg).map_err(|e| e.to_string())?;
        let oracle = oracle_synthesize(s, "S", &cfg, DEFAULT_CAP).map_err(|e| e.to_string())?;
        if let Some(d) = diff_solutions(&engine, &oracle) {
            return Err(format!("seed {seed}: {d}"));
        }
    }
    Ok(())
}

fn order_laws() -> Check {
    use rand::Rng;
    let mut r = rng(7);
    let mut gen = || {
        let n: Vec<u32> = (0..r.gen_range(1..=4)).map(|_| r.gen_range(0..=4)).collect();
        QualityVector::new(r.gen_range(0..=3), n)
    };
    let mut bad = 0;
    for _ in 0..10_000 {
        let (a, b, c) = (gen(), gen(), gen());
        bad += usize::from(dominates(&a, &a) != Dominance::Equal);
        bad += usize::from(weakly_dominates(&a, &b) && weakly_dominates(&b, &a) && a != b);
        bad += usize::from(weakly_dominates(&a, &b) && weakly_dominates(&b, &c) && !weakly_dominates(&a, &c));
    }
    ensure(bad == 0, || format!("{bad} counterexamples"))
}

fn feasibility() -> Check {
    let cfg = SynthesisConfig::default().with_layers(usize::MAX);
    for name in FIXTURES {
        let doc = fixture(name);
        for s in doc.structures.values() {
            let rule = if s.declared.is_empty() {
                PriorityRule::ParetoLayer
            } else {
                PriorityRule::Declared
            };
            let Ok(all) = synthesize_hierarchy(s, &cfg.with_rule(rule)) else {
                continue;
            };
            for sol in all.values().flatten() {
                ensure(composite_is_feasible(s, sol, cfg.missing_entry_policy), || {
                    format!("{name}/{}: {}", s.name, sol.formula())
                })?;
            }
        }
        for net in doc
            .networks
            .values()
            .filter(|n| !n.has_analysis_points() && is_acyclic(n))
        {
            for mode in [AggregationMode::Adjacent, AggregationMode::AllPairs] {
                let Ok(ts) = network_trajectories(net, &doc.structures, mode, &cfg) else {
                    continue;
                };
                for t in &ts {
                    ensure(trajectory_is_feasible(net, t, mode), || {
                        format!("{name}/{}: {}", net.name, t.formula())
                    })?;
                }
            }
        }
    }
    for seed in 0..200u64 {
        let mut r = rng(60_000 + seed);
        let (text, nested) = random_structure_text(&mut r);
        let doc = parse(&text).map_err(|e| e.to_string())?;
        let s = doc.structure("r").unwrap();
        let c = if nested {
            cfg.with_policy(MissingEntryPolicy::AssumeValue(1))
        } else {
            cfg
        };
        for sol in synthesize_hierarchy(s, &c)
            .map_err(|e| e.to_string())?
            .values()
            .flatten()
        {
            ensure(composite_is_feasible(s, sol, c.missing_entry_policy), || {
                format!("seed {seed}: {}", sol.formula())
            })?;
        }
        let text = random_network_text(&mut r);
        let doc = parse(&text).map_err(|e| e.to_string())?;
        let net = doc.network("n").unwrap();
        for mode in [AggregationMode::Adjacent, AggregationMode::AllPairs] {
            for t in network_trajectories(net, &doc.structures, mode, &cfg).map_err(|e| e.to_string())? {
                ensure(trajectory_is_feasible(net, &t, mode), || {
                    format!("seed {seed}: {}", t.formula())
                })?;
            }
        }
    }
    Ok(())
}

fn round_trip() -> Check {
    for name in FIXTURES {
        let doc = fixture(name);
        let a = serialize(&doc);
        let back = parse(&a).map_err(|e| format!("{name}: {e}"))?;
        ensure(back == doc, || format!("{name}: structure changed"))?;
        ensure(serialize(&back) == a && serialize(&doc) == a, || {
            format!("{name}: bytes differ")
        })?;
    }
    Ok(())
}

fn graph_ops() -> Check {
    let schemes = fixture("schemes");
    let two_sources = schemes.network("two_sources").unwrap();
    for root in two_sources.roots() {
        let t = spanning_tree_reachable(two_sources, root).map_err(|e| e.to_string())?;
        ensure(is_tree(&t) && validate_network(&t).is_valid(), || {
            format!("two_sources from {root}: not a tree")
        })?;
    }
    let medical = fixture("medical");
    let fb = medical.network("feedback").unwrap();
    let t = spanning_tree(fb, "mu0").map_err(|e| e.to_string())?;
    ensure(is_tree(&t) && t.nodes.len() == fb.nodes.len(), || {
        "feedback spanning tree".into()
    })?;
    let (s, _) = simplify_network(fb);
    ensure(is_acyclic(&s), || "simplified network has a cycle".into())?;
    let (again, removed) = simplify_network(&s);
    ensure(again == s && removed.is_empty(), || {
        "simplify is not idempotent".into()
    })
}

fn main() {
    type Criterion = (&'static str, fn() -> Check, Duration);
    let criteria: [Criterion; 12] = [
        ("tau0 synthesis", tau0, Duration::from_secs(1)),
        ("tau1 synthesis", tau1, Duration::from_secs(1)),
        ("tau3 synthesis", tau3, Duration::from_secs(1)),
        ("medical subsystem Y", subsystem_y, Duration::from_secs(1)),
        ("medical top level", medical_top, Duration::from_secs(1)),
        (
            "team trajectory and claim",
            team_trajectory,
            Duration::from_secs(1),
        ),
        ("decision paths", decision_paths, Duration::from_secs(1)),
        (
            "oracle equivalence, 500 instances",
            oracle_suite,
            Duration::from_secs(30),
        ),
        (
            "dominance laws, 10000 triples",
            order_laws,
            Duration::from_secs(30),
        ),
        ("feasibility invariant", feasibility, Duration::from_secs(30)),
        ("parser round trip", round_trip, Duration::from_secs(5)),
        (
            "spanning tree and simplification",
            graph_ops,
            Duration::from_secs(5),
        ),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result =
            result.and_then(|()| ensure(took <= *budget, || format!("took {took:?}, budget {budget:?}")));
        match &result {
            Ok(()) => println!("criterion {:>2} PASS {name} ({:.0?})", i + 1, took),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {e}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
