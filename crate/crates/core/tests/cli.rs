mod common;

use std::io::Write as _;
use std::process::Command;

use common::fixture_path;

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_morphsynth"))
        .args(args)
        .env("MORPHSYNTH_THREADS", "2")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn fx(name: &str) -> String {
    fixture_path(name, "morph").display().to_string()
}

fn temp_file(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("morphsynth-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::File::create(&p)
        .unwrap()
        .write_all(text.as_bytes())
        .unwrap();
    p.display().to_string()
}

#[test]
fn validate_fixtures() {
    for f in ["team", "medical", "schemes"] {
        let (code, out, _) = run(&["validate", &fx(f), "--strict"]);
        assert_eq!(code, 0, "{f}: {out}");
        assert!(out.starts_with("ok:"));
    }
}

#[test]
fn validate_reports_positions() {
    let p = temp_file("bad.morph", "structure s {\n  scale 3\n  component A { alt A1 priority 1 }\n  component B { alt B1 priority 1 }\n  node S = A * B\n  compat A1 B1 = 5\n}\n");
    let (code, _, err) = run(&["validate", &p]);
    assert_eq!(code, 1);
    assert!(err.contains(":6:"), "{err}");
    assert!(err.contains("exceeds scale"), "{err}");
}

#[test]
fn strict_validation_fails_on_missing_compat_in_partial_structure() {
    let text = "structure s {\n  scale 3\n  partial\n  component A { alt A1 priority 1  alt A2 priority 1 }\n  component B { alt B1 priority 1 }\n  node S = A * B\n  compat A1 B1 = 3\n}\n";
    let p = temp_file("partial.morph", text);
    assert_eq!(run(&["validate", &p]).0, 0);
    assert_eq!(run(&["validate", &p, "--strict"]).0, 1);
    let (code, out, _) = run(&["synth", &p, "--structure", "s", "--assume", "2"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 1, "{out}");
    assert!(out.starts_with("S1 = A1*B1 N=(3;2) layer=1"), "{out}");
}

#[test]
fn synth_prints_one_line_per_solution() {
    let (code, out, _) = run(&["synth", &fx("team"), "--structure", "tau1"]);
    assert_eq!(code, 0);
    assert_eq!(
        out,
        "S1 = L2*R1*E1*M0 N=(3;3,1,0) layer=1\nS2 = L2*R1*E2*M0 N=(2;4,0,0) layer=1\n"
    );
}

#[test]
fn synth_node_and_declared_rule() {
    let (code, out, _) = run(&["synth", &fx("medical"), "--structure", "medical", "--node", "Y"]);
    assert_eq!(code, 0);
    assert!(out.contains("P1*H8*G1 N=(3;2,1,0,0) layer=1"), "{out}");
    let (code, out, _) = run(&[
        "synth",
        &fx("medical"),
        "--structure",
        "medical",
        "--priority-rule",
        "declared",
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("X3*Y1*Z1") && out.contains("X3*Y1*Z2"), "{out}");
}

#[test]
fn synth_all_nodes_prints_headers() {
    let (code, out, _) = run(&[
        "synth",
        &fx("medical"),
        "--structure",
        "medical",
        "--priority-rule",
        "declared",
        "--all-nodes",
    ]);
    assert_eq!(code, 0);
    for h in ["[X]", "[Y]", "[Z]", "[S]"] {
        assert!(out.contains(h), "{out}");
    }
}

#[test]
fn empty_result_exits_with_two() {
    let text = "structure s {\n  component A { alt A1 priority 1 }\n  component B { alt B1 priority 1 }\n  node S = A * B\n  compat A1 B1 = 0\n}\n";
    let p = temp_file("zero.morph", text);
    let (code, out, _) = run(&["synth", &p, "--structure", "s"]);
    assert_eq!((code, out.as_str()), (2, ""));
    assert_eq!(run(&["synth", &p, "--structure", "s", "--admit-zero"]).0, 0);
}

#[test]
fn unknown_names_exit_with_one() {
    assert_eq!(run(&["synth", &fx("team"), "--structure", "nope"]).0, 1);
    assert_eq!(run(&["trajectory", &fx("team"), "--network", "nope"]).0, 1);
    assert_eq!(
        run(&[
            "export",
            &fx("team"),
            "--network",
            "stages",
            "--trajectory",
            "nope"
        ])
        .0,
        1
    );
    assert_eq!(run(&["synth", "/nonexistent.morph", "--structure", "x"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
}

#[test]
fn team_trajectories() {
    for mode in ["adjacent", "all-pairs"] {
        let (code, out, _) = run(&["trajectory", &fx("team"), "--network", "stages", "--mode", mode]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 4, "{out}");
        assert!(out.lines().all(|l| l.ends_with("N=(2;4,0,0) layer=1")), "{out}");
        assert!(out.starts_with("alpha_1 = <S_tau0_1 * "), "{out}");
    }
}

#[test]
fn decision_path_via_outcomes() {
    let (code, out, _) = run(&[
        "trajectory",
        &fx("medical"),
        "--network",
        "plan",
        "--outcomes",
        "a0=insufficient,a4=good",
    ]);
    assert_eq!(code, 0);
    assert!(out.starts_with("# path: mu0 -> mu4 -> mu5\n"), "{out}");
    let (code, _, err) = run(&["trajectory", &fx("medical"), "--network", "plan"]);
    assert_eq!(code, 1);
    assert!(err.contains("analysis"), "{err}");
}

#[test]
fn cyclic_network_needs_a_transformation() {
    let (code, _, err) = run(&["trajectory", &fx("medical"), "--network", "feedback"]);
    assert_eq!(code, 1);
    assert!(err.contains("cyclic"), "{err}");
    let (code, out, _) = run(&[
        "trajectory",
        &fx("medical"),
        "--network",
        "feedback",
        "--simplify",
        "--outcomes",
        "a0=insufficient,a4=medium,a1=good",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("# simplified: removed a4->mu0"), "{out}");
    assert!(out.contains("# path: mu0 -> mu4 -> mu1 -> mu2"), "{out}");
    let (code, out, _) = run(&[
        "trajectory",
        &fx("medical"),
        "--network",
        "feedback",
        "--spanning-tree",
        "mu0",
        "--outcomes",
        "a0=good,a1=good",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("# spanning tree rooted at mu0"), "{out}");
}

#[test]
fn spanning_tree_of_two_source_dag() {
    let (code, _, err) = run(&[
        "trajectory",
        &fx("schemes"),
        "--network",
        "two_sources",
        "--spanning-tree",
        "mu4",
    ]);
    assert_eq!(code, 1, "{err}");
    let (code, out, _) = run(&[
        "trajectory",
        &fx("schemes"),
        "--network",
        "two_sources",
        "--spanning-tree",
        "mu4",
        "--reachable-only",
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("dropped unreachable: mu0"), "{out}");
}

#[test]
fn verify_uses_sibling_claims() {
    let (code, out, _) = run(&["verify", &fx("team")]);
    assert_eq!(code, 0);
    assert!(out.contains("MISMATCH(recomputed=(2;4,0,0))"), "{out}");
    assert!(
        out.lines().last().unwrap().contains("engine/oracle agree"),
        "{out}"
    );
}

#[test]
fn json_output_parses() {
    let (code, out, _) = run(&["--json", "synth", &fx("team"), "--structure", "tau0"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["nodes"][0]["solutions"][0]["selection"], "L2*R1*E0*M0");
    let (_, out, _) = run(&["trajectory", &fx("team"), "--network", "stages", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["trajectories"].as_array().unwrap().len(), 4);
    let (_, out, _) = run(&["verify", &fx("medical"), "--json"]);
    assert!(serde_json::from_str::<serde_json::Value>(&out).is_ok());
}

#[test]
fn export_dot() {
    let (code, out, _) = run(&[
        "export",
        &fx("medical"),
        "--network",
        "plan_tree",
        "--trajectory",
        "gamma",
    ]);
    assert_eq!(code, 0);
    assert!(out.starts_with("digraph \"plan_tree\" {"));
    assert!(out.contains("label=\"mu4\\nS_mu4_3\""), "{out}");
    let (_, out, _) = run(&["export", &fx("medical"), "--network", "plan"]);
    assert!(out.contains("shape=diamond"));
    assert!(out.contains("[label=\"good\"]"));
}

#[test]
fn in_process_driver_matches_binary() {
    let f = fx("team");
    let o = morphsynth::cli::run(["morphsynth", "synth", f.as_str(), "--structure", "tau3"]);
    let (code, out, _) = run(&["synth", &f, "--structure", "tau3"]);
    assert_eq!((o.code, o.stdout), (code, out));
}
