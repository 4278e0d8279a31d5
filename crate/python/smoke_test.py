"""Smoke test for the Python bindings.

Build and install first:
    maturin build -m crates/python/Cargo.toml --release
    pip install target/wheels/morphsynth_py-*.whl
"""

from pathlib import Path

import morphsynth_py as ms

FIXTURES = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"


def main():
    team = ms.Document.load(FIXTURES / "team.morph")
    assert "tau1" in team.structures

    tau1 = team.synthesize("tau1")
    got = {(s.name, "*".join(s.selection), str(s.quality)) for s in tau1}
    assert got == {("S1", "L2*R1*E1*M0", "(3;3,1,0)"), ("S2", "L2*R1*E2*M0", "(2;4,0,0)")}, got

    trajs = team.trajectories("stages", mode="all-pairs")
    assert len(trajs) == 4 and all(str(t.quality) == "(2;4,0,0)" for t in trajs)

    medical = ms.Document.load(FIXTURES / "medical.morph")
    top = medical.synthesize("medical", rule="declared")
    assert ["*".join(s.selection) for s in top if s.layer == 1] == ["X3*Y1*Z1", "X3*Y1*Z2"]

    path = medical.decision_path("plan", {"a0": "insufficient", "a4": "good"})
    assert path.points == ["mu0", "mu4", "mu5"] and not path.truncated
    chain = medical.trajectories("plan", outcomes={"a0": "good", "a1": "good"})
    assert chain and chain[0].assignment[0][0] == "mu0"

    a, b = ms.QualityVector.parse("(3;4,0,0)"), ms.QualityVector(2, [4])
    assert ms.dominates(a, b) and not ms.dominates(b, a)
    assert ms.QualityVector(2, [4, 0]) == b
    assert ms.pareto_layers([b, a, ms.QualityVector(3, [3, 1])]) == [[1], [2, 0]]

    lines = team.verify((FIXTURES / "team.claims").read_text())
    assert any("MISMATCH(recomputed=(2;4,0,0))" in l for l in lines)

    assert ms.Document.parse(team.serialize()).serialize() == team.serialize()
    assert medical.export_graph("plan_tree", "gamma").startswith('digraph "plan_tree"')

    try:
        ms.Document.parse("structure s { node S = A * }")
    except ValueError as e:
        assert ":" in str(e)
    else:
        raise AssertionError("parse error expected")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
