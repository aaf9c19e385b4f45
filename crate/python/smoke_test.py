"""Smoke test for the archweave Python extension.

Build and install first:  pip install crates/py   (or: maturin develop -m crates/py/Cargo.toml)
Run with:                 python -m pytest python/smoke_test.py
"""

import pathlib
import tempfile

import pytest

import archweave

CORPUS = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "corpus"


def read(rel):
    return (CORPUS / rel).read_text()


def test_parse_and_render_round_trip():
    m = archweave.parse(read("models/mdeGrid.geim"))
    assert m.stage == "GEIM"
    assert m.elements == ["Portal", "genericGridInterface", "DataCacheHandler"]
    again = archweave.parse(m.render())
    assert again.structurally_eq(m)
    assert m.validate() == []


def test_parse_error_is_value_error():
    with pytest.raises(ValueError, match="<input>:1:"):
        archweave.parse("archetype broken is architecture {")


def test_refine_matches_golden():
    geim = archweave.parse(read("models/mdeGrid.geim"))
    prime = geim.refine()
    assert prime.stage == "GEIM_PRIME"
    assert prime.structurally_eq(archweave.parse(read("models/mdeGrid.geim-prime")))
    ok, report = geim.preserved_by(prime)
    assert ok and report.endswith("RESULT PASS\n")
    d = geim.diff(prime)
    assert "+ element FTConnector connector" in d


def test_failover_trace():
    prime = archweave.parse(read("models/mdeGrid.geim-prime"))
    events = prime.simulate(read("scenarios/failover.scn"))
    answered = [e for e in events if e[1] == "env" and e[2] == "receive"]
    assert len(answered) == 3
    assert any(e[2] == "route_update" for e in events)
    assert events == prime.simulate(read("scenarios/failover.scn"))


def test_adapt_codegen_deploy():
    gesm = archweave.parse(read("models/mdeGrid.geim-prime")).adapt("PLATFORM_B")
    assert gesm.stage == "GESM"
    files = gesm.generate_code(str(CORPUS / "gemm"))
    assert "MANIFEST" in files
    assert all(b"{{" not in body for body in files.values())
    placement = dict(gesm.deploy(read("resources/grid.germ")))
    assert placement["DataCacheHandler"] != placement["DataCacheHandlerClone0"]


def test_pipeline():
    with tempfile.TemporaryDirectory() as out:
        r = archweave.run_pipeline(
            str(CORPUS / "models/mdeGrid.geim"),
            "PLATFORM_A",
            str(CORPUS / "gemm"),
            str(CORPUS / "resources/grid.germ"),
            out,
            scenario=str(CORPUS / "scenarios/failover.scn"),
        )
        assert r["exit_code"] == 0, r["diagnostics"]
        assert r["artifacts"][0] == "01.geim" and r["artifacts"][-1] == "08.gedm.txt"
        r = archweave.run_pipeline(
            str(CORPUS / "negative/unknown_ref.geim"), "PLATFORM_A", "x", "y", out
        )
        assert r["exit_code"] == 3


def test_patterns():
    names = {p[0] for p in archweave.patterns()}
    assert {"FT", "LB", "PLATFORM_A", "PLATFORM_B"} <= names
