import json

import numpy as np
import pytest

from bubbletx.cli import main
from bubbletx.harness import (NORM_FLOOR, SUITES, SuiteConfig, build_report, estimate_bounds,
                              run_suite, suites_report, validate_report, emit_report)
from bubbletx.mesh import SimplicialComplex, save_mesh

from conftest import corpus_mesh, corpus_weights


def pinched():
    V = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
    return SimplicialComplex(V, [(0, 1, 2), (0, 3, 4)])


SMALL = SuiteConfig(rs=(1, 2), oracle_points=3, oracle_pairs=2)


@pytest.mark.parametrize("suite", SUITES)
@pytest.mark.parametrize("name", ["interval-5", "two-triangles"])
def test_suites_pass_on_small_meshes(suite, name):
    rep = run_suite(suite, corpus_mesh(name), SMALL, name, weights=corpus_weights(name))
    assert rep.passed, [r.to_dict() for r in rep.records if not r.passed]
    assert rep.records


def test_suite_report_schema_and_determinism():
    m = corpus_mesh("square-fan-4")
    wf = corpus_weights("square-fan-4")
    reps = [run_suite("r-ops", m, SMALL, "square-fan-4", weights=wf) for _ in range(2)]
    docs = [suites_report([r]) for r in reps]
    for d in docs:
        validate_report(d)
    strip = lambda d: [{k: v for k, v in r.items()} for s in d["suites"] for r in s["records"]]
    assert strip(docs[0]) == strip(docs[1])
    text = emit_report(docs[0])
    assert json.loads(text)["passed"] is True


def test_pinched_mesh_gives_failure_record():
    rep = run_suite("weights", pinched(), SMALL, "pinched")
    assert not rep.passed
    assert rep.records[0].identity == "assumptions"
    rep = run_suite("mesh", pinched(), SMALL, "pinched")
    assert not rep.passed


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("nope", corpus_mesh("interval-2"))


def test_nonfinite_residuals_serialize_as_null():
    from bubbletx.harness import CheckRecord
    rec = CheckRecord("x", "y", float("inf"), 0.0, False, {})
    doc = build_report("verify", False, [rec])
    validate_report(doc)
    assert json.loads(emit_report(doc))["records"][0]["residual"] is None


def test_bounds_monotone_in_samples():
    m = corpus_mesh("interval-2")
    small = estimate_bounds(m, levels=2, k=0, r=1, samples=2)
    big = estimate_bounds(m, levels=2, k=0, r=1, samples=4)
    for a, b in zip(small.levels, big.levels):
        for key in a:
            if key.startswith(("L2", "sq")):
                assert b[key] >= a[key] * (1 - 1e-9) or a[key] < NORM_FLOOR
    assert small.indicator("L2_m0") >= 1.0


# -- command line -------------------------------------------------------------------------------


def _run(argv, tmp_path):
    out = tmp_path / "report.json"
    code = main(argv + ["--out", str(out)])
    doc = json.loads(out.read_text()) if out.exists() else None
    if doc is not None:
        validate_report(doc)
    return code, doc


def test_cli_check_mesh(tmp_path):
    code, doc = _run(["check-mesh", "--mesh", "square-fan-4"], tmp_path)
    assert code == 0 and doc["kind"] == "check-mesh" and doc["passed"]
    path = tmp_path / "pinched.json"
    save_mesh(pinched(), path)
    code, doc = _run(["check-mesh", "--mesh", str(path)], tmp_path)
    assert code == 1 and not doc["passed"]


def test_cli_weights_then_decompose(tmp_path):
    code, doc = _run(["weights", "--mesh", "two-triangles"], tmp_path)
    assert code == 0
    wpath = tmp_path / "weights.json"
    wpath.write_text(json.dumps(doc))
    out = tmp_path / "dec.json"
    code = main(["decompose", "--mesh", "two-triangles", "--k", "1", "--r", "2",
                 "--weights", str(wpath), "--seed", "3", "--out", str(out)])
    doc = json.loads(out.read_text())
    validate_report(doc)
    assert code == 0 and len(doc["stages"]) == 3 and doc["bubbles"]


def test_cli_verify_and_bounds(tmp_path):
    code, doc = _run(["verify", "--mesh", "interval-5", "--suite", "weights,trace", "--r", "2"],
                     tmp_path)
    assert code == 0 and [s["suite"] for s in doc["suites"]] == ["weights", "trace"]
    code, doc = _run(["bounds", "--mesh", "interval-2", "--levels", "2", "--samples", "2",
                      "--k", "0", "--r", "1"], tmp_path)
    assert code == 0 and doc["studies"][0]["indicators"]


def test_cli_errors(tmp_path, capsys):
    assert main(["check-mesh", "--mesh", "no-such-mesh"]) == 2
    assert "error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["verify", "--bogus"])
