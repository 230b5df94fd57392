import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaynet import DelayMeasure, KirchhoffViolation, ParseError, ValidationError, data_path
from delaynet import acceptance
from delaynet.cli import main
from delaynet.fixtures import distributed_path, random_graph
from delaynet.io import (
    control_from_scenario,
    dumps_graph_spec,
    loads_graph_spec,
    parse_graph_spec,
    read_report,
    write_graph_spec,
)

BRANCH_NO_WEIGHTS = """
[[edges]]
id = "a"
tail = "v"
head = "w"
[[edges]]
id = "b"
tail = "w"
head = "v"
[[edges]]
id = "c"
tail = "w"
head = "v"
"""


def test_bundled_loop_file():
    gf = parse_graph_spec(data_path("loop.graph"))
    assert gf.graph.m == 1 and gf.graph.edges[0].tail == gf.graph.edges[0].head == "v"
    assert gf.scenario["T"] == 3.0
    assert all(mu.is_zero for mu in gf.delays)


def test_missing_weights_reports_kirchhoff():
    with pytest.raises(KirchhoffViolation) as info:
        loads_graph_spec(BRANCH_NO_WEIGHTS)
    assert info.value.rule == "Kirchhoff"


def test_atom_at_zero_reports_A4():
    text = BRANCH_NO_WEIGHTS + '[weights]\nw = {b = 0.5, c = 0.5}\n[delays.a]\nr = 1.0\natoms = [[0.0, 1.0]]\n'
    with pytest.raises(ValidationError) as info:
        loads_graph_spec(text)
    assert info.value.rule == "(A4)"


def test_parse_error_location():
    with pytest.raises(ParseError) as info:
        loads_graph_spec('[[edges]]\nid = "a"\ntail = \n', path="bad.graph")
    assert info.value.line == 3
    assert "bad.graph:3" in str(info.value)
    with pytest.raises(ParseError):
        loads_graph_spec('[control]\nK = [[1.0]]\n')
    with pytest.raises(ParseError) as info:
        loads_graph_spec(BRANCH_NO_WEIGHTS + '[weights]\nw = {b = 0.5, c = 0.5}\n[delays.zz]\nr = 1.0\n')
    assert info.value.line is not None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip(seed):
    g = random_graph(np.random.default_rng(seed), n_inputs=2)
    back = loads_graph_spec(dumps_graph_spec(g))
    assert back.graph == g
    assert dumps_graph_spec(back.graph) == dumps_graph_spec(g)


def test_round_trip_with_delays(tmp_path):
    g, d = distributed_path()
    path = tmp_path / "p.graph"
    write_graph_spec(path, g, d, {"T": 4.0})
    back = parse_graph_spec(path)
    assert back.graph == g and back.delays == d and back.scenario == {"T": 4.0}


def test_control_kinds():
    assert control_from_scenario({"control": {"kind": "pulse", "u0": [2.0], "start": 1, "stop": 2}}, 1)(1.5)[0] == 2.0
    assert control_from_scenario({"control": {"kind": "smooth", "u0": [1.0]}}, 1)(0.0)[0] == 0.0
    with pytest.raises(ValidationError):
        control_from_scenario({"control": {"kind": "chirp"}}, 1)
    with pytest.raises(ValidationError):
        control_from_scenario({"control": {"u0": [1.0, 2.0]}}, 1)


# ------------------------------------------------------------------ CLI


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_loop(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", data_path("loop.graph"), "--out", tmp_path)
    assert code == 0 and "verdict: controllable" in out
    rep = read_report(tmp_path / "loop.analyze.report")
    assert rep["result"]["verdict"] == "controllable"
    assert set(rep["provenance"]) >= {"config_hash", "delaynet", "numpy", "scipy", "seed"}
    assert (tmp_path / "loop.singular_values.csv").exists()


def test_analyze_parallel_negative(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", data_path("parallel.graph"), "--out", tmp_path)
    assert code == 2 and "not-controllable" in out
    w = read_report(tmp_path / "parallel.analyze.report")["result"]["witness"]["g_star"]
    np.testing.assert_allclose(w, [2**-0.5, -(2**-0.5), 0.0], atol=1e-12)


def test_analyze_below_mu0_is_input_error(tmp_path, capsys):
    code, _, err = run(capsys, "analyze", data_path("parallel.graph"), "--lambda", "-0.5", "--out", tmp_path)
    assert code == 1 and "[mu0]" in err


def test_simulate_loop_constant(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", data_path("loop.graph"), "--T", "3", "--out", tmp_path)
    assert code == 0
    with open(tmp_path / "loop.traces.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"t", "edge", "z(t,1)", "z(t,0)"}
    assert float(rows[-1]["t"]) == pytest.approx(3.0)
    assert all(float(r["z(t,1)"]) == pytest.approx(1.0, abs=1e-12) for r in rows)
    assert all(float(r["z(t,0)"]) == pytest.approx(1.0, abs=1e-12) for r in rows)


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DELAYNET_OUT", str(tmp_path / "env"))
    assert run(capsys, "simulate", data_path("two_cycle.graph"), "--nx", "17")[0] == 0
    assert (tmp_path / "env" / "two_cycle.traces.csv").exists()


def test_structural_form_query(tmp_path, capsys):
    code, out, _ = run(capsys, "structural", data_path("q0.pattern"), "--t", "4", "--out", tmp_path)
    assert code == 0 and "form (4), k=5" in out
    code, out, _ = run(capsys, "structural", data_path("q1.pattern"), "--t", "4", "--out", tmp_path)
    assert "form (4), k=4" in out and "rows [1, 2, 3]" in out
    code, out, _ = run(capsys, "structural", data_path("q0.pattern"), "--t", "2", "--out", tmp_path)
    assert code == 0 and "not of form (2)" in out


def test_structural_controllability_exit_codes(tmp_path, capsys):
    ok = run(capsys, "structural", data_path("chain_A.pattern"), "--k-pattern", data_path("chain_K.pattern"), "--out", tmp_path)
    assert ok[0] == 0 and "structurally-controllable" in ok[1]
    bad = run(capsys, "structural", data_path("decoupled_A.pattern"), "--k-pattern", data_path("decoupled_K.pattern"), "--out", tmp_path)
    assert bad[0] == 2 and "[3]" in bad[1]


def test_atfm_command(tmp_path, capsys):
    code, out, _ = run(capsys, "atfm", data_path("atfm_junction.graph"), "--r", "0.5", "--out", tmp_path)
    assert code == 2 and "Kalman rank 2 of 3" in out


def test_input_errors(tmp_path, capsys):
    assert run(capsys, "analyze", tmp_path / "nope.graph")[0] == 1
    assert run(capsys, "simulate", data_path("loop.graph"), "--nx", "1")[0] == 1
    assert run(capsys, "frobnicate")[0] == 1
    assert run(capsys, "structural", data_path("q0.pattern"), "--out", tmp_path)[0] == 1
    assert run(capsys, "analyze", data_path("loop.graph"), "--lambda", "abc", "--out", tmp_path)[0] == 1
    bad = tmp_path / "bad.graph"
    bad.write_text(BRANCH_NO_WEIGHTS)
    code, _, err = run(capsys, "analyze", bad, "--out", tmp_path)
    assert code == 1 and "Kirchhoff" in err


def test_numerical_failure_exit_code(tmp_path, capsys):
    g = tmp_path / "grow.graph"
    g.write_text('[[edges]]\nid = "e"\ntail = "v"\nhead = "v"\nq = 1.0\n[scenario]\nT = 40.0\ninitial = {e = 1.0}\n')
    assert run(capsys, "simulate", g, "--nx", "9", "--out", tmp_path)[0] == 4


def test_reports_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        run(capsys, "structural", data_path("chain_A.pattern"), "--k-pattern", data_path("chain_K.pattern"), "--seed", "5", "--out", tmp_path / sub)
        run(capsys, "analyze", data_path("two_cycle.graph"), "--out", tmp_path / sub)
        run(capsys, "simulate", data_path("loop.graph"), "--out", tmp_path / sub)
    for name in ("chain_A.structural.report", "two_cycle.analyze.report", "loop.simulate.report", "loop.traces.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_selftest_filter(capsys):
    code, out, _ = run(capsys, "selftest", "--filter", "mu0")
    assert code == 0
    assert out.count("[PASS]") == 1 and "mu0-behaviour" in out
    assert run(capsys, "selftest", "--filter", "no-such-criterion")[0] == 1


def test_corrupted_fixture_fails_by_name(monkeypatch, capsys):
    # a leaky network in place of the closed one cannot conserve mass
    monkeypatch.setattr(acceptance.F, "closed_network", lambda: acceptance.F.branching(K=(0, 0, 0), variable=True))
    res = acceptance.run_criterion(7)
    assert not res.passed and res.name == "mass-conservation"
    code, out, _ = run(capsys, "selftest", "--filter", "mass")
    assert code == 2 and "[FAIL] 7. mass-conservation" in out


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and "0.1.0" in out
