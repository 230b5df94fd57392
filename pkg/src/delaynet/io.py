"""Graph files (TOML), reports and CSV output.

Graph file layout::

    [params]            # optional: kirchhoff_tol, gamma1, gamma2, depth
    [vertices]
    ids = ["v1", "v2"]  # optional, inferred from edges
    [[edges]]
    id = "e1"
    tail = "v1"
    head = "v2"
    c = 1.0             # or {breakpoints = [...], values = [...]}
    q = 0.0
    [weights]
    v2 = {e2 = 0.6, e3 = 0.4}
    [control]
    K = [[1.0], [0.0]]  # m x N, rows in edge order
    [delays.e1]
    r = 0.5
    atoms = [[-0.5, 1.0]]                              # (theta, weight)
    density = {breakpoints = [-0.5, 0.0], values = [0.2]}
    [scenario]
    T = 3.0
    initial = {e1 = 1.0}       # constant initial profile per edge
    control = {kind = "constant", u0 = [1.0], rate = 0.0}
"""
from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .delay import DelayMeasure
from .errors import ParseError, ValidationError
from .graph import build_graph
from .signals import ExponentialSignal, IndicatorSignal, ScaledSignal, SumSignal

CONTROL_KINDS = ("zero", "constant", "exponential", "smooth", "pulse")


@dataclass
class GraphFile:
    graph: object
    delays: list
    scenario: dict = field(default_factory=dict)
    path: str | None = None


_LOC = re.compile(r"\(at line (\d+), column (\d+)\)")


def loads_graph_spec(text, path=None):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = _LOC.search(str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        msg = _LOC.sub("", str(exc)).strip()
        raise ParseError(msg, path, line, col) from None
    return graph_from_data(data, path, text)


def parse_graph_spec(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path)) from None
    return loads_graph_spec(text, str(path))


def _line_of(text, needle):
    if text is None:
        return None
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def graph_from_data(data, path=None, text=None):
    edges = data.get("edges")
    if not isinstance(edges, list):
        raise ParseError("missing [[edges]] array", path, 1, 1)
    control = data.get("control", {}).get("K")
    spec = {
        "vertices": data.get("vertices", {}).get("ids"),
        "edges": edges,
        "weights": data.get("weights"),
        "control": control,
        "params": data.get("params"),
    }
    g = build_graph(spec)
    raw_delays = data.get("delays", {})
    unknown = set(raw_delays) - set(g.edge_ids)
    if unknown:
        name = sorted(unknown)[0]
        raise ParseError(f"delay table for unknown edge {name!r}", path, _line_of(text, f"delays.{name}"), 1)
    delays = []
    for eid in g.edge_ids:
        d = raw_delays.get(eid)
        if d is None:
            delays.append(DelayMeasure.zero())
            continue
        try:
            delays.append(DelayMeasure.from_dict(d))
        except KeyError as exc:
            raise ParseError(f"delay table for {eid!r} lacks {exc}", path, _line_of(text, f"delays.{eid}"), 1) from None
    scenario = dict(data.get("scenario", {}))
    return GraphFile(g, delays, scenario, path)


def dumps_graph_spec(g, delays=None, scenario=None):
    """Canonical TOML text; parsing it back yields an equal graph."""
    spec = g.to_spec()
    data = {}
    if spec["params"]:
        data["params"] = spec["params"]
    data["vertices"] = {"ids": spec["vertices"]}
    data["edges"] = [
        {
            "id": e["id"],
            "tail": e["tail"],
            "head": e["head"],
            "c": _profile_out(e["c"]),
            "q": _profile_out(e["q"]),
        }
        for e in spec["edges"]
    ]
    data["weights"] = spec["weights"]
    data["control"] = {"K": spec["control"]}
    if delays:
        dd = {eid: mu.to_dict() for eid, mu in zip(g.edge_ids, delays) if not mu.is_zero}
        if dd:
            data["delays"] = dd
    if scenario:
        data["scenario"] = scenario
    return tomli_w.dumps(data)


def _profile_out(d):
    if len(d["values"]) == 1:
        return float(d["values"][0])
    return d


def write_graph_spec(path, g, delays=None, scenario=None):
    Path(path).write_text(dumps_graph_spec(g, delays, scenario), encoding="utf-8")


def control_from_scenario(sc, n_inputs):
    """Build the control signal described by ``[scenario].control``."""
    spec = sc.get("control")
    if spec is None:
        return ExponentialSignal(np.zeros(n_inputs), 0.0)
    kind = spec.get("kind", "constant")
    if kind not in CONTROL_KINDS:
        raise ValidationError(f"unknown control kind {kind!r} (expected one of {CONTROL_KINDS})", rule="control")
    u0 = np.atleast_1d(np.asarray(spec.get("u0", np.ones(n_inputs)), dtype=float))
    if u0.size != n_inputs:
        raise ValidationError(f"u0 has {u0.size} entries, K has {n_inputs} columns", rule="control")
    rate = float(spec.get("rate", 0.0))
    if kind == "zero":
        return ExponentialSignal(np.zeros(n_inputs), 0.0)
    if kind in ("constant", "exponential"):
        return ExponentialSignal(u0, rate if kind == "exponential" else 0.0)
    if kind == "smooth":
        # (exp(rate t) - exp((rate - ramp) t)) u0: starts at zero, no jump at t = 0
        ramp = float(spec.get("ramp", 2.0))
        return SumSignal(ExponentialSignal(u0, rate), ScaledSignal(ExponentialSignal(u0, rate - ramp), -1.0))
    return IndicatorSignal(u0, float(spec.get("start", 0.0)), float(spec.get("stop", 1.0)))


def initial_from_scenario(g, sc, nx):
    init = sc.get("initial", {})
    prof = np.zeros((g.m, nx))
    for eid, val in init.items():
        try:
            j = g.edge_index(eid)
        except KeyError:
            raise ValidationError(f"initial value for unknown edge {eid!r}", rule="scenario") from None
        prof[j] = float(val)
    return prof


# ------------------------------------------------------------------ output


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        c = complex(obj)
        return {"re": c.real, "im": c.imag}
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    if obj is None:
        return "none"
    return obj


def config_hash(config):
    blob = json.dumps(_plain(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_report(path, tree, summary_lines=()):
    """Key-value report (TOML) with an optional human-readable summary as comments."""
    text = "".join(f"# {line}\n" for line in summary_lines)
    text += tomli_w.dumps(_plain(tree))
    Path(path).write_text(text, encoding="utf-8")
    return path


def read_report(path):
    return tomli.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (complex, np.complexfloating)):
        c = complex(v)
        return repr(c.real) if c.imag == 0 else f"{c.real!r}{c.imag:+.17g}j"
    return v


def trace_rows(rec, edge_ids):
    """Long-format rows ``t, edge, z(t,1), z(t,0)``."""
    for n, t in enumerate(rec.times):
        for j, eid in enumerate(edge_ids):
            yield (float(t), eid, _real_if_close(rec.inflow[n, j]), _real_if_close(rec.outflow[n, j]))


def _real_if_close(v):
    v = complex(v)
    return v.real if abs(v.imag) <= 1e-14 * max(1.0, abs(v.real)) else v
