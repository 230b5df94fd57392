"""Directed metric graphs with normalized edges.

Every edge is identified with [0, 1] and parameterized against the flow:
material enters at x = 1 (the tail vertex) and leaves at x = 0 (the head
vertex).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import sparse

from .errors import EmptyGraph, KirchhoffViolation, NonPositiveVelocity, ValidationError
from .profiles import PiecewiseConstant

DEFAULT_KIRCHHOFF_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Edge:
    id: str
    tail: str
    head: str
    velocity: PiecewiseConstant
    absorption: PiecewiseConstant

    def __eq__(self, other):
        if not isinstance(other, Edge):
            return NotImplemented
        return (self.id, self.tail, self.head, self.velocity, self.absorption) == (
            other.id,
            other.tail,
            other.head,
            other.velocity,
            other.absorption,
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Validated, immutable graph. Build it with :func:`build_graph`."""

    vertices: tuple
    edges: tuple
    weights: Mapping  # (vertex id, edge id) -> w_ij
    control: np.ndarray  # m x N, rows follow edge order
    gamma1: float
    gamma2: float
    gamma3: float
    kirchhoff_tol: float = DEFAULT_KIRCHHOFF_TOL
    truncation_depth: int | None = None
    params: Mapping = field(default_factory=dict)

    @property
    def m(self):
        return len(self.edges)

    @property
    def n_inputs(self):
        return self.control.shape[1]

    @property
    def edge_ids(self):
        return [e.id for e in self.edges]

    def edge_index(self, edge_id):
        for j, e in enumerate(self.edges):
            if e.id == edge_id:
                return j
        raise KeyError(edge_id)

    def out_edges(self, vertex):
        return [j for j, e in enumerate(self.edges) if e.tail == vertex]

    def in_edges(self, vertex):
        return [j for j, e in enumerate(self.edges) if e.head == vertex]

    def weight(self, vertex, edge_id):
        return self.weights.get((vertex, edge_id), 0.0)

    @property
    def c0(self):
        """Velocities at the outflow end x = 0."""
        return np.array([e.velocity.values[0] for e in self.edges])

    @property
    def c1(self):
        """Velocities at the inflow end x = 1."""
        return np.array([e.velocity.values[-1] for e in self.edges])

    def with_control(self, K):
        return _validated(
            self.vertices,
            self.edges,
            dict(self.weights),
            K,
            gamma1=self.gamma1,
            gamma2=self.gamma2,
            tol=self.kirchhoff_tol,
            depth=self.truncation_depth,
            params=dict(self.params),
        )

    def to_spec(self):
        """Plain-data description accepted by :func:`build_graph`."""
        weights = {}
        for (v, e), w in self.weights.items():
            weights.setdefault(v, {})[e] = float(w)
        params = dict(self.params)
        params["kirchhoff_tol"] = self.kirchhoff_tol
        params["gamma1"] = self.gamma1
        params["gamma2"] = self.gamma2
        if self.truncation_depth is not None:
            params["depth"] = self.truncation_depth
        return {
            "vertices": list(self.vertices),
            "edges": [
                {
                    "id": e.id,
                    "tail": e.tail,
                    "head": e.head,
                    "c": e.velocity.to_dict(),
                    "q": e.absorption.to_dict(),
                }
                for e in self.edges
            ],
            "weights": weights,
            "control": self.control.tolist(),
            "params": params,
        }

    def __eq__(self, other):
        if not isinstance(other, MetricGraph):
            return NotImplemented
        return (
            self.vertices == other.vertices
            and self.edges == other.edges
            and dict(self.weights) == dict(other.weights)
            and np.array_equal(self.control, other.control)
            and (self.gamma1, self.gamma2, self.gamma3, self.kirchhoff_tol)
            == (other.gamma1, other.gamma2, other.gamma3, other.kirchhoff_tol)
            and self.truncation_depth == other.truncation_depth
        )

    __hash__ = None


def _edge_from_spec(d):
    try:
        eid, tail, head = str(d["id"]), str(d["tail"]), str(d["head"])
    except KeyError as exc:
        raise ValidationError(f"edge entry missing field {exc}", rule="edge") from None
    c = PiecewiseConstant.coerce(d.get("c", 1.0))
    q = PiecewiseConstant.coerce(d.get("q", 0.0))
    for name, prof in (("c", c), ("q", q)):
        if prof.lo != 0.0 or prof.hi != 1.0:
            raise ValidationError(
                f"edge {eid}: {name} breakpoints must start at 0 and end at 1", rule="profile"
            )
    return Edge(eid, tail, head, c, q)


def build_graph(spec):
    """Validate a parsed graph description and return a :class:`MetricGraph`.

    ``spec`` keys: ``vertices`` (optional, inferred from edges), ``edges``
    (list of mappings with ``id``, ``tail``, ``head``, ``c``, ``q``),
    ``weights`` (``{vertex: {edge: w}}``), ``control`` (m x N rows, default a
    single zero column) and ``params``.

    A vertex with a single outgoing edge and no listed weight gets weight 1;
    at branching vertices missing weights count as 0.
    """
    edges_spec = list(spec.get("edges") or [])
    if not edges_spec:
        raise EmptyGraph()
    edges = tuple(_edge_from_spec(d) for d in edges_spec)
    ids = [e.id for e in edges]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate edge ids", rule="edge")

    vertices = [str(v) for v in (spec.get("vertices") or [])]
    for e in edges:
        for v in (e.tail, e.head):
            if v not in vertices:
                vertices.append(v)

    raw_w = spec.get("weights") or {}
    weights = {}
    for v, row in raw_w.items():
        for eid, w in row.items():
            weights[(str(v), str(eid))] = float(w)
    for v in vertices:
        outs = [e.id for e in edges if e.tail == v]
        if len(outs) == 1 and (v, outs[0]) not in weights:
            weights[(v, outs[0])] = 1.0

    params = dict(spec.get("params") or {})
    m = len(edges)
    K = spec.get("control")
    if K is None:
        K = np.zeros((m, 1))
    return _validated(
        tuple(vertices),
        edges,
        weights,
        K,
        gamma1=params.pop("gamma1", None),
        gamma2=params.pop("gamma2", None),
        tol=float(params.pop("kirchhoff_tol", DEFAULT_KIRCHHOFF_TOL)),
        depth=params.pop("depth", None),
        params=params,
    )


def _validated(vertices, edges, weights, K, gamma1, gamma2, tol, depth, params):
    edge_by_id = {e.id: e for e in edges}
    for (v, eid), w in weights.items():
        if eid not in edge_by_id:
            raise ValidationError(f"weight refers to unknown edge {eid!r}", rule="weights")
        if edge_by_id[eid].tail != v:
            raise ValidationError(
                f"weight ({v!r}, {eid!r}): edge does not leave vertex {v!r}", rule="weights"
            )
        if not (w >= 0.0 and np.isfinite(w)):
            raise ValidationError(f"weight ({v!r}, {eid!r}) must be >= 0", rule="weights")

    cmin = min(float(e.velocity.values.min()) for e in edges)
    if cmin <= 0.0:
        raise NonPositiveVelocity(f"velocity must be positive, found min c = {cmin}")
    g1 = cmin if gamma1 is None else float(gamma1)
    if g1 <= 0.0 or cmin < g1:
        raise NonPositiveVelocity(f"velocity lower bound gamma1={g1} violated (min c = {cmin})")
    qmax = max(float(e.absorption.values.max()) for e in edges)
    g2 = qmax if gamma2 is None else float(gamma2)
    if qmax > g2:
        raise ValidationError(f"absorption bound gamma2={g2} violated (max q = {qmax})", rule="(A1)")
    g3 = max(float(e.velocity.values.max()) for e in edges)

    for v in vertices:
        outs = [e.id for e in edges if e.tail == v]
        if not outs:
            continue
        total = sum(weights.get((v, eid), 0.0) for eid in outs)
        if abs(total - 1.0) > tol:
            raise KirchhoffViolation(
                f"weights at vertex {v!r} sum to {total!r}, expected 1 (tol {tol})"
            )

    K = np.array(K, dtype=float)
    if K.ndim == 1:
        K = K.reshape(-1, 1)
    if K.shape[0] != len(edges):
        raise ValidationError(
            f"control matrix has {K.shape[0]} rows, graph has {len(edges)} edges", rule="control"
        )
    K.flags.writeable = False
    return MetricGraph(
        vertices=tuple(vertices),
        edges=tuple(edges),
        weights=dict(weights),
        control=K,
        gamma1=g1,
        gamma2=g2,
        gamma3=g3,
        kirchhoff_tol=tol,
        truncation_depth=None if depth is None else int(depth),
        params=params,
    )


def incidence_matrices(g):
    """Outgoing and incoming incidence matrices (vertices x edges), as CSR arrays.

    ``out[i, j] = 1`` iff vertex i is the tail of edge j (its x = 1 end);
    ``inc[i, j] = 1`` iff vertex i is its head (x = 0 end).
    """
    vidx = {v: i for i, v in enumerate(g.vertices)}
    cols = np.arange(g.m)
    tails = [vidx[e.tail] for e in g.edges]
    heads = [vidx[e.head] for e in g.edges]
    shape = (len(g.vertices), g.m)
    ones = np.ones(g.m)
    out = sparse.csr_array((ones, (tails, cols)), shape=shape)
    inc = sparse.csr_array((ones, (heads, cols)), shape=shape)
    return out, inc


def weighted_outgoing_incidence(g):
    vidx = {v: i for i, v in enumerate(g.vertices)}
    W = np.zeros((len(g.vertices), g.m))
    for j, e in enumerate(g.edges):
        W[vidx[e.tail], j] = g.weight(e.tail, e.id)
    return W


def adjacency_B(g):
    """Transposed weighted adjacency of the line graph.

    Entry (j, k) is the share of the outflow of edge k that enters edge j,
    i.e. ``w[head(k), j]`` when edge j leaves the vertex edge k runs into.
    """
    B = np.zeros((g.m, g.m))
    for k, ek in enumerate(g.edges):
        for j, ej in enumerate(g.edges):
            if ej.tail == ek.head:
                B[j, k] = g.weight(ek.head, ej.id)
    return B


def line_graph_pattern(g):
    """Unweighted line-graph adjacency: True where edge k feeds edge j."""
    heads = np.array([e.head for e in g.edges], dtype=object)
    tails = np.array([e.tail for e in g.edges], dtype=object)
    return tails[:, None] == heads[None, :]


def travel_times(g):
    """Total transit time tau_j(0, 1) of every edge."""
    return np.array([float(np.sum(e.velocity.widths / e.velocity.values)) for e in g.edges])


def tau0(g):
    return float(travel_times(g).min())


def truncate_bfs(successors: Callable[[str], Iterable[Mapping]], root, depth, **extra):
    """Finite section of a (possibly infinite) graph, explored breadth-first.

    ``successors(v)`` yields edge mappings for the outgoing edges of ``v``: keys
    ``id``, ``head``, optional ``c``, ``q``, ``weight`` and ``control`` (a row of
    the input matrix). Vertices at distance < ``depth`` from ``root`` are
    expanded with all their outgoing edges, so Kirchhoff sums are preserved;
    frontier vertices keep no outgoing edges.
    """
    root = str(root)
    seen = {root: 0}
    queue = deque([root])
    edges, weights, rows = [], {}, []
    while queue:
        v = queue.popleft()
        if seen[v] >= depth:
            continue
        for d in successors(v):
            d = dict(d)
            head = str(d["head"])
            eid = str(d["id"])
            edges.append({"id": eid, "tail": v, "head": head, "c": d.get("c", 1.0), "q": d.get("q", 0.0)})
            if "weight" in d:
                weights.setdefault(v, {})[eid] = d["weight"]
            rows.append(d.get("control"))
            if head not in seen:
                seen[head] = seen[v] + 1
                queue.append(head)
    width = max((len(np.atleast_1d(r)) for r in rows if r is not None), default=1)
    K = [list(np.atleast_1d(r)) if r is not None else [0.0] * width for r in rows]
    params = dict(extra.pop("params", {}))
    params["depth"] = int(depth)
    return build_graph(
        {"vertices": list(seen), "edges": edges, "weights": weights, "control": K, "params": params}
    )
