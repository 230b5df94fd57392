"""Small reference networks used by the self-test, the tests and the docs."""
from __future__ import annotations

import numpy as np

from .delay import DelayMeasure
from .graph import build_graph


def loop(c=1.0, q=0.0, K=1.0):
    """One edge leaving and entering the same vertex."""
    return build_graph({"edges": [{"id": "e1", "tail": "v", "head": "v", "c": c, "q": q}], "control": [[K]]})


def gain_loop():
    """Loop with q = c = 1: gain e per transit, so ||A_lam||_1 = exp(1 - lam)."""
    return loop(c=1.0, q=1.0)


def two_cycle(K=(1.0, 0.0)):
    return build_graph(
        {
            "edges": [
                {"id": "e1", "tail": "v1", "head": "v2"},
                {"id": "e2", "tail": "v2", "head": "v1"},
            ],
            "control": [[k] for k in K],
        }
    )


def branching(K=(1.0, 0.0, 0.0), variable=True):
    """Three edges: v1 -> v2, then a 60/40 split back to v1.

    With ``variable`` the edges carry piecewise-constant velocity and absorption.
    """
    if variable:
        c = [
            {"breakpoints": [0.0, 0.5, 1.0], "values": [1.0, 2.0]},
            {"breakpoints": [0.0, 0.3, 1.0], "values": [0.8, 1.2]},
            1.5,
        ]
        q = [{"breakpoints": [0.0, 0.4, 1.0], "values": [0.2, -0.1]}, 0.0, 0.3]
    else:
        c, q = [1.0, 0.8, 1.5], [0.0, 0.0, 0.0]
    return build_graph(
        {
            "edges": [
                {"id": "e1", "tail": "v1", "head": "v2", "c": c[0], "q": q[0]},
                {"id": "e2", "tail": "v2", "head": "v1", "c": c[1], "q": q[1]},
                {"id": "e3", "tail": "v2", "head": "v1", "c": c[2], "q": q[2]},
            ],
            "weights": {"v2": {"e2": 0.6, "e3": 0.4}},
            "control": [[k] for k in K],
        }
    )


def atfm_junction(r=0.5):
    """Eulerian junction (q = 0) with one airborne-delay atom of weight 1 at -r on every edge."""
    g = build_graph(
        {
            "edges": [
                {"id": "in", "tail": "a", "head": "j", "c": 1.0},
                {"id": "out1", "tail": "j", "head": "a", "c": 1.25},
                {"id": "out2", "tail": "j", "head": "a", "c": 0.8},
            ],
            "weights": {"j": {"out1": 0.7, "out2": 0.3}},
            "control": [[1.0], [0.0], [0.0]],
        }
    )
    return g, [DelayMeasure.discrete(r, 1.0) for _ in g.edges]


def distributed_path(r=0.6):
    """Open path v1 -> v2 -> v3 -> v4 with uniform delay densities; material leaves at v4."""
    g = build_graph(
        {
            "edges": [
                {"id": "e1", "tail": "v1", "head": "v2", "c": 1.0},
                {"id": "e2", "tail": "v2", "head": "v3", "c": {"breakpoints": [0.0, 0.5, 1.0], "values": [0.7, 1.4]}},
                {"id": "e3", "tail": "v3", "head": "v4", "c": 1.2, "q": 0.2},
            ],
            "control": [[1.0], [0.0], [0.0]],
        }
    )
    delays = [
        DelayMeasure.uniform(r, 0.4),
        DelayMeasure(r, ((-0.25, 0.2),), {"breakpoints": [-r, -0.3, 0.0], "values": [0.5, 0.1]}),
        DelayMeasure.zero(r),
    ]
    return g, delays


def parallel_edges(K=(1.0, 1.0, 0.0)):
    """Two identical edges v1 -> v2 with equal weights and a return edge."""
    return build_graph(
        {
            "edges": [
                {"id": "p1", "tail": "v1", "head": "v2"},
                {"id": "p2", "tail": "v1", "head": "v2"},
                {"id": "ret", "tail": "v2", "head": "v1", "c": 0.5},
            ],
            "weights": {"v1": {"p1": 0.5, "p2": 0.5}},
            "control": [[k] for k in K],
        }
    )


def closed_network():
    """Delay-free, absorption-free Kirchhoff network with constant velocity per edge and no inflow."""
    return branching(K=(0.0, 0.0, 0.0), variable=False)


def oracle_fixtures():
    """(name, graph, delays) for the Laplace-oracle checks."""
    atfm, atfm_d = atfm_junction()
    path, path_d = distributed_path()
    return [
        ("loop", loop(), None),
        ("two-cycle", two_cycle(), None),
        ("branching", branching(), None),
        ("atfm-junction", atfm, atfm_d),
        ("distributed-path", path, path_d),
    ]


def all_fixtures():
    return oracle_fixtures() + [
        ("parallel-edges", parallel_edges(), None),
        ("gain-loop", gain_loop(), None),
    ]


def smooth_profile(nx, m, seed=0):
    """Random smooth initial profiles (low-order Fourier modes), one per edge."""
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, nx)
    out = np.zeros((m, nx))
    for j in range(m):
        a = rng.uniform(-1, 1, 4)
        out[j] = 1.0 + 0.5 * sum(a[k] * np.cos(np.pi * (k + 1) * x) for k in range(4))
    return out


def compatible_profile(g, nx, seed=0):
    """Smooth profiles whose inflow values already satisfy the vertex condition.

    Starting from :func:`smooth_profile`, each edge gets a correction
    proportional to x**2 so that ``c(1) z(0, 1) = B c(0) z(0, 0) + K u(0)``
    with u(0) = 0; the solution then carries no jump.
    """
    from .graph import adjacency_B

    prof = smooth_profile(nx, g.m, seed)
    beta = adjacency_B(g) @ (g.c0 * prof[:, 0]) / g.c1
    x = np.linspace(0.0, 1.0, nx)
    return prof + (beta - prof[:, -1])[:, None] * x[None, :] ** 2


def random_graph(rng, max_edges=5, absorption=True, max_pieces=3, n_inputs=1):
    """Random small Kirchhoff network: a directed cycle through every vertex plus chords.

    Velocities (and, with ``absorption``, absorptions) are random piecewise
    constants; outgoing weights are drawn from a flat Dirichlet law.
    """
    nv = int(rng.integers(1, 4))
    verts = [f"v{i}" for i in range(nv)]
    pairs = [(verts[i], verts[(i + 1) % nv]) for i in range(nv)]
    extra = int(rng.integers(0, max(1, max_edges - nv + 1)))
    for _ in range(extra):
        pairs.append((verts[rng.integers(nv)], verts[rng.integers(nv)]))

    def profile(lo, hi):
        k = int(rng.integers(1, max_pieces + 1))
        inner = np.sort(rng.uniform(0.05, 0.95, k - 1))
        return {"breakpoints": [0.0, *inner.tolist(), 1.0], "values": rng.uniform(lo, hi, k).tolist()}

    edges = []
    for i, (a, b) in enumerate(pairs):
        edges.append(
            {
                "id": f"e{i}",
                "tail": a,
                "head": b,
                "c": profile(0.5, 2.0),
                "q": profile(-0.5, 0.5) if absorption else 0.0,
            }
        )
    weights = {}
    for v in verts:
        outs = [e["id"] for e in edges if e["tail"] == v]
        w = rng.dirichlet(np.ones(len(outs)))
        weights[v] = dict(zip(outs, w.tolist()))
    K = rng.uniform(-1, 1, (len(edges), n_inputs))
    return build_graph({"vertices": verts, "edges": edges, "weights": weights, "control": K.tolist()})
