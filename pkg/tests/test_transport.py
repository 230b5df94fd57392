import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from delaynet import OutOfRange, control_map_Phi, dirichlet_D, flow_position, semigroup_apply, tau, xi
from delaynet.fixtures import branching, gain_loop, loop, random_graph
from delaynet.signals import ExponentialSignal
from delaynet.transport import EdgeKinematics, grid

from conftest import single_edge

STEP = {"breakpoints": [0.0, 0.5, 1.0], "values": [1.0, 2.0]}


def edge(c=1.0, q=0.0):
    return single_edge(c, q).edges[0]


@pytest.mark.parametrize(
    "c, x1, x2, expected",
    [(2.0, 0.0, 1.0, 0.5), (STEP, 0.0, 1.0, 0.75), (STEP, 0.3, 0.3, 0.0), (STEP, 0.25, 0.75, 0.25 + 0.125)],
)
def test_tau_examples(c, x1, x2, expected):
    assert tau(edge(c), x1, x2) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("c, q, expected", [(1.0, 0.0, 0.0), (1.7, 1.7, 1.0), (2.0, -1.0, -0.5), (STEP, STEP, 1.0)])
def test_xi_examples(c, q, expected):
    assert xi(edge(c, q), 0.0, 1.0) == pytest.approx(expected, abs=1e-15)


def test_positions_out_of_range():
    with pytest.raises(OutOfRange):
        tau(edge(), 0.6, 0.2)
    with pytest.raises(OutOfRange):
        xi(edge(), -0.1, 0.5)
    with pytest.raises(OutOfRange):
        flow_position(edge(), 0.5, -1.0)


def test_flow_position_examples():
    assert flow_position(edge(), 0.2, 0.3) == pytest.approx(0.5)
    assert flow_position(edge(STEP), 0.37, 0.0) == 0.37
    assert flow_position(edge(2.0), 0.0, 0.6) is None
    # crossing the velocity jump: 0.25 time units to reach 0.5 from 0.25, then speed 2
    assert flow_position(edge(STEP), 0.25, 0.35) == pytest.approx(0.7)


def _rand_profile(rng, lo, hi):
    k = int(rng.integers(1, 5))
    bp = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, k - 1)), [1.0]])
    return {"breakpoints": bp.tolist(), "values": rng.uniform(lo, hi, k).tolist()}


def _pc(d, x):
    i = np.searchsorted(d["breakpoints"], x, side="right") - 1
    return d["values"][min(i, len(d["values"]) - 1)]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_tau_xi_match_quadrature(seed, a, b):
    rng = np.random.default_rng(seed)
    c, q = _rand_profile(rng, 0.3, 3.0), _rand_profile(rng, -1.0, 1.0)
    x1, x2 = min(a, b), max(a, b)
    bp = sorted(set(c["breakpoints"]) | set(q["breakpoints"]))
    pts = [p for p in bp if x1 < p < x2]
    ref_tau = quad(lambda x: 1 / _pc(c, x), x1, x2, points=pts or None, limit=200)[0] if x2 > x1 else 0.0
    ref_xi = quad(lambda x: _pc(q, x) / _pc(c, x), x1, x2, points=pts or None, limit=200)[0] if x2 > x1 else 0.0
    e = edge(c, q)
    assert tau(e, x1, x2) == pytest.approx(ref_tau, abs=1e-10)
    assert xi(e, x1, x2) == pytest.approx(ref_xi, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 2))
def test_flow_position_inverts_tau(seed, x, t):
    rng = np.random.default_rng(seed)
    e = edge(_rand_profile(rng, 0.3, 3.0))
    s = flow_position(e, x, t)
    if s is None:
        assert tau(e, x, 1.0) < t
    else:
        assert tau(e, x, s) == pytest.approx(t, abs=1e-12)


def test_tau_to_inflow_strictly_decreasing():
    k = EdgeKinematics(edge(STEP))
    x = np.linspace(0, 1, 101)
    assert np.all(np.diff(k.tau_to_inflow(x)) < 0)
    assert k.tau_to_inflow(1.0) == 0.0


def test_semigroup_identity_and_shift():
    g = loop()
    nx = 257
    ones = np.ones((1, nx))
    np.testing.assert_array_equal(semigroup_apply(g, ones, 0.0), ones)
    out = semigroup_apply(g, ones, 0.25)[0]
    x = grid(nx)
    np.testing.assert_array_equal(out[x <= 0.75], 1.0)
    np.testing.assert_array_equal(out[x > 0.75], 0.0)


def test_semigroup_nilpotent_exactly():
    g = branching()
    prof = np.random.default_rng(0).uniform(-1, 1, (g.m, 64))
    from delaynet.graph import travel_times

    t = travel_times(g).max() * (1 + 1e-12)
    assert np.all(semigroup_apply(g, prof, t) == 0.0)


def test_semigroup_applies_gain():
    g = gain_loop()  # q = c = 1: factor e^{t} along the characteristic
    out = semigroup_apply(g, np.ones((1, 101)), 0.5)[0]
    x = grid(101)
    np.testing.assert_allclose(out[x <= 0.5], np.exp(0.5), rtol=1e-14)


def test_dirichlet_D_examples():
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(dirichlet_D(branching(variable=False), 0.0)(x), 1.0)
    np.testing.assert_allclose(dirichlet_D(loop(), 1.0)(x)[0], np.exp(-(1 - x)), rtol=1e-15)
    # large Re lam drives the outflow evaluation to zero
    D = dirichlet_D(branching(), 60.0 + 3j).at_outflow
    assert np.max(np.abs(D)) < 1e-15
    np.testing.assert_allclose(dirichlet_D(loop(), 1.0).apply(np.array([2.0]), np.array([1.0])), [[2.0]])


def test_phi_examples():
    g = loop()
    zero = control_map_Phi(g, ExponentialSignal([1.0]), 0.0, nx=33)
    assert np.all(zero[0, :-1] == 0.0)
    np.testing.assert_allclose(control_map_Phi(g, ExponentialSignal([1.0]), 1.0, nx=33), 1.0)
    x = grid(65)
    prof = control_map_Phi(gain_loop(), ExponentialSignal([1.0]), 1.5, nx=65)[0]
    np.testing.assert_allclose(prof, np.exp(1 - x), rtol=1e-14)


def test_phi_vanishes_before_tau0():
    g = branching()
    from delaynet.graph import tau0

    prof = control_map_Phi(g, ExponentialSignal(np.ones(3)), 0.5 * tau0(g), nx=65)
    # only the part of each edge reached within half a transit time is filled
    kin = [EdgeKinematics(e) for e in g.edges]
    for j, k in enumerate(kin):
        filled = k.tau_to_inflow(grid(65)) <= 0.5 * tau0(g)
        assert np.all(prof[j][~filled] == 0.0)
        assert np.all(prof[j][filled] != 0.0)


@pytest.mark.parametrize("lam", [0.7, 2.0, 1.0 + 2.0j])
def test_phi_laplace_consistency(lam):
    g = random_graph(np.random.default_rng(4), n_inputs=1)
    v0 = np.linspace(1.0, 2.0, g.m)
    from delaynet.graph import travel_times

    t = travel_times(g).max() + 0.3
    x = grid(129)
    prof = control_map_Phi(g, ExponentialSignal(v0, lam), t, nx=129)
    expected = np.exp(lam * t) * dirichlet_D(g, lam).apply(v0, x)
    np.testing.assert_allclose(prof, expected, rtol=1e-8, atol=1e-12)
