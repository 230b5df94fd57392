"""Exact edge kinematics and the free transport evolution.

For piecewise-constant c_j and q_j the travel time ``tau_j(0, y)`` and the
log-gain ``xi_j(0, y)`` are piecewise linear in y, so every evaluation here
(including the inverse flow map) is an exact interpolation between knots.
The only approximation in this module is the linear interpolation of
sampled profiles and boundary signals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OutOfRange
from .signals import as_signal

DEFAULT_NX = 256

PAST_OUTFLOW = None


class EdgeKinematics:
    """Closed-form travel time / log-gain tables for one edge."""

    def __init__(self, edge):
        self.edge = edge
        c = edge.velocity
        q = edge.absorption
        self.breakpoints = np.union1d(c.breakpoints, q.breakpoints)
        mids = 0.5 * (self.breakpoints[1:] + self.breakpoints[:-1])
        self.c_pieces = c(mids)
        self.q_pieces = q(mids)
        widths = np.diff(self.breakpoints)
        self.T_knots = np.concatenate([[0.0], np.cumsum(widths / self.c_pieces)])
        self.X_knots = np.concatenate([[0.0], np.cumsum(widths * self.q_pieces / self.c_pieces)])

    @property
    def tau_total(self):
        return float(self.T_knots[-1])

    @property
    def xi_total(self):
        return float(self.X_knots[-1])

    def T(self, x):
        return np.interp(x, self.breakpoints, self.T_knots)

    def Xi(self, x):
        return np.interp(x, self.breakpoints, self.X_knots)

    def tau(self, x1, x2):
        _check_positions(x1, x2)
        return self.T(x2) - self.T(x1)

    def xi(self, x1, x2):
        _check_positions(x1, x2)
        return self.Xi(x2) - self.Xi(x1)

    def tau_to_inflow(self, x):
        """``tau_j(x, 1)``: time for material at x to have entered at x = 1."""
        return self.tau_total - self.T(x)

    def xi_to_inflow(self, x):
        return self.xi_total - self.Xi(x)

    def flow_position(self, x, t):
        """Vectorized inverse flow map; NaN where the material has left the edge."""
        target = self.T(x) + np.asarray(t, dtype=float)
        s = np.interp(target, self.T_knots, self.breakpoints)
        s = np.maximum(s, x)  # round-off must not move material backwards
        past = target > self.tau_total
        return np.where(past, np.nan, s)

    def velocity_at(self, x):
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return self.c_pieces[np.clip(idx, 0, self.c_pieces.size - 1)]

    def weighted_exp_integral(self, lam):
        """``int_0^1 c(x) exp(xi(x,1) - lam * tau(x,1)) dx`` in closed form.

        On a piece [a, b] with constant c, q the integrand is
        ``c * exp(xi(b,1) - lam*tau(b,1)) * exp(alpha * (b - x))`` with
        ``alpha = (q - lam) / c``.
        """
        total = 0.0 + 0.0j
        bp = self.breakpoints
        for p in range(self.c_pieces.size):
            a, b = bp[p], bp[p + 1]
            c, q = self.c_pieces[p], self.q_pieces[p]
            base = np.exp((self.xi_total - self.X_knots[p + 1]) - lam * (self.tau_total - self.T_knots[p + 1]))
            alpha = (q - lam) / c
            total += c * base * _expm1_over(alpha, b - a)
        return total


def _expm1_over(alpha, h):
    """``(exp(alpha*h) - 1) / alpha`` with the alpha -> 0 limit h."""
    z = alpha * h
    if abs(z) < 1e-8:
        return h * (1 + z / 2 + z * z / 6)
    return np.expm1(z) / alpha


def _check_positions(x1, x2):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(x1 < 0) or np.any(x2 > 1) or np.any(x1 > x2):
        raise OutOfRange(f"need 0 <= x1 <= x2 <= 1, got x1={x1}, x2={x2}")


def kinematics(g):
    return [EdgeKinematics(e) for e in g.edges]


def grid(nx=DEFAULT_NX):
    if nx < 2:
        raise ValueError("grid size must be >= 2")
    return np.linspace(0.0, 1.0, nx)


def tau(edge, x1, x2):
    return EdgeKinematics(edge).tau(x1, x2)


def xi(edge, x1, x2):
    return EdgeKinematics(edge).xi(x1, x2)


def flow_position(edge, x, t):
    """Position reached from x after time t, or ``PAST_OUTFLOW`` (None) if gone."""
    if t < 0:
        raise OutOfRange("t must be >= 0")
    s = EdgeKinematics(edge).flow_position(float(x), float(t))
    s = float(s)
    return PAST_OUTFLOW if np.isnan(s) else s


def _interp_profile(xg, prof, s):
    if np.iscomplexobj(prof):
        return np.interp(s, xg, prof.real) + 1j * np.interp(s, xg, prof.imag)
    return np.interp(s, xg, prof)


def free_evolution(kin, xg, prof, x, t):
    """(T(t) g)_j evaluated at positions x for one edge (``prof`` sampled on ``xg``)."""
    s = kin.flow_position(x, t)
    ok = ~np.isnan(s)
    out = np.zeros(np.shape(x), dtype=np.result_type(prof, float))
    sv = s[ok]
    out[ok] = np.exp(kin.Xi(sv) - kin.Xi(np.asarray(x)[ok])) * _interp_profile(xg, prof, sv)
    return out


def semigroup_apply(g, profiles, t):
    """Apply the nilpotent transport semigroup to profiles sampled on a uniform grid.

    ``profiles`` has shape ``(m, nx)``; the result is sampled on the same grid.
    """
    if t < 0:
        raise OutOfRange("t must be >= 0")
    profiles = np.asarray(profiles)
    xg = grid(profiles.shape[1])
    out = np.zeros_like(profiles, dtype=np.result_type(profiles, float))
    for j, kin in enumerate(kinematics(g)):
        out[j] = free_evolution(kin, xg, profiles[j], xg, t)
    return out


@dataclass(frozen=True)
class DirichletMap:
    """``v -> (x -> exp(xi_j(x,1) - lam * tau_j(x,1)) v_j)`` for every edge."""

    lam: complex
    kin: tuple

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([np.exp(k.xi_to_inflow(x) - self.lam * k.tau_to_inflow(x)) for k in self.kin])

    def apply(self, v, x):
        return np.asarray(v)[:, None] * self(x)

    @property
    def at_outflow(self):
        """The x = 0 evaluation as a dense diagonal matrix."""
        return np.diag([np.exp(k.xi_total - self.lam * k.tau_total) for k in self.kin])


def dirichlet_D(g, lam):
    return DirichletMap(complex(lam), tuple(kinematics(g)))


def control_map_Phi(g, v, t, nx=DEFAULT_NX):
    """Profiles produced by injecting the boundary signal ``v`` at x = 1 up to time t."""
    if t < 0:
        raise OutOfRange("t must be >= 0")
    sig = as_signal(v, g.m)
    xg = grid(nx)
    rows = []
    for j, kin in enumerate(kinematics(g)):
        tx = kin.tau_to_inflow(xg)
        active = t >= tx
        row = np.zeros(nx, dtype=complex)
        if np.any(active):
            row[active] = np.exp(kin.xi_to_inflow(xg[active])) * sig.component(j, t - tx[active])
        rows.append(row)
    out = np.array(rows)
    return out.real if not np.iscomplexobj(out) or np.all(out.imag == 0) else out
