"""Vertex delay kernels and history-space operators.

A delay kernel on edge k is a bounded-variation measure on [-r, 0] made of
finitely many atoms plus a piecewise-constant density. The delay operator
integrates ``c_k(x) z_k(t + theta, x)`` against it over theta and x.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HistoryGap, SignalTooShort, ValidationError
from .profiles import PiecewiseConstant
from .transport import grid, kinematics


@dataclass(frozen=True, eq=False)
class DelayMeasure:
    r: float
    atoms: tuple = ()
    density: PiecewiseConstant | None = None

    def __post_init__(self):
        r = float(self.r)
        if not (r > 0 and math.isfinite(r)):
            raise ValidationError(f"delay horizon r must be positive, got {r}", rule="(A4)")
        atoms = tuple((float(th), float(w)) for th, w in self.atoms)
        for th, w in atoms:
            if th == 0.0:
                raise ValidationError("atom at theta = 0 violates (A4)", rule="(A4)")
            if not (-r - 1e-12 <= th < 0.0):
                raise ValidationError(f"atom at theta={th} outside [-r, 0)", rule="(A4)")
            if not math.isfinite(w):
                raise ValidationError("atom weight must be finite", rule="(A4)")
        dens = self.density
        if dens is not None:
            dens = PiecewiseConstant.coerce(dens, -r, 0.0)
            if abs(dens.lo + r) > 1e-12 or dens.hi != 0.0:
                raise ValidationError("density must be defined on [-r, 0]", rule="(A4)")
            if np.all(dens.values == 0):
                dens = None
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "atoms", tuple(a for a in atoms if a[1] != 0.0))
        object.__setattr__(self, "density", dens)

    @classmethod
    def zero(cls, r=1.0):
        return cls(r)

    @classmethod
    def discrete(cls, r, weight=1.0):
        """Single atom of the given weight at theta = -r."""
        return cls(r, ((-float(r), weight),))

    @classmethod
    def uniform(cls, r, total=1.0):
        return cls(r, (), PiecewiseConstant([-r, 0.0], [total / r]))

    @property
    def is_zero(self):
        return not self.atoms and self.density is None

    def total_variation(self):
        tv = sum(abs(w) for _, w in self.atoms)
        if self.density is not None:
            tv += float(np.sum(np.abs(self.density.values) * self.density.widths))
        return tv

    def abs(self):
        dens = None if self.density is None else self.density.map(np.abs)
        return DelayMeasure(self.r, tuple((th, abs(w)) for th, w in self.atoms), dens)

    def laplace(self, lam):
        """``int exp(lam * theta) d eta(theta)``."""
        total = 0.0 + 0.0j
        for th, w in self.atoms:
            total += w * np.exp(lam * th)
        if self.density is not None:
            bp = self.density.breakpoints
            for p, rho in enumerate(self.density.values):
                a, b = bp[p], bp[p + 1]
                if lam == 0:
                    total += rho * (b - a)
                else:
                    total += rho * (np.exp(lam * b) - np.exp(lam * a)) / lam
        return total

    def to_dict(self):
        d = {"r": self.r, "atoms": [list(a) for a in self.atoms]}
        if self.density is not None:
            d["density"] = self.density.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["r"]), tuple(tuple(a) for a in d.get("atoms", ())), d.get("density"))

    def __eq__(self, other):
        if not isinstance(other, DelayMeasure):
            return NotImplemented
        if self.is_zero and other.is_zero:
            return True  # the horizon of a zero measure carries no information
        return (self.r, self.atoms, self.density) == (other.r, other.atoms, other.density)

    __hash__ = None


def no_delays(g, r=1.0):
    return [DelayMeasure.zero(r) for _ in g.edges]


def horizon(measures):
    live = [mu.r for mu in measures if not mu.is_zero]
    return max(live) if live else 0.0


def velocity_on_grid(g, nx):
    xg = grid(nx)
    return np.array([k.velocity_at(xg) for k in kinematics(g)])


def trapezoid_weights(nx):
    w = np.full(nx, 1.0 / (nx - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


class HistoryBuffer:
    """Ring buffer of edge-profile snapshots on a uniform time grid.

    Besides each snapshot it stores the c-weighted spatial integral
    ``int_0^1 c_k(x) z_k(s, x) dx`` (trapezoid rule), which is all the
    delay operator needs. Capacity is ``ceil(r / dt) + 2`` snapshots.
    """

    def __init__(self, c_grid, dt, r, dtype=float):
        self.c_grid = np.asarray(c_grid, dtype=float)
        self.m, self.nx = self.c_grid.shape
        self.dt = float(dt)
        self.r = float(r)
        self.capacity = int(math.ceil(self.r / self.dt - 1e-9)) + 2
        self._w = trapezoid_weights(self.nx)
        self._profiles = np.zeros((self.capacity, self.m, self.nx), dtype=dtype)
        self._moments = np.zeros((self.capacity, self.m), dtype=dtype)
        self._t0 = None  # time of the oldest retained snapshot
        self._count = 0
        self._head = 0  # slot of the oldest snapshot

    def __len__(self):
        return self._count

    def _slot(self, i):
        return (self._head + i) % self.capacity

    @property
    def times(self):
        return self._t0 + self.dt * np.arange(self._count)

    @property
    def latest_time(self):
        return self._t0 + self.dt * (self._count - 1)

    def moment_of(self, profile):
        return (self.c_grid * profile) @ self._w

    def push(self, t, profile):
        profile = np.asarray(profile)
        if self._count == 0:
            self._t0 = float(t)
        elif abs(t - (self.latest_time + self.dt)) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"snapshot at t={t} breaks the uniform grid (expected {self.latest_time + self.dt})")
        if np.iscomplexobj(profile) and not np.iscomplexobj(self._profiles):
            self._profiles = self._profiles.astype(complex)
            self._moments = self._moments.astype(complex)
        if self._count == self.capacity:
            self._head = (self._head + 1) % self.capacity
            self._t0 += self.dt
            self._count -= 1
        slot = self._slot(self._count)
        self._profiles[slot] = profile
        self._moments[slot] = self.moment_of(profile)
        self._count += 1

    def replace_latest(self, profile):
        slot = self._slot(self._count - 1)
        self._profiles[slot] = profile
        self._moments[slot] = self.moment_of(profile)

    def _locate(self, s):
        s = np.asarray(s, dtype=float)
        if self._count == 0:
            raise HistoryGap("history buffer is empty")
        pos = (s - self._t0) / self.dt
        tol = 1e-9
        if np.any(pos < -tol) or np.any(pos > self._count - 1 + tol):
            raise HistoryGap(
                f"history covers [{self._t0}, {self.latest_time}], requested {np.min(s)}..{np.max(s)}"
            )
        pos = np.clip(pos, 0, self._count - 1)
        i = np.minimum(np.floor(pos).astype(int), max(self._count - 2, 0))
        frac = pos - i
        return i, frac

    def moments(self, s):
        """Linearly interpolated c-weighted integrals at times ``s``: shape (len(s), m)."""
        s = np.atleast_1d(s)
        i, frac = self._locate(s)
        a = self._moments[[self._slot(k) for k in i]]
        if self._count == 1:
            return a
        b = self._moments[[self._slot(k + 1) for k in i]]
        return a + frac[:, None] * (b - a)

    def snapshot(self, s):
        i, frac = self._locate(float(s))
        i = int(i)
        a = self._profiles[self._slot(i)]
        if self._count == 1:
            return a.copy()
        b = self._profiles[self._slot(i + 1)]
        return a + float(frac) * (b - a)


def delay_L(measures, history, t):
    """Delay operator applied to the stored history at time t (one value per edge).

    Atoms use the time-interpolated moments; density pieces are integrated
    exactly against the piecewise-linear moment history.
    """
    out = np.zeros(len(measures), dtype=history._moments.dtype)
    for k, mu in enumerate(measures):
        if mu.is_zero:
            continue
        acc = 0.0
        if mu.atoms:
            th = np.array([a[0] for a in mu.atoms])
            w = np.array([a[1] for a in mu.atoms])
            acc = acc + np.sum(w * history.moments(t + th)[:, k])
        if mu.density is not None:
            acc = acc + _density_integral(mu.density, history, t, k)
        out[k] = acc
    return out


def _density_integral(dens, history, t, k):
    lo, hi = dens.lo, dens.hi
    knots = history.times - t
    knots = knots[(knots > lo) & (knots < hi)]
    pts = np.union1d(np.union1d(dens.breakpoints, knots), [lo, hi])
    vals = history.moments(t + pts)[:, k]
    mids = 0.5 * (pts[1:] + pts[:-1])
    rho = dens(mids)
    return np.sum(rho * np.diff(pts) * 0.5 * (vals[1:] + vals[:-1]))


@dataclass(frozen=True)
class ExponentialHistory:
    """``(theta, x) -> exp(lam * theta) g(x)``: the image of g under d_lambda."""

    lam: complex
    g: np.ndarray

    def __call__(self, theta):
        return np.exp(self.lam * theta) * self.g


def dirichlet_d(lam, g):
    return ExponentialHistory(lam, np.asarray(g))


def L_of_d_lambda(g, measures, lam, profile=None, v=None):
    """``L d_lambda`` applied to a per-edge x-profile.

    Pass either ``profile`` sampled on a uniform grid (shape (m, nx), spatial
    integral by trapezoid) or ``v`` to use the exact Dirichlet profile
    ``D_lambda v`` with its closed-form weighted integral.
    """
    kin = kinematics(g)
    if v is not None:
        v = np.asarray(v)
        moments = np.array([k.weighted_exp_integral(lam) for k in kin]) * v
    else:
        profile = np.asarray(profile)
        nx = profile.shape[1]
        moments = (velocity_on_grid(g, nx) * profile) @ trapezoid_weights(nx)
    return np.array([mu.laplace(lam) if not mu.is_zero else 0.0 for mu in measures]) * moments


@dataclass
class HistoryFunction:
    """A function on [-r, 0] sampled on a uniform theta grid (values along axis 0)."""

    r: float
    values: np.ndarray
    theta: np.ndarray = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.theta = np.linspace(-self.r, 0.0, self.values.shape[0])

    @classmethod
    def from_callable(cls, fn, r, n):
        theta = np.linspace(-r, 0.0, n)
        return cls(r, np.array([fn(th) for th in theta]))

    def __call__(self, theta):
        theta = float(theta)
        flat = self.values.reshape(self.values.shape[0], -1)
        if np.iscomplexobj(flat):
            col = [np.interp(theta, self.theta, f.real) + 1j * np.interp(theta, self.theta, f.imag) for f in flat.T]
        else:
            col = [np.interp(theta, self.theta, f) for f in flat.T]
        return np.array(col).reshape(self.values.shape[1:])


def shift_semigroup(phi, t):
    """Left shift on [-r, 0]: zero on [-t, 0], ``phi(t + theta)`` below."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0:
        return HistoryFunction(phi.r, phi.values.copy())
    out = np.zeros_like(phi.values)
    keep = phi.theta < -t
    for i in np.nonzero(keep)[0]:
        out[i] = phi(phi.theta[i] + t)
    return HistoryFunction(phi.r, out)


def history_control_map(z_trace, t, r, n=None):
    """History segment generated by a state trace: ``theta -> z(t + theta)`` for theta >= -t.

    ``z_trace`` is a signal (``component``/``__call__`` protocol) giving the
    state at each time. For t >= r the result is exactly the history z_t.
    """
    if n is None:
        n = 65
    theta = np.linspace(-r, 0.0, n)
    lo = max(0.0, t - r)
    span = getattr(z_trace, "span", None)
    if span is not None and t > 0 and (span[0] > lo + 1e-12 or span[1] < t - 1e-12):
        raise SignalTooShort(f"trace known on {span}, need [{lo}, {t}]")
    sample = np.asarray(z_trace(0.0 if t == 0 else t))
    vals = np.zeros((n,) + sample.shape, dtype=sample.dtype)
    for i, th in enumerate(theta):
        if th >= -t and t > 0:
            vals[i] = z_trace(t + th)
    return HistoryFunction(r, vals)
