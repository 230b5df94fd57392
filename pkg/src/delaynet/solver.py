"""Time-domain solution of the controlled network delay system.

The state on edge j at (t, x) is ``exp(xi_j(x,1)) b_j(t - tau_j(x,1))`` once
the characteristic through (t, x) has entered the edge, and the free
transport of the initial profile before that. Here ``b_j(t) = z_j(t, 1)`` is
the inflow trace, obtained at every step from the vertex condition

    c(1) b(t) = B [c(0) z(t, 0) + L z_t] + K u(t).

Because every transit time exceeds the step, ``z(t, 0)`` only involves
earlier inflow values, so the stepping is explicit.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .delay import DelayMeasure, HistoryBuffer, delay_L, horizon, trapezoid_weights, velocity_on_grid
from .errors import (
    IncompatibleInitialData,
    NonFiniteState,
    TailNotNegligible,
    ValidationError,
)
from .graph import adjacency_B, tau0
from .signals import as_signal
from .transport import DEFAULT_NX, free_evolution, grid, kinematics

log = logging.getLogger(__name__)

BLOWUP = 1e12
STEPS_PER_DELAY = 32


def default_dt(g, delays=None):
    r = horizon(delays or [])
    base = tau0(g) if r == 0 else min(tau0(g), r)
    return base / STEPS_PER_DELAY


@dataclass
class Scenario:
    """Everything needed for one run.

    ``initial_profile`` is sampled on the uniform grid of size ``nx`` (shape
    (m, nx)); ``initial_history`` maps theta in [-r, 0] to such an array and
    defaults to the constant extension of the initial profile. ``control``
    is any signal accepted by :func:`delaynet.signals.as_signal`.
    """

    graph: object
    horizon: float
    delays: list | None = None
    initial_profile: np.ndarray | None = None
    initial_history: object = None
    control: object = None
    dt: float | None = None
    nx: int = DEFAULT_NX
    snapshot_times: tuple = ()

    def __post_init__(self):
        g = self.graph
        if self.delays is None:
            self.delays = [DelayMeasure.zero() for _ in g.edges]
        if len(self.delays) != g.m:
            raise ValidationError(f"need one delay measure per edge ({g.m})", rule="delays")
        if self.nx < 2:
            raise ValidationError("nx must be >= 2", rule="grid")
        if self.dt is None:
            self.dt = default_dt(g, self.delays)
        if not (self.dt > 0):
            raise ValidationError("dt must be positive", rule="grid")
        if self.dt >= tau0(g):
            raise ValidationError(
                f"dt={self.dt} must be smaller than the shortest transit time {tau0(g)}", rule="grid"
            )
        if self.horizon < 0:
            raise ValidationError("horizon must be >= 0", rule="grid")
        if self.initial_profile is None:
            self.initial_profile = np.zeros((g.m, self.nx))
        self.initial_profile = np.asarray(self.initial_profile)
        if self.initial_profile.shape != (g.m, self.nx):
            raise ValidationError(
                f"initial profile must have shape {(g.m, self.nx)}, got {self.initial_profile.shape}",
                rule="grid",
            )
        self.control = as_signal(self.control, g.n_inputs)
        if self.control.width != g.n_inputs:
            raise ValidationError(
                f"control has {self.control.width} channels, K has {g.n_inputs} columns", rule="control"
            )
        if self.initial_history is not None:
            phi0 = np.asarray(self.initial_history(0.0))
            scale = max(1.0, float(np.max(np.abs(self.initial_profile))))
            if phi0.shape != self.initial_profile.shape or np.max(np.abs(phi0 - self.initial_profile)) > 1e-9 * scale:
                raise IncompatibleInitialData("initial history at theta = 0 must equal the initial profile")

    @property
    def r(self):
        return horizon(self.delays)

    def history_at(self, theta):
        if self.initial_history is None:
            return self.initial_profile
        return np.asarray(self.initial_history(max(theta, -self.r)))


@dataclass
class SolutionRecord:
    times: np.ndarray
    inflow: np.ndarray  # z_j(t, 1), shape (n_steps, m)
    outflow: np.ndarray  # z_j(t, 0)
    mass: np.ndarray  # sum_j int_0^1 z_j(t, x) dx (trapezoid)
    snapshots: dict = field(default_factory=dict)
    final_profile: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def trace(self, component):
        if component in ("outflow", "z0", 0):
            return self.outflow
        if component in ("inflow", "z1", 1):
            return self.inflow
        raise ValueError(f"unknown trace component {component!r}")


class _Stepper:
    def __init__(self, sc):
        g = sc.graph
        self.sc = sc
        self.g = g
        self.kin = kinematics(g)
        self.xg = grid(sc.nx)
        self.dt = float(sc.dt)
        self.eps = 1e-9 * self.dt  # characteristics landing on a grid time count as entered
        self.n_steps = int(math.ceil(sc.horizon / self.dt - 1e-9))
        self.times = self.dt * np.arange(self.n_steps + 1)
        self.tau_x = np.array([k.tau_to_inflow(self.xg) for k in self.kin])
        self.gain_x = np.exp(np.array([k.xi_to_inflow(self.xg) for k in self.kin]))
        self.tau_tot = np.array([k.tau_total for k in self.kin])
        self.gain_tot = np.exp(np.array([k.xi_total for k in self.kin]))
        self.B = adjacency_B(g)
        self.c0 = g.c0
        self.c1 = g.c1
        self.K = g.control
        U = np.array([sc.control.component(l, self.times) for l in range(g.n_inputs)]).T
        self.U = U.reshape(self.n_steps + 1, g.n_inputs)
        dtype = np.result_type(self.U, sc.initial_profile, float)
        self.dtype = dtype
        self.b = np.zeros((self.n_steps + 1, g.m), dtype=dtype)
        self.z0 = np.zeros((self.n_steps + 1, g.m), dtype=dtype)
        self.delayed = any(not mu.is_zero for mu in sc.delays)
        self.buffer = None
        if self.delayed:
            self.buffer = HistoryBuffer(velocity_on_grid(g, sc.nx), self.dt, sc.r, dtype=dtype)
            n_hist = self.buffer.capacity - 2
            for i in range(n_hist, 0, -1):
                self.buffer.push(-i * self.dt, sc.history_at(-i * self.dt))

    def inflow_at(self, j, s, n_known):
        """Interpolate b_j at times s using samples 0..n_known (later times clamp)."""
        pos = np.clip(s / self.dt, 0.0, n_known)
        i = np.minimum(np.floor(pos).astype(int), max(n_known - 1, 0))
        frac = pos - i
        col = self.b[:, j]
        if n_known == 0:
            return np.full(np.shape(s), col[0])
        return col[i] + frac * (col[np.minimum(i + 1, n_known)] - col[i])

    def profile(self, n, n_known):
        t = self.times[n]
        out = np.zeros((self.g.m, self.sc.nx), dtype=self.dtype)
        for j, kin in enumerate(self.kin):
            entered = t >= self.tau_x[j] - self.eps
            if np.any(entered):
                out[j, entered] = self.gain_x[j, entered] * self.inflow_at(j, t - self.tau_x[j, entered], n_known)
            if not np.all(entered):
                rest = ~entered
                out[j, rest] = free_evolution(kin, self.xg, self.sc.initial_profile[j], self.xg[rest], t)
        return out

    def outflow_at(self, n):
        t = self.times[n]
        z = np.zeros(self.g.m, dtype=self.dtype)
        for j, kin in enumerate(self.kin):
            if t >= self.tau_tot[j] - self.eps:
                z[j] = self.gain_tot[j] * self.inflow_at(j, np.array([t - self.tau_tot[j]]), n - 1)[0]
            else:
                z[j] = free_evolution(kin, self.xg, self.sc.initial_profile[j], np.array([0.0]), t)[0]
        return z

    def run(self):
        sc = self.sc
        w = trapezoid_weights(sc.nx)
        mass = np.zeros(self.n_steps + 1, dtype=self.dtype)
        snaps = {}
        wanted = {int(round(ts / self.dt)): ts for ts in sc.snapshot_times}
        profile = None
        for n, t in enumerate(self.times):
            self.z0[n] = self.outflow_at(n)
            rhs = self.c0 * self.z0[n]
            if self.delayed:
                provisional = self.profile(n, max(n - 1, 0)) if n > 0 else sc.initial_profile
                self.buffer.push(t, provisional)
                rhs = rhs + delay_L(sc.delays, self.buffer, t)
            self.b[n] = (self.B @ rhs + self.K @ self.U[n]) / self.c1
            if not np.all(np.isfinite(self.b[n])) or np.max(np.abs(self.b[n])) > BLOWUP:
                raise NonFiniteState(f"inflow trace exceeded {BLOWUP:g} at t={t}", time=float(t))
            profile = self.profile(n, n) if n > 0 else sc.initial_profile
            if self.delayed:
                self.buffer.replace_latest(profile)
            mass[n] = np.sum(profile @ w)
            if n in wanted:
                snaps[wanted[n]] = profile.copy()
        residual = np.max(np.abs(sc.initial_profile[:, -1] - self.b[0])) if self.n_steps >= 0 else 0.0
        if residual > 1e-9:
            log.info("boundary residual at t=0: %.3e (mild solution, not rejected)", residual)
        meta = {
            "dt": self.dt,
            "nx": sc.nx,
            "horizon": float(self.times[-1]),
            "steps": self.n_steps,
            "delay_horizon": sc.r,
            "truncation_depth": self.g.truncation_depth,
            "boundary_residual_t0": float(residual),
        }
        return SolutionRecord(
            times=self.times,
            inflow=self.b,
            outflow=self.z0,
            mass=mass,
            snapshots=snaps,
            final_profile=profile,
            metadata=meta,
        )


def solve(sc):
    """Integrate the scenario on ``[0, horizon]`` and return the traces."""
    return _Stepper(sc).run()


@dataclass
class LaplaceResult:
    value: np.ndarray
    tail_bound: float
    growth_rate: float


def _envelope(times, f):
    """Growth rate and final magnitude of ``max_j |f_j|`` over the last part of the run."""
    mag = np.max(np.abs(f), axis=1)
    n = times.size
    if n < 8:
        return 0.0, float(mag[-1])
    w = n // 4
    m1 = float(np.max(mag[n - 2 * w : n - w]))
    m2 = float(np.max(mag[n - w :]))
    span = times[n - 1] - times[n - w - 1]
    if m2 == 0.0:
        return -np.inf, 0.0
    if m1 == 0.0:
        return np.inf, m2
    return math.log(m2 / m1) / span, m2


def laplace_of_trace(rec, lam, component="outflow", method="trapezoid", tol=None):
    """Numerical Laplace transform of a boundary trace over the run.

    ``method="trapezoid"`` is the composite trapezoid rule on the solver
    grid; ``method="linear"`` integrates the piecewise-linear interpolant of
    the trace against ``exp(-lam t)`` exactly. The tail beyond the horizon is
    bounded from the trace envelope; with ``tol`` set, a larger bound raises
    :class:`TailNotNegligible`.
    """
    f = rec.trace(component)
    t = rec.times
    if method == "trapezoid":
        vals = np.exp(-lam * t)[:, None] * f
        h = np.diff(t)[:, None]
        value = np.sum(0.5 * h * (vals[1:] + vals[:-1]), axis=0)
    elif method == "linear":
        value = _laplace_piecewise_linear(t, f, lam)
    else:
        raise ValueError(f"unknown method {method!r}")
    sigma, last = _envelope(t, f)
    re = float(np.real(lam))
    if last == 0.0:
        tail = 0.0
    elif re > sigma:
        tail = last * math.exp(-re * t[-1]) / (re - sigma)
    else:
        tail = math.inf
    if tol is not None and tail > tol:
        raise TailNotNegligible(f"tail bound {tail:.3e} exceeds {tol:.3e} (growth rate {sigma:.3f})")
    return LaplaceResult(value, tail, sigma)


def _laplace_piecewise_linear(t, f, lam):
    # exact weights of int exp(-lam s) * hat_i(s) ds on a uniform grid
    h = t[1] - t[0]
    z = lam * h
    e = np.exp(-lam * t)
    if abs(z) < 1e-6:
        a = h * (0.5 - z / 3 + z * z / 8)
        b = h * (0.5 - z / 6 + z * z / 24)
    else:
        em = np.exp(-z)
        a = (1 - (1 + z) * em) / (lam * z)  # weight of right node of a cell, times e_left
        b = (z - 1 + em) / (lam * z)  # weight of left node, times e_left
    left = e[:-1, None] * (b * f[:-1] + a * f[1:])
    return np.sum(left, axis=0)


@dataclass
class ReachabilityResult:
    gram: np.ndarray  # probe x probe, L2 on the grid
    edge_gram: np.ndarray  # m x m, span of pointwise edge vectors
    rank: int
    edge_rank: int
    singular_values: np.ndarray
    edge_singular_values: np.ndarray
    states: np.ndarray


def reachability_gramian(sc, t_end, probes, rank_tol=1e-8):
    """Gram matrices of the states reached from zero data by each probe control.

    ``gram`` holds the L2-on-grid inner products of the final profiles.
    ``edge_gram`` is ``sum_x Z(x) Z(x)^*`` over all probes and grid points,
    whose rank is the dimension of the edge-space span of the reached values;
    on a finite section this is the quantity the Kalman rank bounds.
    """
    from .controllability import rank_with_tolerance

    g = sc.graph
    w = trapezoid_weights(sc.nx)
    states = []
    for p in probes:
        run = Scenario(
            graph=g,
            horizon=t_end,
            delays=sc.delays,
            control=p,
            dt=sc.dt,
            nx=sc.nx,
        )
        states.append(solve(run).final_profile)
    states = np.array(states)
    P = len(states)
    gram = np.zeros((P, P), dtype=np.result_type(states, float))
    for a in range(P):
        for b in range(P):
            gram[a, b] = np.sum((states[a] * np.conj(states[b])) @ w)
    flat = np.concatenate([s * np.sqrt(w)[None, :] for s in states], axis=1) if P else np.zeros((g.m, 0))
    edge_gram = flat @ flat.conj().T
    rank, sv = rank_with_tolerance(gram, rank_tol)
    erank, esv = rank_with_tolerance(flat, rank_tol)
    return ReachabilityResult(gram, edge_gram, rank, erank, sv, esv, states)
