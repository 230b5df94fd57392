"""Time signals with an interpolation rule (edge traces, controls, probes)."""
from __future__ import annotations

import numpy as np

from .errors import SignalTooShort


class SampledSignal:
    """Vector signal known at sample times, linearly interpolated in between.

    ``values`` has shape ``(len(times), width)``. Evaluation outside
    ``[times[0], times[-1]]`` raises :class:`SignalTooShort` unless
    ``fill`` is given, in which case that value is used.
    """

    def __init__(self, times, values, fill=None):
        self.times = np.asarray(times, dtype=float)
        vals = np.asarray(values)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if vals.shape[0] != self.times.size:
            raise ValueError("times and values have different lengths")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("sample times must be increasing")
        self.values = vals
        self.fill = fill

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def component(self, j, s):
        s = np.asarray(s, dtype=float)
        t0, t1 = self.span
        tol = 1e-12 * max(1.0, abs(t1))
        outside = (s < t0 - tol) | (s > t1 + tol)
        if self.fill is None and np.any(outside):
            bad = s[outside]
            raise SignalTooShort(
                f"signal known on [{t0}, {t1}], requested t in [{bad.min()}, {bad.max()}]"
            )
        col = self.values[:, j]
        if np.iscomplexobj(col):
            out = np.interp(s, self.times, col.real) + 1j * np.interp(s, self.times, col.imag)
        else:
            out = np.interp(s, self.times, col)
        if self.fill is not None and np.any(outside):
            out = np.where(outside, self.fill, out)
        return out

    def __call__(self, t):
        return np.array([self.component(j, t) for j in range(self.width)])


class FunctionSignal:
    """Wraps ``f(t) -> vector``; ``f`` may or may not accept arrays."""

    def __init__(self, fn, width=None):
        self.fn = fn
        self._width = width

    @property
    def width(self):
        if self._width is None:
            self._width = np.atleast_1d(self.fn(0.0)).size
        return self._width

    def _eval(self, s):
        s = np.asarray(s, dtype=float)
        try:
            out = np.asarray(self.fn(s))
            if out.shape == (self.width,) + s.shape or (s.ndim == 0 and out.size == self.width):
                return out.reshape((self.width,) + s.shape)
        except Exception:
            pass
        rows = [np.atleast_1d(self.fn(float(si))) for si in s.ravel()]
        return np.array(rows).T.reshape((self.width,) + s.shape)

    def component(self, j, s):
        return self._eval(s)[j]

    def __call__(self, t):
        return np.atleast_1d(self._eval(t))


class ExponentialSignal:
    """``t -> exp(rate * t) * amplitude`` for t >= 0, zero before (rate may be complex)."""

    def __init__(self, amplitude, rate=0.0):
        self.amplitude = np.atleast_1d(np.asarray(amplitude))
        self.rate = rate

    @property
    def width(self):
        return self.amplitude.size

    def component(self, j, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, self.amplitude[j] * np.exp(self.rate * np.maximum(s, 0.0)), 0.0)

    def __call__(self, t):
        return np.array([self.component(j, t) for j in range(self.width)])

    def laplace(self, lam):
        """Laplace transform, valid for Re lam > Re rate."""
        return self.amplitude / (lam - self.rate)


class SumSignal:
    def __init__(self, *parts):
        self.parts = parts

    @property
    def width(self):
        return self.parts[0].width

    def component(self, j, s):
        return sum(p.component(j, s) for p in self.parts)

    def __call__(self, t):
        return np.array([self.component(j, t) for j in range(self.width)])

    def laplace(self, lam):
        return sum(p.laplace(lam) for p in self.parts)


class ScaledSignal:
    def __init__(self, signal, factor):
        self.signal = signal
        self.factor = factor

    @property
    def width(self):
        return self.signal.width

    def component(self, j, s):
        return self.factor * self.signal.component(j, s)

    def __call__(self, t):
        return self.factor * self.signal(t)

    def laplace(self, lam):
        return self.factor * self.signal.laplace(lam)


class IndicatorSignal:
    """``amplitude`` on the half-open window [start, stop), zero elsewhere."""

    def __init__(self, amplitude, start, stop):
        self.amplitude = np.atleast_1d(np.asarray(amplitude, dtype=float))
        self.start = float(start)
        self.stop = float(stop)

    @property
    def width(self):
        return self.amplitude.size

    def component(self, j, s):
        s = np.asarray(s, dtype=float)
        return np.where((s >= self.start) & (s < self.stop), self.amplitude[j], 0.0)

    def __call__(self, t):
        return np.array([self.component(j, t) for j in range(self.width)])


def as_signal(obj, width=None):
    if obj is None:
        return ExponentialSignal(np.zeros(width or 1), 0.0)
    if hasattr(obj, "component"):
        return obj
    if callable(obj):
        return FunctionSignal(obj, width)
    arr = np.atleast_1d(np.asarray(obj))
    return ExponentialSignal(arr, 0.0)
