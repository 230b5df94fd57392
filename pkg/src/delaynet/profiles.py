"""Piecewise-constant functions on a closed interval.

Velocities c_j and absorptions q_j live on [0, 1]; delay densities live on
[-r, 0]. Everything downstream relies on these being piecewise constant so
that travel times and exponential integrals have closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True, eq=False)
class PiecewiseConstant:
    """Right-continuous step function; the last piece also owns the right end."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).ravel()
        vals = np.array(self.values, dtype=float).ravel()
        if bp.size < 2:
            raise ValidationError("need at least two breakpoints", rule="profile")
        if vals.size != bp.size - 1:
            raise ValidationError(
                f"{bp.size} breakpoints need {bp.size - 1} values, got {vals.size}",
                rule="profile",
            )
        if not np.all(np.diff(bp) > 0):
            raise ValidationError("breakpoints must be strictly increasing", rule="profile")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("profile values must be finite", rule="profile")
        bp.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value, lo=0.0, hi=1.0):
        return cls([lo, hi], [value])

    @classmethod
    def coerce(cls, obj, lo=0.0, hi=1.0):
        """Accept a PiecewiseConstant, a scalar, a ``(breakpoints, values)`` pair or a mapping."""
        if isinstance(obj, cls):
            return obj
        if isinstance(obj, dict):
            return cls(obj["breakpoints"], obj["values"])
        if np.isscalar(obj):
            return cls.constant(float(obj), lo, hi)
        bp, vals = obj
        return cls(bp, vals)

    @property
    def lo(self):
        return float(self.breakpoints[0])

    @property
    def hi(self):
        return float(self.breakpoints[-1])

    @property
    def widths(self):
        return np.diff(self.breakpoints)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        idx = np.clip(idx, 0, self.values.size - 1)
        return self.values[idx]

    def map(self, fn):
        return PiecewiseConstant(self.breakpoints, fn(self.values))

    def cumulative(self, piece_values=None):
        """Knot values of ``y -> integral from lo to y``; piecewise linear in y."""
        vals = self.values if piece_values is None else piece_values
        return np.concatenate([[0.0], np.cumsum(vals * self.widths)])

    def integral(self):
        return float(np.sum(self.values * self.widths))

    def refine(self, other):
        """Return the common refinement of two partitions of the same interval."""
        bp = np.union1d(self.breakpoints, other.breakpoints)
        return bp

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    def __eq__(self, other):
        if not isinstance(other, PiecewiseConstant):
            return NotImplemented
        return np.array_equal(self.breakpoints, other.breakpoints) and np.array_equal(
            self.values, other.values
        )

    def __hash__(self):
        return hash((self.breakpoints.tobytes(), self.values.tobytes()))

    def __repr__(self):
        return f"PiecewiseConstant({self.breakpoints.tolist()}, {self.values.tolist()})"
