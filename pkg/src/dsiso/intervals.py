"""Interval vectors and the sign-split bounding primitive.

All framer equations in the observer reduce to bounding a linear map
over a box: for ``lo <= x <= hi``,

    M+ lo - M- hi  <=  M x  <=  M+ hi - M- lo

with ``M+ = max(M, 0)`` and ``M- = M+ - M``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# slack used when two neighbours' bounds cross by floating-point noise only
INTERSECTION_RTOL = 1e-9


class EmptyIntersection(ValueError):
    """Raised when two framers that should both contain the truth are disjoint."""

    def __init__(self, indices, lower, upper):
        self.indices = np.asarray(indices)
        self.lower = np.asarray(lower)
        self.upper = np.asarray(upper)
        super().__init__(
            f"empty intersection in dimensions {self.indices.tolist()}: "
            f"lower={self.lower.tolist()} upper={self.upper.tolist()}"
        )


@dataclass(frozen=True)
class IntervalVector:
    """Box ``[lower, upper]`` in R^n."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError(f"interval bounds must be 1-D of equal length, got {lo.shape} and {hi.shape}")
        bad = np.flatnonzero(~(lo <= hi))
        if bad.size:
            raise ValueError(f"lower > upper (or NaN) at indices {bad.tolist()}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def point(cls, x) -> IntervalVector:
        x = np.asarray(x, dtype=float)
        return cls(x, x)

    @classmethod
    def symmetric(cls, radius, center=0.0) -> IntervalVector:
        r = np.asarray(radius, dtype=float)
        c = np.broadcast_to(np.asarray(center, dtype=float), r.shape)
        return cls(c - r, c + r)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lower - atol <= x) and np.all(x <= self.upper + atol))

    def __len__(self):
        return self.dim

    def __repr__(self):
        return f"IntervalVector(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True)
class SplitMatrix:
    plus: np.ndarray
    minus: np.ndarray
    abs: np.ndarray


def split(M) -> SplitMatrix:
    """Return ``(M+, M-, |M|)`` for a real matrix."""
    M = np.asarray(M, dtype=float)
    plus = np.maximum(M, 0.0)
    minus = plus - M
    return SplitMatrix(plus, minus, plus + minus)


def bound_linear_map(M, interval: IntervalVector) -> IntervalVector:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != interval.dim:
        raise ValueError(f"matrix has {M.shape[1]} columns but interval has dimension {interval.dim}")
    s = split(M)
    lo = s.plus @ interval.lower - s.minus @ interval.upper
    hi = s.plus @ interval.upper - s.minus @ interval.lower
    return IntervalVector(lo, hi)


def resolve_crossing(lower: np.ndarray, upper: np.ndarray, scale=None, rtol: float = INTERSECTION_RTOL,
                     own=None):
    """Repair bounds that cross by rounding noise; raise if they truly cross.

    Returns new ``(lower, upper)`` arrays. Entries with ``lower > upper`` by
    at most ``rtol * (1 + scale)`` are swapped, which keeps every value that
    lies between the two bounds. ``scale`` is the magnitude of the terms the
    bounds were computed from and defaults to the larger bound magnitude.
    With ``own = (lo, hi)``, the receiver's interval before the exchange,
    the swapped entries are clipped to it so they never widen.
    """
    gap = lower - upper
    crossed = gap > 0
    if not crossed.any():
        return lower, upper
    if scale is None:
        scale = np.maximum(np.abs(lower), np.abs(upper))
    fatal = crossed & (gap > rtol * (1.0 + scale))
    if fatal.any():
        idx = np.argwhere(fatal)
        raise EmptyIntersection(idx.squeeze(-1) if idx.shape[1] == 1 else idx, lower[fatal], upper[fatal])
    lo = np.where(crossed, upper, lower)
    hi = np.where(crossed, lower, upper)
    if own is not None:
        lo = np.where(crossed, np.maximum(lo, own[0]), lo)
        hi = np.where(crossed, np.minimum(hi, own[1]), hi)
    return lo, hi


def intersect(a: IntervalVector, b: IntervalVector) -> IntervalVector:
    """Elementwise intersection; raises :class:`EmptyIntersection` when disjoint."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    lo = np.maximum(a.lower, b.lower)
    hi = np.minimum(a.upper, b.upper)
    bad = np.flatnonzero(lo > hi)
    if bad.size:
        raise EmptyIntersection(bad, lo[bad], hi[bad])
    return IntervalVector(lo, hi)
