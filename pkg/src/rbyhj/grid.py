"""Uniform 1D grid functions and the discrete estimators built on them.

A :class:`GridFn` stores node values of a function on either a periodic
grid (period ``n * h``) or a bounded line segment.  Second differences on a
line grid use constant extension past the two end nodes.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridFn",
    "SecondDiffReport",
    "second_diff",
    "second_diff_values",
    "lipschitz_norm",
    "oscillation",
    "periodic_grid",
    "line_grid",
]


@dataclass(frozen=True)
class GridFn:
    """Real function sampled on a uniform grid.

    Parameters
    ----------
    values : array_like
        Node values, ``values[i]`` lives at ``origin + i * h``.
    h : float
        Grid spacing.
    periodic : bool
        If true the grid wraps around with period ``len(values) * h``.
    origin : float
        Coordinate of node 0.
    """

    values: np.ndarray
    h: float
    periodic: bool = True
    origin: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1:
            raise ValueError("GridFn values must be one-dimensional")
        if vals.size < 3:
            raise ValueError("GridFn needs at least 3 nodes")
        if not self.h > 0:
            raise ValueError(f"grid spacing must be positive, got {self.h}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("GridFn values must be finite")

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.n)

    @property
    def period(self) -> float | None:
        return self.n * self.h if self.periodic else None

    def with_values(self, values) -> "GridFn":
        """Same grid, new node values."""
        return GridFn(values, self.h, self.periodic, self.origin)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("x,value\n")
        for xi, vi in zip(self.x, self.values):
            buf.write(f"{xi:.15e},{vi:.15e}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, periodic: bool = True) -> "GridFn":
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        x, v = data[:, 0], data[:, 1]
        h = float(np.mean(np.diff(x)))
        return cls(v, h, periodic, float(x[0]))


def periodic_grid(func, n: int, period: float, origin: float = 0.0) -> GridFn:
    """Sample ``func`` on ``n`` nodes covering one period."""
    h = period / n
    x = origin + h * np.arange(n)
    return GridFn(func(x), h, True, origin)


def line_grid(func, n: int, a: float, b: float) -> GridFn:
    """Sample ``func`` on ``n`` nodes spanning ``[a, b]`` inclusive."""
    x = np.linspace(a, b, n)
    return GridFn(func(x), (b - a) / (n - 1), False, a)


def _neighbours(u: GridFn):
    v = u.values
    if u.periodic:
        return np.roll(v, 1), np.roll(v, -1)
    left = np.concatenate(([v[0]], v[:-1]))
    right = np.concatenate((v[1:], [v[-1]]))
    return left, right


def second_diff_values(u: GridFn) -> np.ndarray:
    """Central second differences ``(u[i+1] - 2 u[i] + u[i-1]) / h**2``."""
    left, right = _neighbours(u)
    return (right - 2.0 * u.values + left) / u.h**2


@dataclass(frozen=True)
class SecondDiffReport:
    """Largest positive and negative parts of the discrete second derivative."""

    max_plus: float
    max_minus: float
    argmax_plus: int
    argmax_minus: int
    values: np.ndarray = field(repr=False, compare=False)

    @property
    def max_abs(self) -> float:
        return max(self.max_plus, self.max_minus)


def second_diff(u: GridFn, exclude_edges: int = 0) -> SecondDiffReport:
    """Report ``sup (D2 u)`` and ``sup (-D2 u)`` over the grid.

    ``exclude_edges`` drops that many nodes at each end of a line grid from
    the maxima; it is ignored for periodic grids.
    """
    d2 = second_diff_values(u)
    idx = np.arange(u.n)
    if exclude_edges and not u.periodic:
        idx = idx[exclude_edges:u.n - exclude_edges]
    sub = d2[idx]
    ip = int(idx[np.argmax(sub)])
    im = int(idx[np.argmin(sub)])
    # +0.0 turns -0.0 into 0.0 for affine inputs
    return SecondDiffReport(float(d2[ip]) + 0.0, float(-d2[im]) + 0.0, ip, im, d2)


def lipschitz_norm(u: GridFn) -> float:
    """Largest absolute forward difference quotient."""
    v = u.values
    diffs = np.diff(v)
    if u.periodic:
        diffs = np.append(diffs, v[0] - v[-1])
    return float(np.max(np.abs(diffs)) / u.h)


def oscillation(u: GridFn) -> float:
    """``max(u) - min(u)``."""
    return float(np.max(u.values) - np.min(u.values))
