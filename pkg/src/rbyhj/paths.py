"""Driving signals on a uniform time grid.

Random paths use :func:`numpy.random.default_rng` (PCG64, 64-bit seeds);
:data:`RNG_NAME` is written into experiment metadata.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = [
    "RNG_NAME",
    "DrivingPath",
    "PathStats",
    "brownian",
    "fractional_brownian",
    "deterministic",
    "running_extrema",
    "partition_indices",
    "flatten",
    "unflatten",
]

RNG_NAME = f"numpy.random.PCG64 (numpy {np.__version__})"


@dataclass(frozen=True)
class DrivingPath:
    """Signal ``xi`` on ``times = linspace(0, T, n + 1)``.

    ``values`` is the continuous part with ``values[0] = 0``.  ``jumps`` maps
    a node index ``i >= 1`` to ``xi(t_i+) - xi(t_i-)``; the jump is taken
    right after the continuous increment of the cell ending at ``t_i``.
    """

    times: np.ndarray
    values: np.ndarray
    jumps: tuple = field(default=())

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("times and values must be 1-D arrays of equal length >= 2")
        if t[0] != 0.0:
            raise ValueError("paths start at t = 0")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("times must be strictly increasing")
        if np.max(np.abs(dt - dt.mean())) > 1e-9 * dt.mean():
            raise ValueError("times must be uniform")
        if v[0] != 0.0:
            raise ValueError("paths satisfy xi(0) = 0")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        jumps = tuple(sorted((int(i), float(d)) for i, d in self.jumps))
        for i, _ in jumps:
            if not 1 <= i < t.size:
                raise ValueError(f"jump index {i} outside 1..{t.size - 1}")
        if len({i for i, _ in jumps}) != len(jumps):
            raise ValueError("at most one jump per node")
        object.__setattr__(self, "jumps", jumps)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        """Number of cells."""
        return self.times.size - 1

    @property
    def dt(self) -> float:
        return self.T / self.n

    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def jump_array(self) -> np.ndarray:
        """Jump size per node (zero where none)."""
        out = np.zeros(self.times.size)
        for i, d in self.jumps:
            out[i] = d
        return out

    def total(self) -> np.ndarray:
        """``xi(t_i+)``: continuous part plus all jumps up to and including ``t_i``."""
        return self.values + np.cumsum(self.jump_array())

    def scaled(self, c: float) -> "DrivingPath":
        return DrivingPath(self.times, c * self.values, tuple((i, c * d) for i, d in self.jumps))

    def __neg__(self) -> "DrivingPath":
        return self.scaled(-1.0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,xi\n")
        for t, v in zip(self.times, self.values):
            buf.write(f"{t:.15e},{v:.15e}\n")
        return buf.getvalue()

    def jumps_csv(self) -> str:
        lines = ["t_index,delta"] + [f"{i},{d:.15e}" for i, d in self.jumps]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, jumps_text: str | None = None) -> "DrivingPath":
        data = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        jumps = ()
        if jumps_text:
            jd = np.loadtxt(io.StringIO(jumps_text), delimiter=",", skiprows=1, ndmin=2)
            jumps = tuple((int(i), float(d)) for i, d in jd)
        return cls(data[:, 0], data[:, 1], jumps)


@dataclass(frozen=True)
class PathStats:
    running_max: np.ndarray
    running_min: np.ndarray


def _times(T: float, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one time step")
    if not T > 0:
        raise ValueError("horizon T must be positive")
    return np.linspace(0.0, T, n + 1)


def brownian(T: float, n: int, sigma: float = 1.0, seed: int = 0) -> DrivingPath:
    """``sigma`` times a Brownian motion sampled at ``n + 1`` uniform times."""
    t = _times(T, n)
    g = np.random.default_rng(seed).standard_normal(n)
    vals = np.concatenate(([0.0], np.cumsum(sigma * np.sqrt(T / n) * g)))
    return DrivingPath(t, vals)


def fractional_brownian(T: float, n: int, H: float, seed: int = 0) -> DrivingPath:
    """Exact fBm sample via Cholesky factorization of its covariance.

    Raises
    ------
    ValueError
        If ``H`` is outside ``(0, 1)``, ``n > 4096``, or the covariance is
        numerically not positive definite.
    """
    if not 0 < H < 1:
        raise ValueError("Hurst parameter must lie in (0, 1)")
    if n > 4096:
        raise ValueError("exact fBm sampling is limited to n <= 4096")
    t = _times(T, n)
    s = t[1:]
    h2 = 2.0 * H
    cov = 0.5 * (s[:, None] ** h2 + s[None, :] ** h2 - np.abs(s[:, None] - s[None, :]) ** h2)
    try:
        chol = scipy.linalg.cholesky(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"fBm covariance not positive definite (H={H}, n={n})") from exc
    g = np.random.default_rng(seed).standard_normal(n)
    return DrivingPath(t, np.concatenate(([0.0], chol @ g)))


def deterministic(kind: str, T: float, n: int, c: float = 1.0, amplitude: float = 1.0,
                  omega: float = 1.0) -> DrivingPath:
    """``"zero"``, ``"linear"`` (``c t``) or ``"sine"`` (``amplitude sin(omega t)``)."""
    t = _times(T, n)
    if kind == "zero":
        v = np.zeros_like(t)
    elif kind == "linear":
        v = c * t
    elif kind == "sine":
        v = amplitude * np.sin(omega * t)
    else:
        raise ValueError(f"unknown deterministic path kind {kind!r}")
    return DrivingPath(t, v)


def running_extrema(xi: DrivingPath) -> PathStats:
    """Prefix max and min of ``xi(t_i+)`` over the grid."""
    v = xi.total()
    return PathStats(np.maximum.accumulate(v), np.minimum.accumulate(v))


def partition_indices(path: DrivingPath, partition=None) -> np.ndarray:
    """Node indices of a partition of ``path``.

    ``partition`` is ``None`` (every node), a cell count dividing ``path.n``,
    or an explicit increasing index array from 0 to ``path.n``.
    """
    if partition is None:
        return np.arange(path.times.size)
    if isinstance(partition, (int, np.integer)):
        stride = path.n // int(partition)
        if partition < 1 or stride * int(partition) != path.n:
            raise ValueError(f"partition count {partition} does not divide {path.n} path steps")
        return np.arange(0, path.n + 1, stride)
    idx = np.asarray(partition, dtype=int)
    if idx[0] != 0 or idx[-1] != path.n or np.any(np.diff(idx) <= 0):
        raise ValueError("partition must be increasing node indices from 0 to n")
    return idx


def flatten(xi: DrivingPath) -> tuple[DrivingPath, np.ndarray]:
    """Continuous path in fictitious time that traverses each jump linearly.

    One extra cell of length ``dt`` is inserted after every jump node and the
    horizon grows accordingly.  Returns the flat path and, for every original
    node, its index in the flat grid.
    """
    jumps = dict(xi.jumps)
    inc = xi.increments()
    flat_inc = []
    where = [0]
    for i in range(1, xi.times.size):
        flat_inc.append(inc[i - 1])
        if i in jumps:
            flat_inc.append(jumps[i])
        where.append(len(flat_inc))
    n = len(flat_inc)
    times = np.linspace(0.0, xi.dt * n, n + 1)
    vals = np.concatenate(([0.0], np.cumsum(flat_inc)))
    return DrivingPath(times, vals), np.array(where)


def unflatten(flat: DrivingPath, where: np.ndarray, T: float) -> DrivingPath:
    """Inverse of :func:`flatten` given the node map it returned."""
    inc = flat.increments()
    n = len(where) - 1
    cont = np.empty(n)
    jumps = []
    for i in range(1, n + 1):
        start = where[i - 1]
        cont[i - 1] = inc[start]
        if where[i] - start == 2:
            jumps.append((i, float(inc[start + 1])))
    times = np.linspace(0.0, T, n + 1)
    return DrivingPath(times, np.concatenate(([0.0], np.cumsum(cont))), tuple(jumps))
