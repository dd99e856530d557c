"""Drift catalog for the bound process and assembly of two-sided bounds.

Semiconcavity bounds read ``D2 u(t) <= 1 / L_plus(t)`` with ``L_plus``
driven by ``+xi``; semiconvexity bounds read ``D2 u(t) >= -1 / L_minus(t)``
with ``L_minus`` driven by ``-xi`` and the drift of the mirrored
nonlinearity ``F_minus(p, X) = -F(-p, -X)``.  An initial level of ``0``
encodes an infinite initial bound and ``inf`` a vanishing one.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import GridFn, second_diff
from .paths import DrivingPath
from .pde_step import FirstOrder, FullyNonlinear1D, ProblemSpec, Quasilinear, Zero
from .reflected import (
    DriftSpec,
    ReflectedTrajectory,
    affine_inverse_drift,
    constant_drift,
    discrete_scheme,
    quadratic_drift,
    zero_drift,
)

__all__ = [
    "BoundCurve",
    "drift_for",
    "phi_to_drift",
    "initial_levels",
    "bound_curve",
    "lipschitz_decay",
]

SIGNS = ("plus", "minus")


def drift_for(spec: ProblemSpec, sign: str = "plus") -> DriftSpec:
    """Catalog drift ``V_F`` for ``F_plus = F`` or its mirror ``F_minus``.

    All shipped classes are x-independent, and their sup-norm constants are
    invariant under ``F -> -F(-p, -X)``, so both signs give the same drift.
    """
    if sign not in SIGNS:
        raise ValueError(f"sign must be one of {SIGNS}")
    if isinstance(spec, Zero):
        return zero_drift()
    if isinstance(spec, FirstOrder):
        return constant_drift(spec.fpp_norm)
    if isinstance(spec, Quasilinear):
        return affine_inverse_drift(0.0, 0.0, spec.N * spec.app_norm)
    if isinstance(spec, FullyNonlinear1D):
        if spec.semiconcavity == 0:
            return zero_drift()
        return quadratic_drift(spec.semiconcavity)
    raise TypeError(f"no catalog drift for {type(spec).__name__}")


def phi_to_drift(Phi: Callable, name: str = "-l^2 Phi(1/l)") -> DriftSpec:
    """``V(l) = -l**2 Phi(1/l)``; the flow is integrated numerically."""

    def V(l):
        l = np.asarray(l, dtype=float)
        return -(l**2) * Phi(1.0 / l)

    return DriftSpec(V, None, False, 0.0, name)


def initial_levels(u0: GridFn, exclude_edges: int = 0) -> tuple[float, float]:
    """``(1 / max (D2 u0)_+, 1 / max (D2 u0)_-)`` with ``1/0 = inf``."""
    rep = second_diff(u0, exclude_edges)

    def inv(m):
        return math.inf if m <= 0 else 1.0 / m

    return inv(rep.max_plus), inv(rep.max_minus)


def _inv(L: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(L > 0, 1.0 / np.where(L > 0, L, 1.0), np.inf)


@dataclass(frozen=True)
class BoundCurve:
    """``bound = 1 / min(L_plus, L_minus)``; ``upper``/``lower`` bound each side."""

    times: np.ndarray
    L_plus: np.ndarray
    L_minus: np.ndarray

    @property
    def bound(self) -> np.ndarray:
        return _inv(np.minimum(self.L_plus, self.L_minus))

    @property
    def upper(self) -> np.ndarray:
        """Bound on ``max (D2 u)_+``."""
        return _inv(self.L_plus)

    @property
    def lower(self) -> np.ndarray:
        """Bound on ``max (D2 u)_-``."""
        return _inv(self.L_minus)

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the bound partition")
        return i

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,L_plus,L_minus,bound\n")
        for row in zip(self.times, self.L_plus, self.L_minus, self.bound):
            buf.write(",".join("inf" if math.isinf(v) else f"{v:.15e}" for v in row) + "\n")
        return buf.getvalue()


def bound_curve(spec: ProblemSpec, path: DrivingPath, l0_plus: float, l0_minus: float,
                partition=None) -> tuple[ReflectedTrajectory, ReflectedTrajectory, BoundCurve]:
    """Run the bound processes for ``(V_plus, +xi)`` and ``(V_minus, -xi)``."""
    Lp = discrete_scheme(drift_for(spec, "plus"), path, l0_plus, partition)
    Lm = discrete_scheme(drift_for(spec, "minus"), -path, l0_minus, partition)
    return Lp, Lm, BoundCurve(Lp.times, Lp.L, Lm.L)


def lipschitz_decay(osc: float, L_plus, L_minus) -> np.ndarray:
    """``t -> min_{s <= t} sqrt(2 osc / max(L_plus, L_minus)(s))``."""
    if osc < 0:
        raise ValueError("oscillation is nonnegative")
    lp = np.asarray(getattr(L_plus, "L", L_plus), dtype=float)
    lm = np.asarray(getattr(L_minus, "L", L_minus), dtype=float)
    if osc == 0:
        return np.zeros(lp.shape)
    top = np.maximum(lp, lm)
    with np.errstate(divide="ignore"):
        pointwise = np.where(top > 0, np.sqrt(2.0 * osc / np.where(top > 0, top, 1.0)), np.inf)
    return np.minimum.accumulate(pointwise)
