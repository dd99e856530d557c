"""Explicit monotone schemes for the deterministic part ``dv/dt = F(Dv, D2v)``.

Three autonomous 1D classes are supported, plus the trivial ``Zero`` class:

* :class:`FirstOrder` -- ``F(u_x)``, Lax-Friedrichs.
* :class:`Quasilinear` -- ``a(u_x) u_xx``, written in divergence form
  ``d/dx A(u_x)`` with ``A' = a`` so the update is monotone.
* :class:`FullyNonlinear1D` -- ``F(u_xx)`` with ``F`` nondecreasing.

Gradients entering a coefficient are clamped to ``[-R, R]`` where ``R`` is
the Lipschitz constant of the initial datum; monotone schemes never increase
it, so the clamp only guards rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .grid import GridFn

__all__ = [
    "CFLError",
    "ProblemSpec",
    "Zero",
    "FirstOrder",
    "Quasilinear",
    "FullyNonlinear1D",
    "StepPlan",
    "p_laplace",
    "optimality_problem",
    "step_first_order",
    "step_quasilinear",
    "step_fully_nonlinear_1d",
    "plan_steps",
    "evolve_F",
]

# sampling resolution, relative to R, for sup-norm constants
SAMPLE_RES = 1e-3
# inflation applied to sampled sup-norms so sampling never understates them
SAFETY = 1.01


class CFLError(ValueError):
    """Raised when a time step exceeds the monotonicity limit."""

    def __init__(self, dt: float, dt_max: float, scheme: str):
        super().__init__(f"{scheme}: dt={dt:.6g} exceeds admissible dt_max={dt_max:.6g}")
        self.dt = dt
        self.dt_max = dt_max


def _sample(R: float) -> np.ndarray:
    n = max(int(round(2.0 / SAMPLE_RES)), 2) + 1
    return np.linspace(-R, R, n)


def _sampled_second_derivative_norm(f: Callable, R: float) -> float:
    p = _sample(R)
    dp = p[1] - p[0]
    fp = f(p)
    d2 = (fp[2:] - 2.0 * fp[1:-1] + fp[:-2]) / dp**2
    return SAFETY * float(np.max(np.abs(d2)))


@dataclass(frozen=True)
class ProblemSpec:
    """Base for the deterministic part; ``R`` bounds the gradients, ``N`` the dimension."""

    R: float = 1.0
    N: int = 1

    def __post_init__(self):
        if self.N != 1:
            raise ValueError("only N = 1 is implemented")
        if not self.R > 0:
            raise ValueError("gradient radius R must be positive")

    def with_radius(self, R: float):
        return _replace(self, R=R)

    def dt_max(self, u: GridFn) -> float:
        raise NotImplementedError

    def step(self, u: GridFn, dt: float) -> GridFn:
        raise NotImplementedError


def _replace(obj, **changes):
    import dataclasses

    return dataclasses.replace(obj, **changes)


@dataclass(frozen=True)
class Zero(ProblemSpec):
    """``F = 0``: the deterministic step is the identity."""

    def dt_max(self, u):
        return math.inf

    def step(self, u, dt):
        return u


@dataclass(frozen=True)
class FirstOrder(ProblemSpec):
    """``F(u_x)``.

    ``fpp_norm`` is ``sup |F''|`` on ``[-R, R]`` and ``alpha`` the
    Lax-Friedrichs dissipation ``>= sup |F'|``; both are sampled when omitted.
    """

    F: Callable = None
    fpp_norm: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.F is None:
            raise ValueError("FirstOrder needs F")
        if self.fpp_norm is None:
            object.__setattr__(self, "fpp_norm", _sampled_second_derivative_norm(self.F, self.R))
        if self.alpha is None:
            p = _sample(self.R)
            slope = np.abs(np.diff(self.F(p))) / (p[1] - p[0])
            object.__setattr__(self, "alpha", SAFETY * float(np.max(slope)))

    def dt_max(self, u):
        return u.h / self.alpha if self.alpha > 0 else math.inf

    def step(self, u, dt):
        return step_first_order(u, self.F, dt, self.alpha, self.R)


@dataclass(frozen=True)
class Quasilinear(ProblemSpec):
    """``a(u_x) u_xx`` with ``a >= 0``.

    ``flux`` is an antiderivative ``A`` of ``a``; if omitted it is tabulated
    by the trapezoid rule on ``[-R, R]`` (piecewise linear and nondecreasing,
    so the scheme stays monotone).  ``app_norm`` is ``sup |a''|`` on the ball.
    """

    a: Callable = None
    flux: Callable | None = None
    app_norm: float | None = None
    a_max: float = field(default=None, repr=False)
    # optional numba-compiled scalar flux; enables a compiled substep loop
    flux_jit: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        super().__post_init__()
        if self.a is None:
            raise ValueError("Quasilinear needs a")
        p = _sample(self.R)
        ap = np.asarray(self.a(p), dtype=float)
        if np.any(ap < 0):
            raise ValueError("a must be nonnegative on [-R, R] (degenerate ellipticity)")
        if self.app_norm is None:
            object.__setattr__(self, "app_norm", _sampled_second_derivative_norm(self.a, self.R))
        if self.flux is None:
            table = np.concatenate(([0.0], np.cumsum(0.5 * (ap[1:] + ap[:-1]) * np.diff(p))))
            object.__setattr__(self, "flux", lambda q, _p=p, _t=table: np.interp(q, _p, _t))
        if self.a_max is None:
            object.__setattr__(self, "a_max", SAFETY * float(np.max(ap)))

    def dt_max(self, u):
        return u.h**2 / (2.0 * self.a_max) if self.a_max > 0 else math.inf

    def step(self, u, dt):
        return step_quasilinear(u, self, dt)


@dataclass(frozen=True)
class FullyNonlinear1D(ProblemSpec):
    """``F(u_xx)`` with ``F`` nondecreasing; ``semiconcavity`` is ``C_F``."""

    F: Callable = None
    semiconcavity: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.F is None:
            raise ValueError("FullyNonlinear1D needs F")
        r = np.linspace(-100.0, 100.0, 20001)
        if np.any(np.diff(self.F(r)) < 0):
            raise ValueError("F must be nondecreasing")

    def lipschitz_on(self, lo: float, hi: float) -> float:
        if hi <= lo:
            hi = lo + 1.0
        r = np.linspace(lo, hi, 2001)
        return SAFETY * float(np.max(np.diff(self.F(r))) / (r[1] - r[0]))

    def dt_max(self, u):
        d2 = _d2(u)
        lip = self.lipschitz_on(float(d2.min()), float(d2.max()))
        return u.h**2 / (2.0 * lip) if lip > 0 else math.inf

    def step(self, u, dt):
        return step_fully_nonlinear_1d(u, self.F, dt, self)


def p_laplace(m: float, R: float = 1.0) -> Quasilinear:
    """``(1/m) d/dx (u_x |u_x|**(m-1))``, i.e. ``a(p) = |p|**(m-1)``."""
    if m < 3:
        raise ValueError("p-Laplace drift catalog needs m >= 3")
    m = float(m)

    @numba.njit
    def flux_jit(p):
        return p * abs(p) ** (m - 1.0) / m

    return Quasilinear(
        R=R,
        a=lambda p: np.abs(p) ** (m - 1),
        flux=lambda p: p * np.abs(p) ** (m - 1) / m,
        app_norm=(m - 1) * (m - 2) * R ** (m - 3),
        flux_jit=flux_jit,
    )


@numba.njit(cache=True)
def _cubic_flux(p):
    return p * p * p / 12.0


def optimality_problem(R: float = 1.0) -> Quasilinear:
    """``u_x**2 u_xx / 4`` (divergence form ``(u_x**3 / 12)_x``)."""
    return Quasilinear(R=R, a=lambda p: 0.25 * p * p, flux=lambda p: p * p * p / 12.0,
                       app_norm=0.5, flux_jit=_cubic_flux)


@numba.njit(cache=True)
def _quasilinear_loop(v, h, dt, steps, R, periodic, flux):
    n = v.shape[0]
    u = v.copy()
    fr = np.empty(n)
    for _ in range(steps):
        for i in range(n - 1):
            p = (u[i + 1] - u[i]) / h
            fr[i] = flux(min(max(p, -R), R))
        if periodic:
            p = (u[0] - u[n - 1]) / h
            fr[n - 1] = flux(min(max(p, -R), R))
            first = fr[n - 1]
        else:
            fr[n - 1] = flux(0.0)
            first = flux(0.0)
        prev = first
        for i in range(n):
            cur = fr[i]
            u[i] = u[i] + dt * ((cur - prev) / h)
            prev = cur
    return u


def _slopes(u: GridFn):
    """Forward differences ``(u[i+1] - u[i]) / h`` (right) and the left ones."""
    v = u.values
    if u.periodic:
        right = (np.roll(v, -1) - v) / u.h
    else:
        right = np.append(np.diff(v), 0.0) / u.h
    left = np.roll(right, 1)
    if not u.periodic:
        left[0] = 0.0
    return left, right


def _d2(u: GridFn) -> np.ndarray:
    left, right = _slopes(u)
    return (right - left) / u.h


def step_first_order(u: GridFn, F: Callable, dt: float, alpha: float, R: float = math.inf) -> GridFn:
    """One Lax-Friedrichs step for ``u_t = F(u_x)``."""
    if alpha < 0:
        raise ValueError("dissipation alpha must be nonnegative")
    if dt * alpha > u.h * (1 + 1e-12):
        raise CFLError(dt, u.h / alpha, "first-order Lax-Friedrichs")
    left, right = _slopes(u)
    p = np.clip(0.5 * (left + right), -R, R)
    return u.with_values(u.values + dt * (F(p) + 0.5 * alpha * (right - left)))


def step_quasilinear(u: GridFn, spec: Quasilinear, dt: float) -> GridFn:
    """One conservative step ``u += dt * (A(p_right) - A(p_left)) / h``."""
    limit = spec.dt_max(u)
    if dt > limit * (1 + 1e-12):
        raise CFLError(dt, limit, "quasilinear")
    left, right = _slopes(u)
    A = spec.flux
    flux_r = A(np.clip(right, -spec.R, spec.R))
    flux_l = np.roll(flux_r, 1)
    if not u.periodic:
        flux_l[0] = A(np.clip(left[0], -spec.R, spec.R))
    return u.with_values(u.values + dt * ((flux_r - flux_l) / u.h))


def step_fully_nonlinear_1d(u: GridFn, F: Callable, dt: float, spec: FullyNonlinear1D | None = None) -> GridFn:
    """One step ``u += dt * F(D2 u)``; CFL uses Lip(F) over the current D2 range."""
    d2 = _d2(u)
    probe = spec if spec is not None else FullyNonlinear1D(F=F)
    lip = probe.lipschitz_on(float(d2.min()), float(d2.max()))
    if lip > 0 and dt * 2.0 * lip > u.h**2 * (1 + 1e-12):
        raise CFLError(dt, u.h**2 / (2.0 * lip), "fully nonlinear")
    return u.with_values(u.values + dt * F(d2))


@dataclass(frozen=True)
class StepPlan:
    dt: float
    substeps: int
    cfl_bound: float


def plan_steps(u: GridFn, spec: ProblemSpec, duration: float, dt_hint: float | None = None) -> StepPlan:
    """Uniform substeps covering ``duration`` with ``dt <= min(dt_hint, CFL)``."""
    bound = spec.dt_max(u)
    dt = bound if dt_hint is None else min(dt_hint, bound)
    if duration <= 0 or not math.isfinite(dt):
        return StepPlan(duration, 1 if duration > 0 else 0, bound)
    n = max(1, math.ceil(duration / dt - 1e-9))
    return StepPlan(duration / n, n, bound)


def evolve_F(u: GridFn, spec: ProblemSpec, duration: float, dt_hint: float | None = None) -> GridFn:
    """Approximate ``S_F(duration) u`` by repeated monotone steps."""
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if duration == 0 or isinstance(spec, Zero):
        return u
    if isinstance(spec, FullyNonlinear1D):
        # stability limit moves with the solution; re-plan every step
        t = 0.0
        while t < duration * (1 - 1e-12):
            dt = min(spec.dt_max(u), duration - t)
            if dt_hint is not None:
                dt = min(dt, dt_hint)
            u = spec.step(u, dt)
            t += dt
        return u
    plan = plan_steps(u, spec, duration, dt_hint)
    if isinstance(spec, Quasilinear) and spec.flux_jit is not None:
        out = _quasilinear_loop(np.ascontiguousarray(u.values), u.h, plan.dt, plan.substeps,
                                float(spec.R), u.periodic, spec.flux_jit)
        return u.with_values(out)
    for _ in range(plan.substeps):
        u = spec.step(u, plan.dt)
    return u
