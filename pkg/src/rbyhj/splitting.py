"""Trotter-Kato splitting for ``du + |Du|**2/2 o dxi = F(Du, D2u) dt``.

Each partition cell runs the deterministic step over the cell length and
then the exact Hamiltonian step for the signal increment.  A positive
increment ``d`` solves ``u_t + |u_x|**2 / 2 = 0`` for time ``d``, i.e. the
inf-convolution with ``|x - y|**2 / (2 d)``; a negative one the
sup-convolution.  Increments below the Hopf-Lax identity threshold are
carried forward and added to the next one rather than dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundCurve
from .grid import GridFn, lipschitz_norm, periodic_grid, second_diff, second_diff_values
from .hopf_lax import apply_signed, interpolant_curvature, is_negligible
from .piecewise import PiecewiseQuadratic, apply_signed_exact
from .paths import DrivingPath, brownian, partition_indices
from .pde_step import ProblemSpec, Zero, evolve_F, optimality_problem
from .reflected import discrete_scheme, inverse_drift

__all__ = [
    "SplitRun",
    "MainBoundReport",
    "OptimalityReport",
    "SPLIT_ORDER",
    "hamiltonian_step",
    "trotter_kato",
    "default_slack",
    "verify_main_bound",
    "optimality_initial",
    "optimality_experiment",
    "u_class_violations",
    "CurvatureHistory",
    "curvature_history",
    "critical_intensity_experiment",
]

SPLIT_ORDER = "F-step then H-step per cell; jumps after the cell"
# slack model c1 h + c2 / sqrt(n), frozen
SLACK_C1 = 10.0
SLACK_C2 = 2.0


def hamiltonian_step(u: GridFn, d: float, candidates: str = "interpolant"):
    """Solve ``u_t + |u_x|**2 / 2 = 0`` for signed time ``d``.

    Returns the new grid function and the in-cell curvature used.
    """
    if d == 0:
        return u, 0.0
    target = u.with_values(-u.values) if d > 0 else u
    kappa = interpolant_curvature(target) if candidates == "interpolant" else 0.0
    return apply_signed(u, -d, candidates), kappa


@dataclass
class SplitRun:
    """Snapshots of a splitting run plus a log of the Hamiltonian steps."""

    times: np.ndarray
    snapshots: list
    reports: list
    deltas: np.ndarray
    kappas: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def h(self) -> float:
        return self.snapshots[0].h

    @property
    def measured_plus(self) -> np.ndarray:
        return np.array([r.max_plus for r in self.reports])

    @property
    def measured_minus(self) -> np.ndarray:
        return np.array([r.max_minus for r in self.reports])

    @property
    def final(self) -> GridFn:
        return self.snapshots[-1]


def trotter_kato(spec: ProblemSpec, path: DrivingPath, u0: GridFn, n=None, snapshot_every: int = 1,
                 candidates: str = "interpolant", dt_hint: float | None = None,
                 exclude_edges: int | None = None, exact: PiecewiseQuadratic | None = None) -> SplitRun:
    """Splitting approximation along a partition of ``path``.

    Parameters
    ----------
    spec : ProblemSpec
        Deterministic part; its gradient radius must cover ``Lip(u0)``.
    path : DrivingPath
        Signal; jumps are applied after the continuous increment of their cell.
    u0 : GridFn
        Initial datum.
    n : int or array, optional
        Partition (see :func:`partition_indices`); default every path node.
    snapshot_every : int
        Keep every ``snapshot_every``-th partition time (the last is always kept).
    exclude_edges : int, optional
        Nodes dropped at each end of a line grid when measuring ``D2 u``;
        defaults to 1 on line grids.
    exact : PiecewiseQuadratic, optional
        Only for ``F = 0``: evolve this piecewise quadratic representation
        of ``u0`` with exact Hopf-Lax steps and sample it at the nodes of
        ``u0`` for the snapshots.  No increment is skipped.
    """
    if exact is not None and not isinstance(spec, Zero):
        raise ValueError("exact Hopf-Lax steps need F = 0")
    if snapshot_every < 1:
        raise ValueError("snapshot_every must be >= 1")
    if not isinstance(spec, Zero) and lipschitz_norm(u0) > spec.R * (1 + 1e-9):
        raise ValueError(f"gradient radius R={spec.R} below Lip(u0)={lipschitz_norm(u0):.6g}")
    if exclude_edges is None:
        exclude_edges = 0 if u0.periodic else 1
    idx = partition_indices(path, n)
    xi = path.values
    jump = path.jump_array()
    u = u0
    q = exact
    times, snaps, reports = [0.0], [u0], [second_diff(u0, exclude_edges)]
    deltas, kappas = [], []
    carry = 0.0

    def hl(d):
        nonlocal u, q, carry
        carry += d
        if q is not None:
            if carry != 0:
                q = apply_signed_exact(q, -carry)
                deltas.append(carry)
                kappas.append(0.0)
                carry = 0.0
            return
        if carry != 0 and not is_negligible(carry, u.h):
            u, k = hamiltonian_step(u, carry, candidates)
            deltas.append(carry)
            kappas.append(k)
            carry = 0.0

    for k in range(1, idx.size):
        a, b = idx[k - 1], idx[k]
        if q is None:
            u = evolve_F(u, spec, float(path.times[b] - path.times[a]), dt_hint)
        hl(float(xi[b] - xi[a]))
        dj = float(np.sum(jump[a + 1:b + 1]))
        if dj != 0.0:
            hl(dj)
        if k % snapshot_every == 0 or k == idx.size - 1:
            if q is not None:
                u = q.sample(u0)
            times.append(float(path.times[b]))
            snaps.append(u)
            reports.append(second_diff(u, exclude_edges))
    meta = {
        "order": SPLIT_ORDER,
        "candidates": "exact" if exact is not None else candidates,
        "partition_cells": int(idx.size - 1),
        "h": u0.h,
        "n_nodes": u0.n,
        "unapplied_increment": carry,
        "hamiltonian_steps": len(deltas),
        "pieces": q.pieces if q is not None else None,
    }
    return SplitRun(np.array(times), snaps, reports, np.array(deltas), np.array(kappas), meta)


def default_slack(h: float, n: int) -> float:
    """``10 h + 2 / sqrt(n)``."""
    return SLACK_C1 * h + SLACK_C2 / math.sqrt(n)


@dataclass
class MainBoundReport:
    passed: bool
    worst_time: float
    worst_margin: float
    slack: float
    rows: list

    def to_dict(self) -> dict:
        return {"passed": self.passed, "worst_time": self.worst_time,
                "worst_margin": _num(self.worst_margin), "slack": self.slack}


def _num(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else v


def verify_main_bound(run: SplitRun, curve: BoundCurve, slack: float) -> MainBoundReport:
    """Check ``max (D2 u)_+ <= 1/L_plus + slack`` and ``max (D2 u)_- <= 1/L_minus + slack``.

    The margin is ``bound + slack - measured``; the report keeps the
    smallest one over both sides and all snapshots.
    """
    worst, worst_t, rows = math.inf, 0.0, []
    for t, rep in zip(run.times, run.reports):
        i = curve.index_of(t)
        up, lo = float(curve.upper[i]), float(curve.lower[i])
        m = min(up + slack - rep.max_plus, lo + slack - rep.max_minus)
        rows.append((t, rep.max_plus, up, rep.max_minus, lo, m))
        if m < worst:
            worst, worst_t = m, t
    return MainBoundReport(worst >= 0, worst_t, worst, slack, rows)


# ------------------------------------------------------------ optimality


def optimality_initial(beta: float, n_nodes: int) -> GridFn:
    """``beta (1 - cos(pi x)) / pi`` on the 2-periodic grid ``[-1, 1)`` (node at 0)."""
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    if n_nodes % 2:
        raise ValueError("n_nodes must be even so that x = 0 and x = 1 are nodes")
    return periodic_grid(lambda x: beta * (1.0 - np.cos(np.pi * x)) / np.pi, n_nodes, 2.0, -1.0)


def u_class_violations(u: GridFn, slack: float) -> dict:
    """Largest violations of the class constraints on a 2-periodic grid over ``[-1, 1)``.

    Even symmetry about 0 (and hence 1), ``0 <= u_x <= 1`` and nonincreasing
    ``u_xx`` on ``(0, 1)``; each entry is the excess beyond ``slack``.
    """
    v = u.values
    n = u.n
    mid = n // 2
    mirror = v[(n - np.arange(n)) % n]
    sym = float(np.max(np.abs(v - mirror)))
    right = np.append(v[mid + 1:], v[0])
    slopes = np.diff(np.concatenate(([v[mid]], right))) / u.h
    d2 = second_diff_values(u)[mid + 1:n]
    mono = float(np.max(np.diff(d2))) if d2.size > 1 else 0.0
    return {
        "symmetry": max(sym - slack, 0.0),
        "slope_low": max(-float(np.min(slopes)) - slack, 0.0),
        "slope_high": max(float(np.max(slopes)) - 1.0 - slack, 0.0),
        "uxx_monotone": max(mono - slack, 0.0),
    }


@dataclass
class OptimalityReport:
    times: np.ndarray
    uxx0: np.ndarray
    uxx1: np.ndarray
    L_plus: np.ndarray
    L_minus: np.ndarray
    tau_plus: float
    product: np.ndarray
    checks: dict
    run: SplitRun = field(repr=False)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def optimality_experiment(path: DrivingPath, beta: float = 1.0, n_nodes: int = 1024,
                          snapshot_every: int = 1, window: float = 0.9, tol: float = 0.05,
                          post_start: float = 3.0, u_slack: float | None = None) -> OptimalityReport:
    """Sharpness test of the semiconcavity bound on the cubic-flux problem.

    Runs the splitting for ``u_x**2 u_xx / 4`` from :func:`optimality_initial`
    and the bound process ``dL = -dt / (2 L) + dxi`` from ``1 / (beta pi)``.
    Checks ``u_xx(t, 0) L_plus(t)`` in ``[1 - tol, 1 + tol]`` for
    ``t <= window * tau_plus`` and ``max (D2 u)_+ > 1 / (10 h)`` for
    ``t >= post_start * tau_plus``.  After ``tau_plus`` the solution forms a
    cusp whose discrete curvature grows like ``h**(-2/3)``, so the
    ``1 / (10 h)`` level is reached only some time after ``tau_plus``.
    """
    u0 = optimality_initial(beta, n_nodes)
    spec = optimality_problem(R=max(lipschitz_norm(u0), 1e-12))
    run = trotter_kato(spec, path, u0, snapshot_every=snapshot_every)
    l0 = 1.0 / (beta * math.pi)
    V = inverse_drift(0.5)
    Lp = discrete_scheme(V, path, l0)
    Lm = discrete_scheme(V, -path, l0)
    pos = np.searchsorted(Lp.times, run.times - 1e-12)
    lp, lm = Lp.L[pos], Lm.L[pos]
    mid = n_nodes // 2
    d2 = np.array([second_diff_values(s) for s in run.snapshots])
    uxx0, uxx1 = d2[:, mid], d2[:, 0]
    product = uxx0 * lp
    tau = Lp.hitting_time
    h = u0.h
    checks = {}
    pre = run.times <= window * tau
    dev = float(np.max(np.abs(product[pre] - 1.0))) if pre.any() else 0.0
    checks["tracking"] = {"passed": dev <= tol, "max_deviation": dev, "window_end": window * tau,
                          "samples": int(pre.sum())}
    if math.isfinite(tau):
        post = run.times >= post_start * tau
        mp = run.measured_plus[post]
        least = float(np.min(mp)) if mp.size else math.inf
        checks["post_blowup"] = {"passed": bool(np.all(mp > 1.0 / (10.0 * h))),
                                 "min_curvature": least, "threshold": 1.0 / (10.0 * h),
                                 "window_start": post_start * tau, "samples": int(post.sum())}
    slack = 10.0 * h if u_slack is None else u_slack
    upto = run.times < tau if math.isfinite(tau) else np.ones(run.times.size, bool)
    worst = {k: 0.0 for k in ("symmetry", "slope_low", "slope_high", "uxx_monotone")}
    for s, keep in zip(run.snapshots, upto):
        if keep:
            for key, val in u_class_violations(s, slack).items():
                worst[key] = max(worst[key], val)
    checks["u_class"] = {"passed": all(v == 0 for v in worst.values()), **worst}
    return OptimalityReport(run.times, uxx0, uxx1, lp, lm, tau, product, checks, run)


# ------------------------------------------------- critical noise intensity


@dataclass(frozen=True)
class CurvatureHistory:
    """Measured ``max |D2 u|`` over the snapshots of one run, in units of ``1/h``."""

    seed: int
    times: np.ndarray
    scaled: np.ndarray

    @property
    def finite_at_end(self) -> bool:
        return bool(self.scaled[-1] < 0.1)

    def blew_up(self, level: float) -> bool:
        return bool(np.any(self.scaled > level))

    def stays_above(self, enter: float, floor: float) -> bool:
        """After first exceeding ``enter``, the curvature never drops below ``floor``."""
        hit = np.nonzero(self.scaled > enter)[0]
        return bool(np.all(self.scaled[hit[0]:] >= floor)) if hit.size else True


def curvature_history(path: DrivingPath, seed: int = 0, beta: float = 1.0, n_nodes: int = 1024,
                      snapshot_every: int = 4) -> CurvatureHistory:
    """Run the cubic-flux problem from :func:`optimality_initial` and record ``h max |D2 u|``."""
    u0 = optimality_initial(beta, n_nodes)
    spec = optimality_problem(R=lipschitz_norm(u0))
    run = trotter_kato(spec, path, u0, snapshot_every=snapshot_every)
    m = np.maximum(run.measured_plus, run.measured_minus) * u0.h
    return CurvatureHistory(seed, run.times, m)


def critical_intensity_experiment(sigma: float, seeds, T: float = 1.0, n_steps: int = 2048,
                                  n_nodes: int = 1024, beta: float = 1.0,
                                  snapshot_every: int = 4) -> dict:
    """Monte Carlo over Brownian seeds of the cubic-flux problem at noise level ``sigma``.

    The bound process ``dL = -dt / (2 L) + sigma dB`` reflects at zero for
    ``sigma**2 > 1`` and is absorbed for ``sigma**2 < 1``.  Reports the
    fraction of seeds with ``max |D2 u(T)| < 1 / (10 h)`` and, among seeds
    that exceed ``1 / (10 h)``, the fraction whose curvature afterwards stays
    at or above ``1 / (5 h)``.  The fraction that, once above ``1 / (5 h)``,
    stays at or above ``1 / (10 h)`` is reported as well.
    """
    hist = [curvature_history(brownian(T, n_steps, sigma, int(s)), int(s), beta, n_nodes, snapshot_every)
            for s in sorted(seeds)]
    blown = [c for c in hist if c.blew_up(0.1)]
    blown5 = [c for c in hist if c.blew_up(0.2)]
    return {
        "sigma": sigma,
        "seeds": len(hist),
        "finite_fraction": sum(c.finite_at_end for c in hist) / len(hist),
        "blowup_count": len(blown),
        "absorbed_fraction": (sum(c.stays_above(0.1, 0.2) for c in blown) / len(blown)) if blown else math.nan,
        "hysteresis_count": len(blown5),
        "hysteresis_fraction": (sum(c.stays_above(0.2, 0.1) for c in blown5) / len(blown5)) if blown5 else math.nan,
        "histories": hist,
    }
