"""Bound process machinery: stopped flows, reflected schemes, boundary tests.

The nonnegative process ``L`` solves ``dL = V(L) dt + dxi`` on ``{L > 0}``
and is kept at zero by reflection.  :func:`discrete_scheme` builds the
maximal solution from exact stopped flows; :func:`skorokhod_solve` is the
Euler scheme for the Skorokhod problem when ``V`` is Lipschitz at zero.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .paths import DrivingPath, partition_indices

__all__ = [
    "DriftSpec",
    "ReflectedTrajectory",
    "BoundaryClass",
    "FellerUndetermined",
    "zero_drift",
    "constant_drift",
    "inverse_drift",
    "quadratic_drift",
    "affine_inverse_drift",
    "quadratic_poly_drift",
    "capped_linear_drift",
    "flow",
    "discrete_scheme",
    "skorokhod_solve",
    "comparison_check",
    "feller_integrals",
    "feller_classify",
    "holder_boundary_diagnostic",
    "holder_G",
]

# numeric flows: stop at this level (relative to the start) and call it zero
ZERO_LEVEL = 1e-12
BLOWUP_LEVEL = 1e12


@dataclass(frozen=True)
class DriftSpec:
    """Drift ``V`` of the bound process.

    Parameters
    ----------
    eval : callable
        Vectorized ``V(l)`` for ``l > 0``.
    flow : callable, optional
        Closed form of the stopped flow ``(t, l) -> phi^V(t; l)``.
    lipschitz_at_zero : bool
        ``V`` extends to a Lipschitz function on ``[0, inf)``.
    upper_bound_on_tail : float
        Bound of ``V_+`` on ``[1, inf)``.
    name : str
        Label used in reports.
    """

    eval: Callable
    flow: Callable | None = None
    lipschitz_at_zero: bool = False
    upper_bound_on_tail: float = 0.0
    name: str = "V"

    def __call__(self, l):
        return self.eval(l)

    def to_dict(self) -> dict:
        return {"name": self.name, "closed_form_flow": self.flow is not None,
                "lipschitz_at_zero": self.lipschitz_at_zero}


def _const(value):
    return lambda l: np.full_like(np.asarray(l, dtype=float), value)


def zero_drift() -> DriftSpec:
    return DriftSpec(_const(0.0), lambda t, l: l, True, 0.0, "0")


def constant_drift(c: float) -> DriftSpec:
    """``V = -c`` with ``c >= 0``; flow ``(l - c t)_+``."""
    if c < 0:
        raise ValueError("constant drift expects c >= 0")
    return DriftSpec(_const(-c), lambda t, l: max(l - c * t, 0.0), True, 0.0, f"-{c:g}")


def inverse_drift(c: float) -> DriftSpec:
    """``V = -c / l``; flow ``sqrt((l**2 - 2 c t)_+)``."""
    if c < 0:
        raise ValueError("inverse drift expects c >= 0")

    def fl(t, l):
        return math.sqrt(max(l * l - 2.0 * c * t, 0.0))

    return DriftSpec(lambda l: -c / np.asarray(l, dtype=float), fl, c == 0, 0.0, f"-{c:g}/l")


def quadratic_drift(C: float) -> DriftSpec:
    """``V = -C (1 + l**2)``; flow ``tan(arctan l - C t)`` until it reaches 0."""
    if C < 0:
        raise ValueError("quadratic drift expects C >= 0")

    def fl(t, l):
        if math.isinf(l):
            l = BLOWUP_LEVEL
        a = math.atan(l) - C * t
        return math.tan(a) if a > 0 else 0.0

    return DriftSpec(lambda l: -C * (1.0 + np.asarray(l, dtype=float) ** 2), fl, True, 0.0,
                     f"-{C:g}(1+l^2)")


def capped_linear_drift() -> DriftSpec:
    """``V = -min(l, 1)``, Lipschitz on ``[0, inf)``."""

    def fl(t, l):
        if l <= 1.0:
            return l * math.exp(-t)
        t1 = l - 1.0
        if t <= t1:
            return l - t
        return math.exp(-(t - t1))

    return DriftSpec(lambda l: -np.minimum(np.asarray(l, dtype=float), 1.0), fl, True, 0.0,
                     "-min(l,1)")


def affine_inverse_drift(a: float, b: float, c: float) -> DriftSpec:
    """``V = -a l - b - c / l`` (quasilinear catalog); numeric flow unless ``a = b = 0``."""
    if min(a, b, c) < 0:
        raise ValueError("catalog coefficients are nonnegative")
    if a == 0 and b == 0:
        return inverse_drift(c)
    if a == 0 and c == 0:
        return constant_drift(b)
    return DriftSpec(lambda l: -a * np.asarray(l, dtype=float) - b - c / np.asarray(l, dtype=float),
                     None, c == 0, 0.0, f"-{a:g}l-{b:g}-{c:g}/l")


def quadratic_poly_drift(a: float, b: float, c: float) -> DriftSpec:
    """``V = -a l**2 - b l - c`` (first-order catalog)."""
    if min(a, b, c) < 0:
        raise ValueError("catalog coefficients are nonnegative")
    if a == 0 and b == 0:
        return constant_drift(c)
    if b == 0 and a == c:
        return quadratic_drift(a)
    return DriftSpec(lambda l: -(a * np.asarray(l, dtype=float) ** 2) - b * np.asarray(l, dtype=float) - c,
                     None, True, 0.0, f"-{a:g}l^2-{b:g}l-{c:g}")


def _numeric_flow(V: DriftSpec, t: float, l: float) -> float:
    floor = ZERO_LEVEL * max(l, 1.0)

    def rhs(_, y):
        return [float(V.eval(np.array([max(y[0], floor)]))[0])]

    def hit_zero(_, y):
        return y[0] - floor

    def blow_up(_, y):
        return y[0] - BLOWUP_LEVEL

    hit_zero.terminal = True
    blow_up.terminal = True
    sol = integrate.solve_ivp(rhs, (0.0, t), [l], method="DOP853", rtol=1e-12, atol=1e-14,
                              events=(hit_zero, blow_up))
    if sol.status == 1:
        return 0.0 if sol.t_events[0].size else math.inf
    if not sol.success and sol.y.size:
        y = float(sol.y[0, -1])
        # a singular drift such as -c/l stalls the integrator within time
        # resolution of the hitting time; the stopped flow is then at 0
        if y < 1e-6 * max(l, 1.0) and rhs(0.0, [y])[0] < 0:
            return 0.0
    if not sol.success:
        raise RuntimeError(f"flow integration failed: {sol.message}")
    return max(float(sol.y[0, -1]), 0.0)


def flow(V: DriftSpec, t: float, l: float) -> float:
    """Flow of ``dl/dt = V(l)`` stopped at 0 and at ``+inf``."""
    if t < 0 or l < 0:
        raise ValueError("flow needs t >= 0 and l >= 0")
    if t == 0 or math.isinf(l):
        return l
    if l == 0:
        v0 = float(V.eval(np.array([ZERO_LEVEL]))[0])
        if v0 <= 0 or not V.lipschitz_at_zero:
            return 0.0
    if V.flow is not None:
        return float(V.flow(t, l))
    return _numeric_flow(V, t, l)


@dataclass(frozen=True)
class ReflectedTrajectory:
    """``L`` and the accumulated reflection ``R`` on a partition.

    ``stopped[k]`` flags steps whose drift part (before the signal
    increment) ended at or below 0, i.e. the stopped flow hit the boundary.
    """

    times: np.ndarray
    L: np.ndarray
    R: np.ndarray
    stopped: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def hitting_time(self) -> float:
        """First partition time at which ``L`` reached 0, ``inf`` if never."""
        hit = self.L <= 0
        if self.stopped is not None:
            hit = hit | self.stopped
        hit[0] = self.L[0] <= 0
        k = np.nonzero(hit)[0]
        return float(self.times[k[0]]) if k.size else math.inf

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,L,R\n")
        for t, l, r in zip(self.times, self.L, self.R):
            buf.write(f"{t:.15e},{_fmt(l)},{_fmt(r)}\n")
        return buf.getvalue()

    def at(self, t: float) -> float:
        """Value at the last partition time ``<= t``."""
        i = int(np.searchsorted(self.times, t + 1e-12, side="right")) - 1
        return float(self.L[max(i, 0)])


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.15e}"


def _run(step, path: DrivingPath, l0: float, partition) -> ReflectedTrajectory:
    if l0 < 0:
        raise ValueError("initial value must be nonnegative")
    idx = partition_indices(path, partition)
    xi = path.values
    jump = path.jump_array()
    # jumps inside a coarse cell are summed and applied at its right end
    jump_cum = np.concatenate(([0.0], np.cumsum(jump[1:])))
    L = np.empty(idx.size)
    R = np.zeros(idx.size)
    stopped = np.zeros(idx.size, dtype=bool)
    L[0] = l0
    for k in range(1, idx.size):
        a, b = idx[k - 1], idx[k]
        dt = path.times[b] - path.times[a]
        moved = step(L[k - 1], dt)
        stopped[k] = moved <= 0
        pre = moved + (xi[b] - xi[a])
        r = R[k - 1] + max(-pre, 0.0)
        cur = max(pre, 0.0)
        dj = jump_cum[b] - jump_cum[a]
        if dj != 0.0:
            pre = cur + dj
            r += max(-pre, 0.0)
            cur = max(pre, 0.0)
        L[k] = cur
        R[k] = r
    return ReflectedTrajectory(path.times[idx], L, R, stopped)


def discrete_scheme(V: DriftSpec, path: DrivingPath, l0: float, partition=None) -> ReflectedTrajectory:
    """``L_{i+1} = (phi^V(dt, L_i) + xi increment)_+``.

    ``partition`` is ``None`` (every path node), a cell count dividing the
    path's, or an explicit array of node indices.
    """

    def step(l, dt):
        return flow(V, dt, l)

    return _run(step, path, l0, partition)


def skorokhod_solve(V: DriftSpec, path: DrivingPath, l0: float, partition=None) -> ReflectedTrajectory:
    """Euler scheme ``L_{i+1} = (L_i + V(L_i) dt + xi increment)_+``."""
    if not V.lipschitz_at_zero:
        raise ValueError(f"drift {V.name} is not Lipschitz at 0; use discrete_scheme")

    def step(l, dt):
        v = float(V.eval(np.array([l]))[0]) if l > 0 else float(V.eval(np.array([0.0]))[0])
        return l + v * dt

    return _run(step, path, l0, partition)


def comparison_check(V1: DriftSpec, V2: DriftSpec, path: DrivingPath, l0: float, partition=None,
                     l0_2: float | None = None, samples: int = 2000):
    """Check ``discrete_scheme(V1) >= discrete_scheme(V2)`` nodewise.

    Returns ``(holds, max_violation)``.  Raises ``ValueError`` if ``V1 >= V2``
    fails on the sampled range visited by either trajectory.
    """
    a = discrete_scheme(V1, path, l0, partition)
    b = discrete_scheme(V2, path, l0 if l0_2 is None else l0_2, partition)
    if l0_2 is not None and l0_2 > l0:
        raise ValueError("second initial value must not exceed the first")
    vis = np.concatenate((a.L, b.L))
    vis = vis[(vis > 0) & np.isfinite(vis)]
    if vis.size:
        grid = np.geomspace(max(vis.min(), 1e-9), max(vis.max(), 1e-9) * 1.0000001, samples)
        if np.any(V1.eval(grid) < V2.eval(grid) - 1e-12 * (1 + np.abs(V2.eval(grid)))):
            raise ValueError("drifts are not ordered on the visited range")
    gap = b.L - a.L
    worst = float(np.max(gap)) if gap.size else 0.0
    return worst <= 0.0, max(worst, 0.0)


# --------------------------------------------------------------- boundary


@dataclass(frozen=True)
class BoundaryClass:
    kind: str
    I_plus: float
    I_minus: float
    diagnostics: dict = field(default_factory=dict, compare=False, repr=False)

    def to_json(self) -> str:
        def enc(v):
            return "inf" if math.isinf(v) else v

        return json.dumps({"kind": self.kind, "I_plus": enc(self.I_plus), "I_minus": enc(self.I_minus)})


class FellerUndetermined(RuntimeError):
    """Quadrature neither converged nor showed divergence."""

    def __init__(self, msg, diagnostics):
        super().__init__(msg)
        self.diagnostics = diagnostics


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
DIVERGENCE_RATIO = 2.0 ** -0.05
DIVERGENCE_MIN_SHELL = 8


def _gl(a, b):
    """Nodes and weights on ``[a, b]`` (broadcast over trailing axes)."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    shape = np.shape(mid)
    x = mid[..., None] + half[..., None] * _GL_X.reshape((1,) * len(shape) + (-1,))
    w = half[..., None] * _GL_W.reshape((1,) * len(shape) + (-1,))
    return x, w


def _log_integrals(W: Callable, sign: int, max_shells: int = 2000, rtol: float = 1e-13):
    """log of ``int_0^1 exp(-s 2P(x)) int_x^1 exp(s 2P(y)) dy dx`` with ``P(x) = -int_x^1 W``.

    Dyadic shells ``[2^-(k+1), 2^-k]`` in ``s = log x``.  Returns
    ``(value, diverged, shells, ratios)``.
    """
    P_hi = 0.0          # P at the upper end of the current shell
    logJ_hi = -np.inf   # log int_{hi}^1 exp(2 s P)
    log_total = -np.inf
    contribs = []
    ratios = []
    for k in range(max_shells):
        s_lo, s_hi = -(k + 1) * math.log(2.0), -k * math.log(2.0)
        # outer nodes in log space
        sx, wx = _gl(np.array(s_lo), np.array(s_hi))
        # P at outer nodes: P(x) = P_hi - int_x^hi W
        sy, wy = _gl(sx, np.full_like(sx, s_hi))
        ey = np.exp(sy)
        Px = P_hi - np.sum(W(ey) * ey * wy, axis=-1)
        # P at the nested nodes y in [x, hi]: P(y) = P_hi - int_y^hi W
        sz, wz = _gl(sy, np.full_like(sy, s_hi))
        ez = np.exp(sz)
        Py = P_hi - np.sum(W(ez) * ez * wz, axis=-1)
        # log J(x) = log( J(hi) + int_x^hi exp(2 s P(y)) dy )
        inner = np.logaddexp.reduce(sign * 2.0 * Py + sy + np.log(wy), axis=-1)
        logJ = np.logaddexp(logJ_hi, inner)
        log_c = np.logaddexp.reduce(-sign * 2.0 * Px + logJ + sx + np.log(wx))
        # advance the shell-end quantities
        P_lo = P_hi - float(np.sum(W(np.exp(sx)) * np.exp(sx) * wx))
        logJ_hi = float(np.logaddexp(logJ_hi, np.logaddexp.reduce(sign * 2.0 * Px + sx + np.log(wx))))
        P_hi = P_lo
        contribs.append(float(log_c))
        if len(contribs) > 1:
            ratios.append(contribs[-1] - contribs[-2])
        log_total = float(np.logaddexp(log_total, log_c))
        if not math.isfinite(log_total) and log_total > 0:
            return math.inf, True, k + 1, ratios
        if k >= DIVERGENCE_MIN_SHELL and len(ratios) >= 3:
            if all(r >= math.log(DIVERGENCE_RATIO) for r in ratios[-3:]):
                return math.inf, True, k + 1, ratios
        if log_c - log_total < math.log(rtol) and len(ratios) >= 3 and all(
            r < 0 for r in ratios[-3:]
        ):
            return math.exp(log_total), False, k + 1, ratios
        # geometric tail once the shell ratio has settled
        if k >= 20 and len(ratios) >= 6:
            last = np.array(ratios[-6:])
            if np.ptp(last) < 1e-9 and last[-1] < math.log(DIVERGENCE_RATIO):
                r = math.exp(last[-1])
                tail = log_c + math.log(r / (1.0 - r))
                return math.exp(np.logaddexp(log_total, tail)), False, k + 1, ratios
    return math.nan, False, max_shells, ratios


def feller_integrals(V: DriftSpec, sigma: float):
    """``(I_plus, I_minus, diagnostics)`` for ``dX = V dt + sigma dB``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")

    def W(x):
        return V.eval(x) / sigma**2

    out = []
    diag = {}
    for label, sign in (("I_plus", 1), ("I_minus", -1)):
        val, div, shells, ratios = _log_integrals(W, sign)
        diag[label] = {"shells": shells, "diverged": div,
                       "last_log2_ratios": [r / math.log(2.0) for r in ratios[-3:]]}
        if math.isnan(val):
            raise FellerUndetermined(f"{label} for {V.name} at sigma={sigma}: no verdict", diag)
        out.append(val)
    return out[0], out[1], diag


def feller_classify(V: DriftSpec, sigma: float) -> BoundaryClass:
    """Boundary class of 0 from the finiteness pattern of ``I_plus``, ``I_minus``."""
    ip, im, diag = feller_integrals(V, sigma)
    fp, fm = math.isfinite(ip), math.isfinite(im)
    kind = {(True, True): "Regular", (True, False): "Exit",
            (False, True): "Entrance", (False, False): "Natural"}[(fp, fm)]
    return BoundaryClass(kind, ip, im, diag)


def holder_G(V: DriftSpec, alpha: float, T: float) -> float:
    """``T**-alpha int_0^T V(s**alpha) ds`` via ``s = T exp(-z)``."""

    def f(z):
        return float(V.eval(np.array([(T * math.exp(-z)) ** alpha]))[0]) * math.exp(-z)

    # exp(-z) underflows past z ~ 700; cut there and split the decades
    edges = (0.0, 1.0, 5.0, 20.0, 80.0, 300.0, 690.0)
    val = sum(integrate.quad(f, a, b, limit=200, epsabs=0.0, epsrel=1e-10)[0]
              for a, b in zip(edges[:-1], edges[1:]))
    return T ** (1.0 - alpha) * val


def holder_boundary_diagnostic(V: DriftSpec, alpha: float, kmax: int = 12):
    """Classify 0 for an ``alpha``-Hölder driver as Repelling, Absorbing or Inconclusive.

    Returns ``(verdict, T_values, G_values)``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("Hölder exponent must lie in (0, 1]")
    probe = np.geomspace(10.0 ** (-kmax * alpha) * 1e-2, 0.1**alpha, 400)
    dv = np.diff(V.eval(probe))
    nonincr = bool(np.all(dv <= 1e-12 * np.abs(V.eval(probe[1:])) + 1e-300))
    nondecr = bool(np.all(dv >= -1e-12 * np.abs(V.eval(probe[1:])) - 1e-300))
    if not (nonincr or nondecr):
        raise ValueError(f"drift {V.name} is not monotone near 0")
    Ts = 10.0 ** -np.arange(1, kmax + 1)
    G = np.array([holder_G(V, alpha, T) for T in Ts])
    tail = G[-6:]
    mag = np.abs(tail)
    growing = bool(np.all(np.diff(mag) > 0) and np.all(tail != 0))
    if growing:
        slope = np.polyfit(np.log(1.0 / Ts[-6:]), np.log(mag), 1)[0]
        growing = slope > 0.05 or mag[-1] > 1e6
    verdict = "Inconclusive"
    if growing and np.all(tail > 0) and nonincr:
        verdict = "Repelling"
    elif growing and np.all(tail < 0) and nondecr:
        verdict = "Absorbing"
    return verdict, Ts, G
