"""Exact Hopf-Lax steps on piecewise quadratic functions.

A :class:`PiecewiseQuadratic` is stored as knots ``b_0 < ... < b_P`` and,
per piece, the value, slope and curvature at its left knot.  The family is
closed under ``S_H(delta)``: on a piece with curvature ``c < 1/delta`` the
sup-convolution follows the characteristics ``x = y - delta q'(y)`` and
returns a quadratic of curvature ``c / (1 - delta c)``; outside that range
the maximiser sticks to a knot and the result is the parabola
``q(b) - (x - b)**2 / (2 delta)``.  Concave kinks thus open into fans of
curvature ``-1/delta`` and colliding characteristics leave convex kinks.

The maximiser is nondecreasing in ``x``, so for pieces ``i < j`` the
difference of their partial sups is nondecreasing and the upper envelope
is built with one stack pass, as for the lower envelope of parabolas.
Nothing is discretised: sampling the result at grid nodes gives the exact
Hopf-Lax iterate of the represented function up to rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .grid import GridFn, second_diff_values

__all__ = [
    "PiecewiseQuadratic",
    "sup_convolution_exact",
    "inf_convolution_exact",
    "apply_signed_exact",
]

# pieces shorter than this fraction of the domain are absorbed by a neighbour
MIN_PIECE = 1e-13
# runs of pieces that one quadratic matches to this relative accuracy are merged
MERGE_TOL = 1e-12
MERGE_RUN = 32


@dataclass(frozen=True)
class PiecewiseQuadratic:
    """``q_k(y) = v_k + p_k (y - b_k) + c_k (y - b_k)**2 / 2`` on ``[b_k, b_{k+1})``.

    Periodic functions have ``knots[-1] - knots[0]`` equal to the period.
    """

    knots: np.ndarray
    v: np.ndarray
    p: np.ndarray
    c: np.ndarray
    periodic: bool = True

    def __post_init__(self):
        k = np.asarray(self.knots, float)
        if k.ndim != 1 or k.size < 2 or np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing with at least two entries")
        for name in ("v", "p", "c"):
            a = np.asarray(getattr(self, name), float)
            if a.shape != (k.size - 1,):
                raise ValueError(f"{name} needs one entry per piece")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "knots", k)

    @property
    def pieces(self) -> int:
        return self.v.size

    @property
    def period(self) -> float:
        return float(self.knots[-1] - self.knots[0])

    @property
    def right_values(self) -> np.ndarray:
        L = np.diff(self.knots)
        return self.v + self.p * L + 0.5 * self.c * L * L

    @property
    def right_slopes(self) -> np.ndarray:
        return self.p + self.c * np.diff(self.knots)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        b = self.knots
        if self.periodic:
            x = b[0] + np.mod(x - b[0], self.period)
        k = np.clip(np.searchsorted(b, x, side="right") - 1, 0, self.pieces - 1)
        s = x - b[k]
        return self.v[k] + self.p[k] * s + 0.5 * self.c[k] * s * s

    def sample(self, like: GridFn) -> GridFn:
        """Values at the nodes of ``like``."""
        return like.with_values(self(like.x))

    def kinks(self) -> np.ndarray:
        """Slope jumps ``q'(b+) - q'(b-)`` at the knots shared by two pieces."""
        left = self.right_slopes
        if self.periodic:
            return self.p - np.roll(left, 1)
        return self.p[1:] - left[:-1]

    def curvature_bounds(self, kink_tol: float = 0.0) -> tuple[float, float]:
        """``(sup (q'')_+, sup (q'')_-)``; a kink beyond ``kink_tol`` counts as infinite."""
        j = self.kinks()
        up = math.inf if np.any(j > kink_tol) else max(float(np.max(self.c)), 0.0)
        lo = math.inf if np.any(j < -kink_tol) else max(float(np.max(-self.c)), 0.0)
        return up, lo

    def oscillation(self) -> float:
        vals = [self.v, self.right_values]
        L = np.diff(self.knots)
        # a subnormal c overflows; its stationary point lies far outside the piece
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            s = np.where(self.c != 0, -self.p / np.where(self.c != 0, self.c, 1.0), -1.0)
            inside = (s > 0) & (s < L)
            vals.append((self.v - 0.5 * self.p**2 / np.where(self.c != 0, self.c, 1.0))[inside])
        allv = np.concatenate(vals)
        return float(allv.max() - allv.min())

    def __neg__(self) -> "PiecewiseQuadratic":
        return PiecewiseQuadratic(self.knots, -self.v, -self.p, -self.c, self.periodic)

    @classmethod
    def from_function(cls, f, knots, periodic: bool = True) -> "PiecewiseQuadratic":
        """Per piece, the quadratic through ``f`` at both ends and the midpoint."""
        b = np.asarray(knots, float)
        L = np.diff(b)
        fa, fm, fb = f(b[:-1]), f(0.5 * (b[:-1] + b[1:])), f(b[1:])
        c = 4.0 * (fa - 2.0 * fm + fb) / (L * L)
        p = (fb - fa) / L - 0.5 * c * L
        return cls(b, fa, p, c, periodic)

    @classmethod
    def from_grid(cls, u: GridFn) -> "PiecewiseQuadratic":
        """Per-cell quadratics through the nodes.

        The cell curvature is whichever of the two end second differences
        is smaller in magnitude, so an isolated kink stays one kink instead
        of spreading into large opposite kinks at its neighbours.
        """
        d2 = second_diff_values(u)
        x = u.x
        if u.periodic:
            b = np.append(x, x[0] + u.n * u.h)
            vals = np.append(u.values, u.values[0])
            a, bnext = d2, np.roll(d2, -1)
        else:
            b, vals = x, u.values
            inner = d2.copy()
            inner[0], inner[-1] = d2[1], d2[-2]
            a, bnext = inner[:-1], inner[1:]
        c = np.where(np.abs(a) <= np.abs(bnext), a, bnext)
        L = np.diff(b)
        p = np.diff(vals) / L - 0.5 * c * L
        return cls(b, vals[:-1], p, c, u.periodic)


# ------------------------------------------------------------ numba core


@numba.njit(cache=True)
def _candidate(k, b, v, p, c, delta, out):
    """Parts of ``x -> sup_{y in piece k} q_k(y) - (x - y)**2 / (2 delta)``.

    Fills ``out[m] = (start, x0, a0, a1, a2, id)`` for each part and returns
    the part count.  Node parabolas get id ``2 * knot``, piece middles
    ``2 * k + 1``.
    """
    a = b[k]
    L = b[k + 1] - a
    vb = v[k] + p[k] * L + 0.5 * c[k] * L * L
    pb = p[k] + c[k] * L
    inv = -1.0 / delta
    if c[k] * delta < 1.0 - 1e-12:
        r = 1.0 - delta * c[k]
        xa = a - delta * p[k]
        xb = b[k + 1] - delta * pb
        out[0, 0] = -np.inf
        out[0, 1] = a
        out[0, 2] = v[k]
        out[0, 3] = 0.0
        out[0, 4] = inv
        out[0, 5] = 2 * k
        out[1, 0] = xa
        out[1, 1] = xa
        out[1, 2] = v[k] - 0.5 * delta * p[k] * p[k]
        out[1, 3] = p[k]
        out[1, 4] = c[k] / r
        out[1, 5] = 2 * k + 1
        out[2, 0] = xb
        out[2, 1] = b[k + 1]
        out[2, 2] = vb
        out[2, 3] = 0.0
        out[2, 4] = inv
        out[2, 5] = 2 * (k + 1)
        return 3
    x0 = 0.5 * (a + b[k + 1]) - delta * (vb - v[k]) / L
    out[0, 0] = -np.inf
    out[0, 1] = a
    out[0, 2] = v[k]
    out[0, 3] = 0.0
    out[0, 4] = inv
    out[0, 5] = 2 * k
    out[1, 0] = x0
    out[1, 1] = b[k + 1]
    out[1, 2] = vb
    out[1, 3] = 0.0
    out[1, 4] = inv
    out[1, 5] = 2 * (k + 1)
    return 2


@numba.njit(cache=True)
def _part_at(parts, n, x):
    m = 0
    while m + 1 < n and parts[m + 1, 0] <= x:
        m += 1
    return m


@numba.njit(cache=True)
def _quad(parts, m, x):
    s = x - parts[m, 1]
    return parts[m, 2] + parts[m, 3] * s + 0.5 * parts[m, 4] * s * s


@numba.njit(cache=True)
def _crossing(pi, ni, pj, nj):
    """First ``x`` with ``g_j(x) >= g_i(x)``; ``g_j - g_i`` is nondecreasing."""
    ts = np.empty(6)
    nt = 0
    for m in range(1, ni):
        ts[nt] = pi[m, 0]
        nt += 1
    for m in range(1, nj):
        ts[nt] = pj[m, 0]
        nt += 1
    ts[:nt] = np.sort(ts[:nt])
    # first breakpoint where the difference is already >= 0
    first = nt
    for q in range(nt):
        x = ts[q]
        if _quad(pj, _part_at(pj, nj, x), x) - _quad(pi, _part_at(pi, ni, x), x) >= 0.0:
            first = q
            break
    lo = -np.inf if first == 0 else ts[first - 1]
    hi = np.inf if first == nt else ts[first]
    # representative point to pick the active parts on (lo, hi)
    if np.isinf(lo) and np.isinf(hi):
        probe = 0.0
    elif np.isinf(lo):
        probe = hi - 1.0
    elif np.isinf(hi):
        probe = lo + 1.0
    else:
        probe = 0.5 * (lo + hi)
    mi = _part_at(pi, ni, probe)
    mj = _part_at(pj, nj, probe)
    X = hi if not np.isinf(hi) else lo
    if np.isinf(X):
        X = 0.0
    A = _quad(pj, mj, X) - _quad(pi, mi, X)
    sj = X - pj[mj, 1]
    si = X - pi[mi, 1]
    B = (pj[mj, 3] + pj[mj, 4] * sj) - (pi[mi, 3] + pi[mi, 4] * si)
    C = pj[mj, 4] - pi[mi, 4]
    scale = 1.0 + abs(_quad(pi, mi, X))
    if abs(A) <= 1e-15 * scale and abs(B) <= 1e-13 and abs(C) <= 1e-10 * (1.0 + abs(pi[mi, 4])):
        # identical on this interval: the later candidate takes over at its left end
        return lo
    slo = lo - X
    shi = hi - X
    if abs(C) <= 1e-14 * (1.0 + abs(pi[mi, 4])):
        s = -A / B if B != 0.0 else shi
    else:
        disc = B * B - 2.0 * C * A
        if disc <= 0.0:
            # tangency up to rounding: double root
            r1 = r2 = -B / C
        else:
            sq = np.sqrt(disc)
            # cancellation-free pair of roots of A + B s + C s**2 / 2
            w = -(B + sq) if B >= 0.0 else -(B - sq)
            r1 = w / C
            r2 = 2.0 * A / w
        # the root where the difference is increasing
        s = r1 if B + C * r1 >= 0.0 else r2
        if not (slo - 1e-12 <= s <= shi + 1e-12):
            s = r2 if s == r1 else r1
    if s < slo:
        s = slo
    if s > shi:
        s = shi
    return X + s


@numba.njit(cache=True)
def _sup_core(b, v, p, c, delta, lo, hi):
    K = v.shape[0]
    parts = np.empty((K, 3, 6))
    npart = np.empty(K, dtype=np.int64)
    for k in range(K):
        npart[k] = _candidate(k, b, v, p, c, delta, parts[k])
    sk = np.empty(K, dtype=np.int64)
    sz = np.empty(K + 1)
    top = 0
    sk[0] = 0
    sz[0] = -np.inf
    for j in range(1, K):
        while True:
            i = sk[top]
            z = _crossing(parts[i], npart[i], parts[j], npart[j])
            if z <= sz[top]:
                if top == 0:
                    sk[0] = j
                    sz[0] = -np.inf
                    break
                top -= 1
                continue
            top += 1
            sk[top] = j
            sz[top] = z
            break
    sz[top + 1] = np.inf
    # emit parts clipped to [lo, hi)
    cap = 3 * (top + 1) + 2
    res = np.empty((cap, 6))
    nres = 0
    for s in range(top + 1):
        a = max(sz[s], lo)
        e = min(sz[s + 1], hi)
        if e <= a:
            continue
        k = sk[s]
        for m in range(npart[k]):
            ps = parts[k, m, 0]
            pe = parts[k, m + 1, 0] if m + 1 < npart[k] else np.inf
            x0 = max(ps, a)
            x1 = min(pe, e)
            if x1 <= x0:
                continue
            if nres > 0 and res[nres - 1, 5] == parts[k, m, 5]:
                continue
            res[nres, 0] = x0
            res[nres, 1:] = parts[k, m, 1:]
            nres += 1
    return res[:nres]


@numba.njit(cache=True)
def _eval_in(b, v, p, c, i, j, x):
    k = i
    while k + 1 < j and b[k + 1] <= x:
        k += 1
    s = x - b[k]
    return v[k] + p[k] * s + 0.5 * c[k] * s * s


@numba.njit(cache=True)
def _merge_runs(b, v, p, c, tol, max_run):
    """Greedy left-to-right merge of piece runs into single quadratics.

    A run ``[i, j)`` is replaced by the quadratic through its end values and
    midpoint value when that quadratic stays within ``tol`` of the original
    at every inner knot and piece midpoint.  Collisions and fans leave
    clusters of very short pieces; this keeps their number bounded.
    """
    K = v.shape[0]
    ob = np.empty(K + 1)
    ov = np.empty(K)
    op = np.empty(K)
    oc = np.empty(K)
    n = 0
    i = 0
    while i < K:
        best = i + 1
        bv, bp, bc = v[i], p[i], c[i]
        j = i + 2
        while j <= K and j - i <= max_run:
            a, e = b[i], b[j]
            L = e - a
            fa = v[i]
            fm = _eval_in(b, v, p, c, i, j, 0.5 * (a + e))
            s = e - b[j - 1]
            fe = v[j - 1] + p[j - 1] * s + 0.5 * c[j - 1] * s * s
            cc = 4.0 * (fa - 2.0 * fm + fe) / (L * L)
            pp = (fe - fa) / L - 0.5 * cc * L
            ok = True
            for k in range(i, j):
                for x in (b[k], 0.5 * (b[k] + b[k + 1])):
                    y = x - a
                    if abs(fa + pp * y + 0.5 * cc * y * y - _eval_in(b, v, p, c, i, j, x)) > tol:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
            best, bv, bp, bc = j, fa, pp, cc
            j += 1
        ob[n] = b[i]
        ov[n], op[n], oc[n] = bv, bp, bc
        n += 1
        i = best
    ob[n] = b[K]
    return ob[:n + 1].copy(), ov[:n].copy(), op[:n].copy(), oc[:n].copy()


def _finish(res: np.ndarray, lo: float, hi: float, periodic: bool) -> PiecewiseQuadratic:
    """Drop slivers, convert parts to left-knot form and merge short runs."""
    tol = MIN_PIECE * (hi - lo)
    starts = res[:, 0]
    ends = np.append(starts[1:], hi)
    keep = (ends - starts) > tol
    keep[0] = True
    res = res[keep]
    starts = res[:, 0].copy()
    starts[0] = lo
    d = starts - res[:, 1]
    v = res[:, 2] + res[:, 3] * d + 0.5 * res[:, 4] * d * d
    p = res[:, 3] + res[:, 4] * d
    knots = np.append(starts, hi)
    tol = MERGE_TOL * (1.0 + float(np.max(np.abs(v))))
    knots, v, p, c = _merge_runs(knots, v, p, res[:, 4].copy(), tol, MERGE_RUN)
    return PiecewiseQuadratic(knots, v, p, c, periodic)


def sup_convolution_exact(q: PiecewiseQuadratic, delta: float) -> PiecewiseQuadratic:
    """``x -> max_y q(y) - (x - y)**2 / (2 delta)`` without discretisation."""
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be a positive finite number, got {delta}")
    lo, hi = float(q.knots[0]), float(q.knots[-1])
    b, v, p, c = q.knots, q.v, q.p, q.c
    # values move by at most delta Lip**2 / 2; below rounding the step is exact as is
    lip2 = max(float(np.max(p * p)), float(np.max(q.right_slopes ** 2)))
    if 0.5 * delta * lip2 <= 1e-17 * (1.0 + float(np.max(np.abs(v)))):
        return q
    if q.periodic:
        # beyond sqrt(2 delta osc) no point beats y = x
        reach = math.sqrt(2.0 * delta * q.oscillation()) + 1e-12
        copies = int(math.ceil(reach / q.period))
        P = q.pieces
        shifts = np.arange(-copies, copies + 1) * q.period
        b = np.append((b[:-1][None, :] + shifts[:, None]).ravel(), b[-1] + shifts[-1])
        v = np.tile(v, shifts.size)
        p = np.tile(p, shifts.size)
        c = np.tile(c, shifts.size)
        assert b.size == P * shifts.size + 1
    res = _sup_core(np.ascontiguousarray(b), v, p, c, float(delta), lo, hi)
    return _finish(res, lo, hi, q.periodic)


def inf_convolution_exact(q: PiecewiseQuadratic, delta: float) -> PiecewiseQuadratic:
    """``x -> min_y q(y) + (x - y)**2 / (2 delta)`` as ``-sup(-q)``."""
    return -sup_convolution_exact(-q, delta)


def apply_signed_exact(q: PiecewiseQuadratic, delta: float) -> PiecewiseQuadratic:
    """``S_H(delta)`` with ``S_H(-d) = S_{-H}(d)``, as for grid functions."""
    if delta > 0:
        return sup_convolution_exact(q, delta)
    if delta < 0:
        return inf_convolution_exact(q, -delta)
    return q
