"""Exact Hopf-Lax steps for the Hamiltonian ``H(p) = |p|**2 / 2``.

For ``delta > 0``::

    S_H(delta) phi (x) = max_y  phi(y) - |x - y|**2 / (2 delta)
    S_H(-delta) phi (x) = min_y  phi(y) + |x - y|**2 / (2 delta)

Two candidate sets for ``y`` are supported.

``"nodes"``
    ``y`` ranges over grid nodes only.  The argmax comes from the linear-time
    lower envelope of parabolas (Felzenszwalb-Huttenlocher) in integer node
    coordinates.  Exactly monotone, but the sampled output can carry spurious
    convex kinks of size ``O(1/delta)`` where the argmax hops between nodes.

``"interpolant"`` (default)
    ``y`` ranges over the continuum, with ``phi`` extended inside cell
    ``[x_j, x_{j+1}]`` by the parabola through the two end nodes with
    curvature ``kappa_j = max(D2 phi_j, D2 phi_{j+1})``.  The kinks this
    leaves at the nodes are concave, so the extension is semiconcave of
    order ``max D2 phi`` and the semiconcavity estimate
    ``kappa / (1 - kappa delta)`` holds exactly on the grid, while smooth
    data are reproduced to third order.  For ``max D2 phi < 1/delta`` the
    objective is concave in ``y``, hence the continuous maximiser sits in
    one of the two cells touching the node argmax and refinement costs O(n);
    otherwise the extension is handed to the exact piecewise quadratic
    transform, which finds the maximiser in any cell.  Because
    ``kappa_j`` depends on the data, monotonicity holds up to
    ``max_j (kappa_j[psi] - kappa_j[phi])_+ h**2 / 8``.

The quadratic coupling is separable, so an N-dimensional transform would be
a sequence of these 1D transforms along each axis; only 1D is provided.
"""
from __future__ import annotations

import math
import warnings

import numba
import numpy as np

from .grid import GridFn, oscillation, second_diff_values
from .piecewise import PiecewiseQuadratic, sup_convolution_exact

__all__ = [
    "sup_convolution",
    "inf_convolution",
    "apply_signed",
    "is_negligible",
    "interpolant_curvature",
    "cell_curvatures",
    "brute_force_sup",
    "TINY_DELTA_FACTOR",
    "CANDIDATES",
]

# below TINY_DELTA_FACTOR * h**2 a step is treated as the identity
TINY_DELTA_FACTOR = 10.0
CANDIDATES = ("interpolant", "nodes")


@numba.njit(cache=True)
def _envelope_argmax(phi, offset, n_out, c):
    """argmax_j phi[j] - c * (i + offset - j)**2 for i in range(n_out)."""
    m = phi.shape[0]
    v = np.empty(m, dtype=np.int64)
    z = np.empty(m + 1)
    g = np.empty(m)
    for j in range(m):
        g[j] = -phi[j] / c + j * j
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, m):
        s = (g[q] - g[v[k]]) / (2.0 * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = (g[q] - g[v[k]]) / (2.0 * (q - v[k]))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    out = np.empty(n_out, dtype=np.int64)
    k = 0
    for i in range(n_out):
        pos = i + offset
        while z[k + 1] < pos:
            k += 1
        out[i] = v[k]
    return out


@numba.njit(cache=True)
def _cell_max(left, right, dist, kh2, c):
    """Max over t in (0,1) of the cell objective, or -inf if not interior.

    Objective: left + (right-left) t - kh2/2 t (1-t) - c (dist - t)**2.
    """
    curv = kh2 - 2.0 * c
    if curv >= 0.0:
        return -np.inf
    d = right - left
    t = -(d - 0.5 * kh2 + 2.0 * c * dist) / curv
    if t <= 0.0 or t >= 1.0:
        return -np.inf
    return left + d * t - 0.5 * kh2 * t * (1.0 - t) - c * (dist - t) ** 2


@numba.njit(cache=True)
def _refine(cand, offset, n_out, c, jstar, kh2):
    """``kh2[j]`` is ``kappa_j h**2`` for the cell between ``cand[j]`` and ``cand[j + 1]``."""
    m = cand.shape[0]
    out = np.empty(n_out)
    for i in range(n_out):
        pos = i + offset
        j0 = jstar[i]
        best = cand[j0] - c * (pos - j0) ** 2
        for j in range(j0 - 1, j0 + 1):
            if j < 0 or j + 1 >= m:
                continue
            val = _cell_max(cand[j], cand[j + 1], pos - j, kh2[j], c)
            if val > best:
                best = val
        out[i] = best
    return out


def _check_delta(delta: float):
    if not (math.isfinite(delta) and delta > 0):
        raise ValueError(f"delta must be a positive finite number, got {delta}")


def _check_candidates(candidates: str):
    if candidates not in CANDIDATES:
        raise ValueError(f"candidates must be one of {CANDIDATES}, got {candidates!r}")


def is_negligible(delta: float, h: float) -> bool:
    """True when ``|delta|`` is below the identity short-circuit threshold."""
    return abs(delta) < TINY_DELTA_FACTOR * h * h


def cell_curvatures(phi: GridFn) -> np.ndarray:
    """``kappa_j = max(D2 phi_j, D2 phi_{j+1})`` for every cell.

    Periodic grids have ``n`` cells (the last one wraps); line grids have
    ``n - 1`` and use interior second differences only, since the extension
    never leaves ``[x_0, x_{n-1}]``.
    """
    d2 = second_diff_values(phi)
    if phi.periodic:
        return np.maximum(d2, np.roll(d2, -1))
    inner = d2.copy()
    inner[0], inner[-1] = d2[1], d2[-2]
    return np.maximum(inner[:-1], inner[1:])


def interpolant_curvature(phi: GridFn) -> float:
    """Semiconcavity order of the in-cell extension, ``max_j kappa_j``."""
    return float(np.max(cell_curvatures(phi)))


def _extended(phi: GridFn, delta: float):
    """Candidate node values and the position of output node 0 among them."""
    vals = phi.values
    n = phi.n
    if not phi.periodic:
        return vals, 0
    # farther than sqrt(2 delta osc) a node cannot beat y = x; +2 covers the
    # in-cell bulge of the interpolant
    reach = math.sqrt(2.0 * delta * oscillation(phi)) / phi.h
    w = min(int(math.ceil(reach)) + 2, 10 * n)
    idx = np.arange(-w, n + w) % n
    return vals[idx], w


def _extended_cells(phi: GridFn, offset: int, m: int) -> np.ndarray:
    """Cell curvatures aligned with the extended candidate array."""
    kap = cell_curvatures(phi)
    if not phi.periodic:
        return np.ascontiguousarray(kap)
    return np.ascontiguousarray(kap[(np.arange(m - 1) - offset) % phi.n])


def _interpolant_pieces(phi: GridFn) -> PiecewiseQuadratic:
    """The in-cell extension as a piecewise quadratic with knots at the nodes."""
    kap = cell_curvatures(phi)
    x = phi.x
    if phi.periodic:
        b = np.append(x, x[0] + phi.n * phi.h)
        vals = np.append(phi.values, phi.values[0])
    else:
        b, vals = x, phi.values
    L = np.diff(b)
    p = np.diff(vals) / L - 0.5 * kap * L
    return PiecewiseQuadratic(b, vals[:-1], p, kap, phi.periodic)


def sup_convolution(phi: GridFn, delta: float, candidates: str = "interpolant") -> GridFn:
    """``x -> max_y phi(y) - (x - y)**2 / (2 delta)``; see module notes."""
    _check_delta(delta)
    _check_candidates(candidates)
    if is_negligible(delta, phi.h):
        warnings.warn(
            f"delta={delta:.3e} below {TINY_DELTA_FACTOR}*h^2; returning identity",
            RuntimeWarning,
            stacklevel=2,
        )
        return phi
    cand, offset = _extended(phi, delta)
    cand = np.ascontiguousarray(cand)
    c = phi.h * phi.h / (2.0 * delta)
    j = _envelope_argmax(cand, offset, phi.n, c)
    if candidates == "nodes":
        i = np.arange(phi.n) + offset
        out = cand[j] - c * (i - j).astype(float) ** 2
    elif interpolant_curvature(phi) * delta >= 1.0:
        # objective not concave in y: a far cell can hold the maximiser
        return sup_convolution_exact(_interpolant_pieces(phi), delta).sample(phi)
    else:
        kh2 = _extended_cells(phi, offset, cand.size) * phi.h * phi.h
        out = _refine(cand, offset, phi.n, c, j, kh2)
    return phi.with_values(out)


def inf_convolution(phi: GridFn, delta: float, candidates: str = "interpolant") -> GridFn:
    """``x -> min_y phi(y) + (x - y)**2 / (2 delta)``, as ``-sup(-phi)``."""
    _check_delta(delta)
    neg = phi.with_values(-phi.values)
    return phi.with_values(-sup_convolution(neg, delta, candidates).values)


def apply_signed(phi: GridFn, delta: float, candidates: str = "interpolant") -> GridFn:
    """``S_H(delta)`` with the convention ``S_H(-d) = S_{-H}(d)``."""
    if delta > 0:
        return sup_convolution(phi, delta, candidates)
    if delta < 0:
        return inf_convolution(phi, -delta, candidates)
    return phi


def brute_force_sup(phi: GridFn, delta: float, candidates: str = "interpolant") -> np.ndarray:
    """Quadratic-cost reference for :func:`sup_convolution`.

    Every node, and for ``"interpolant"`` every cell interior, is tried for
    every output node.  Periodic grids use whole shifted copies of the data.
    """
    _check_delta(delta)
    _check_candidates(candidates)
    n = phi.n
    c = phi.h * phi.h / (2.0 * delta)
    pos = np.arange(n, dtype=float)[:, None]
    if phi.periodic:
        copies = int(math.ceil(math.sqrt(2.0 * delta * oscillation(phi)) / (n * phi.h))) + 1
        j = np.arange(-copies * n, (copies + 1) * n)
        vals = phi.values[j % n]
    else:
        j = np.arange(n)
        vals = phi.values
    best = np.max(vals[None, :] - c * (pos - j[None, :]) ** 2, axis=1)
    if candidates == "nodes":
        return best
    kap = cell_curvatures(phi)
    kh2 = (kap[j[:-1] % n] if phi.periodic else kap)[None, :] * phi.h * phi.h
    curv = kh2 - 2.0 * c
    left, right = vals[None, :-1], vals[None, 1:]
    dist = pos - j[None, :-1]
    d = right - left
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -(d - 0.5 * kh2 + 2.0 * c * dist) / curv
        val = left + d * t - 0.5 * kh2 * t * (1.0 - t) - c * (dist - t) ** 2
    val = np.where((curv < 0.0) & (t > 0.0) & (t < 1.0), val, -np.inf)
    return np.maximum(best, np.max(val, axis=1))
