"""Gauss-Legendre quadrature against the standard normal weight.

All oracle integrals are written in normal-score coordinates, where every
marginal becomes N(0, 1) and the bivariate laws become comonotone,
independent, or bivariate normal. Integrals are truncated to
``[-Z_LIMIT, Z_LIMIT]`` (neglected mass ~1e-19) and computed with composite
20-point Gauss-Legendre rules; panels are halved until two successive levels
agree to the requested tolerance. Known kinks and jumps of the integrand are
passed as breakpoints and always fall on panel edges.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline

from .errors import NumericalError

Z_LIMIT = 9.0
ORDER = 20
_X, _W = leggauss(ORDER)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def phi(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(z))


def region_edges(breaks=()) -> np.ndarray:
    b = [float(x) for x in breaks if np.isfinite(x) and -Z_LIMIT < x < Z_LIMIT]
    return np.array([-Z_LIMIT, *sorted(set(b)), Z_LIMIT])


def composite_rule(edges, level: int, x=_X, w=_W):
    """Nodes and weights of a composite rule on ``edges`` (last axis).

    Each region between consecutive edges is cut into ``2**level`` equal
    panels. Zero-width regions contribute zero weight.
    """
    edges = np.asarray(edges, dtype=float)
    p = 2**level
    a, b = edges[..., :-1], edges[..., 1:]
    frac = np.arange(p + 1) / p
    sub = a[..., None] + (b - a)[..., None] * frac
    lo, hi = sub[..., :-1], sub[..., 1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = mid[..., None] + half[..., None] * x
    weights = half[..., None] * w
    shape = edges.shape[:-1] + (-1,)
    return nodes.reshape(shape), np.broadcast_to(weights, nodes.shape).reshape(shape)


def _converge(evaluate, tol, min_level, max_level, what):
    prev = evaluate(min_level)
    for level in range(min_level + 1, max_level + 1):
        cur = evaluate(level)
        err = abs(cur - prev)
        if err <= tol:
            return cur, err
        prev = cur
    raise NumericalError(f"{what} did not reach tolerance {tol:g} (last change {err:.3g})", achieved=err)


def integrate_normal(f, breaks=(), tol=1e-11, min_level=1, max_level=7):
    """``(E f(Z), error estimate)`` for ``Z ~ N(0, 1)``."""
    edges = region_edges(breaks)

    def evaluate(level):
        z, w = composite_rule(edges, level)
        return float(np.sum(w * phi(z) * f(z)))

    return _converge(evaluate, tol, min_level, max_level, "normal expectation")


def expect_normal_pair(f, g, r, f_breaks=(), g_breaks=(), tol=1e-10, min_level=1, max_level=5):
    """``E f(X) g(Y)`` for standard bivariate normal ``(X, Y)`` with corr ``r``.

    Written as ``E_X[f(X) E_Z g(rX + sqrt(1-r^2) Z)]``; the inner rule is
    split where ``rX + sqrt(1-r^2) z`` crosses a breakpoint of ``g``.
    """
    r = float(r)
    tau = np.sqrt((1.0 - r) * (1.0 + r))
    gb = np.array([b for b in g_breaks if np.isfinite(b)], dtype=float)
    outer = list(f_breaks)
    if r != 0.0:
        outer += list(gb / r)
    xedges = region_edges(outer)

    def evaluate(level):
        x, wx = composite_rule(xedges, level)
        if gb.size:
            zb = np.clip((gb[None, :] - r * x[:, None]) / tau, -Z_LIMIT, Z_LIMIT)
            zb.sort(axis=1)
            zedges = np.concatenate(
                [np.full((x.size, 1), -Z_LIMIT), zb, np.full((x.size, 1), Z_LIMIT)], axis=1
            )
        else:
            zedges = np.broadcast_to(region_edges(), (x.size, 2))
        z, wz = composite_rule(zedges, level)
        inner = np.sum(wz * phi(z) * g(r * x[:, None] + tau * z), axis=1)
        return float(np.sum(wx * phi(x) * f(x) * inner))

    return _converge(evaluate, tol, min_level, max_level, "bivariate normal expectation")


class TailIntegral:
    """``A(z) = int_z^inf h(w) phi(w) dw`` tabulated as a piecewise cubic.

    Node values come from 8-point Gauss-Legendre panels of width ``step``
    accumulated from the right; slopes are the exact derivative
    ``-h(z) phi(z)``. Regions are split at ``breaks`` so a jump in ``h`` only
    produces a corner at a node.
    """

    _x8, _w8 = leggauss(8)

    def __init__(self, h, breaks=(), step=0.01):
        edges = region_edges(breaks)
        self.edges = edges
        grids = []
        for a, b in zip(edges[:-1], edges[1:]):
            k = max(1, int(np.ceil((b - a) / step)))
            grids.append(np.linspace(a, b, k + 1))
        pieces = []
        for g in grids:
            nodes, w = composite_rule(g, 0, self._x8, self._w8)
            vals = (w * phi(nodes) * h(nodes)).reshape(g.size - 1, -1).sum(axis=1)
            pieces.append(vals)
        # accumulate from the right across all regions
        total = 0.0
        values = [None] * len(grids)
        for i in range(len(grids) - 1, -1, -1):
            tail = np.concatenate([np.cumsum(pieces[i][::-1])[::-1], [0.0]]) + total
            values[i] = tail
            total = tail[0]
        self.total = float(total)
        self.splines = []
        for g, v in zip(grids, values):
            eps = 1e-12 * (g[-1] - g[0])
            probe = g.copy()
            probe[0] += eps
            probe[-1] -= eps
            slope = -h(probe) * phi(g)
            self.splines.append(CubicHermiteSpline(g, v, slope))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.empty(z.shape)
        inner = self.edges[1:-1]
        idx = np.searchsorted(inner, z, side="right")
        for i, sp in enumerate(self.splines):
            sel = idx == i
            if np.any(sel):
                out[sel] = sp(np.clip(z[sel], self.edges[i], self.edges[i + 1]))
        out[z <= -Z_LIMIT] = self.total
        out[z >= Z_LIMIT] = 0.0
        return out
