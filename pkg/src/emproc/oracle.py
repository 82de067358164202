"""Deterministic quadrature values of every limit quantity.

Notation used throughout (all in normal-score coordinates ``z``):

* ``A_t(z) = int_{x >= y(z)} q_t(x) dG_t(x)``, the tail integral of the
  weight. ``beta_n(t)`` is asymptotically ``n^{-1/2} sum_h {A_t(Y_h) - E_t G_t q_t}``.
* ``g_t(z) = c(Phi(z)) q1(t, y(z))`` and ``eta(t) = J(t) = E g_t``.

Every limit covariance is then an expectation of a product of two such
functions under the copula of ``(Y(t), Y(s))``.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError
from .models import ModelSpec, TimeGrid
from .quadrature import Z_LIMIT, TailIntegral, expect_normal_pair, integrate_normal
from .weights import WeightSpec

TOL_1D = 1e-11
TOL_2D = 1e-10

_tails: "weakref.WeakKeyDictionary[WeightSpec, dict]" = weakref.WeakKeyDictionary()


# -- building blocks -----------------------------------------------------------


def _zbreaks(model: ModelSpec, t: float, ybreaks) -> tuple:
    out = []
    for b in ybreaks:
        z = float(model.value_to_score(t, b))
        if np.isfinite(z) and -Z_LIMIT < z < Z_LIMIT:
            out.append(z)
    return tuple(sorted(set(out)))


def _weight_z(model, weights, t):
    def f(z):
        return weights.q(t, model.score_to_value(t, z))

    return f, _zbreaks(model, t, weights.q_breaks(t))


def _score_z(model, weights, t):
    if not weights.eta_defined:
        raise ConfigError("g_t / eta(t) need c, q0 and Z in the weights block")

    def f(z):
        return weights.c(ndtr(z)) * weights.q1(t, model.score_to_value(t, z))

    return f, _zbreaks(model, t, weights.g_breaks(t))


def tail_integral(model, weights, t) -> TailIntegral:
    cache = _tails.setdefault(weights, {})
    key = (model, float(t))
    if key not in cache:
        f, br = _weight_z(model, weights, t)
        cache[key] = TailIntegral(f, br)
    return cache[key]


def _tail_z(model, weights, t):
    return tail_integral(model, weights, t), _zbreaks(model, t, weights.q_breaks(t))


def expect(f, breaks=(), tol=TOL_1D) -> float:
    return integrate_normal(f, breaks, tol=tol)[0]


def expect_pair(model, t, s, f, fb, g, gb, tol=TOL_2D) -> float:
    """``E f(Z_t) g(Z_s)`` where ``Z_t`` is the normal score of ``Y(t)``."""
    cop = model.copula(t, s)
    if cop[0] == "comonotone":
        return expect(lambda z: f(z) * g(z), tuple(fb) + tuple(gb), tol)
    if cop[0] == "independent":
        return expect(f, fb, tol) * expect(g, gb, tol)
    r = cop[1]
    if r >= 1.0 - 1e-13:
        return expect(lambda z: f(z) * g(z), tuple(fb) + tuple(gb), tol)
    if r <= -1.0 + 1e-13:
        return expect(lambda z: f(z) * g(-z), tuple(fb) + tuple(-b for b in gb), tol)
    return expect_normal_pair(f, g, r, fb, gb, tol=tol)[0]


# -- first moments -------------------------------------------------------------


def e_gq(model, weights, t, tol=TOL_1D) -> float:
    """``E_t G_t q_t``."""
    f, br = _weight_z(model, weights, t)
    return expect(lambda z: ndtr(z) * f(z), br, tol)


def mean_limit(model, weights, t, tol=TOL_1D) -> float:
    """``E beta*_n(t) = E_t q_t - E_t q_t G_t``; exact at every n."""
    f, br = _weight_z(model, weights, t)
    return expect(lambda z: (1.0 - ndtr(z)) * f(z), br, tol)


def j_limit(model, weights, t, tol=TOL_1D) -> float:
    """``J(t) = int c(G_t(y)) q1(t, y) dG_t(y)``."""
    f, br = _score_z(model, weights, t)
    return expect(f, br, tol)


def c2(model, weights, t, tol=TOL_1D) -> float:
    """``int A_t(u)^2 dG_t(u)``."""
    a, br = _tail_z(model, weights, t)
    return expect(lambda z: a(z) ** 2, br, tol)


# -- covariances ---------------------------------------------------------------


def g_cross(model, weights_t, weights_s, t, s, tol=TOL_2D) -> float:
    """``int A_t(u) A_s(v) dG_{t,s}(u, v)`` with separate weights at t and s."""
    a, ab = _tail_z(model, weights_t, t)
    b, bb = _tail_z(model, weights_s, s)
    return expect_pair(model, t, s, a, ab, b, bb, tol)


def gamma1_cov(model, weights, t, s, tol=TOL_2D) -> float:
    """Limit covariance of ``beta_n(t), beta_n(s)``."""
    return g_cross(model, weights, weights, t, s, tol) - e_gq(model, weights, t) * e_gq(model, weights, s)


def gamma3_cov(model, weights1, weights2, t, s, tol=TOL_2D) -> float:
    """Limit of ``Cov(beta_{n,1}(t), beta_{n,2}(s))``; bilinear in the weights."""
    return g_cross(model, weights1, weights2, t, s, tol) - e_gq(model, weights1, t) * e_gq(model, weights2, s)


def gamma3_symmetrized(model, weights1, weights2, t, s, tol=TOL_2D) -> float:
    """``Gamma3(t, s) + Gamma3'(s, t)``: one product subtracted per g1 term.

    This is the cross part of the covariance of ``beta_{n,1} + beta_{n,2}``
    at ``(t, s)``.
    """
    return gamma3_cov(model, weights1, weights2, t, s, tol) + gamma3_cov(model, weights1, weights2, s, t, tol)


def gamma2_cov(model, weights, t, s, tol=TOL_2D) -> float:
    """``Cov(g_t(Y(t)), g_s(Y(s)))``: limit covariance of ``alpha_n``."""
    f, fb = _score_z(model, weights, t)
    g, gb = _score_z(model, weights, s)
    et, es = j_limit(model, weights, t), j_limit(model, weights, s)
    return expect_pair(model, t, s, lambda z: f(z) - et, fb, lambda z: g(z) - es, gb, tol)


def cross_cov_one_sided(model, weights, t, s, tol=TOL_2D) -> float:
    """``lim Cov(alpha_n(t), beta_n(s)) = E[(g_t - eta_t)(Y(t)) A_s(Y(s))]``."""
    f, fb = _score_z(model, weights, t)
    et = j_limit(model, weights, t)
    a, ab = _tail_z(model, weights, s)
    return expect_pair(model, t, s, lambda z: f(z) - et, fb, a, ab, tol)


def cross_cov(model, weights, t, s, tol=TOL_2D) -> float:
    """Symmetrized cross term ``gamma(t, s) = gamma1(t, s) + gamma1(s, t)``."""
    return cross_cov_one_sided(model, weights, t, s, tol) + cross_cov_one_sided(model, weights, s, t, tol)


def gamma_total(model, weights, t, s, tol=TOL_2D) -> float:
    """Limit covariance of ``gamma_n = alpha_n + beta_n``."""
    return (
        gamma1_cov(model, weights, t, s, tol)
        + gamma2_cov(model, weights, t, s, tol)
        + cross_cov(model, weights, t, s, tol)
    )


def increment_variance(model, weights, t, s, tol=TOL_2D) -> float:
    """``Gamma1(t,t) + Gamma1(s,s) - 2 Gamma1(t,s)``."""
    if t == s:
        return 0.0
    return (
        gamma1_cov(model, weights, t, t, tol)
        + gamma1_cov(model, weights, s, s, tol)
        - 2.0 * gamma1_cov(model, weights, t, s, tol)
    )


# -- surfaces ------------------------------------------------------------------

SYMMETRIC_KINDS = ("Gamma1", "Gamma2", "GammaTotal", "CrossGamma")
KINDS = SYMMETRIC_KINDS + ("Gamma3",)


@dataclass
class CovarianceSurface:
    grid: TimeGrid
    values: np.ndarray
    kind: str

    @property
    def symmetric(self) -> bool:
        return self.kind in SYMMETRIC_KINDS

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.values + self.values.T))))

    def rows(self):
        """Long format ``(t, s, value, kind)``."""
        pts = self.grid.points
        return [
            (pts[i], pts[j], float(self.values[i, j]), self.kind)
            for i in range(len(pts))
            for j in range(len(pts))
        ]


def covariance_surface(kind, model, weights, grid: TimeGrid, weights2=None, tol=TOL_2D) -> CovarianceSurface:
    if kind not in KINDS:
        raise ConfigError(f"unknown surface kind {kind!r}")
    fn = {
        "Gamma1": lambda t, s: gamma1_cov(model, weights, t, s, tol),
        "Gamma2": lambda t, s: gamma2_cov(model, weights, t, s, tol),
        "GammaTotal": lambda t, s: gamma_total(model, weights, t, s, tol),
        "CrossGamma": lambda t, s: cross_cov(model, weights, t, s, tol),
    }
    pts = grid.points
    m = len(pts)
    vals = np.empty((m, m))
    if kind == "Gamma3":
        if weights2 is None:
            raise ConfigError("Gamma3 needs a second weight family")
        for i in range(m):
            for j in range(m):
                vals[i, j] = gamma3_cov(model, weights, weights2, pts[i], pts[j], tol)
    else:
        for i in range(m):
            for j in range(i, m):
                vals[i, j] = vals[j, i] = fn[kind](pts[i], pts[j])
    return CovarianceSurface(grid, vals, kind)


# -- tightness scan ------------------------------------------------------------


@dataclass
class TightnessReport:
    delta: float
    condition_r: float
    pairs: list = field(default_factory=list)
    fitted_exponent: float = float("nan")
    fitted_K0: float = float("nan")
    implied_K0: float = float("nan")
    satisfied_on_grid: bool = False
    degenerate: bool = False
    notice: str = ""


def holder_scan(model, weights, grid: TimeGrid, delta: float, r: float = 0.0, tol=TOL_2D) -> TightnessReport:
    """Increment variances for ``|t - s| <= delta`` and a log-log power fit.

    ``fitted_K0`` comes from the fitted intercept, ``implied_K0`` from the
    worst pair; both use the ``(3/2) K0 |s-t|^(1+r)`` normalisation.
    """
    if not model.is_path_model:
        raise ConfigError("tightness scans need a path model; IndependentField is FDD-only")
    if grid.m < 10:
        raise ConfigError("tightness scan needs at least 10 grid points")
    spacing = float(np.min(np.diff(grid.array)))
    if not delta > spacing:
        raise ConfigError(f"delta={delta} must exceed the smallest grid spacing {spacing:.4g}")
    pts = grid.points
    diag = {t: gamma1_cov(model, weights, t, t, tol) for t in pts}
    pairs = []
    for i, t in enumerate(pts):
        for s in pts[i + 1:]:
            if s - t <= delta + 1e-12:
                v = diag[t] + diag[s] - 2.0 * gamma1_cov(model, weights, t, s, tol)
                pairs.append((t, s, v))
    rep = TightnessReport(delta=float(delta), condition_r=float(r), pairs=pairs)
    h = np.array([s - t for t, s, _ in pairs])
    v = np.array([p[2] for p in pairs])
    keep = v > 1e-12
    if not np.any(keep) or np.unique(h[keep]).size < 2:
        rep.degenerate = True
        rep.notice = "degenerate scan: increment variances vanish on the grid"
        rep.satisfied_on_grid = True
        return rep
    slope, intercept = np.polyfit(np.log(h[keep]), np.log(v[keep]), 1)
    rep.fitted_exponent = float(slope)
    rep.fitted_K0 = float((2.0 / 3.0) * np.exp(intercept))
    rep.implied_K0 = float((2.0 / 3.0) * np.max(v / h ** (1.0 + r)))
    rep.satisfied_on_grid = bool(slope >= 1.0 + r - 0.05)
    return rep
