"""Process models with known marginal and bivariate laws.

Each model is described by its marginal family ``G_t`` and by the copula of
``(Y(t), Y(s))``, which is always one of three shapes:

* comonotone: a single uniform driver, ``Y(t) = Q_t(U)``;
* independent: ``Y(t)`` and ``Y(s)`` independent for ``t != s``;
* gaussian(r): normal scores with correlation ``r``.

The normal-score map ``z -> Q_t(Phi(z))`` is what the quadrature oracles
integrate over, so every model exposes it together with its inverse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from . import rng as _rng
from .bvn import bvn_cdf
from .errors import ConfigError

KINDS = ("ComonotoneDriver", "BrownianMotion", "StationaryOUGaussian", "IndependentField")
MARGINALS = ("uniform", "normal")


@dataclass(frozen=True)
class TimeGrid:
    points: tuple
    T: float

    def __post_init__(self):
        pts = tuple(float(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "T", float(self.T))
        if not self.T > 0:
            raise ConfigError(f"horizon T must be positive, got {self.T}")
        if len(pts) < 2:
            raise ConfigError("a time grid needs at least 2 points")
        arr = np.asarray(pts)
        if np.any(np.diff(arr) <= 0):
            raise ConfigError("time grid must be strictly increasing")
        if arr[0] <= 0 or arr[-1] > self.T:
            raise ConfigError(f"time grid points must lie in (0, {self.T}]")

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.points)

    @classmethod
    def linspace(cls, start, stop, num, T=None):
        return cls(tuple(np.linspace(start, stop, num)), T if T is not None else stop)


@dataclass(frozen=True)
class ModelSpec:
    """A process family ``Y(t)``.

    Parameters
    ----------
    kind
        One of ``ComonotoneDriver``, ``BrownianMotion``,
        ``StationaryOUGaussian``, ``IndependentField``.
    rho
        Correlation time scale of the OU model, ``corr = exp(-|t-s|/rho)``.
    marginal
        ``uniform`` or ``normal``; used by the comonotone and independent
        kinds (the Gaussian kinds are always normal).
    scale_slope
        Marginal scale ``1 + scale_slope * t`` for the comonotone and
        independent kinds. Zero gives identical marginals at every time.
    """

    kind: str
    rho: float = 1.0
    marginal: str = "uniform"
    scale_slope: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "StationaryOUGaussian" and not self.rho > 0:
            raise ConfigError(f"OU correlation scale must be positive, got {self.rho}")
        if self.kind in ("BrownianMotion", "StationaryOUGaussian"):
            object.__setattr__(self, "marginal", "normal")
        if self.marginal not in MARGINALS:
            raise ConfigError(f"unknown marginal {self.marginal!r}")

    # -- structure -------------------------------------------------------

    @property
    def is_path_model(self) -> bool:
        return self.kind != "IndependentField"

    @property
    def seed_domain(self) -> str:
        return "(0, 1 + scale_slope*t)" if self.marginal == "uniform" else "real line"

    def scale(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "BrownianMotion":
            return np.sqrt(t)
        if self.kind == "StationaryOUGaussian":
            return np.ones_like(t)
        return 1.0 + self.scale_slope * t

    def validate_grid(self, grid: TimeGrid) -> None:
        if self.kind == "BrownianMotion" and grid.points[0] <= 0:
            raise ConfigError("BrownianMotion marginal degenerates at t=0")
        if self.marginal == "uniform" or self.kind in ("ComonotoneDriver", "IndependentField"):
            if np.any(self.scale(grid.array) <= 0):
                raise ConfigError("marginal scale 1 + scale_slope*t must stay positive on the grid")

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "BrownianMotion" and np.any(t <= 0):
            raise ConfigError("BrownianMotion requires t > 0")
        return t

    def copula(self, t: float, s: float):
        """Return ``("comonotone",)``, ``("independent",)`` or ``("gaussian", r)``."""
        t, s = float(t), float(s)
        if t == s or self.kind == "ComonotoneDriver":
            return ("comonotone",)
        if self.kind == "IndependentField":
            return ("independent",)
        if self.kind == "BrownianMotion":
            return ("gaussian", float(np.sqrt(min(t, s) / max(t, s))))
        return ("gaussian", float(np.exp(-abs(t - s) / self.rho)))

    # -- marginal law ----------------------------------------------------

    def marginal_cdf(self, t, x):
        t = self._check_t(t)
        x = np.asarray(x, dtype=float)
        sc = self.scale(t)
        if self.marginal == "uniform":
            return np.clip(x / sc, 0.0, 1.0)
        return ndtr(x / sc)

    def marginal_quantile(self, t, p):
        t = self._check_t(t)
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)) or np.any(np.isnan(p)):
            raise ValueError("quantile level must lie in the open interval (0, 1)")
        sc = self.scale(t)
        if self.marginal == "uniform":
            return p * sc
        return sc * ndtri(p)

    def marginal_pdf(self, t, x):
        t = self._check_t(t)
        x = np.asarray(x, dtype=float)
        sc = self.scale(t)
        if self.marginal == "uniform":
            return np.where((x > 0) & (x < sc), 1.0 / sc, 0.0)
        return np.exp(-0.5 * (x / sc) ** 2) / (sc * np.sqrt(2 * np.pi))

    def score_to_value(self, t, z):
        """``Q_t(Phi(z))``: the value of ``Y(t)`` with normal score ``z``."""
        z = np.asarray(z, dtype=float)
        sc = self.scale(t)
        if self.marginal == "uniform":
            return sc * ndtr(z)
        return sc * z

    def value_to_score(self, t, y):
        """``Phi^{-1}(G_t(y))``; +-inf outside the support."""
        y = np.asarray(y, dtype=float)
        sc = self.scale(t)
        if self.marginal == "uniform":
            with np.errstate(divide="ignore"):
                return ndtri(np.clip(y / sc, 0.0, 1.0))
        return y / sc

    # -- bivariate law ---------------------------------------------------

    def joint_cdf(self, t, s, u, v):
        """``P(Y(t) <= u, Y(s) <= v)``."""
        self._check_t(t)
        self._check_t(s)
        gu = self.marginal_cdf(t, u)
        gv = self.marginal_cdf(s, v)
        cop = self.copula(t, s)
        if cop[0] == "comonotone":
            return np.minimum(gu, gv)
        if cop[0] == "independent":
            return gu * gv
        return bvn_cdf(self.value_to_score(t, u), self.value_to_score(s, v), cop[1])

    # -- sampling --------------------------------------------------------

    def _draw(self, n: int, times: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        m = times.size
        if self.kind == "ComonotoneDriver":
            if self.marginal == "uniform":
                u = gen.random(n)
                _rng.record_draws(n)
                return u[:, None] * self.scale(times)[None, :]
            z = gen.standard_normal(n)
            _rng.record_draws(n)
            return z[:, None] * self.scale(times)[None, :]
        if self.kind == "IndependentField":
            if self.marginal == "uniform":
                x = gen.random((n, m))
            else:
                x = gen.standard_normal((n, m))
            _rng.record_draws(n * m)
            return x * self.scale(times)[None, :]
        z = gen.standard_normal((n, m))
        _rng.record_draws(n * m)
        out = np.empty((n, m))
        if self.kind == "BrownianMotion":
            steps = np.sqrt(np.diff(np.concatenate(([0.0], times))))
            np.cumsum(z * steps[None, :], axis=1, out=out)
            return out
        # stationary OU: exact AR(1) transition between grid points
        out[:, 0] = z[:, 0]
        for i in range(1, m):
            a = np.exp(-(times[i] - times[i - 1]) / self.rho)
            out[:, i] = a * out[:, i - 1] + np.sqrt(1.0 - a * a) * z[:, i]
        return out


@dataclass(frozen=True, eq=False)
class PathSample:
    """One replication: ``values[j, i] = Y_j(t_i)``."""

    values: np.ndarray
    grid: TimeGrid
    model: ModelSpec
    model_tag: str = field(default="")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def sample_paths(model: ModelSpec, n: int, grid: TimeGrid, stream) -> PathSample:
    """Draw ``n`` independent paths of ``model`` on ``grid``.

    ``stream`` is either an integer seed or a ``(seed, index, ...)`` tuple
    naming a counter-based substream; equal streams give bit-identical output.
    """
    if int(n) < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    model.validate_grid(grid)
    key = tuple(stream) if isinstance(stream, (tuple, list)) else (stream, 0)
    gen = _rng.substream(*key)
    values = model._draw(int(n), grid.array, gen)
    return PathSample(values, grid, model, model_tag=f"{model.kind}@{key}")


def marginal_cdf(model: ModelSpec, t, x):
    return model.marginal_cdf(t, x)


def marginal_quantile(model: ModelSpec, t, p):
    return model.marginal_quantile(t, p)


def joint_cdf(model: ModelSpec, t, s, u, v):
    return model.joint_cdf(t, s, u, v)
