"""Weight families ``q_t`` and L-statistic ingredients ``c, c', q0, Z``.

Everything here is built from a small catalogue of callable objects so that
weight specifications pickle cleanly and round-trip through config files.
No user code is ever loaded at runtime.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import ndtr

from .errors import ConfigError, InvariantViolation


# -- catalogue primitives ------------------------------------------------------


@dataclass(frozen=True)
class ConstantWeight:
    value: float = 1.0

    def __call__(self, t, y):
        return np.full(np.broadcast(np.asarray(t), np.asarray(y)).shape, float(self.value))


@dataclass(frozen=True)
class PolynomialWeight:
    """``sum_k coeffs[k] * clip(y, lower, upper)**k``, constant in t."""

    coeffs: tuple
    lower: float = -np.inf
    upper: float = np.inf

    def __call__(self, t, y):
        y = np.clip(np.asarray(y, dtype=float), self.lower, self.upper)
        val = np.polynomial.polynomial.polyval(y, np.asarray(self.coeffs, dtype=float))
        return np.broadcast_to(val, np.broadcast(np.asarray(t), y).shape).copy()

    def bound(self) -> float:
        p = Polynomial(self.coeffs)
        if p.degree() <= 0:
            return float(abs(self.coeffs[0])) if len(self.coeffs) else 0.0
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            return np.inf
        pts = [self.lower, self.upper]
        pts += [r.real for r in p.deriv().roots() if abs(r.imag) < 1e-12 and self.lower < r.real < self.upper]
        return float(np.max(np.abs(p(np.asarray(pts)))))


@dataclass(frozen=True)
class IndicatorWeight:
    """``value * 1(y <= level)``."""

    level: float
    value: float = 1.0

    def __call__(self, t, y):
        y = np.asarray(y, dtype=float)
        out = np.where(y <= self.level, float(self.value), 0.0)
        return np.broadcast_to(out, np.broadcast(np.asarray(t), y).shape).copy()


@dataclass(frozen=True)
class TimeModulatedPhi:
    """``base + amplitude * sin(frequency * t) * Phi(y)``."""

    base: float = 1.0
    amplitude: float = 0.5
    frequency: float = 1.0

    def __call__(self, t, y):
        t = np.asarray(t, dtype=float)
        return self.base + self.amplitude * np.sin(self.frequency * t) * ndtr(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class PowerScore:
    """``c(u) = scale * u**k``."""

    k: float = 1.0
    scale: float = 1.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.k == 0:
            return np.full(u.shape, float(self.scale))
        return self.scale * u**self.k


@dataclass(frozen=True)
class PowerScoreDerivative:
    k: float = 1.0
    scale: float = 1.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.k == 0:
            return np.zeros(u.shape)
        if self.k == 1:
            return np.full(u.shape, float(self.scale))
        return self.scale * self.k * u ** (self.k - 1)


@dataclass(frozen=True)
class BaseFunction:
    """``q0(y)`` as a clipped polynomial."""

    coeffs: tuple = (1.0,)
    lower: float = -np.inf
    upper: float = np.inf

    def __call__(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.lower, self.upper)
        return np.polynomial.polynomial.polyval(y, np.asarray(self.coeffs, dtype=float))

    def bound(self) -> float:
        return PolynomialWeight(self.coeffs, self.lower, self.upper).bound()


@dataclass(frozen=True)
class Threshold:
    """``Z(t) = intercept + slope * t``; infinite intercepts allowed."""

    intercept: float = np.inf
    slope: float = 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if not np.isfinite(self.intercept):
            return np.full(t.shape, self.intercept)
        return self.intercept + self.slope * t


@dataclass(frozen=True)
class Scaled:
    inner: Callable
    factor: float

    def __call__(self, t, y):
        return self.factor * self.inner(t, y)


@dataclass(frozen=True)
class LinearCombination:
    a: float
    first: Callable
    b: float
    second: Callable

    def __call__(self, t, y):
        return self.a * self.first(t, y) + self.b * self.second(t, y)


@dataclass(frozen=True)
class DerivedWeight:
    """``q_t(y) = c'(G_t(y)) * q0(y) * 1(y <= Z(t))`` for a bound model."""

    c_prime: Callable
    q0: Callable
    z_threshold: Callable
    model: Any

    def __call__(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        z = self.z_threshold(t)
        val = self.c_prime(self.model.marginal_cdf(t, y)) * self.q0(y)
        return np.where(y <= z, val, 0.0)


@dataclass(frozen=True)
class _Breaks:
    """Time-dependent y-locations where a weight may jump."""

    levels: tuple = ()
    threshold: Any = None

    def __call__(self, t):
        out = [float(v) for v in self.levels]
        if self.threshold is not None:
            z = float(self.threshold(t))
            if np.isfinite(z):
                out.append(z)
        return tuple(sorted(set(out)))


# -- weight specification ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Weight family ``q(t, y)`` with declared bound and L-statistic pieces.

    ``c`` is ``None`` when the g_t / eta ingredients are absent; then only
    beta_n can be evaluated.
    """

    q: Callable
    q_bound: float
    c: Callable | None = None
    c_prime: Callable | None = None
    q0: Callable = field(default_factory=BaseFunction)
    z_threshold: Callable = field(default_factory=Threshold)
    q_breaks: Callable = field(default_factory=_Breaks)
    q0_breaks: tuple = ()
    spec: dict | None = None
    is_unit: bool = False

    def __post_init__(self):
        if not self.q_bound >= 0:
            raise ConfigError(f"weight bound must be non-negative, got {self.q_bound}")
        if self.c is not None and self.c_prime is None:
            raise ConfigError("a score c requires its derivative c_prime")
        if self.c is not None:
            check_derivative(self.c, self.c_prime)

    @property
    def eta_defined(self) -> bool:
        return self.c is not None

    def weight_eval(self, t, y):
        """Evaluate ``q(t, y)``, enforcing the declared bound."""
        val = np.asarray(self.q(t, y), dtype=float)
        bad = ~(np.abs(val) <= self.q_bound * (1 + 1e-12) + 1e-300)
        if np.any(bad):
            tt, yy = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(y, dtype=float))
            idx = np.argwhere(bad)[0]
            raise InvariantViolation(
                f"|q(t={float(tt[tuple(idx)])!r}, y={float(yy[tuple(idx)])!r})| = {float(abs(val[tuple(idx)]))!r} "
                f"exceeds declared bound {self.q_bound}"
            )
        return val

    def score_eval(self, u):
        if self.c is None:
            raise ConfigError("no score function c configured")
        return self.c(u)

    def q1(self, t, y):
        """``q0(y) * 1(y <= Z(t))``."""
        y = np.asarray(y, dtype=float)
        z = self.z_threshold(np.asarray(t, dtype=float))
        return np.where(y <= z, self.q0(y), 0.0)

    def g(self, model, t, y):
        """``g_t(y) = c(G_t(y)) q1(t, y)``."""
        if self.c is None:
            raise ConfigError("g_t needs the score c; eta ingredients are not configured")
        return self.c(model.marginal_cdf(t, y)) * self.q1(t, y)

    def g_breaks(self, t) -> tuple:
        z = float(np.asarray(self.z_threshold(t)))
        out = set(self.q0_breaks)
        if np.isfinite(z):
            out.add(z)
        return tuple(sorted(out))

    def scaled(self, factor: float) -> "WeightSpec":
        return replace(
            self,
            q=Scaled(self.q, float(factor)),
            q_bound=abs(float(factor)) * self.q_bound,
            spec=None,
            is_unit=self.is_unit and factor == 1,
        )

    def derived(self, model) -> "WeightSpec":
        """Weights whose ``q`` is ``c'(G_t(.)) q1(t, .)`` for ``model``."""
        if self.c is None:
            raise ConfigError("derived weight needs c and c_prime")
        u = np.linspace(0.0, 1.0, 2001)
        cb = float(np.max(np.abs(self.c_prime(u))))
        qb = _q0_bound(self.q0)
        return replace(
            self,
            q=DerivedWeight(self.c_prime, self.q0, self.z_threshold, model),
            q_bound=cb * qb if cb > 0 else 0.0,
            q_breaks=_Breaks(self.q0_breaks, self.z_threshold),
            is_unit=False,
        )


def combine(a: float, w1: WeightSpec, b: float, w2: WeightSpec) -> WeightSpec:
    """Weights with ``q = a*q1 + b*q2``; other ingredients taken from ``w1``."""
    return replace(
        w1,
        q=LinearCombination(float(a), w1.q, float(b), w2.q),
        q_bound=abs(a) * w1.q_bound + abs(b) * w2.q_bound,
        q_breaks=_Union(w1.q_breaks, w2.q_breaks),
        spec=None,
        is_unit=False,
    )


@dataclass(frozen=True)
class _Union:
    first: Callable
    second: Callable

    def __call__(self, t):
        return tuple(sorted(set(self.first(t)) | set(self.second(t))))


def _q0_bound(q0) -> float:
    if hasattr(q0, "bound"):
        return q0.bound()
    return np.inf


def check_derivative(c, c_prime, points: int = 11, h: float = 1e-5, rtol: float = 1e-6) -> None:
    """Central finite-difference check of ``c_prime`` at interior points."""
    u = np.linspace(0.0, 1.0, points + 2)[1:-1]
    fd = (c(u + h) - c(u - h)) / (2 * h)
    d = c_prime(u)
    err = np.abs(fd - d) / np.maximum(1.0, np.abs(d))
    if np.any(err > rtol):
        i = int(np.argmax(err))
        raise InvariantViolation(
            f"c_prime disagrees with finite differences of c at u={u[i]:.4g}: "
            f"{float(d[i])!r} vs {float(fd[i])!r}"
        )


# -- catalogue -----------------------------------------------------------------

_Q_PARAMS = {
    "constant": {"value"},
    "polynomial": {"coeffs", "lower", "upper"},
    "indicator_threshold": {"level", "value"},
    "time_modulated_phi": {"base", "amplitude", "frequency"},
    "derived": set(),
}
_C_PARAMS = {"constant": {"value"}, "power": {"k", "scale"}}
_Q0_PARAMS = {"constant": {"value"}, "polynomial": {"coeffs", "lower", "upper"}}
_Z_PARAMS = {"constant": {"value"}, "linear": {"intercept", "slope"}}


def _params(block: dict, table: dict, what: str) -> tuple[str, dict]:
    if not isinstance(block, dict) or "name" not in block:
        raise ConfigError(f"{what} block needs a 'name' key")
    name = block["name"]
    if name not in table:
        raise ConfigError(f"unknown {what} {name!r}; catalogue has {sorted(table)}")
    extra = set(block) - {"name"} - table[name]
    if extra:
        raise ConfigError(f"unknown parameter(s) {sorted(extra)} for {what} {name!r}")
    return name, {k: v for k, v in block.items() if k != "name"}


def _make_q(block: dict):
    name, p = _params(block, _Q_PARAMS, "weight")
    if name == "constant":
        v = float(p.get("value", 1.0))
        return ConstantWeight(v), abs(v), _Breaks(), v == 1.0
    if name == "polynomial":
        w = PolynomialWeight(tuple(float(c) for c in p["coeffs"]), float(p.get("lower", -np.inf)), float(p.get("upper", np.inf)))
        b = w.bound()
        if not np.isfinite(b):
            raise ConfigError("polynomial weight of degree >= 1 needs finite lower/upper clamps to stay bounded")
        return w, b, _Breaks(), False
    if name == "indicator_threshold":
        w = IndicatorWeight(float(p["level"]), float(p.get("value", 1.0)))
        return w, abs(w.value), _Breaks((w.level,)), False
    if name == "time_modulated_phi":
        w = TimeModulatedPhi(float(p.get("base", 1.0)), float(p.get("amplitude", 0.5)), float(p.get("frequency", 1.0)))
        return w, abs(w.base) + abs(w.amplitude), _Breaks(), False
    return None, 0.0, _Breaks(), False  # derived: resolved against a model later


def make_weights(block: dict, model=None) -> WeightSpec:
    """Build a :class:`WeightSpec` from a catalogue description.

    ``block`` has keys ``q`` (required), and optionally ``c``, ``q0``, ``z``.
    A ``q`` of ``{"name": "derived"}`` requires ``model`` and ``c``.

    >>> w = make_weights({"q": {"name": "constant", "value": 1.0}})
    >>> float(w.weight_eval(0.5, 0.3))
    1.0
    """
    if not isinstance(block, dict):
        raise ConfigError("weights block must be a mapping")
    extra = set(block) - {"q", "c", "q0", "z"}
    if extra:
        raise ConfigError(f"unknown weights key(s) {sorted(extra)}")
    if "q" not in block:
        raise ConfigError("weights block needs a 'q' entry")
    q, bound, breaks, unit = _make_q(block["q"])

    c = c_prime = None
    if "c" in block:
        name, p = _params(block["c"], _C_PARAMS, "score")
        if name == "constant":
            c, c_prime = PowerScore(0, float(p.get("value", 1.0))), PowerScoreDerivative(0, float(p.get("value", 1.0)))
        else:
            k, sc = float(p.get("k", 1.0)), float(p.get("scale", 1.0))
            if k < 0:
                raise ConfigError("score exponent k must be >= 0 to stay bounded on [0, 1]")
            c, c_prime = PowerScore(k, sc), PowerScoreDerivative(k, sc)

    q0 = BaseFunction()
    if "q0" in block:
        name, p = _params(block["q0"], _Q0_PARAMS, "base function")
        if name == "constant":
            q0 = BaseFunction((float(p.get("value", 1.0)),))
        else:
            q0 = BaseFunction(tuple(float(x) for x in p["coeffs"]), float(p.get("lower", -np.inf)), float(p.get("upper", np.inf)))

    z = Threshold()
    if "z" in block:
        name, p = _params(block["z"], _Z_PARAMS, "threshold")
        if name == "constant":
            z = Threshold(float(p.get("value", np.inf)), 0.0)
        else:
            z = Threshold(float(p["intercept"]), float(p.get("slope", 0.0)))

    if q is None:
        if c is None:
            raise ConfigError("q: derived needs a score block 'c'")
        base = WeightSpec(ConstantWeight(0.0), 0.0, c, c_prime, q0, z, spec=dict(block))
        if model is None:
            raise ConfigError("q: derived needs a model to resolve G_t")
        return base.derived(model)
    return WeightSpec(q, bound, c, c_prime, q0, z, q_breaks=breaks, spec=dict(block), is_unit=unit)


def constant_weights(value: float = 1.0, **kw) -> WeightSpec:
    block = {"q": {"name": "constant", "value": value}, **kw}
    return make_weights(block)


def weight_eval(weights: WeightSpec, t, y):
    return weights.weight_eval(t, y)


def score_eval(weights: WeightSpec, u):
    return weights.score_eval(u)
