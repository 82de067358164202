"""Replicated simulation, moment estimation and limit-law diagnostics."""
from __future__ import annotations

import hashlib
import json
import multiprocessing as mp
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri

from . import oracle
from . import rng as _rng
from .empirical import ProcessEvaluation, evaluate_block
from .errors import ConfigError
from .models import ModelSpec, TimeGrid
from .weights import WeightSpec

CHUNK = 250


def config_digest(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=_jsonable, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, (ModelSpec, TimeGrid)):
        return asdict(obj)
    if isinstance(obj, WeightSpec):
        return obj.spec if obj.spec is not None else repr(obj.q)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return repr(obj)


# -- ensembles -----------------------------------------------------------------


@dataclass
class Ensemble:
    arrays: dict
    grid: TimeGrid
    n: int
    R: int
    seed: int
    config_digest: str
    eta: np.ndarray | None = None

    def __getitem__(self, key) -> np.ndarray:
        return self.arrays[key]

    @property
    def evaluations(self) -> list:
        a = self.arrays
        return [
            ProcessEvaluation(
                beta=a["beta"][r],
                beta_star=a["beta_star"][r],
                alpha=a["alpha"][r] if "alpha" in a else None,
                gamma=a["gamma"][r] if "gamma" in a else None,
                lstat=a["lstat"][r] if "lstat" in a else None,
                q_count=a["q_count"][r] if "q_count" in a else None,
            )
            for r in range(self.R)
        ]


_JOB: dict = {}


def _run_chunk(bounds):
    start, stop = bounds
    job = _JOB
    model, times, n, seed = job["model"], job["times"], job["n"], job["seed"]
    before = _rng.draw_count()
    block = np.empty((stop - start, times.size, n))
    for k, rep in enumerate(range(start, stop)):
        block[k] = model._draw(n, times, _rng.substream(seed, rep)).T
    out = evaluate_block(
        block, times, model, job["weights"],
        weights2=job["weights2"], eta=job["eta"],
        lstat=job["lstat"], remainder=job["remainder"], guard=True,
    )
    return out, _rng.draw_count() - before


def run_replications(model: ModelSpec, weights: WeightSpec, grid: TimeGrid, n: int, R: int, seed: int,
                     *, workers: int = 1, weights2: WeightSpec | None = None, eta=None,
                     lstat: bool | None = None, remainder: bool | None = None) -> Ensemble:
    """Simulate ``R`` replications of size ``n`` and evaluate every process.

    Replication ``r`` draws from substream ``(seed, r)``; chunks of
    ``CHUNK`` replications are evaluated as blocks, so the result does not
    depend on ``workers``.
    """
    if R < 2:
        raise ConfigError(f"need at least 2 replications, got R={R}")
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got n={n}")
    model.validate_grid(grid)
    if eta is None and weights.eta_defined:
        eta = np.array([oracle.j_limit(model, weights, t) for t in grid.points])
    has_eta = eta is not None
    lstat = has_eta if lstat is None else lstat
    remainder = has_eta if remainder is None else remainder
    _JOB.clear()
    _JOB.update(model=model, times=grid.array, n=int(n), seed=int(seed), weights=weights,
                weights2=weights2, eta=eta, lstat=lstat, remainder=remainder)
    bounds = [(s, min(s + CHUNK, R)) for s in range(0, R, CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with mp.get_context("fork").Pool(min(workers, len(bounds))) as pool:
            results = pool.map(_run_chunk, bounds)
        _rng.record_draws(sum(k for _, k in results))
    else:
        results = [_run_chunk(b) for b in bounds]
    keys = results[0][0].keys()
    arrays = {k: np.concatenate([res[k] for res, _ in results], axis=0) for k in keys}
    digest = config_digest(model, weights, weights2, grid, int(n), int(R), int(seed))
    return Ensemble(arrays, grid, int(n), int(R), int(seed), digest, None if eta is None else np.asarray(eta))


# -- moment reports ------------------------------------------------------------


@dataclass
class MomentCell:
    t: float
    s: float
    statistic: str
    mc: float
    se: float
    oracle: float
    z: float
    finite_n_bias: float
    passed: bool


@dataclass
class MomentReport:
    cells: list
    n: int
    R: int
    seed: int
    digest: str
    target: str
    slack: float = 0.0
    z_max: float = 4.0
    mean_z_max: float = 2.0

    @property
    def mean_abs_z(self) -> float:
        zs = [abs(c.z) for c in self.cells if np.isfinite(c.z)]
        return float(np.mean(zs)) if zs else 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cells) and self.mean_abs_z <= self.mean_z_max

    def rows(self):
        return [
            dict(t=c.t, s=c.s, statistic=c.statistic, mc=c.mc, se=c.se, oracle=c.oracle,
                 z=c.z, n=self.n, R=self.R, seed=self.seed)
            for c in self.cells
        ]


def _z(diff, se):
    if se > 0:
        return diff / se
    return 0.0 if diff == 0 else float(np.copysign(np.inf, diff))


def _cell(t, s, stat, mc, se, ref, slack, z_max):
    diff = mc - ref
    return MomentCell(float(t), float(s), stat, float(mc), float(se), float(ref), float(_z(diff, se)),
                      float(diff), bool(abs(diff) <= z_max * se + slack))


def mean_and_se(x):
    x = np.asarray(x, dtype=float)
    return x.mean(axis=0), x.std(axis=0, ddof=1) / np.sqrt(x.shape[0])


def cov_and_se(x, y):
    """Sample covariance and the plain standard error of its estimate."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    R = x.shape[0]
    prod = (x - x.mean()) * (y - y.mean())
    return prod.sum() / (R - 1), prod.std(ddof=1) / np.sqrt(R)


def estimate_moments(ensemble: Ensemble, target: str = "beta", statistic: str = "cov", oracle_values=None,
                     slack: float = 0.0, z_max: float = 4.0, mean_z_max: float = 2.0,
                     other: str | None = None) -> MomentReport:
    """Compare MC moments of ``ensemble[target]`` with oracle values.

    ``statistic`` is ``mean`` (oracle: vector), ``var`` (oracle: vector of
    variances) or ``cov`` (oracle: m x m matrix; upper triangle reported,
    or the full matrix when ``other`` names a second process).
    """
    x = ensemble[target]
    pts = ensemble.grid.points
    m = len(pts)
    cells = []
    if statistic == "mean":
        mu, se = mean_and_se(x)
        ref = np.zeros(m) if oracle_values is None else np.asarray(oracle_values, dtype=float)
        cells = [_cell(pts[i], pts[i], "mean", mu[i], se[i], ref[i], slack, z_max) for i in range(m)]
    elif statistic == "var":
        ref = np.asarray(oracle_values, dtype=float)
        for i in range(m):
            c, se = cov_and_se(x[:, i], x[:, i])
            cells.append(_cell(pts[i], pts[i], "var", c, se, ref[i], slack, z_max))
    elif statistic == "cov":
        ref = np.asarray(oracle_values, dtype=float)
        y = x if other is None else ensemble[other]
        label = "cov" if other is None else f"cov({target},{other})"
        for i in range(m):
            for j in range(i if other is None else 0, m):
                c, se = cov_and_se(x[:, i], y[:, j])
                cells.append(_cell(pts[i], pts[j], label, c, se, ref[i, j], slack, z_max))
    else:
        raise ConfigError(f"unknown statistic {statistic!r}")
    return MomentReport(cells, ensemble.n, ensemble.R, ensemble.seed, ensemble.config_digest,
                        target, slack, z_max, mean_z_max)


def paired_covariance(ensemble: Ensemble, gamma3: np.ndarray, slack: float = 0.0, z_max: float = 4.0) -> MomentReport:
    """Sample ``Cov(beta_{n,1}(t), beta_{n,2}(s))`` against the Gamma3 oracle."""
    if "beta2" not in ensemble.arrays:
        raise ConfigError("ensemble has no paired evaluations (weights2 missing)")
    return estimate_moments(ensemble, "beta", "cov", gamma3, slack=slack, z_max=z_max, other="beta2")


# -- normality of finite-dimensional laws --------------------------------------


def ad_inf_cdf(z: float) -> float:
    """Asymptotic CDF of the Anderson-Darling statistic (Marsaglia & Marsaglia, 2004)."""
    if z <= 0:
        return 0.0
    if z < 2:
        return float(np.exp(-1.2337141 / z) / np.sqrt(z) * (
            2.00012 + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z))
    return float(np.exp(-np.exp(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z)))


def anderson_darling(x) -> tuple[float, float]:
    """A^2 against the fully specified N(0, 1) and its asymptotic p-value."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    i = np.arange(1, n + 1)
    logF = stats.norm.logcdf(x)
    logS = stats.norm.logsf(x[::-1])
    a2 = -n - np.sum((2 * i - 1) * (logF + logS)) / n
    return float(a2), float(1.0 - ad_inf_cdf(a2))


@dataclass
class FddReport:
    times: list
    coefficients: list
    variance: float
    mean: float
    ks_statistic: float = float("nan")
    ks_pvalue: float = float("nan")
    ad_statistic: float = float("nan")
    ad_pvalue: float = float("nan")
    degenerate: bool = False
    notice: str = ""


def fdd_normality(ensemble: Ensemble, model, weights, times, coefficients) -> FddReport:
    """KS and AD tests of ``sum_i a_i beta_n(t_i)`` standardised by the oracle.

    The location is the exact finite-n mean ``a . mean_limit / sqrt(n)`` and
    the scale is ``sqrt(a' Gamma1 a)``; nothing is estimated from the sample.
    """
    pts = list(ensemble.grid.points)
    idx = [pts.index(float(t)) for t in times]
    a = np.asarray(coefficients, dtype=float)
    if a.shape != (len(idx),):
        raise ConfigError("need one coefficient per selected time")
    tt = [pts[i] for i in idx]
    G = np.array([[oracle.gamma1_cov(model, weights, u, v) for v in tt] for u in tt])
    var = float(a @ G @ a)
    mu = float(a @ np.array([oracle.mean_limit(model, weights, u) for u in tt])) / np.sqrt(ensemble.n)
    rep = FddReport(tt, a.tolist(), var, mu)
    if not var > 1e-10:
        rep.degenerate = True
        rep.notice = f"degenerate oracle variance {var:.3g}; test skipped"
        return rep
    s = ensemble["beta"][:, idx] @ a
    zs = (s - mu) / np.sqrt(var)
    ks = stats.kstest(zs, "norm")
    rep.ks_statistic, rep.ks_pvalue = float(ks.statistic), float(ks.pvalue)
    rep.ad_statistic, rep.ad_pvalue = anderson_darling(zs)
    return rep


# -- remainder decay -----------------------------------------------------------


@dataclass
class DecayReport:
    n_ladder: list
    medians: list
    slope: float
    strictly_decreasing: bool
    ratio: float
    R: int
    seed: int


def remainder_decay(model, weights, grid, n_ladder, R, seed, workers: int = 1) -> DecayReport:
    """Median over replications of ``sup_t |R_n(t)|`` along a ladder of n."""
    ladder = [int(v) for v in n_ladder]
    if len(ladder) < 3 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ConfigError("n_ladder must be strictly increasing with at least 3 rungs")
    eta = np.array([oracle.j_limit(model, weights, t) for t in grid.points])
    meds = []
    for k, n in enumerate(ladder):
        ens = run_replications(model, weights, grid, n, R, seed + 7919 * k, workers=workers, eta=eta,
                               lstat=True, remainder=True)
        meds.append(float(np.median(np.max(np.abs(ens["remainder"]), axis=1))))
    med = np.array(meds)
    if np.all(med > 0):
        slope = float(np.polyfit(np.log(ladder), np.log(med), 1)[0])
    else:
        slope = float("nan")
    dec = bool(np.all(np.diff(med) < 0))
    ratio = float(med[-1] / med[0]) if med[0] > 0 else 0.0
    return DecayReport(ladder, meds, slope, dec, ratio, int(R), int(seed))


# -- bivariate quantile processes ----------------------------------------------


@dataclass
class BridgeReport:
    copula: str
    rho: float | None
    n: int
    R: int
    grid: list
    cov_11: np.ndarray
    cov_22: np.ndarray
    cov_12: np.ndarray
    theory_margin: np.ndarray
    theory_cross: np.ndarray
    se_11: np.ndarray
    sup_dev_11: float
    sup_dev_22: float
    sup_dev_12: float
    bahadur_kiefer_sup: tuple
    seed: int


def copula_cdf(copula: str, s, t, rho=None):
    s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
    if copula == "independent":
        return s * t
    if copula == "comonotone":
        return np.minimum(s, t)
    if copula == "gaussian":
        from .bvn import bvn_cdf

        return bvn_cdf(ndtri(s), ndtri(t), rho)
    raise ConfigError(f"unknown copula {copula!r}")


def _uniform_pair(copula, n, gen, rho):
    if copula == "independent":
        return gen.random(n), gen.random(n)
    if copula == "comonotone":
        u = gen.random(n)
        return u, u.copy()
    if copula == "gaussian":
        x = gen.standard_normal(n)
        y = rho * x + np.sqrt(1 - rho * rho) * gen.standard_normal(n)
        return ndtr(x), ndtr(y)
    raise ConfigError(f"unknown copula {copula!r}")


def bridge_processes(u, grid):
    """Uniform empirical and quantile processes of one sample at ``grid``.

    The quantile process is ``sqrt(n)(U_(ceil(n s)) - s)`` (left-continuous
    inverse), so that it is asymptotically the negative of the empirical
    process.
    """
    n = u.size
    srt = np.sort(u)
    s = np.asarray(grid, dtype=float)
    k = np.ceil(n * s).astype(int)
    eps = np.sqrt(n) * (srt[np.clip(k, 1, n) - 1] - s)
    alp = np.sqrt(n) * (np.searchsorted(srt, s, side="right") / n - s)
    return eps, alp


def bridge_check(copula: str, n: int, R: int, seed: int, grid01, rho: float | None = None) -> BridgeReport:
    """Covariance surfaces of the two marginal quantile processes."""
    if n < 100:
        raise ConfigError("bridge_check needs n >= 100")
    if copula == "gaussian" and (rho is None or not -1 < rho < 1):
        raise ConfigError("gaussian copula needs rho in (-1, 1)")
    g = np.asarray(grid01, dtype=float)
    if np.any((g <= 0) | (g >= 1)):
        raise ConfigError("bridge grid must lie in (0, 1)")
    k = g.size
    e1 = np.empty((R, k))
    e2 = np.empty((R, k))
    bk = np.empty((R, 2))
    for r in range(R):
        gen = _rng.substream(seed, r)
        u, v = _uniform_pair(copula, n, gen, rho)
        _rng.record_draws(2 * n)
        e1[r], a1 = bridge_processes(u, g)
        e2[r], a2 = bridge_processes(v, g)
        bk[r] = np.max(np.abs(a1 + e1[r])), np.max(np.abs(a2 + e2[r]))

    def cov(a, b):
        a = a - a.mean(axis=0)
        b = b - b.mean(axis=0)
        return a.T @ b / (R - 1)

    c11, c22, c12 = cov(e1, e1), cov(e2, e2), cov(e1, e2)
    S, T = np.meshgrid(g, g, indexing="ij")
    margin = np.minimum(S, T) - S * T
    cross = copula_cdf(copula, S, T, rho) - S * T
    d = e1 - e1.mean(axis=0)
    se11 = np.sqrt(np.var(d[:, :, None] * d[:, None, :], axis=0, ddof=1) / R)
    return BridgeReport(
        copula=copula, rho=rho, n=int(n), R=int(R), grid=g.tolist(),
        cov_11=c11, cov_22=c22, cov_12=c12, theory_margin=margin, theory_cross=cross, se_11=se11,
        sup_dev_11=float(np.max(np.abs(c11 - margin))),
        sup_dev_22=float(np.max(np.abs(c22 - margin))),
        sup_dev_12=float(np.max(np.abs(c12 - cross))),
        bahadur_kiefer_sup=(float(np.median(bk[:, 0])), float(np.median(bk[:, 1]))),
        seed=int(seed),
    )
