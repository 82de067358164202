"""Exact per-replication evaluation of the empirical processes.

All array routines work on the last axis as the sample axis, so a single
``PathSample`` (shape ``(m, n)`` after transposing) and a stacked block of
replications (``(B, m, n)``) go through the same code. The empirical CDF uses
the ``<=`` convention, hence ``G_{t,n}(Y_j(t)) = rank_j / n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .models import PathSample
from .weights import WeightSpec


@dataclass
class ProcessEvaluation:
    beta: np.ndarray
    beta_star: np.ndarray
    alpha: np.ndarray | None = None
    gamma: np.ndarray | None = None
    lstat: np.ndarray | None = None
    q_count: np.ndarray | None = None


def ecdf_eval(column, x):
    """``G_n(x) = #{j : Y_j <= x} / n``."""
    col = np.sort(np.asarray(column, dtype=float))
    if col.size == 0:
        raise ValueError("empirical CDF of an empty column")
    return np.searchsorted(col, np.asarray(x, dtype=float), side="right") / col.size


def rank_columns(values: np.ndarray, times=None):
    """Ranks (1..n) and sort order along the last axis; raises on ties."""
    order = np.argsort(values, axis=-1, kind="stable")
    srt = np.take_along_axis(values, order, axis=-1)
    dup = np.diff(srt, axis=-1) == 0
    if np.any(dup):
        where = np.argwhere(dup)[0]
        col = int(where[-2]) if values.ndim >= 2 else 0
        label = f"t={float(times[col])!r}" if times is not None else f"column {col}"
        raise DataError(f"tied values in sample at {label}; continuous marginals are required")
    n = values.shape[-1]
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(1, n + 1), order.shape), axis=-1)
    return ranks, order, srt


def beta_star_from(ranks, G, q):
    """``sum_j (rank_j/n - G_j) q_j`` along the last axis."""
    n = ranks.shape[-1]
    return np.sum((ranks / n - G) * q, axis=-1)


def evaluate_block(values, times, model, weights, *, weights2=None, eta=None,
                   lstat=False, remainder=False, guard=False):
    """Evaluate every requested process on a ``(..., m, n)`` value array.

    Returns a dict of arrays of shape ``(..., m)``. ``eta`` (one value per
    time) is required for ``alpha``/``gamma``/``remainder``.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    tt = np.asarray(times, dtype=float)[:, None]
    ranks, order, srt = rank_columns(values, times)
    G = model.marginal_cdf(tt, values)
    out = {}
    q = weights.weight_eval(tt, values)
    bstar = beta_star_from(ranks, G, q)
    out["beta_star"] = bstar
    out["beta"] = bstar / np.sqrt(n)
    if guard:
        simple = (n + 1) / 2.0 - np.sum(G, axis=-1)
        if weights.is_unit and not np.allclose(bstar, simple, rtol=0, atol=1e-12 * max(1.0, n)):
            raise DataError("rank-sum identity failed for the simple process")
    if weights2 is not None:
        q2 = weights2.weight_eval(tt, values)
        out["beta2"] = beta_star_from(ranks, G, q2) / np.sqrt(n)
    need_eta = eta is not None
    if need_eta:
        eta = np.asarray(eta, dtype=float)[:, None]
        q1 = weights.q1(tt, values)
        g = weights.c(G) * q1
        out["alpha"] = np.sum(g - eta, axis=-1) / np.sqrt(n)
        out["gamma"] = out["alpha"] + out["beta"]
    if lstat or remainder:
        cj = weights.c(np.arange(1, n + 1) / n)
        z = weights.z_threshold(tt)
        mask = srt <= z
        terms = np.where(mask, cj * weights.q0(srt), 0.0)
        out["lstat"] = np.sum(terms, axis=-1) / n
        out["q_count"] = np.sum(mask, axis=-1)
    if remainder:
        if not need_eta:
            raise ConfigError("expansion remainder needs eta = J(t)")
        qd = weights.c_prime(G) * weights.q1(tt, values)
        bd = beta_star_from(ranks, G, qd) / np.sqrt(n)
        out["beta_derived"] = bd
        out["remainder"] = np.sqrt(n) * (out["lstat"] - eta[..., 0]) - out["alpha"] - bd
    return out


def _cols(sample: PathSample) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(sample.values, dtype=float).T)


def _eta(sample, weights, model, eta):
    if not weights.eta_defined:
        raise ConfigError("alpha_n needs c, q0 and Z to define g_t and eta(t)")
    if eta is None:
        from .oracle import j_limit

        model = model if model is not None else sample.model
        eta = [j_limit(model, weights, t) for t in sample.grid.points]
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (sample.grid.m,):
        raise ConfigError("eta must have one value per grid point")
    return eta


def beta_n(sample: PathSample, weights: WeightSpec) -> ProcessEvaluation:
    out = evaluate_block(_cols(sample), sample.grid.array, sample.model, weights)
    return ProcessEvaluation(beta=out["beta"], beta_star=out["beta_star"])


def simple_process(sample: PathSample) -> np.ndarray:
    """``B*_n(t) = beta_n(1, t)`` on the grid."""
    from .weights import constant_weights

    return beta_n(sample, constant_weights(1.0)).beta


def alpha_n(sample: PathSample, weights: WeightSpec, model=None, eta=None) -> np.ndarray:
    eta = _eta(sample, weights, model, eta)
    return evaluate_block(_cols(sample), sample.grid.array, sample.model, weights, eta=eta)["alpha"]


def gamma_n(sample: PathSample, weights: WeightSpec, model=None, eta=None) -> ProcessEvaluation:
    eta = _eta(sample, weights, model, eta)
    out = evaluate_block(_cols(sample), sample.grid.array, sample.model, weights, eta=eta)
    return ProcessEvaluation(beta=out["beta"], beta_star=out["beta_star"], alpha=out["alpha"], gamma=out["gamma"])


def l_statistic(sample: PathSample, weights: WeightSpec):
    """``(J_n(t_i), Q_n(t_i))`` from the ordered sample."""
    if weights.c is None:
        raise ConfigError("L-statistic needs the score c")
    out = evaluate_block(_cols(sample), sample.grid.array, sample.model, weights, lstat=True)
    return out["lstat"], out["q_count"]


def l_statistic_rank_form(sample: PathSample, weights: WeightSpec) -> np.ndarray:
    """``n^{-1} sum_j c(R_j/n) q0(Y_j) 1(Y_j <= Z)`` in sample order."""
    if weights.c is None:
        raise ConfigError("L-statistic needs the score c")
    vals = _cols(sample)
    n = vals.shape[-1]
    tt = sample.grid.array[:, None]
    ranks, _, _ = rank_columns(vals, sample.grid.points)
    terms = np.where(vals <= weights.z_threshold(tt), weights.c(ranks / n) * weights.q0(vals), 0.0)
    return np.sum(terms, axis=-1) / n


def expansion_remainder(sample: PathSample, weights: WeightSpec, model=None, eta=None) -> np.ndarray:
    """``sqrt(n)(J_n - J) - alpha_n - beta_n(c'(G_t) q1)`` on the grid."""
    eta = _eta(sample, weights, model, eta)
    out = evaluate_block(_cols(sample), sample.grid.array, sample.model, weights, eta=eta, remainder=True)
    return out["remainder"]


def paired_beta(sample: PathSample, weights1: WeightSpec, weights2: WeightSpec):
    out = evaluate_block(_cols(sample), sample.grid.array, sample.model, weights1, weights2=weights2)
    return out["beta"], out["beta2"]
