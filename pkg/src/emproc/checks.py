"""Named verification checks.

Each check maps to one oracle or Monte Carlo operation, takes its tolerances
from the config's ``params`` mapping, and returns a :class:`CheckResult`
with a pass flag, a summary and long-format rows for the CSV report.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import mclab, oracle
from . import rng as _rng
from .config import ExperimentConfig
from .empirical import evaluate_block, l_statistic, l_statistic_rank_form
from .errors import ConfigError
from .models import TimeGrid, sample_paths
from .weights import constant_weights


@dataclass
class CheckResult:
    name: str
    passed: bool
    summary: dict
    rows: list = field(default_factory=list)
    notice: str = ""


class Context:
    """Lazily resolved objects shared by the checks of one config."""

    def __init__(self, cfg: ExperimentConfig, workers: int = 1):
        self.cfg = cfg
        self.workers = int(workers)

    @cached_property
    def model(self):
        return self.cfg.model_spec()

    @cached_property
    def grid(self) -> TimeGrid:
        return self.cfg.time_grid()

    @cached_property
    def weights(self):
        return self.cfg.weight_spec()

    @cached_property
    def weights2(self):
        return self.cfg.weight_spec(second=True) if self.cfg.weights2 is not None else None

    @property
    def run(self):
        return self.cfg.run

    @cached_property
    def ensemble(self) -> mclab.Ensemble:
        r = self.run
        return mclab.run_replications(self.model, self.weights, self.grid, r.n, r.R, r.seed,
                                      workers=self.workers, weights2=self.weights2)

    @cached_property
    def gamma1(self) -> np.ndarray:
        return oracle.covariance_surface("Gamma1", self.model, self.weights, self.grid).values

    def slack(self, p) -> float:
        return float(p["slack_per_n"]) / self.run.n


@dataclass
class _Entry:
    fn: Callable
    requires: tuple
    defaults: dict
    work: Callable
    shared: str | None = None


REGISTRY: dict[str, _Entry] = {}


def register(name, requires=(), work=None, shared=None, **defaults):
    """Add a check; checks with the same ``shared`` key reuse one simulation."""

    def deco(fn):
        REGISTRY[name] = _Entry(fn, tuple(requires), defaults, work or (lambda cfg, p: 1), shared)
        return fn

    return deco


def resolve_params(spec) -> dict:
    if spec.name not in REGISTRY:
        raise ConfigError(f"unknown check {spec.name!r}; known checks: {sorted(REGISTRY)}")
    entry = REGISTRY[spec.name]
    extra = set(spec.params) - set(entry.defaults)
    if extra:
        raise ConfigError(f"unknown parameter(s) {sorted(extra)} for check {spec.name!r}")
    return {**entry.defaults, **spec.params}


def validate(cfg: ExperimentConfig) -> None:
    """Resolve every block a config's checks need; raises ConfigError."""
    for spec in cfg.checks:
        resolve_params(spec)
        for block in REGISTRY[spec.name].requires:
            if getattr(cfg, block) is None:
                raise ConfigError(f"check {spec.name!r} needs a {block!r} block")
    if cfg.model is not None:
        model = cfg.model_spec()
        if cfg.grid is not None:
            cfg.time_grid()
        if cfg.weights is not None:
            cfg.weight_spec()
        if cfg.weights2 is not None:
            cfg.weight_spec(second=True)
        if any(s.name.startswith("tightness") for s in cfg.checks) and not model.is_path_model:
            raise ConfigError("tightness scans are refused for IndependentField (FDD-only model)")
    elif cfg.grid is not None or cfg.weights is not None:
        raise ConfigError("grid/weights blocks need a model block")


def work_units(cfg: ExperimentConfig, spec) -> int:
    return int(REGISTRY[spec.name].work(cfg, resolve_params(spec)))


def shared_key(spec) -> str | None:
    return REGISTRY[spec.name].shared


def run_check(ctx: Context, spec) -> CheckResult:
    params = resolve_params(spec)
    res = REGISTRY[spec.name].fn(ctx, params)
    res.name = spec.name
    return res


def _ens_work(cfg, p):
    return cfg.run.n * cfg.run.R * cfg.time_grid().m


def _moment_result(rep: mclab.MomentReport, extra=None) -> CheckResult:
    worst = max((abs(c.z) for c in rep.cells if np.isfinite(c.z)), default=0.0)
    summary = {"cells": len(rep.cells), "max_abs_z": worst, "mean_abs_z": rep.mean_abs_z,
               "slack": rep.slack, "z_max": rep.z_max, "mean_z_max": rep.mean_z_max,
               "failing_cells": sum(not c.passed for c in rep.cells)}
    if extra:
        summary.update(extra)
    return CheckResult("", rep.passed, summary, rep.rows())


# -- exact identities and constants --------------------------------------------


@register("rank_sum_identity", requires=("model", "grid"), columns=1000, n_min=2, n_max=200, tol=1e-12,
          work=lambda cfg, p: p["columns"] * (p["n_min"] + p["n_max"]) // 2)
def _rank_sum(ctx, p):
    model, t = ctx.model, ctx.grid.points[0]
    w1 = constant_weights(1.0)
    sizes = np.random.Generator(np.random.Philox(ctx.run.seed)).integers(p["n_min"], p["n_max"] + 1, p["columns"])
    worst = 0.0
    for k, n in enumerate(sizes):
        col = model._draw(int(n), np.array([t]), _rng.substream(ctx.run.seed, k, 1)).T
        out = evaluate_block(col, [t], model, w1)
        G = model.marginal_cdf(t, col)
        closed = (n + 1) / 2.0 - np.sum(G, axis=-1)
        worst = max(worst, float(np.max(np.abs(out["beta_star"] - closed))))
    return CheckResult("", worst <= p["tol"], {"columns": int(p["columns"]), "max_abs_error": worst, "tol": p["tol"]})


@register("oracle_constants", requires=("model", "grid", "weights"), tol_c2=1e-8, tol_gamma1=1e-8, tol_mean=1e-9,
          c2=1.0 / 3.0, gamma1=1.0 / 12.0, mean=0.5, work=lambda cfg, p: 3 * cfg.time_grid().m)
def _constants(ctx, p):
    rows, ok = [], True
    for t in ctx.grid.points:
        got = {
            "c2": oracle.c2(ctx.model, ctx.weights, t),
            "gamma1": oracle.gamma1_cov(ctx.model, ctx.weights, t, t),
            "mean": oracle.mean_limit(ctx.model, ctx.weights, t),
        }
        for key, val in got.items():
            err = abs(val - p[key])
            ok &= err <= p[f"tol_{key}"]
            rows.append(dict(t=t, s=t, statistic=key, mc="", se="", oracle=val, z="", n="", R="", seed=""))
    return CheckResult("", bool(ok), {"expected": {k: p[k] for k in ("c2", "gamma1", "mean")}, "points": len(ctx.grid.points)}, rows)


# -- moment checks -------------------------------------------------------------


@register("beta_mean", requires=("model", "grid", "weights"), z_max=4.0, mean_z_max=2.0, work=_ens_work, shared="ensemble")
def _beta_mean(ctx, p):
    ref = [oracle.mean_limit(ctx.model, ctx.weights, t) for t in ctx.grid.points]
    rep = mclab.estimate_moments(ctx.ensemble, "beta_star", "mean", ref, z_max=p["z_max"], mean_z_max=p["mean_z_max"])
    return _moment_result(rep)


@register("beta_variance", requires=("model", "grid", "weights"), z_max=4.0, slack_per_n=2.0, mean_z_max=2.0, work=_ens_work, shared="ensemble")
def _beta_var(ctx, p):
    rep = mclab.estimate_moments(ctx.ensemble, "beta", "var", np.diag(ctx.gamma1), slack=ctx.slack(p),
                                 z_max=p["z_max"], mean_z_max=p["mean_z_max"])
    return _moment_result(rep)


@register("covariance_surface", requires=("model", "grid", "weights"), z_max=4.0, slack_per_n=2.0, mean_z_max=2.0, work=_ens_work, shared="ensemble")
def _cov_surface(ctx, p):
    rep = mclab.estimate_moments(ctx.ensemble, "beta", "cov", ctx.gamma1, slack=ctx.slack(p),
                                 z_max=p["z_max"], mean_z_max=p["mean_z_max"])
    return _moment_result(rep, {"min_eigenvalue": float(np.min(np.linalg.eigvalsh(ctx.gamma1)))})


@register("cross_covariance_pilot", requires=("model", "grid", "weights"), z_max=4.0, work=_ens_work, shared="ensemble")
def _cross_pilot(ctx, p):
    ens = ctx.ensemble
    pts = ctx.grid.points
    cells = []
    for i, t in enumerate(pts):
        c, se = mclab.cov_and_se(ens["alpha"][:, i], ens["beta"][:, i])
        ref = oracle.cross_cov_one_sided(ctx.model, ctx.weights, t, t)
        cells.append(mclab._cell(t, t, "cov(alpha,beta)", c, se, ref, 0.0, p["z_max"]))
    rep = mclab.MomentReport(cells, ens.n, ens.R, ens.seed, ens.config_digest, "alpha,beta", 0.0, p["z_max"], np.inf)
    return _moment_result(rep)


@register("gamma_decomposition", requires=("model", "grid", "weights"), z_max=4.0, slack_per_n=2.0, mean_z_max=2.0, work=_ens_work, shared="ensemble")
def _gamma_dec(ctx, p):
    g1 = ctx.gamma1
    g2 = oracle.covariance_surface("Gamma2", ctx.model, ctx.weights, ctx.grid).values
    gx = oracle.covariance_surface("CrossGamma", ctx.model, ctx.weights, ctx.grid).values
    total = g1 + g2 + gx
    rep = mclab.estimate_moments(ctx.ensemble, "gamma", "cov", total, slack=ctx.slack(p),
                                 z_max=p["z_max"], mean_z_max=p["mean_z_max"])
    gamma_ok = np.array_equal(ctx.ensemble["gamma"], ctx.ensemble["alpha"] + ctx.ensemble["beta"])
    res = _moment_result(rep, {"min_eigenvalue": float(np.min(np.linalg.eigvalsh(total))), "gamma_is_sum": bool(gamma_ok)})
    res.passed = res.passed and gamma_ok
    return res


@register("paired_linearity", requires=("model", "grid", "weights", "weights2"), factor=2.0, z_max=4.0, work=_ens_work, shared="ensemble")
def _paired_lin(ctx, p):
    ens = ctx.ensemble
    pts = ctx.grid.points
    lam = float(p["factor"])
    exact = np.allclose(ens["beta2"], lam * ens["beta"], rtol=1e-12, atol=1e-13)
    cells = []
    for i in range(len(pts)):
        for j in range(len(pts)):
            c12, se = mclab.cov_and_se(ens["beta"][:, i], ens["beta2"][:, j])
            c11, _ = mclab.cov_and_se(ens["beta"][:, i], ens["beta"][:, j])
            cells.append(mclab._cell(pts[i], pts[j], "cov(beta1,beta2)-factor*cov(beta1,beta1)", c12, se, lam * c11, 0.0, p["z_max"]))
    rep = mclab.MomentReport(cells, ens.n, ens.R, ens.seed, ens.config_digest, "beta,beta2", 0.0, p["z_max"], np.inf)
    res = _moment_result(rep, {"beta2_equals_factor_beta": bool(exact), "factor": lam})
    res.passed = res.passed and exact
    return res


@register("gamma3_surface", requires=("model", "grid", "weights", "weights2"), z_max=4.0, slack_per_n=2.0, mean_z_max=2.0, work=_ens_work, shared="ensemble")
def _gamma3(ctx, p):
    g3 = oracle.covariance_surface("Gamma3", ctx.model, ctx.weights, ctx.grid, weights2=ctx.weights2).values
    rep = mclab.paired_covariance(ctx.ensemble, g3, slack=ctx.slack(p), z_max=p["z_max"])
    rep.mean_z_max = p["mean_z_max"]
    return _moment_result(rep)


@register("lstat_rank_form", requires=("model", "grid", "weights"), samples=100, tol=1e-12,
          work=lambda cfg, p: p["samples"] * cfg.run.n)
def _lstat_rank(ctx, p):
    worst = 0.0
    for k in range(int(p["samples"])):
        sample = sample_paths(ctx.model, ctx.run.n, ctx.grid, (ctx.run.seed, k, 2))
        j, _ = l_statistic(sample, ctx.weights)
        jr = l_statistic_rank_form(sample, ctx.weights)
        worst = max(worst, float(np.max(np.abs(j - jr))))
    return CheckResult("", worst <= p["tol"], {"samples": int(p["samples"]), "max_abs_difference": worst, "tol": p["tol"]})


@register("remainder_zero", requires=("model", "grid", "weights"), tol=1e-12, work=_ens_work, shared="ensemble")
def _rem_zero(ctx, p):
    worst = float(np.max(np.abs(ctx.ensemble["remainder"])))
    return CheckResult("", worst <= p["tol"], {"max_abs_remainder": worst, "tol": p["tol"]})


# -- distributional checks -----------------------------------------------------


@register("fdd_normality", requires=("model", "grid", "weights"), coefficients=[[1.0, -1.0]], times=None, p_min=0.01,
          work=_ens_work, shared="ensemble")
def _fdd(ctx, p):
    times = p["times"] if p["times"] is not None else list(ctx.grid.points)
    rows, ok, reports = [], True, []
    for a in p["coefficients"]:
        rep = mclab.fdd_normality(ctx.ensemble, ctx.model, ctx.weights, times, a)
        if rep.degenerate:
            ok = False
        else:
            ok &= rep.ks_pvalue > p["p_min"]
        reports.append({"coefficients": list(a), "variance": rep.variance, "mean": rep.mean,
                        "ks_statistic": rep.ks_statistic, "ks_pvalue": rep.ks_pvalue,
                        "ad_statistic": rep.ad_statistic, "ad_pvalue": rep.ad_pvalue,
                        "degenerate": rep.degenerate, "notice": rep.notice})
        rows.append(dict(t=times[0], s=times[-1], statistic=f"ks_pvalue{list(a)}", mc=rep.ks_pvalue, se="",
                         oracle=rep.variance, z="", n=ctx.run.n, R=ctx.run.R, seed=ctx.run.seed))
    return CheckResult("", bool(ok), {"tests": reports, "p_min": p["p_min"]}, rows)


@register("remainder_decay", requires=("model", "grid", "weights"), ratio_max=0.7,
          work=lambda cfg, p: cfg.run.R * sum(cfg.run.n_ladder or [0]) * cfg.time_grid().m)
def _decay(ctx, p):
    if ctx.run.n_ladder is None:
        raise ConfigError("remainder_decay needs run.n_ladder")
    rep = mclab.remainder_decay(ctx.model, ctx.weights, ctx.grid, ctx.run.n_ladder, ctx.run.R, ctx.run.seed, ctx.workers)
    ok = rep.strictly_decreasing and rep.ratio <= p["ratio_max"]
    rows = [dict(t="", s="", statistic="median_sup_remainder", mc=m, se="", oracle=0.0, z="", n=n, R=rep.R, seed=rep.seed)
            for n, m in zip(rep.n_ladder, rep.medians)]
    return CheckResult("", bool(ok), {"n_ladder": rep.n_ladder, "medians": rep.medians, "loglog_slope": rep.slope,
                                      "strictly_decreasing": rep.strictly_decreasing, "ratio": rep.ratio,
                                      "ratio_max": p["ratio_max"]}, rows)


def _bridge_work(cfg, p):
    b = cfg.bridge
    return b.n * b.R * len(b.copulas)


def _bridge_reports(ctx):
    if not hasattr(ctx, "_bridge"):
        b = ctx.cfg.bridge
        ctx._bridge = {
            c.kind: mclab.bridge_check(c.kind, b.n, b.R, ctx.run.seed + 101 * k, b.grid01, c.rho)
            for k, c in enumerate(b.copulas)
        }
    return ctx._bridge


def _surface_rows(rep, which, theory, label):
    g = rep.grid
    return [dict(t=g[i], s=g[j], statistic=f"{label}[{rep.copula}]", mc=float(which[i, j]), se="",
                 oracle=float(theory[i, j]), z="", n=rep.n, R=rep.R, seed=rep.seed)
            for i in range(len(g)) for j in range(len(g))]


@register("bridge_margins", requires=("bridge",), sup_max=0.02, work=_bridge_work, shared="bridge")
def _bridge_margins(ctx, p):
    reps = _bridge_reports(ctx)
    rows, summary, ok = [], {}, True
    for kind, rep in reps.items():
        summary[kind] = {"sup_dev_11": rep.sup_dev_11, "sup_dev_22": rep.sup_dev_22}
        ok &= max(rep.sup_dev_11, rep.sup_dev_22) <= p["sup_max"]
        rows += _surface_rows(rep, rep.cov_11, rep.theory_margin, "cov11")
        rows += _surface_rows(rep, rep.cov_22, rep.theory_margin, "cov22")
    summary["sup_max"] = p["sup_max"]
    return CheckResult("", bool(ok), summary, rows)


@register("bridge_cross", requires=("bridge",), sup_max=0.02, work=_bridge_work, shared="bridge")
def _bridge_cross(ctx, p):
    reps = _bridge_reports(ctx)
    rows, summary, ok = [], {}, True
    for kind, rep in reps.items():
        summary[kind] = {"sup_dev_12": rep.sup_dev_12}
        ok &= rep.sup_dev_12 <= p["sup_max"]
        rows += _surface_rows(rep, rep.cov_12, rep.theory_cross, "cov12")
    summary["sup_max"] = p["sup_max"]
    return CheckResult("", bool(ok), summary, rows)


@register("bahadur_kiefer", requires=("bridge",), work=lambda cfg, p: cfg.bridge.bk_R * sum(cfg.bridge.bk_ladder))
def _bk(ctx, p):
    b = ctx.cfg.bridge
    cop = b.copulas[0]
    meds = []
    for k, n in enumerate(b.bk_ladder):
        rep = mclab.bridge_check(cop.kind, n, b.bk_R, ctx.run.seed + 7 + 13 * k, b.grid01, cop.rho)
        meds.append(list(rep.bahadur_kiefer_sup))
    m = np.array(meds)
    ok = bool(np.all(np.diff(m, axis=0) < 0))
    rows = [dict(t="", s="", statistic=f"bk_sup_margin{i + 1}", mc=float(m[k, i]), se="", oracle=0.0, z="",
                 n=n, R=b.bk_R, seed=ctx.run.seed) for k, n in enumerate(b.bk_ladder) for i in range(2)]
    return CheckResult("", ok, {"copula": cop.kind, "n_ladder": list(b.bk_ladder), "median_sup": m.tolist()}, rows)


@register("tightness_resolution", requires=("model", "grid", "weights", "tightness"), fine_points=41, tol=0.05,
          repro_tol=1e-9, work=lambda cfg, p: cfg.time_grid().m ** 2 + p["fine_points"] ** 2)
def _tightness(ctx, p):
    tb = ctx.cfg.tightness
    g = ctx.grid
    coarse = oracle.holder_scan(ctx.model, ctx.weights, g, tb.delta, tb.r)
    fine_grid = TimeGrid.linspace(g.points[0], g.points[-1], int(p["fine_points"]), g.T)
    fine = oracle.holder_scan(ctx.model, ctx.weights, fine_grid, tb.delta, tb.r)
    oracle._tails.clear()
    again = oracle.holder_scan(ctx.model, ctx.weights, g, tb.delta, tb.r)
    repro = abs(again.fitted_exponent - coarse.fitted_exponent) <= p["repro_tol"]
    gap = abs(coarse.fitted_exponent - fine.fitted_exponent)
    ok = bool(repro and gap <= p["tol"] and all(v >= -1e-8 for _, _, v in coarse.pairs))
    rows = [dict(t=t, s=s, statistic="increment_variance", mc="", se="", oracle=v, z="", n="", R="", seed="")
            for t, s, v in coarse.pairs]
    return CheckResult("", ok, {
        "coarse_points": g.m, "fine_points": fine_grid.m, "delta": tb.delta, "r": tb.r,
        "coarse_exponent": coarse.fitted_exponent, "fine_exponent": fine.fitted_exponent, "gap": gap,
        "coarse_K0": coarse.fitted_K0, "implied_K0": coarse.implied_K0,
        "satisfied_on_grid": coarse.satisfied_on_grid, "reproducible": bool(repro),
        "degenerate": coarse.degenerate, "notice": coarse.notice,
    }, rows)
