"""Command line front end: ``emproc <subcommand> --config PATH | --all``.

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical error (quadrature tolerance or tied sample values).
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import checks, mclab, oracle
from . import rng as _rng
from .config import CheckSpec, ExperimentConfig, bundled_paths, load_config
from .errors import ConfigError, DataError, EmprocError, NumericalError
from .reports import Report, write_reports

SUBCOMMANDS = ("oracle", "simulate", "verify", "bridge", "lstat", "tightness", "describe")
BRIDGE_CHECKS = ("bridge_margins", "bridge_cross", "bahadur_kiefer")
LSTAT_CHECKS = ("lstat_rank_form", "remainder_zero", "remainder_decay")
WORKERS_ENV = "EMPROC_WORKERS"


class Skip(Exception):
    """The config does not apply to the subcommand (only under ``--all``)."""


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emproc", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment config (YAML)")
    src.add_argument("--all", action="store_true", help="run every bundled config")
    p.add_argument("--workers", type=int, default=None, help=f"worker processes (default ${WORKERS_ENV} or 1)")
    p.add_argument("--out", default=None, help="report directory (default: the config's output.directory)")
    p.add_argument("--format", choices=("csv", "json", "both"), default=None)
    return p


def _workers(arg) -> int:
    if arg is not None:
        value = arg
    else:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            value = int(raw)
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"worker count must be >= 1, got {value}")
    return value


def _formats(arg, cfg: ExperimentConfig):
    if arg is None:
        return list(cfg.output.formats)
    return ["csv", "json"] if arg == "both" else [arg]


# -- subcommands ---------------------------------------------------------------


def _run_checks(ctx: checks.Context, specs, subcommand: str) -> Report:
    rep = Report(ctx.cfg, subcommand)
    results = []
    for spec in specs:
        res = checks.run_check(ctx, spec)
        results.append(res)
        for row in res.rows:
            rep.rows.append({**row, "statistic": f"{res.name}:{row['statistic']}"})
        print(f"  {'PASS' if res.passed else 'FAIL'}  {res.name}")
    rep.passed = all(r.passed for r in results)
    rep.body["checks"] = [
        {"name": r.name, "passed": bool(r.passed), "summary": r.summary, "notice": r.notice} for r in results
    ]
    return rep


def cmd_verify(ctx):
    if not ctx.cfg.checks:
        raise Skip("no checks")
    return _run_checks(ctx, ctx.cfg.checks, "verify")


def _selected(cfg, names):
    return [s for s in cfg.checks if s.name in names]


def cmd_bridge(ctx):
    cfg = ctx.cfg
    if cfg.bridge is None:
        raise Skip("no bridge block")
    specs = _selected(cfg, BRIDGE_CHECKS) or [CheckSpec(name=n) for n in BRIDGE_CHECKS]
    return _run_checks(ctx, specs, "bridge")


def cmd_tightness(ctx):
    cfg = ctx.cfg
    if cfg.tightness is None:
        raise Skip("no tightness block")
    if not ctx.model.is_path_model:
        raise ConfigError("tightness scans are refused for IndependentField (FDD-only model)")
    specs = _selected(cfg, ("tightness_resolution",))
    if specs:
        return _run_checks(ctx, specs, "tightness")
    scan = oracle.holder_scan(ctx.model, ctx.weights, ctx.grid, cfg.tightness.delta, cfg.tightness.r)
    rep = Report(cfg, "tightness")
    rep.rows = [dict(t=t, s=s, statistic="increment_variance", oracle=v) for t, s, v in scan.pairs]
    rep.body["scan"] = {k: v for k, v in vars(scan).items() if k != "pairs"}
    print(f"  fitted exponent {scan.fitted_exponent:.6f} on {ctx.grid.m} points")
    return rep


def cmd_lstat(ctx):
    cfg = ctx.cfg
    if cfg.model is None or cfg.weights is None or cfg.grid is None:
        raise Skip("no model/weights/grid")
    if not ctx.weights.eta_defined:
        raise Skip("weights have no score c")
    r = cfg.run
    ens = mclab.run_replications(ctx.model, ctx.weights, ctx.grid, r.n, r.R, r.seed, workers=ctx.workers,
                                 lstat=True, remainder=False)
    J = np.array([oracle.j_limit(ctx.model, ctx.weights, t) for t in ctx.grid.points])
    mu, se = mclab.mean_and_se(ens["lstat"])
    qbar = ens["q_count"].mean(axis=0)
    specs = _selected(cfg, LSTAT_CHECKS)
    rep = _run_checks(ctx, specs, "lstat") if specs else Report(cfg, "lstat")
    for i, t in enumerate(ctx.grid.points):
        rep.rows.append(dict(t=t, s=t, statistic="mean_J_n", mc=mu[i], se=se[i], oracle=J[i],
                             z=(mu[i] - J[i]) / se[i] if se[i] > 0 else 0.0, n=r.n, R=r.R, seed=r.seed))
        rep.rows.append(dict(t=t, s=t, statistic="mean_Q_n", mc=qbar[i], n=r.n, R=r.R, seed=r.seed))
    rep.body["lstat"] = {"times": list(ctx.grid.points), "J": J.tolist(), "mean_J_n": mu.tolist(),
                         "se": se.tolist(), "mean_Q_n": qbar.tolist()}
    return rep


def cmd_simulate(ctx):
    cfg = ctx.cfg
    if cfg.model is None or cfg.weights is None or cfg.grid is None:
        raise Skip("no model/weights/grid")
    ens = ctx.ensemble
    rep = Report(cfg, "simulate")
    means = [oracle.mean_limit(ctx.model, ctx.weights, t) for t in ctx.grid.points]
    reports = [
        mclab.estimate_moments(ens, "beta_star", "mean", means),
        mclab.estimate_moments(ens, "beta", "cov", ctx.gamma1),
    ]
    if "gamma" in ens.arrays:
        total = oracle.covariance_surface("GammaTotal", ctx.model, ctx.weights, ctx.grid).values
        reports.append(mclab.estimate_moments(ens, "gamma", "cov", total))
    for mr in reports:
        rep.rows += [{**row, "statistic": f"{mr.target}:{row['statistic']}"} for row in mr.rows()]
    rep.body["ensemble_digest"] = ens.config_digest
    rep.body["mean_abs_z"] = {mr.target: mr.mean_abs_z for mr in reports}
    print(f"  simulated R={ens.R} replications of n={ens.n}")
    return rep


def cmd_oracle(ctx):
    cfg = ctx.cfg
    before = _rng.draw_count()
    rep = Report(cfg, "oracle")
    surfaces = {}
    if cfg.model is not None and cfg.weights is not None and cfg.grid is not None:
        kinds = ["Gamma1"]
        if ctx.weights.eta_defined:
            kinds += ["Gamma2", "CrossGamma", "GammaTotal"]
        for kind in kinds:
            surfaces[kind] = oracle.covariance_surface(kind, ctx.model, ctx.weights, ctx.grid)
        if ctx.weights2 is not None:
            surfaces["Gamma3"] = oracle.covariance_surface("Gamma3", ctx.model, ctx.weights, ctx.grid,
                                                           weights2=ctx.weights2)
        for kind, surf in surfaces.items():
            rep.rows += [dict(t=t, s=s, statistic=kind, oracle=v) for t, s, v, _ in surf.rows()]
        for t in ctx.grid.points:
            rep.rows.append(dict(t=t, s=t, statistic="mean_limit", oracle=oracle.mean_limit(ctx.model, ctx.weights, t)))
            rep.rows.append(dict(t=t, s=t, statistic="c2", oracle=oracle.c2(ctx.model, ctx.weights, t)))
            if ctx.weights.eta_defined:
                rep.rows.append(dict(t=t, s=t, statistic="J", oracle=oracle.j_limit(ctx.model, ctx.weights, t)))
    if cfg.bridge is not None:
        g = np.asarray(cfg.bridge.grid01)
        S, T = np.meshgrid(g, g, indexing="ij")
        for cop in cfg.bridge.copulas:
            cross = mclab.copula_cdf(cop.kind, S, T, cop.rho) - S * T
            rep.rows += [dict(t=g[i], s=g[j], statistic=f"bridge_cross[{cop.kind}]", oracle=cross[i, j])
                         for i in range(g.size) for j in range(g.size)]
    if not rep.rows:
        raise Skip("nothing to compute")
    rep.body["min_eigenvalues"] = {k: s.min_eigenvalue() for k, s in surfaces.items()}
    rep.body["rng_draws"] = _rng.draw_count() - before
    print(f"  {len(surfaces)} surface(s), rng draws {rep.body['rng_draws']}")
    return rep


DISPATCH = {
    "oracle": cmd_oracle,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "bridge": cmd_bridge,
    "lstat": cmd_lstat,
    "tightness": cmd_tightness,
}


def describe(cfg: ExperimentConfig) -> str:
    lines = [f"config {cfg.name} (digest {cfg.digest()})"]
    if cfg.model is not None:
        m = cfg.model_spec()
        lines.append(f"  model: {m.kind} marginal={m.marginal} rho={m.rho} scale_slope={m.scale_slope}")
    if cfg.weights is not None:
        lines.append(f"  weights: {cfg.weights.model_dump(exclude_none=True)}")
    if cfg.weights2 is not None:
        lines.append(f"  weights2: {cfg.weights2.model_dump(exclude_none=True)}")
    if cfg.grid is not None:
        lines.append(f"  grid: T={cfg.grid.T} points={list(cfg.time_grid().points)}")
    r = cfg.run
    lines.append(f"  run: n={r.n} R={r.R} seed={r.seed}" + (f" n_ladder={r.n_ladder}" if r.n_ladder else ""))
    if cfg.tightness is not None:
        lines.append(f"  tightness: delta={cfg.tightness.delta} r={cfg.tightness.r}")
    if cfg.bridge is not None:
        b = cfg.bridge
        kinds = ", ".join(c.kind if c.rho is None else f"{c.kind}({c.rho})" for c in b.copulas)
        lines.append(f"  bridge: n={b.n} R={b.R} copulas=[{kinds}] bk_ladder={b.bk_ladder} bk_R={b.bk_R}")
    lines.append(f"  checks: {len(cfg.checks)}")
    total, seen = 0, set()
    for i, spec in enumerate(cfg.checks, 1):
        params = checks.resolve_params(spec)
        work = checks.work_units(cfg, spec)
        key = checks.shared_key(spec)
        note = ""
        if key is not None and key in seen:
            note = f" (reuses the {key})"
        else:
            total += work
            seen.add(key)
        lines.append(f"    {i}. {spec.name} {params} work={work}{note}")
    lines.append(f"  estimated work units: {total}")
    return "\n".join(lines)


# -- entry point ---------------------------------------------------------------


def _load(args) -> list[ExperimentConfig]:
    paths = bundled_paths() if args.all else [args.config]
    cfgs = [load_config(p) for p in paths]
    for cfg in cfgs:
        checks.validate(cfg)
    return cfgs


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfgs = _load(args)
        if args.subcommand == "describe":
            for cfg in cfgs:
                print(describe(cfg))
            return 0
        workers = _workers(args.workers)
        produced = []
        for cfg in cfgs:
            print(f"{args.subcommand} {cfg.name}")
            ctx = checks.Context(cfg, workers)
            try:
                produced.append(DISPATCH[args.subcommand](ctx))
            except Skip as why:
                if not args.all:
                    raise ConfigError(f"{args.subcommand} does not apply to config {cfg.name!r}: {why}") from None
                print(f"  skipped ({why})")
        by_dir = {}
        for rep in produced:
            key = (args.out or rep.config.output.directory, tuple(_formats(args.format, rep.config)))
            by_dir.setdefault(key, []).append(rep)
        for (directory, formats), reps in sorted(by_dir.items()):
            for path in write_reports(reps, directory, formats):
                print(f"wrote {path}")
    except (NumericalError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except EmprocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    failed = [rep.config.name for rep in produced if not rep.passed]
    if failed:
        print(f"checks failed in: {', '.join(failed)}")
        return 1
    return 0


def main() -> None:
    sys.exit(run())
