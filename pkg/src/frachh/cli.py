"""``frachh`` command line: one campaign per invocation, one bundle directory per run.

A bundle holds ``manifest.json`` (config echo, seed, versions, summary),
``results.csv`` and any field files. ``results.csv`` depends only on the
config and seed.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import platform
import sys
from dataclasses import replace
from fractions import Fraction
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .fbm import TimeGrid, covariance_matrix, sample_fbm_batch
from .hardy import hardy_ratios
from .noise import NoiseSpec, mode_convolution_covariance, mode_coefficient, mode_eigenvalue, \
    sample_stochastic_convolution
from .solver import AdmissibilityError, InitialCondition, SolverConfig, picard_solve, write_solution
from .spectral import (
    SpatialGrid,
    decay_bound_certificate,
    eval_Ktheta,
    ktheta_closed_form,
    smoothing_constant,
    smoothing_ratios,
)
from .wellposedness import ModelParams, check_admissible

log = logging.getLogger("frachh")

CAMPAIGNS = ("check-params", "sample-fbm", "simulate", "verify-kernel", "verify-smoothing", "verify-hardy",
             "mc-covariance", "sweep")
SECTIONS = ("params", "grid", "time", "noise", "solver", "campaign")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config


def _floats(obj):
    """Fractions outside ``params`` become floats."""
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_floats(v) for v in obj]
    return obj


def load_config(path) -> dict:
    """Read a JSON config; decimals in ``params`` stay exact rationals."""
    try:
        with open(path) as fh:
            raw = json.load(fh, parse_float=Fraction)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config sections {unknown}; allowed: {list(SECTIONS)}")
    cfg = {k: _floats(v) for k, v in raw.items() if k != "params"}
    cfg["params"] = raw.get("params", {})
    for k in SECTIONS:
        cfg.setdefault(k, {})
        if not isinstance(cfg[k], dict):
            raise ConfigError(f"section {k!r} must be an object")
    return cfg


def _jsonable(obj):
    if isinstance(obj, Fraction):
        return str(obj) if obj.denominator != 1 else int(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _params(cfg) -> ModelParams:
    try:
        return ModelParams.from_dict(cfg["params"])
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(f"invalid params: {exc}") from exc


def _grid(cfg, N: int) -> SpatialGrid:
    g = cfg["grid"]
    try:
        return SpatialGrid(N, float(g.get("L", 8.0)), int(g.get("n", 256)))
    except ValueError as exc:
        raise ConfigError(f"invalid grid: {exc}") from exc


def _tgrid(cfg) -> TimeGrid:
    t = cfg["time"]
    try:
        return TimeGrid(float(t.get("horizon", 1.0)), int(t.get("steps", 128)))
    except ValueError as exc:
        raise ConfigError(f"invalid time grid: {exc}") from exc


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _versions() -> dict:
    try:
        own = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        own = "unknown"
    return {"frachh": own, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


# ---------------------------------------------------------------------------
# campaigns; each returns (header, rows, summary)


def campaign_check_params(cfg, seed, out, override):
    verdict = check_admissible(_params(cfg))
    rows = []
    if verdict.exponents is not None:
        for name, entry in verdict.exponents.as_dict().items():
            rows.append([name, entry["exact"] or "", entry["value"]])
    rows.append(["accepted", "", verdict.accepted])
    for reason in verdict.reasons:
        rows.append(["violated", reason, ""])
    return ["quantity", "exact", "value"], rows, {"acceptance": verdict.as_record()}


def campaign_sample_fbm(cfg, seed, out, override):
    P = _params(cfg)
    c = cfg["campaign"]
    tgrid = _tgrid(cfg)
    method = c.get("method", "cholesky")
    paths = int(c.get("paths", 1))
    if paths < 1:
        raise ConfigError("campaign.paths must be at least 1")
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(paths)]
    batch = sample_fbm_batch(tgrid, float(P.H), seeds, method)
    header = ["t"] + [f"path_{k}" for k in range(paths)]
    rows = [[t, *batch[:, i]] for i, t in enumerate(tgrid.nodes)]
    theory = np.diag(covariance_matrix(tgrid.nodes, float(P.H)))
    summary = {"method": method, "paths": paths, "path_seeds": seeds,
               "max_abs_variance_error": float(np.abs(batch.var(axis=0) - theory).max()) if paths > 1 else None}
    return header, rows, summary


def campaign_simulate(cfg, seed, out, override):
    P = _params(cfg)
    grid = _grid(cfg, P.N)
    s = cfg["solver"]
    init = s.get("initial", {})
    initial = InitialCondition(init.get("profile", "zero"), float(init.get("amplitude", 0.0)), init.get("path"))
    tcfg = cfg["time"]
    horizon = tcfg.get("horizon", 1.0)
    steps = int(tcfg.get("steps", 128))
    try:
        base = SolverConfig(P, grid, TimeGrid(1.0 if horizon == "auto" else float(horizon), steps),
                            int(cfg["noise"].get("mode_cutoff", 16)), seed,
                            float(s.get("picard_tol", 1e-10)), int(s.get("max_picard_iters", 50)), initial,
                            s.get("r"), s.get("c_hardy"), override,
                            int(s.get("hardy_trials", 20)))
        if horizon == "auto":
            # solve once on the unit horizon to size the budget, then rerun up to T*
            probe = picard_solve(replace(base, override_admissibility=True, max_picard_iters=1))
            if probe.budget is None or probe.budget.T_star <= 0:
                raise ConfigError("horizon 'auto' needs a positive admitted existence time")
            base = replace(base, tgrid=TimeGrid(probe.budget.T_star, steps), c_hardy=probe.budget.c_hardy)
        sol = picard_solve(base)
    except AdmissibilityError as exc:
        raise ConfigError(f"{exc} (pass --override-admissibility to run anyway)") from exc
    write_solution(sol, out / "fields")
    times = sol.tgrid.nodes
    vol = grid.cell_volume
    rows = [[i, t, sol.norm_q[i], sol.weighted_norm_r[i], float(np.abs(v).max()), float(v.sum() * vol)]
            for i, (t, v) in enumerate(zip(times, sol.values))]
    write_csv(out / "picard.csv", ["iteration", "gap"], [[k + 1, g] for k, g in enumerate(sol.picard_history)])
    b = sol.budget
    summary = {
        "converged": sol.converged,
        "iterations": len(sol.picard_history),
        "picard_history": sol.picard_history,
        "sigma": sol.sigma, "q": sol.q, "r": sol.r,
        "horizon": sol.tgrid.horizon,
        "in_ball": sol.in_ball,
        "overridden": sol.overridden,
        "budget": None if b is None else {"smoothing_constant": b.smoothing_constant, "M": b.radius,
                                          "c_hardy": b.c_hardy, "lambda": b.lam, "T_star": b.T_star},
        "note": "contraction of the discrete map only; no uniqueness claim",
    }
    return ["node", "t", "norm_q", "weighted_norm_r", "norm_inf", "integral"], rows, summary


def _exponent_list(values):
    return [math.inf if str(v).lower() in ("inf", "infinity") else float(v) for v in values]


def campaign_verify_kernel(cfg, seed, out, override):
    c = cfg["campaign"]
    N = int(cfg["params"].get("N", 1))
    thetas = [float(t) for t in c.get("thetas", [1.0, 2.0])]
    xs = np.linspace(0.0, float(c.get("x_max", 10.0)), int(c.get("points", 101)))
    radius = float(c.get("certificate_radius", 20.0))
    rows = []
    certs = {}
    for theta in thetas:
        closed = theta in (1.0, 2.0)
        for x in xs:
            num = eval_Ktheta(x, theta, N)
            ref = ktheta_closed_form(x, theta, N) if closed else math.nan
            rows.append([theta, N, x, num, ref, abs(num - ref) if closed else math.nan])
        c1 = decay_bound_certificate(theta, N, radius)
        c2 = decay_bound_certificate(theta, N, 2 * radius)
        certs[str(theta)] = {"radius": radius, "certificate": c1, "certificate_doubled": c2,
                             "relative_change": abs(c2 - c1) / c1}
    return ["theta", "N", "x", "numeric", "closed_form", "abs_error"], rows, {"certificates": certs}


def campaign_verify_smoothing(cfg, seed, out, override):
    c = cfg["campaign"]
    N = int(cfg["params"].get("N", 1))
    thetas = [float(t) for t in c.get("thetas", [1.0, 2.0])]
    pairs = [_exponent_list(pq) for pq in c.get("pairs", [[1, 2], [2, 4], [2, "inf"]])]
    times = [float(t) for t in c.get("times", [0.25, 0.5, 1.0])]
    trials = int(c.get("trials", 100))
    grid = _grid(cfg, N) if cfg["grid"] else None
    rows = []
    for theta in thetas:
        K = smoothing_constant(theta, N)
        for p, q in pairs:
            ratios = smoothing_ratios(theta, N, p, q, times, trials, seed, grid)
            for j, t in enumerate(times):
                m = float(ratios[:, j].max())
                rows.append([theta, N, p, q, t, m, K, m / K])
    return ["theta", "N", "p", "q", "t", "max_ratio", "K", "ratio_over_K"], rows, {"trials": trials}


def campaign_verify_hardy(cfg, seed, out, override):
    c = cfg["campaign"]
    P = cfg["params"]
    N = int(P.get("N", 1))
    theta, gamma = float(P.get("theta", 2)), float(P.get("gamma", 0.5))
    p = _exponent_list([c.get("p", P.get("p", 4))])[0]
    q = _exponent_list([c.get("q", P.get("q", 6))])[0]
    times = [float(t) for t in c.get("times", [0.25, 0.5, 1.0])]
    trials = int(c.get("trials", 100))
    grid = _grid(cfg, N) if cfg["grid"] else None
    ratios = hardy_ratios(theta, gamma, N, p, q, times, trials, seed, grid)
    rows = [[theta, gamma, N, p, q, t, float(ratios[:, j].max())] for j, t in enumerate(times)]
    return (["theta", "gamma", "N", "p", "q", "t", "max_ratio"], rows,
            {"empirical_constant": float(ratios.max()), "trials": trials})


def campaign_mc_covariance(cfg, seed, out, override):
    P = _params(cfg)
    grid = _grid(cfg, P.N)
    tgrid = _tgrid(cfg)
    c = cfg["campaign"]
    replicas = int(c.get("replicas", 1000))
    modes = [tuple(int(v) for v in (k if isinstance(k, list) else [k])) for k in c.get("modes", [[0] * P.N])]
    cutoff = int(cfg["noise"].get("mode_cutoff", max(max(abs(v) for v in k) for k in modes)))
    i1 = int(c.get("node", tgrid.steps))
    i2 = int(c.get("node_prime", i1))
    t1, t2 = tgrid.nodes[i1], tgrid.nodes[i2]
    theta, H, mu = float(P.theta), float(P.H), float(P.mu)
    seeds = [int(s) for s in np.random.SeedSequence(seed).generate_state(replicas)]
    samples = {k: np.empty((replicas, 2), dtype=complex) for k in modes}
    for j, s in enumerate(seeds):
        Z = sample_stochastic_convolution(NoiseSpec(grid, H, mu, cutoff, s), tgrid, theta)
        for k in modes:
            idx = tuple(v % grid.n for v in k)
            samples[k][j] = mode_coefficient(Z.values[[i1, i2]], grid, idx)
    rows = []
    for k in modes:
        lam = mode_eigenvalue(grid, k, theta)
        x = samples[k]
        prod = (x[:, 0] * np.conj(x[:, 1])).real
        emp = float(prod.mean())
        se = float(prod.std(ddof=1) / math.sqrt(replicas))
        theory = mu**2 * mode_convolution_covariance(lam, t1, t2, H)
        rows.append([" ".join(map(str, k)), lam, t1, t2, emp, theory, se, (emp - theory) / se if se > 0 else 0.0])
    return (["mode", "lambda", "t", "t_prime", "empirical", "theory", "std_error", "z_score"], rows,
            {"replicas": replicas, "mode_cutoff": cutoff})


def campaign_sweep(cfg, seed, out, override):
    lattice = cfg["campaign"].get("lattice")
    if not isinstance(lattice, dict) or not lattice:
        raise ConfigError("sweep needs campaign.lattice: {param: [values...]}")
    keys = ("N", "theta", "gamma", "p", "q", "H")
    bad = sorted(set(lattice) - set(keys))
    if bad:
        raise ConfigError(f"lattice keys {bad} are not model parameters")
    # lattice values inherit exact parsing: floats become Fractions again via their shortest repr
    axes = {k: [Fraction(repr(v)) if isinstance(v, float) else v for v in lattice[k]] for k in lattice}
    base = dict(cfg["params"])
    names = list(axes)
    slack_keys = None
    rows = []
    for combo in itertools.product(*(axes[k] for k in names)):
        d = {**base, **dict(zip(names, combo))}
        try:
            verdict = check_admissible(ModelParams.from_dict(d))
        except (ValueError, ZeroDivisionError) as exc:
            rows.append([*(d.get(k, "") for k in keys), False, f"invalid: {exc}"])
            continue
        e = verdict.exponents
        vals = {} if e is None else {k: v["value"] for k, v in e.as_dict().items()}
        if slack_keys is None and vals:
            slack_keys = list(vals)
        rows.append([*(d[k] for k in keys), verdict.accepted, "; ".join(verdict.reasons),
                     *(vals.get(k, "") for k in (slack_keys or []))])
    slack_keys = slack_keys or []
    width = len(keys) + 2 + len(slack_keys)
    rows = [r + [""] * (width - len(r)) for r in rows]
    accepted = sum(1 for r in rows if r[len(keys)] is True)
    return [*keys, "accepted", "reasons", *slack_keys], rows, {"points": len(rows), "accepted": accepted}


RUNNERS = {
    "check-params": campaign_check_params,
    "sample-fbm": campaign_sample_fbm,
    "simulate": campaign_simulate,
    "verify-kernel": campaign_verify_kernel,
    "verify-smoothing": campaign_verify_smoothing,
    "verify-hardy": campaign_verify_hardy,
    "mc-covariance": campaign_mc_covariance,
    "sweep": campaign_sweep,
}


def run_experiment(campaign: str, config_path, out_dir, seed: int | None = None, override: bool = False) -> Path:
    if campaign not in RUNNERS:
        raise ConfigError(f"unknown campaign {campaign!r}; choose from {list(CAMPAIGNS)}")
    cfg = load_config(config_path)
    named = cfg["campaign"].get("name")
    if named is not None and named != campaign:
        raise ConfigError(f"config is for campaign {named!r}, not {campaign!r}")
    if seed is None:
        seed = int(cfg["noise"].get("seed", cfg["campaign"].get("seed", 0)))
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    log.info("running %s with seed %d into %s", campaign, seed, out)
    header, rows, summary = RUNNERS[campaign](cfg, seed, out, override)
    write_csv(out / "results.csv", header, rows)
    manifest = {
        "campaign": campaign,
        "seed": seed,
        "override_admissibility": override,
        "config": _jsonable({**cfg, "params": cfg["params"]}),
        "versions": _versions(),
        "outputs": sorted(p.relative_to(out).as_posix() for p in out.rglob("*")
                          if p.is_file() and p.name != "manifest.json"),
        "summary": _jsonable(summary),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="frachh", description="Fractional Hardy-Henon equation with fBm noise.")
    ap.add_argument("campaign", choices=CAMPAIGNS)
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", required=True, help="bundle directory")
    ap.add_argument("--seed", type=int, default=None, help="overrides noise.seed")
    ap.add_argument("--override-admissibility", action="store_true",
                    help="run outside the admissible region; stamped in the manifest")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        out = run_experiment(args.campaign, args.config, args.out, args.seed, args.override_admissibility)
    except (ConfigError, OSError) as exc:
        print(f"frachh: error: {exc}", file=sys.stderr)
        return 2
    print(out / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
