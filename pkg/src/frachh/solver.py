"""Picard iteration for the mild formulation on a periodic grid.

The map iterated is

    Phi(u)(t) = e^{-tA} u0 + int_0^t e^{-(t-s)A} |x|^{-gamma} |u(s)|^{p-1} u(s) ds + Z(t)

with ``A = (-Delta)^{theta/2}`` and a noise trajectory ``Z`` sampled once and
held fixed across iterations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fbm import TimeGrid
from .formats import read_field_binary
from .hardy import build_hardy_weight, check_hardy_exponents, power, verify_hardy_estimate
from .noise import ConvolutionTrajectory, NoiseSpec, sample_stochastic_convolution, weighted_sup_norms
from .spectral import Field, SpatialGrid, lebesgue_norm, smoothing_constant
from .wellposedness import (
    ContractionBudget,
    DerivedExponents,
    ModelParams,
    check_admissible,
    default_r,
    existence_budget,
    exponents,
)


class AdmissibilityError(ValueError):
    pass


class SolverDivergence(FloatingPointError):
    def __init__(self, iteration: int, node: int, time: float):
        super().__init__(f"non-finite values at Picard iteration {iteration}, node {node} (t = {time:.6g})")
        self.iteration = iteration
        self.node = node
        self.time = time


# ---------------------------------------------------------------------------
# initial data

PROFILES = {
    "zero": lambda x, L: np.zeros_like(x[0]),
    "sine": lambda x, L: np.prod([np.sin(np.pi * xi / L) for xi in x], axis=0),
    "cosine": lambda x, L: np.prod([np.cos(np.pi * xi / L) for xi in x], axis=0),
    "gaussian": lambda x, L: np.exp(-sum(xi * xi for xi in x)),
    "constant": lambda x, L: np.ones_like(x[0]),
}


@dataclass(frozen=True)
class InitialCondition:
    profile: str = "zero"
    amplitude: float = 0.0
    path: str | None = None

    def build(self, grid: SpatialGrid) -> Field:
        if self.path is not None:
            u = read_field_binary(self.path)
            if u.grid != grid:
                raise ValueError(f"initial field {self.path} lives on {u.grid}, expected {grid}")
            return u
        if self.profile not in PROFILES:
            raise ValueError(f"unknown initial profile {self.profile!r}; choose from {sorted(PROFILES)}")
        return Field(grid, self.amplitude * PROFILES[self.profile](grid.coords(), grid.L))


# ---------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SolverConfig:
    params: ModelParams
    grid: SpatialGrid
    tgrid: TimeGrid
    mode_cutoff: int
    seed: int
    picard_tol: float = 1e-10
    max_picard_iters: int = 50
    initial: InitialCondition = InitialCondition()
    r: float | None = None
    c_hardy: float | None = None
    override_admissibility: bool = False
    hardy_trials: int = 20
    hardy_times: tuple = (0.25, 0.5, 1.0)

    def __post_init__(self):
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.max_picard_iters < 1:
            raise ValueError("max_picard_iters must be at least 1")
        if self.grid.N != self.params.N:
            raise ValueError(f"grid dimension {self.grid.N} differs from params N = {self.params.N}")


@dataclass
class SolutionTrajectory:
    tgrid: TimeGrid
    grid: SpatialGrid
    values: np.ndarray = field(repr=False)
    norm_q: np.ndarray = field(repr=False)
    weighted_norm_r: np.ndarray = field(repr=False)
    picard_history: list
    converged: bool
    budget: ContractionBudget | None
    sigma: float
    q: float
    r: float
    in_ball: bool | None = None
    overridden: list = field(default_factory=list)

    @property
    def fields(self) -> list[Field]:
        return [Field(self.grid, v) for v in self.values]

    @property
    def gap_ratios(self) -> np.ndarray:
        h = np.asarray(self.picard_history, dtype=float)
        return h[1:] / h[:-1] if h.size > 1 else np.empty(0)


# ---------------------------------------------------------------------------
# building blocks


def metric_d(u: np.ndarray, v: np.ndarray, times: Sequence[float], grid: SpatialGrid, sigma: float, q, r) -> float:
    """``sup_i ||u_i - v_i||_q + sup_{i>=1} t_i^sigma ||u_i - v_i||_r`` over the nodes."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValueError(f"trajectory shapes differ: {u.shape} vs {v.shape}")
    if u.shape[1:] != grid.shape or u.shape[0] != len(times):
        raise ValueError("trajectory does not match the space-time grid")
    first, second = weighted_sup_norms(u - v, np.asarray(times), grid, sigma, q, r)
    return first + second


def dealias_mask(grid: SpatialGrid) -> np.ndarray:
    """Boolean mask on the rfftn layout keeping ``|k_j| <= n/3`` on every axis."""
    n = grid.n
    cut = n // 3
    full = np.abs(np.fft.fftfreq(n, 1.0 / n))
    half = np.abs(np.fft.rfftfreq(n, 1.0 / n))
    axes = [full] * (grid.N - 1) + [half]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.logical_and.reduce([g <= cut for g in grids])


def nonlinear_spectrum(u: np.ndarray, p: float, weight: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    spec = np.fft.rfftn(weight * power(u, p))
    if mask is not None:
        spec = np.where(mask, spec, 0.0)
    return spec


def _phi1(lam: np.ndarray, h: float) -> np.ndarray:
    """``(1 - e^{-h lam}) / lam`` with the ``h`` limit at ``lam = 0``."""
    out = np.full(lam.shape, float(h))
    nz = lam > 0
    out[nz] = -np.expm1(-h * lam[nz]) / lam[nz]
    return out


def duhamel_quadrature(source: Sequence[Field], times: Sequence[float], i: int, theta: float,
                       gamma: float, dealias: bool = False) -> Field:
    """``int_0^{t_i} e^{-(t_i - s)A} |x|^{-gamma} source(s) ds`` by left-endpoint product integration.

    On ``[t_j, t_{j+1}]`` the source is frozen at ``t_j`` and the semigroup
    factor is integrated exactly per frequency.
    """
    times = np.asarray(times, dtype=float)
    if not 0 <= i < len(times) or len(source) < i + 1:
        raise ValueError("source must be available at nodes t_0..t_i")
    grid = source[0].grid
    arr = np.stack([s.values for s in source[: i + 1]])
    w = build_hardy_weight(grid, gamma).values
    lam = grid.xi_norm() ** theta
    mask = dealias_mask(grid) if dealias else None
    acc = np.zeros(lam.shape, dtype=complex)
    ti = times[i]
    for j in range(i):
        fhat = nonlinear_spectrum(arr[j], 1.0, w, mask)
        h = times[j + 1] - times[j]
        acc += np.exp(-(ti - times[j + 1]) * lam) * _phi1(lam, h) * fhat
    return Field(grid, np.fft.irfftn(acc, s=grid.shape, axes=grid.fft_axes))


def _linear_part(u0: Field, times: np.ndarray, lam: np.ndarray) -> np.ndarray:
    spec = np.fft.rfftn(u0.values)
    return np.stack([np.fft.irfftn(np.exp(-t * lam) * spec, s=u0.grid.shape, axes=u0.grid.fft_axes) for t in times])


class PicardMap:
    """Discrete ``Phi`` on a uniform time grid with a frozen noise trajectory."""

    def __init__(self, u0: Field, Z: np.ndarray, tgrid: TimeGrid, theta: float, gamma: float, p: float,
                 dealias: bool = True):
        self.grid = u0.grid
        self.tgrid = tgrid
        self.times = tgrid.nodes
        self.p = float(p)
        self.weight = build_hardy_weight(self.grid, float(gamma)).values
        lam = self.grid.xi_norm() ** float(theta)
        self.decay = np.exp(-tgrid.dt * lam)
        self.phi1 = _phi1(lam, tgrid.dt)
        self.mask = dealias_mask(self.grid) if dealias else None
        self.free = _linear_part(u0, self.times, lam) + Z

    def duhamel(self, u: np.ndarray) -> np.ndarray:
        """Duhamel term at every node; ``D_{i+1} = e^{-dt lam} D_i + phi1 F_i`` in spectral space."""
        out = np.zeros_like(self.free)
        acc = np.zeros(self.decay.shape, dtype=complex)
        for i in range(len(self.times) - 1):
            acc = self.decay * acc + self.phi1 * nonlinear_spectrum(u[i], self.p, self.weight, self.mask)
            out[i + 1] = np.fft.irfftn(acc, s=self.grid.shape, axes=self.grid.fft_axes)
        return out

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.free + self.duhamel(u)


def exponential_euler(u0: Field, tgrid: TimeGrid, theta: float, gamma: float, p: float,
                      Z: np.ndarray | None = None, dealias: bool = True) -> np.ndarray:
    """Explicit exponential Euler for the deterministic part, plus an additive ``Z``."""
    grid = u0.grid
    lam = grid.xi_norm() ** float(theta)
    decay = np.exp(-tgrid.dt * lam)
    phi1 = _phi1(lam, tgrid.dt)
    w = build_hardy_weight(grid, float(gamma)).values
    mask = dealias_mask(grid) if dealias else None
    # integrate v = u - Z, whose source is evaluated at u = v + Z
    Z = np.zeros((tgrid.steps + 1,) + grid.shape) if Z is None else Z
    v = u0.values.copy()
    out = np.empty((tgrid.steps + 1,) + grid.shape)
    out[0] = v + Z[0]
    for i in range(tgrid.steps):
        spec = decay * np.fft.rfftn(v) + phi1 * nonlinear_spectrum(v + Z[i], float(p), w, mask)
        v = np.fft.irfftn(spec, s=grid.shape, axes=grid.fft_axes)
        out[i + 1] = v + Z[i + 1]
    return out


# ---------------------------------------------------------------------------
# budget and solve


def hardy_constant(params: ModelParams, r: float, grid: SpatialGrid, trials: int, times, seed) -> float:
    """Empirical constant of the Hardy estimate at the exponent pairs used by the contraction argument.

    The pairs are ``L^{r/p} -> L^q`` and ``L^{r/p} -> L^r``; pairs outside
    the estimate's range are skipped. Returns nan if none applies.
    """
    best = math.nan
    src = float(r) / float(params.p)
    for target in (params.q, r):
        try:
            check_hardy_exponents(params.N, float(params.gamma), src, float(target))
        except ValueError:
            continue
        c = verify_hardy_estimate(float(params.theta), float(params.gamma), params.N, src, float(target),
                                  list(times), trials, seed, grid=grid)
        best = c if math.isnan(best) else max(best, c)
    return best


def noise_trajectory(cfg: SolverConfig) -> ConvolutionTrajectory:
    spec = NoiseSpec(cfg.grid, float(cfg.params.H), float(cfg.params.mu), cfg.mode_cutoff, cfg.seed)
    return sample_stochastic_convolution(spec, cfg.tgrid, float(cfg.params.theta))


def compute_budget(cfg: SolverConfig, exps: DerivedExponents, u0: Field, Z: ConvolutionTrajectory) -> ContractionBudget:
    P = cfg.params
    sigma, q, r = float(exps.sigma), float(P.q), float(exps.r)
    K = smoothing_constant(float(P.theta), P.N)
    c_h = cfg.c_hardy
    if c_h is None:
        c_h = hardy_constant(P, r, cfg.grid, cfg.hardy_trials, cfg.hardy_times, cfg.seed)
    if math.isnan(c_h):
        return ContractionBudget(K, math.nan, c_h, None, 0.0, {"message": "no applicable Hardy exponent pair"})
    nodes = Z.tgrid.nodes
    parts = [lebesgue_norm(v, q, cfg.grid.cell_volume) for v in Z.values]
    weighted = [0.0] + [t**sigma * lebesgue_norm(v, r, cfg.grid.cell_volume) for t, v in zip(nodes[1:], Z.values[1:])]
    run_q = np.maximum.accumulate(parts)
    run_r = np.maximum.accumulate(weighted)

    def K_of_T(T: float) -> float:
        # grid supremum over nodes t_i <= T; held at the last node beyond the horizon
        i = int(np.searchsorted(nodes, T * (1 + 1e-12), side="right")) - 1
        i = min(max(i, 0), len(nodes) - 1)
        return float(run_q[i] + run_r[i])

    return existence_budget(P, exps, K, c_h, lebesgue_norm(u0, q), K_of_T)


def _norm_profile(values: np.ndarray, times: np.ndarray, grid: SpatialGrid, sigma: float, q, r):
    vol = grid.cell_volume
    nq = np.array([lebesgue_norm(v, q, vol) for v in values])
    nr = np.array([0.0] + [t**sigma * lebesgue_norm(v, r, vol) for t, v in zip(times[1:], values[1:])])
    return nq, nr


def picard_solve(cfg: SolverConfig, Z: ConvolutionTrajectory | None = None, dealias: bool = True) -> SolutionTrajectory:
    P = cfg.params
    verdict = check_admissible(P)
    overridden = []
    if not verdict.accepted:
        if not cfg.override_admissibility:
            raise AdmissibilityError("parameters rejected: " + "; ".join(verdict.reasons))
        overridden.append("admissibility: " + "; ".join(verdict.reasons))

    q = float(P.q)
    if verdict.exponents is not None:
        exps = exponents(P, cfg.r) if cfg.r is not None else verdict.exponents
        sigma, r = float(exps.sigma), float(exps.r)
    else:
        exps = None
        r = float(cfg.r) if cfg.r is not None else float(default_r(P.p, P.q)) if not math.isinf(q) else math.inf
        sigma = max(float(P.N) / float(P.theta) * ((0 if math.isinf(q) else 1 / q) - (0 if math.isinf(r) else 1 / r)), 0.0)

    u0 = cfg.initial.build(cfg.grid)
    if Z is None:
        Z = noise_trajectory(cfg)
    if Z.values.shape != (cfg.tgrid.steps + 1,) + cfg.grid.shape:
        raise ValueError("noise trajectory does not match the space-time grid")

    budget = None
    if exps is not None:
        budget = compute_budget(cfg, exps, u0, Z)
        if cfg.tgrid.horizon > budget.T_star * (1 + 1e-12):
            msg = f"horizon {cfg.tgrid.horizon:.6g} exceeds the admitted existence time {budget.T_star:.6g}"
            if not cfg.override_admissibility:
                raise AdmissibilityError(msg)
            overridden.append(msg)

    phi = PicardMap(u0, Z.values, cfg.tgrid, float(P.theta), float(P.gamma), float(P.p), dealias)
    times = cfg.tgrid.nodes
    u = phi.free.copy()
    history = []
    converged = False
    for k in range(cfg.max_picard_iters):
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = phi(u)
        bad = ~np.isfinite(nxt.reshape(len(times), -1)).all(axis=1)
        if bad.any():
            node = int(np.argmax(bad))
            raise SolverDivergence(k + 1, node, float(times[node]))
        gap = metric_d(nxt, u, times, cfg.grid, sigma, q, r)
        history.append(float(gap))
        u = nxt
        if gap < cfg.picard_tol:
            converged = True
            break

    nq, nr = _norm_profile(u, times, cfg.grid, sigma, q, r)
    in_ball = None
    if budget is not None and budget.T_star > 0:
        in_ball = bool(nq.max() <= budget.radius and nr.max() <= budget.radius)
    return SolutionTrajectory(cfg.tgrid, cfg.grid, u, nq, nr, history, converged, budget, sigma, q, r,
                              in_ball, overridden)


def fixed_point_residual(sol: SolutionTrajectory, cfg: SolverConfig, Z: ConvolutionTrajectory,
                         dealias: bool = True) -> float:
    """``d(Phi(u), u)`` for a computed trajectory, with ``Phi`` rebuilt from the config."""
    P = cfg.params
    phi = PicardMap(cfg.initial.build(cfg.grid), Z.values, cfg.tgrid, float(P.theta), float(P.gamma), float(P.p),
                    dealias)
    return metric_d(phi(sol.values), sol.values, cfg.tgrid.nodes, cfg.grid, sol.sigma, sol.q, sol.r)


def write_solution(sol: SolutionTrajectory, directory) -> list[Path]:
    from .formats import write_field_binary

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, v in enumerate(sol.values):
        path = directory / f"u_{i:05d}.bin"
        write_field_binary(path, Field(sol.grid, v))
        paths.append(path)
    return paths
