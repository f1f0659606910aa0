"""Singular Hardy weight ``|x|^{-gamma}``, the power nonlinearity and ``S(t) = e^{-tA} |x|^{-gamma}``."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .spectral import (
    Field,
    SpatialGrid,
    apply_semigroup,
    default_grid,
    lebesgue_norm,
    parse_exponent,
    random_bump_fields,
)


@dataclass(frozen=True)
class HardyWeight:
    grid: SpatialGrid
    gamma: float
    values: np.ndarray = field(repr=False)


def origin_cell_average(N: int, dx: float, gamma: float) -> float:
    """Mean of ``|x|^{-gamma}`` over the cube ``[-dx/2, dx/2]^N``.

    Splitting the unit cube into N pyramids gives
    ``N/(N - gamma) * int_{[0,1]^{N-1}} (1 + |v|^2)^{-gamma/2} dv``.
    """
    if gamma == 0:
        return 1.0
    if N == 1:
        face = 1.0
    elif N == 2:
        face, _ = integrate.quad(lambda v: (1.0 + v * v) ** (-gamma / 2), 0.0, 1.0, epsabs=0, epsrel=1e-13)
    else:
        face, _ = integrate.dblquad(lambda w, v: (1.0 + v * v + w * w) ** (-gamma / 2), 0.0, 1.0, 0.0, 1.0,
                                    epsabs=0, epsrel=1e-12)
    return (dx / 2.0) ** (-gamma) * N / (N - gamma) * face


@functools.lru_cache(maxsize=64)
def build_hardy_weight(grid: SpatialGrid, gamma: float) -> HardyWeight:
    gamma = float(gamma)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if gamma >= grid.N:
        raise ValueError(f"gamma must be < N = {grid.N} for a locally integrable weight, got {gamma}")
    if gamma == 0:
        vals = np.ones(grid.shape)
    else:
        r = grid.radius()
        r[grid.origin_index] = 1.0
        vals = r**-gamma
        vals[grid.origin_index] = origin_cell_average(grid.N, grid.dx, gamma)
    vals.setflags(write=False)
    return HardyWeight(grid, gamma, vals)


def power(u: np.ndarray, p: float) -> np.ndarray:
    """``|u|^{p-1} u``, computed as ``sign(u) |u|^p``."""
    return np.sign(u) * np.abs(u) ** p


def nonlinearity(u: Field, p: float, w: HardyWeight) -> Field:
    if u.grid != w.grid:
        raise ValueError("field and weight live on different grids")
    return Field(u.grid, w.values * power(u.values, p))


def apply_S(u: Field, t: float, theta: float, gamma: float) -> Field:
    if t <= 0:
        raise ValueError("S(t) is applied only for t > 0")
    w = build_hardy_weight(u.grid, gamma)
    return apply_semigroup(Field(u.grid, w.values * u.values), t, theta)


def check_hardy_exponents(N: int, gamma: float, p, q) -> tuple[float, float]:
    p, q = parse_exponent(p), parse_exponent(q)
    if not (p > 1 and q > 1):
        raise ValueError("need p > 1 and q > 1")
    mid = gamma / N + 1.0 / p
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    # gamma = 0, p = q sits on the boundary; it is plain semigroup contraction and is admitted
    degenerate = gamma == 0 and p == q
    if not (inv_q < mid < 1.0 or degenerate):
        raise ValueError(f"need 1/q < gamma/N + 1/p < 1, got 1/q={inv_q:.6g}, gamma/N + 1/p={mid:.6g}")
    return p, q


def hardy_ratios(theta, gamma, N, p, q, t_list: Sequence[float], trials: int, seed,
                 grid: SpatialGrid | None = None, widths=None) -> np.ndarray:
    """Compensated ratios ``||S(t) phi||_q t^{(N/theta)(1/p-1/q) + gamma/theta} / ||phi||_p``.

    Shape ``(trials, len(t_list))``. ``q = inf`` is accepted, though it lies
    outside the range where the estimate is stated.
    """
    p, q = check_hardy_exponents(N, gamma, p, q)
    grid = default_grid(N) if grid is None else grid
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    expo = N / theta * (1.0 / p - inv_q) + gamma / theta
    fields = random_bump_fields(grid, trials, seed, widths=widths)
    out = np.empty((trials, len(t_list)))
    for i, phi in enumerate(fields):
        base = lebesgue_norm(phi, p)
        for j, t in enumerate(t_list):
            out[i, j] = lebesgue_norm(apply_S(phi, t, theta, gamma), q) * t**expo / base
    return out


def verify_hardy_estimate(theta, gamma, N, p, q, t_list, trials, seed, grid=None, widths=None) -> float:
    """Empirical constant: the largest compensated ratio over trials and times."""
    return float(hardy_ratios(theta, gamma, N, p, q, t_list, trials, seed, grid, widths).max())
