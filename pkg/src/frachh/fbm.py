"""One-dimensional fractional Brownian motion.

Exact Gaussian sampling from the covariance (Cholesky), kernel-based
sampling from the Wiener-integral representation (H >= 1/2), and the
bilinear form of the reproducing space for H > 1/2.

All random draws go through :func:`make_rng`: one 64-bit seed feeds a
``PCG64`` bit generator and normals come from numpy's ziggurat
``standard_normal``, so paths are reproducible across platforms.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn


class CapabilityError(ValueError):
    """Requested operation is outside the regime this implementation covers."""


def check_hurst(H: float) -> float:
    H = float(H)
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst parameter must lie in (0, 1), got {H}")
    return H


def make_rng(seed) -> np.random.Generator:
    """Generator used for every path: PCG64 seeded by ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = i*T/M`` on ``[0, T]``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be an integer >= 1")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)


@dataclass(frozen=True)
class FbmPath:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    hurst: float
    seed: int

    def to_csv(self, path) -> None:
        write_path_csv(path, self.grid.nodes, self.values)


def write_path_csv(path, times, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(times, values):
            w.writerow([f"{t:.17g}", f"{v:.17g}"])


def read_path_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


# ---------------------------------------------------------------------------
# covariance and constants


def fbm_covariance(s, t, H: float):
    """``E[B(s) B(t)] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2``.

    Accepts scalars or broadcastable arrays.
    """
    H = check_hurst(H)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ValueError("time arguments must be non-negative")
    h2 = 2.0 * H
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def covariance_matrix(times, H: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return fbm_covariance(times[:, None], times[None, :], H)


def c_h(H: float) -> float:
    H = check_hurst(H)
    return math.sqrt(
        2.0 * H * gamma_fn(1.5 - H) / (gamma_fn(H + 0.5) * gamma_fn(2.0 - 2.0 * H))
    )


# ---------------------------------------------------------------------------
# Volterra kernel


def _unit_kernel_integral(X, H: float, rtol: float) -> np.ndarray:
    """``F(X) = int_1^X (x - 1)^{H-3/2} x^{H-1/2} dx`` for an array of ``X > 1``.

    Product integration: the power singularity at ``x = 1`` is integrated
    exactly against a piecewise-linear interpolant of ``x^{H-1/2}`` on one
    mesh geometric in ``x`` shared by every ``X``. Interpolation error per
    panel is bounded by ``(rho - 1)^2 / 32`` relative, which fixes ``rho``.
    """
    X = np.asarray(X, dtype=float)
    alpha = H - 1.5
    a1, a2 = alpha + 1.0, alpha + 2.0
    log_ratio = math.log1p(math.sqrt(32.0 * rtol))
    n = max(16, int(math.ceil(math.log(X.max()) / log_ratio)) + 1)
    x = np.exp(log_ratio * np.arange(n + 1))

    def panels(xl, xr):
        ul, ur = xl - 1.0, xr - 1.0
        fl, fr = xl ** (H - 0.5), xr ** (H - 0.5)
        m0 = (ur**a1 - ul**a1) / a1
        m1 = (ur**a2 - ul**a2) / a2
        slope = (fr - fl) / (ur - ul)
        # f ~ fl + slope * (u - ul) on the panel
        return (fl - slope * ul) * m0 + slope * m1

    cum = np.concatenate(([0.0], np.cumsum(panels(x[:-1], x[1:]))))
    j = np.clip(np.searchsorted(x, X, side="right") - 1, 0, n)
    out = cum[j].copy()
    partial = X > x[j]
    out[partial] += panels(x[j][partial], X[partial])
    return out


def _kernel_values(t, s, H: float, rtol: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    # homogeneity: int_s^t (r-s)^a r^b dr = s^{a+b+1} F(t/s)
    scale = s ** (2.0 * H - 1.0)
    return c_h(H) * (H - 0.5) * s ** (0.5 - H) * scale * _unit_kernel_integral(t / s, H, rtol)


def volterra_kernel(t: float, s: float, H: float, rtol: float = 1e-10) -> float:
    """Kernel ``K(t, s)`` with ``B(t) = int_0^t K(t, s) dW(s)``, for H >= 1/2.

    For H > 1/2 this is ``c_H (H - 1/2) s^{1/2-H} int_s^t (r-s)^{H-3/2} r^{H-1/2} dr``;
    at H = 1/2 it is identically one.
    """
    H = check_hurst(H)
    if not 0.0 < s < t:
        raise ValueError(f"volterra_kernel needs 0 < s < t, got s={s}, t={t}")
    if H < 0.5:
        raise CapabilityError("kernel representation implemented only for H >= 1/2")
    if H == 0.5:
        return 1.0
    return float(_kernel_values(np.array([t]), np.array([s]), H, rtol)[0])


@functools.lru_cache(maxsize=32)
def _volterra_matrix(horizon: float, steps: int, H: float, rtol: float) -> np.ndarray:
    grid = TimeGrid(horizon, steps)
    t = grid.nodes
    mid = 0.5 * (t[:-1] + t[1:])
    kmat = np.zeros((steps, steps))
    if H == 0.5:
        kmat[np.tril_indices(steps)] = 1.0
    else:
        ii, jj = np.tril_indices(steps)
        kmat[ii, jj] = _kernel_values(t[ii + 1], mid[jj], H, rtol)
    kmat.setflags(write=False)
    return kmat


def volterra_matrix(grid: TimeGrid, H: float, rtol: float = 1e-10) -> np.ndarray:
    """Lower-triangular matrix ``K[i-1, j] = K(t_i, midpoint_j)`` for j < i."""
    return _volterra_matrix(float(grid.horizon), int(grid.steps), check_hurst(H), rtol)


def volterra_model_covariance(grid: TimeGrid, H: float) -> np.ndarray:
    """Exact covariance of the midpoint-discretized Volterra sampler."""
    kmat = volterra_matrix(grid, H)
    return grid.dt * kmat @ kmat.T


# ---------------------------------------------------------------------------
# samplers


def wiener_increments(grid: TimeGrid, seed) -> np.ndarray:
    return math.sqrt(grid.dt) * make_rng(seed).standard_normal(grid.steps)


def sample_wiener(grid: TimeGrid, seed) -> np.ndarray:
    """Plain random-walk discretization of Brownian motion on ``grid``."""
    return np.concatenate(([0.0], np.cumsum(wiener_increments(grid, seed))))


@functools.lru_cache(maxsize=32)
def _cholesky_factor(horizon: float, steps: int, H: float) -> np.ndarray:
    t = TimeGrid(horizon, steps).nodes[1:]
    cov = covariance_matrix(t, H)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"fBm covariance not positive definite on this grid (H={H}, M={steps}); "
            "grid is numerically degenerate"
        ) from exc
    chol.setflags(write=False)
    return chol


def sample_fbm_cholesky(grid: TimeGrid, H: float, seed) -> FbmPath:
    H = check_hurst(H)
    chol = _cholesky_factor(float(grid.horizon), int(grid.steps), H)
    z = make_rng(seed).standard_normal(grid.steps)
    values = np.concatenate(([0.0], chol @ z))
    return FbmPath(grid, values, H, seed)


def sample_fbm_volterra(grid: TimeGrid, H: float, seed) -> FbmPath:
    """``B(t_i) = sum_{j<i} K(t_i, midpoint_j) dW_j``.

    Uses the same increments as :func:`sample_wiener`, so at H = 1/2 the
    two paths coincide bit for bit.
    """
    H = check_hurst(H)
    if H < 0.5:
        raise CapabilityError("Volterra sampler requires H >= 1/2; use sample_fbm_cholesky")
    if H == 0.5:
        return FbmPath(grid, sample_wiener(grid, seed), H, seed)
    dw = wiener_increments(grid, seed)
    values = np.concatenate(([0.0], volterra_matrix(grid, H) @ dw))
    return FbmPath(grid, values, H, seed)


def sample_fbm_batch(grid: TimeGrid, H: float, seeds: Sequence[int], method: str = "cholesky") -> np.ndarray:
    """Paths for many seeds, shape ``(len(seeds), M + 1)``.

    Row ``k`` equals the single-path sampler called with ``seeds[k]``.
    """
    H = check_hurst(H)
    if method == "cholesky":
        factor = _cholesky_factor(float(grid.horizon), int(grid.steps), H)
        z = np.stack([make_rng(s).standard_normal(grid.steps) for s in seeds])
    elif method == "volterra":
        if H < 0.5:
            raise CapabilityError("Volterra sampler requires H >= 1/2")
        z = np.stack([wiener_increments(grid, s) for s in seeds])
        if H == 0.5:
            return np.hstack([np.zeros((len(seeds), 1)), np.cumsum(z, axis=1)])
        factor = volterra_matrix(grid, H)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return np.hstack([np.zeros((len(seeds), 1)), z @ factor.T])


# ---------------------------------------------------------------------------
# inner product of the reproducing space


def increment_covariance(edges_a, edges_b, H: float) -> np.ndarray:
    """``E[(B(b_i) - B(a_i)) (B(d_j) - B(c_j))]`` for two partitions.

    Equals ``H(2H-1) int_I int_J |t - s|^{2H-2}`` exactly, which is what
    makes the bilinear form below singularity-exact for step functions.
    """
    ea = np.asarray(edges_a, dtype=float)
    eb = np.asarray(edges_b, dtype=float)
    a, b = ea[:-1, None], ea[1:, None]
    c, d = eb[None, :-1], eb[None, 1:]
    h2 = 2.0 * H
    return 0.5 * (np.abs(d - a) ** h2 + np.abs(c - b) ** h2 - np.abs(d - b) ** h2 - np.abs(c - a) ** h2)


def _as_cell_values(f, edges: np.ndarray) -> np.ndarray:
    if callable(f):
        mid = 0.5 * (edges[:-1] + edges[1:])
        return np.asarray(f(mid), dtype=float) * np.ones_like(mid)
    vals = np.asarray(f, dtype=float)
    if vals.shape != (len(edges) - 1,):
        raise ValueError(f"expected {len(edges) - 1} cell values, got shape {vals.shape}")
    return vals


def fbm_inner_product(
    f: np.ndarray | Callable,
    g: np.ndarray | Callable,
    T: float,
    H: float,
    edges: np.ndarray | None = None,
    n_cells: int = 1024,
) -> float:
    """``H(2H-1) int_0^T int_0^T f(s) g(t) |t-s|^{2H-2} ds dt`` for step functions.

    ``f`` and ``g`` are cell values on ``edges`` (default: ``n_cells``
    uniform cells on ``[0, T]``) or callables sampled at cell midpoints.
    """
    H = check_hurst(H)
    if H <= 0.5:
        raise CapabilityError("inner-product formula requires H > 1/2")
    edges = np.linspace(0.0, T, n_cells + 1) if edges is None else np.asarray(edges, dtype=float)
    fv = _as_cell_values(f, edges)
    gv = _as_cell_values(g, edges)
    return float(fv @ increment_covariance(edges, edges, H) @ gv)


def indicator(a: float, b: float) -> Callable[[np.ndarray], np.ndarray]:
    """Indicator of ``[a, b]`` as a callable for :func:`fbm_inner_product`."""
    return lambda x: ((x >= a) & (x <= b)).astype(float)
