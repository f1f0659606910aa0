"""Truncated cylindrical fBm and the stochastic convolution ``Z(t)``.

Each retained torus mode ``k`` carries scalar fBm drivers; the mode's
convolution ``Z_k(t) = int_0^t exp(-(t-s) lambda_k) db_k(s)`` is sampled
exactly in law on the time grid. Because fBm has stationary increments, the
per-step innovations

    xi_i = int_{t_i}^{t_{i+1}} exp(-(t_{i+1}-s) lambda) db(s)

form a stationary Gaussian sequence. We factor its Toeplitz covariance and
run ``Z_{i+1} = exp(-lambda dt) Z_i + xi_i``; the composite lower-triangular
map is a Cholesky factor of the full covariance of ``(Z(t_1), ..., Z(t_M))``.

Seeds: the driver for mode ``k`` (flat index in the mod-n spectrum) and part
``0`` (real) or ``1`` (imaginary) uses
``PCG64(SeedSequence(seed, spawn_key=(flat_index, part)))``.
"""
from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, linalg

from .fbm import TimeGrid, check_hurst
from .spectral import Field, SpatialGrid, lebesgue_norm


@dataclass(frozen=True)
class NoiseSpec:
    grid: SpatialGrid
    hurst: float
    amplitude: float
    mode_cutoff: int
    seed: int

    def __post_init__(self):
        check_hurst(self.hurst)
        if not 0 <= self.mode_cutoff <= self.grid.n // 2:
            raise ValueError(f"mode_cutoff must lie in [0, n/2], got {self.mode_cutoff}")


@dataclass(frozen=True)
class ConvolutionTrajectory:
    tgrid: TimeGrid
    values: np.ndarray = field(repr=False)  # shape (M + 1, *grid.shape)
    spec: NoiseSpec
    theta: float

    @property
    def grid(self) -> SpatialGrid:
        return self.spec.grid

    @property
    def fields(self) -> list[Field]:
        return [Field(self.grid, v) for v in self.values]

    def restricted(self, horizon: float) -> "ConvolutionTrajectory":
        """Prefix of the trajectory with nodes ``t_i <= horizon``."""
        keep = int(np.searchsorted(self.tgrid.nodes, horizon * (1 + 1e-12), side="right"))
        steps = max(keep - 1, 1)
        return ConvolutionTrajectory(TimeGrid(self.tgrid.dt * steps, steps),
                                     self.values[: steps + 1], self.spec, self.theta)


# ---------------------------------------------------------------------------
# covariances


def _exp_profile(u, lam: float, length):
    """``int e^{-lam (2x + u)} dx`` over an x-interval of the given length, times e^{lam*lo}."""
    u = np.abs(u)
    if lam == 0.0:
        return length
    return np.exp(-lam * u) * -np.expm1(-2.0 * lam * length) / (2.0 * lam)


def mode_convolution_covariance(lam: float, t: float, t_prime: float, H: float) -> float:
    """``E[Z(t) Z(t')]`` for ``Z(t) = int_0^t exp(-(t-s) lam) dB^H(s)``, H > 1/2.

    The double integral is reduced to one dimension in ``u = s - r``
    (inner integral in closed form) and the ``|u - delta|^{2H-2}`` weight is
    integrated exactly by algebraic-weight quadrature on each smooth piece.
    """
    H = check_hurst(H)
    if H <= 0.5:
        raise ValueError("mode convolution covariance requires H > 1/2")
    if lam < 0 or t < 0 or t_prime < 0:
        raise ValueError("lambda and times must be non-negative")
    a, b = sorted((float(t), float(t_prime)))
    if a == 0.0:
        return 0.0
    delta = b - a
    alpha = 2.0 * H - 2.0
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)

    # piece u in [-a, 0]: window length a + u, weight (delta - u)^alpha
    if delta == 0.0:
        left, _ = integrate.quad(lambda u: _exp_profile(u, lam, a + u), -a, 0.0,
                                 weight="alg", wvar=(0.0, alpha), **opts)
    else:
        left, _ = integrate.quad(lambda u: (delta - u) ** alpha * _exp_profile(u, lam, a + u),
                                 -a, 0.0, **opts)
    mid = 0.0
    if delta > 0.0:
        mid, _ = integrate.quad(lambda u: _exp_profile(u, lam, a), 0.0, delta,
                                weight="alg", wvar=(0.0, alpha), **opts)
    right, _ = integrate.quad(lambda u: _exp_profile(u, lam, b - u), delta, b,
                              weight="alg", wvar=(alpha, 0.0), **opts)
    return H * (2.0 * H - 1.0) * (left + mid + right)


def _geometric_panels(dt: float, levels: int = 24):
    """Gauss-Legendre nodes/weights on [0, dt] with panels refined toward 0."""
    edges = np.concatenate(([0.0], dt * 2.0 ** -np.arange(levels, -1, -1)))
    x, w = np.polynomial.legendre.leggauss(16)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


@functools.lru_cache(maxsize=4096)
def innovation_autocovariance(lam: float, dt: float, steps: int, H: float) -> np.ndarray:
    """``c(m) = E[xi_i xi_{i+m}]`` for m = 0..steps-1."""
    h2 = 2.0 * H
    m = np.arange(steps, dtype=float)
    if lam == 0.0:
        c = 0.5 * dt**h2 * (np.abs(m + 1) ** h2 + np.abs(m - 1) ** h2 - 2.0 * m**h2)
        c.setflags(write=False)
        return c
    alpha = h2 - 2.0
    pref = H * (h2 - 1.0)
    opts = dict(epsabs=0.0, epsrel=1e-12, limit=200)
    c = np.empty(steps)
    c0, _ = integrate.quad(lambda u: _exp_profile(u, lam, dt - u), 0.0, dt,
                           weight="alg", wvar=(alpha, 0.0), **opts)
    c[0] = 2.0 * pref * c0
    if steps > 1:
        neg, _ = integrate.quad(lambda v: _exp_profile(dt - v, lam, v), 0.0, dt,
                                weight="alg", wvar=(alpha, 0.0), **opts)
        pos, _ = integrate.quad(lambda u: (dt + u) ** alpha * _exp_profile(u, lam, dt - u),
                                0.0, dt, **opts)
        c[1] = pref * (neg + pos)
    if steps > 2:
        u, w = _geometric_panels(dt)
        g = w * _exp_profile(u, lam, dt - u)
        mm = m[2:, None] * dt
        # u in [0, dt] and its mirror -u in [-dt, 0]
        c[2:] = pref * (((mm + u) ** alpha + (mm - u) ** alpha) @ g)
    c.setflags(write=False)
    return c


@functools.lru_cache(maxsize=4096)
def _mode_factor(lam: float, dt: float, steps: int, H: float) -> np.ndarray:
    cov = linalg.toeplitz(innovation_autocovariance(lam, dt, steps, H))
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError(f"innovation covariance not positive definite for lambda={lam}") from exc
    chol.setflags(write=False)
    return chol


def mode_trajectory_covariance(lam: float, tgrid: TimeGrid, H: float) -> np.ndarray:
    """Covariance matrix of ``(Z(t_1), ..., Z(t_M))`` for one mode."""
    steps = tgrid.steps
    inn = linalg.toeplitz(innovation_autocovariance(float(lam), tgrid.dt, steps, H))
    prop = _propagator(float(lam), tgrid.dt, steps)
    return prop @ inn @ prop.T


def _propagator(lam: float, dt: float, steps: int) -> np.ndarray:
    i, j = np.indices((steps, steps))
    lag = (i - j).astype(float)
    return np.where(i >= j, np.exp(-lam * dt * np.maximum(lag, 0.0)), 0.0)


def sample_mode_path(lam: float, tgrid: TimeGrid, H: float, rng: np.random.Generator) -> np.ndarray:
    """One exact draw of ``(Z(t_0), ..., Z(t_M))``, ``Z(t_0) = 0``."""
    steps, dt = tgrid.steps, tgrid.dt
    xi = _mode_factor(float(lam), dt, steps, H) @ rng.standard_normal(steps)
    z = np.zeros(steps + 1)
    decay = math.exp(-lam * dt)
    for i in range(steps):
        z[i + 1] = decay * z[i] + xi[i]
    return z


# ---------------------------------------------------------------------------
# spatial assembly


def retained_modes(grid: SpatialGrid, cutoff: int):
    """Representatives of conjugate pairs with ``|k|_inf <= cutoff``.

    Yields ``(k, k_conj, self_conjugate)`` as index tuples mod n, with the
    signed wavenumber used for ``|xi|``.
    """
    n = grid.n
    seen = set()
    for signed in itertools.product(range(-cutoff, cutoff + 1), repeat=grid.N):
        k = tuple(s % n for s in signed)
        if k in seen:
            continue
        kc = tuple((-s) % n for s in signed)
        seen.update((k, kc))
        yield signed, k, kc, k == kc


def mode_eigenvalue(grid: SpatialGrid, signed, theta: float) -> float:
    xi = math.pi / grid.L * math.sqrt(sum(s * s for s in signed))
    return xi**theta


def _driver_rng(seed, flat: int, part: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(flat, part))))


def sample_stochastic_convolution(spec: NoiseSpec, tgrid: TimeGrid, theta: float) -> ConvolutionTrajectory:
    """``Z(t) = mu int_0^t exp(-(t-s)(-Delta)^{theta/2}) dB^H(s)`` on the grid.

    The field at ``x_j`` is ``(2L)^{-N/2} sum_k c_k(t) exp(i xi_k x_j)`` with
    ``c_k = (a_k + i b_k)/sqrt(2)``, ``c_{-k} = conj(c_k)`` and a single real
    driver on self-conjugate modes; ``a_k, b_k`` are independent scalar mode
    convolutions.
    """
    H = check_hurst(spec.hurst)
    if H <= 0.5:
        raise ValueError("stochastic convolution sampling requires H > 1/2")
    if theta <= 0:
        raise ValueError("theta must be positive")
    grid = spec.grid
    steps = tgrid.steps
    shape = (steps + 1,) + grid.shape
    if spec.amplitude == 0:
        return ConvolutionTrajectory(tgrid, np.zeros(shape), spec, theta)

    coeffs = np.zeros(shape, dtype=complex)
    for signed, k, kc, selfconj in retained_modes(grid, spec.mode_cutoff):
        lam = mode_eigenvalue(grid, signed, theta)
        flat = int(np.ravel_multi_index(k, grid.shape))
        a = sample_mode_path(lam, tgrid, H, _driver_rng(spec.seed, flat, 0))
        if selfconj:
            coeffs[(slice(None),) + k] = a
            continue
        b = sample_mode_path(lam, tgrid, H, _driver_rng(spec.seed, flat, 1))
        c = (a + 1j * b) / math.sqrt(2.0)
        coeffs[(slice(None),) + k] = c
        coeffs[(slice(None),) + kc] = np.conj(c)

    # e^{i xi_k x_j} = (-1)^k e^{2 pi i k j / n} with x_0 = -L
    idx = np.indices(grid.shape).sum(axis=0)
    phase = np.where(idx % 2 == 0, 1.0, -1.0)
    scale = spec.amplitude * grid.n**grid.N / (2.0 * grid.L) ** (grid.N / 2)
    raw = scale * np.fft.ifftn(coeffs * phase, axes=tuple(range(1, grid.N + 1)))
    residue = float(np.abs(raw.imag).max())
    if residue > 1e-12 * max(1.0, float(np.abs(raw.real).max())):
        raise RuntimeError(f"assembled noise field is not real (imaginary residue {residue:.3e})")
    return ConvolutionTrajectory(tgrid, raw.real.copy(), spec, theta)


def mode_coefficient(values: np.ndarray, grid: SpatialGrid, k=None) -> np.ndarray:
    """Coefficient of ``(2L)^{-N/2} exp(i xi_k x)`` in a field (``k = 0`` by default)."""
    k = tuple(v % grid.n for v in ((0,) * grid.N if k is None else k))
    axes = tuple(range(values.ndim - grid.N, values.ndim))
    spec = np.fft.fftn(values, axes=axes)
    # x_0 = -L contributes the phase (-1)^{k_1 + ... + k_N}
    sign = -1.0 if sum(k) % 2 else 1.0
    norm = (2.0 * grid.L) ** (grid.N / 2) / grid.n**grid.N
    return sign * norm * spec[(Ellipsis,) + k]


def expected_l2_norm_sq(spec: NoiseSpec, t: float, theta: float) -> float:
    """``E ||Z(t)||_2^2 = mu^2 sum_k Var Z_k(t)`` over retained modes."""
    total = 0.0
    for signed, k, kc, selfconj in retained_modes(spec.grid, spec.mode_cutoff):
        var = mode_convolution_covariance(mode_eigenvalue(spec.grid, signed, theta), t, t, spec.hurst)
        total += var if selfconj else 2.0 * var
    return spec.amplitude**2 * total


# ---------------------------------------------------------------------------
# norms along trajectories


def weighted_sup_norms(values: np.ndarray, times: np.ndarray, grid: SpatialGrid, sigma: float, q, r) -> tuple[float, float]:
    """``(sup_i ||v_i||_q, sup_{i>=1} t_i^sigma ||v_i||_r)``."""
    vol = grid.cell_volume
    first = max(lebesgue_norm(v, q, vol) for v in values)
    second = max((t**sigma * lebesgue_norm(v, r, vol) for t, v in zip(times[1:], values[1:])), default=0.0)
    return first, second


def K_statistic(Z: ConvolutionTrajectory, sigma: float, q, r) -> float:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    first, second = weighted_sup_norms(Z.values, Z.tgrid.nodes, Z.grid, sigma, q, r)
    return first + second


def write_trajectory(Z: ConvolutionTrajectory, directory) -> Path:
    """One binary Field file per node plus ``manifest.json``."""
    from .formats import write_field_binary

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, v in enumerate(Z.values):
        name = f"Z_{i:05d}.bin"
        write_field_binary(directory / name, Field(Z.grid, v))
        files.append(name)
    manifest = {
        "time_grid": {"horizon": Z.tgrid.horizon, "steps": Z.tgrid.steps},
        "theta": Z.theta,
        "spec": {**asdict(Z.spec), "grid": asdict(Z.spec.grid)},
        "seed": Z.spec.seed,
        "files": files,
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
