"""Periodic grids, discrete Lebesgue norms and the fractional heat semigroup.

The whole space is approximated by the box ``[-L, L)^N`` with periodic
boundary conditions. The semigroup ``exp(-t(-Delta)^{theta/2})`` is the
Fourier multiplier ``exp(-t |xi|^theta)`` on the torus frequencies
``xi_k = k pi / L``; it preserves the mean of a field.

``eval_Ktheta`` evaluates the profile
``K_theta(x) = (2 pi)^{-N/2} int exp(i x.xi) exp(-|xi|^theta) dxi``
by radial oscillatory quadrature.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special


class QuadratureError(RuntimeError):
    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3e})")
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class SpatialGrid:
    """``n`` points per axis on ``[-L, L)^N``; ``x_j = -L + j dx``."""

    N: int
    L: float
    n: int

    def __post_init__(self):
        if self.N not in (1, 2, 3):
            raise ValueError("dimension N must be 1, 2 or 3")
        if not self.L > 0:
            raise ValueError("half-period L must be positive")
        if self.n < 4 or self.n & (self.n - 1):
            raise ValueError("points per axis must be a power of two >= 4")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.N

    @property
    def fft_axes(self) -> tuple[int, ...]:
        return tuple(range(self.N))

    @property
    def cell_volume(self) -> float:
        return self.dx**self.N

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n)

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.axis] * self.N), indexing="ij")

    def radius(self) -> np.ndarray:
        return np.sqrt(sum(c**2 for c in self.coords()))

    @property
    def origin_index(self) -> tuple[int, ...]:
        return (self.n // 2,) * self.N

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers ``k`` in numpy FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    def xi_norm(self, real: bool = True) -> np.ndarray:
        """``|xi|`` on the (r)fftn layout."""
        k = np.pi / self.L * self.wavenumbers()
        axes = [k] * self.N
        if real:
            axes[-1] = np.pi / self.L * np.arange(self.n // 2 + 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.sqrt(sum(m**2 for m in mesh))

    def refined(self) -> "SpatialGrid":
        return SpatialGrid(self.N, self.L, 2 * self.n)


@dataclass(frozen=True)
class Field:
    grid: SpatialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: SpatialGrid, fn) -> "Field":
        return cls(grid, fn(*grid.coords()))

    @classmethod
    def zeros(cls, grid: SpatialGrid) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    def spectrum(self) -> np.ndarray:
        return np.fft.rfftn(self.values)

    @classmethod
    def from_spectrum(cls, grid: SpatialGrid, spec: np.ndarray) -> "Field":
        return cls(grid, np.fft.irfftn(spec, s=grid.shape, axes=grid.fft_axes))

    def mean(self) -> float:
        return float(self.values.mean())

    def norm(self, q) -> float:
        return lebesgue_norm(self, q)

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field":
        return Field(self.grid, c * self.values)

    __rmul__ = __mul__


def _same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def parse_exponent(q) -> float:
    if isinstance(q, str):
        q = q.strip().lower()
        return math.inf if q in ("inf", "infinity", "oo") else float(q)
    return float(q)


def lebesgue_norm(u: Field | np.ndarray, q, cell_volume: float | None = None) -> float:
    """``(dx^N sum |u_j|^q)^{1/q}``, or ``max |u_j|`` for ``q = inf``."""
    q = parse_exponent(q)
    if q < 1:
        raise ValueError(f"Lebesgue exponent must be >= 1, got {q}")
    if isinstance(u, Field):
        vals, vol = u.values, u.grid.cell_volume
    else:
        vals, vol = np.asarray(u), cell_volume
    a = np.abs(vals)
    if math.isinf(q):
        return float(a.max(initial=0.0))
    peak = a.max(initial=0.0)
    if peak == 0.0:
        return 0.0
    # scale by the peak so large q does not overflow
    return float(peak * (vol * np.sum((a / peak) ** q)) ** (1.0 / q))


# ---------------------------------------------------------------------------
# semigroup


def semigroup_multiplier(grid: SpatialGrid, t: float, theta: float) -> np.ndarray:
    if theta <= 0:
        raise ValueError("theta must be positive")
    if t < 0:
        raise ValueError("time must be non-negative")
    return np.exp(-t * grid.xi_norm() ** theta)


def apply_semigroup(u: Field, t: float, theta: float) -> Field:
    mult = semigroup_multiplier(u.grid, t, theta)
    if t == 0:
        return Field(u.grid, u.values.copy())
    return Field.from_spectrum(u.grid, u.spectrum() * mult)


# ---------------------------------------------------------------------------
# the profile K_theta


def _sphere_area(N: int) -> float:
    return 2.0 * math.pi ** (N / 2) / special.gamma(N / 2)


@functools.lru_cache(maxsize=64)
def truncation_radius(theta: float, N: int, tail: float = 1e-10) -> float:
    """Smallest ``R`` with ``int_{|xi| > R} exp(-|xi|^theta) dxi < tail``."""
    a = N / theta
    scale = _sphere_area(N) * special.gamma(a) / theta

    def excess(y):
        return scale * special.gammaincc(a, y) - tail

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    y = optimize.brentq(excess, 0.0, hi, xtol=1e-12)
    return y ** (1.0 / theta) * (1.0 + 1e-9)


def _quad(fn, a, b, tol, **kw):
    res = integrate.quad(fn, a, b, epsabs=tol, epsrel=0.0, limit=1000, full_output=1, **kw)
    value, err = res[0], res[1]
    if len(res) > 3 and err > 10 * tol:
        raise QuadratureError(f"quadrature did not converge: {res[3].splitlines()[0]}", err)
    return value, err


def _radius(x, N: int) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 1:
        return abs(float(x[0]))
    if x.size != N:
        raise ValueError(f"point has {x.size} coordinates, expected {N}")
    return float(np.linalg.norm(x))


@functools.lru_cache(maxsize=100_000)
def _ktheta_radial(rho: float, theta: float, N: int, tol: float) -> float:
    R = truncation_radius(theta, N)
    decay = lambda s: math.exp(-(s**theta))
    if N == 1:
        if rho == 0.0:
            val, _ = _quad(decay, 0.0, R, tol)
        else:
            val, _ = _quad(decay, 0.0, R, tol, weight="cos", wvar=rho)
        return 2.0 * val / math.sqrt(2.0 * math.pi)
    if N == 2:
        if rho == 0.0:
            val, _ = _quad(lambda s: s * decay(s), 0.0, R, tol)
        else:
            # split into chunks of a few oscillations of J0
            edges = np.append(np.arange(0.0, R, 8.0 * math.pi / rho), R)
            val = 0.0
            for a, b in zip(edges[:-1], edges[1:]):
                v, _ = _quad(lambda s: special.j0(rho * s) * s * decay(s), a, b, tol / len(edges))
                val += v
        return val
    if rho == 0.0:
        val, _ = _quad(lambda s: s * s * decay(s), 0.0, R, tol)
        return 4.0 * math.pi * val / (2.0 * math.pi) ** 1.5
    val, _ = _quad(lambda s: s * decay(s), 0.0, R, tol, weight="sin", wvar=rho)
    return 4.0 * math.pi * val / (rho * (2.0 * math.pi) ** 1.5)


def eval_Ktheta(x, theta: float, N: int, tol: float = 1e-12) -> float:
    """``K_theta`` at a point ``x`` (vector of length N, or a scalar radius)."""
    if N not in (1, 2, 3):
        raise ValueError("N must be 1, 2 or 3")
    if theta <= 0:
        raise ValueError("theta must be positive")
    return _ktheta_radial(_radius(x, N), float(theta), int(N), tol)


def ktheta_closed_form(x, theta: float, N: int) -> float:
    """Closed forms at ``theta = 2`` (Gaussian) and ``theta = 1`` (Poisson)."""
    rho = _radius(x, N)
    if theta == 2:
        return 2.0 ** (-N / 2) * math.exp(-rho * rho / 4.0)
    if theta == 1:
        c = 2.0**N * math.pi ** ((N - 1) / 2) * special.gamma((N + 1) / 2)
        return c / (2.0 * math.pi) ** (N / 2) / (1.0 + rho * rho) ** ((N + 1) / 2)
    raise ValueError("closed form only for theta in {1, 2}")


def heat_kernel(x, t: float, theta: float, N: int) -> float:
    """Scaled profile ``t^{-N/theta} K_theta(t^{-1/theta} x)``."""
    rho = _radius(x, N)
    return t ** (-N / theta) * eval_Ktheta(t ** (-1.0 / theta) * rho, theta, N)


def _sample_ladder(radius: float, points_per_decade: int, smallest: float = 1e-3) -> np.ndarray:
    k_lo = int(math.floor(math.log10(smallest) * points_per_decade))
    k_hi = int(math.floor(math.log10(radius) * points_per_decade))
    return np.concatenate(([0.0], 10.0 ** (np.arange(k_lo, k_hi + 1) / points_per_decade)))


def decay_bound_certificate(theta: float, N: int, sample_radius: float, points_per_decade: int = 40) -> float:
    """``sup |K_theta(x)| (1 + |x|)^{N + theta}`` over ``|x| <= sample_radius``.

    Samples a fixed logarithmic ladder (so doubling the radius only appends
    points) and refines the best sample with a bounded scalar search.
    """
    if sample_radius <= 0:
        raise ValueError("sample_radius must be positive")
    power = N + theta

    def weighted(r):
        return abs(eval_Ktheta(r, theta, N)) * (1.0 + r) ** power

    xs = _sample_ladder(sample_radius, points_per_decade)
    vals = np.array([weighted(r) for r in xs])
    k = int(np.argmax(vals))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    best = vals[k]
    if hi > lo:
        res = optimize.minimize_scalar(lambda r: -weighted(r), bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        best = max(best, -res.fun)
    return float(best)


def kappa_m(m: int) -> float:
    """Exponent ``kappa_m`` of the refined Gaussian-type bound for ``theta = 2m``."""
    if int(m) != m or m < 1:
        raise ValueError("m must be an integer >= 1")
    m = int(m)
    return (2 * m - 1) * (2.0 * m) ** (-2.0 * m / (2 * m - 1)) * math.sin(math.pi / (4 * m - 2))


@functools.lru_cache(maxsize=64)
def smoothing_constant(theta: float, N: int, outer_radius: float = 200.0) -> float:
    """``||K_theta||_inf + ||K_theta||_1``.

    The sup is at the origin because ``exp(-|xi|^theta)`` is positive. The
    L1 norm is radial Gauss-Legendre quadrature of ``|K_theta|`` up to
    ``outer_radius``, plus a tail extrapolated with the ``|x|^{-N-theta}``
    decay rate.
    """
    if N not in (1, 2, 3):
        raise ValueError("N must be 1, 2 or 3")
    k_inf = eval_Ktheta(0.0, theta, N)
    edges = np.concatenate(([0.0], np.geomspace(0.25, outer_radius, 80)))
    nodes, weights = np.polynomial.legendre.leggauss(16)
    l1 = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        r = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        vals = np.array([abs(eval_Ktheta(ri, theta, N)) for ri in r]) * r ** (N - 1)
        l1 += 0.5 * (b - a) * float(weights @ vals)
    edge = abs(eval_Ktheta(outer_radius, theta, N))
    l1 += edge * outer_radius**N / theta
    return k_inf + _sphere_area(N) * l1


# ---------------------------------------------------------------------------
# random test fields and the smoothing check


def random_bump_fields(
    grid: SpatialGrid,
    trials: int,
    seed,
    widths: tuple[float, float] | None = None,
    max_bumps: int = 3,
) -> list[Field]:
    """Sums of 1..max_bumps Gaussian bumps with positive amplitudes.

    Centers lie in the middle half of the box; widths are log-uniform in
    ``widths`` (default ``[L/16, L/4]``, at least 8 cells at 256 points).
    Trial ``k`` depends only on ``(seed, k)``, so more trials extend the set.
    """
    lo, hi = widths if widths is not None else (grid.L / 16, grid.L / 4)
    coords = grid.coords()
    out = []
    for k in range(trials):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))
        nb = int(rng.integers(1, max_bumps + 1))
        vals = np.zeros(grid.shape)
        for _ in range(nb):
            c = rng.uniform(-grid.L / 4, grid.L / 4, size=grid.N)
            w = math.exp(rng.uniform(math.log(lo), math.log(hi)))
            a = rng.uniform(0.2, 1.0)
            r2 = sum((x - ci) ** 2 for x, ci in zip(coords, c))
            vals += a * np.exp(-0.5 * r2 / (w * w))
        out.append(Field(grid, vals))
    return out


def default_grid(N: int) -> SpatialGrid:
    return SpatialGrid(N, 8.0, {1: 256, 2: 64, 3: 32}[N])


def smoothing_ratios(theta, N, p, q, t_list: Sequence[float], trials: int, seed, grid=None) -> np.ndarray:
    """Compensated ratios, shape ``(trials, len(t_list))``."""
    p, q = parse_exponent(p), parse_exponent(q)
    if not 1 <= p <= q:
        raise ValueError(f"need 1 <= p <= q, got p={p}, q={q}")
    grid = default_grid(N) if grid is None else grid
    gap = (1.0 / p) - (0.0 if math.isinf(q) else 1.0 / q)
    out = np.empty((trials, len(t_list)))
    for i, phi in enumerate(random_bump_fields(grid, trials, seed)):
        base = lebesgue_norm(phi, p)
        for j, t in enumerate(t_list):
            out[i, j] = lebesgue_norm(apply_semigroup(phi, t, theta), q) * t ** (N / theta * gap) / base
    return out


def verify_smoothing(theta, N, p, q, t_list, trials, seed, grid=None) -> float:
    """Largest ``||e^{-tA} phi||_q t^{(N/theta)(1/p-1/q)} / ||phi||_p`` observed."""
    return float(smoothing_ratios(theta, N, p, q, t_list, trials, seed, grid).max())
