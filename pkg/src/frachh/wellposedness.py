"""Parameter admissibility, derived exponents and the local existence budget.

Inputs given as ``int``, ``Fraction`` or decimal strings are handled in
exact rational arithmetic and strict inequalities are checked with zero
tolerance. If any input is a float, comparisons use a relative tolerance of
``1e-12`` (a near-tie counts as a violation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Union

from scipy.special import beta as _beta

Number = Union[int, float, Fraction]
FLOAT_RTOL = 1e-12


def as_number(x) -> Number:
    if isinstance(x, bool):
        raise TypeError("booleans are not parameters")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        s = x.strip().lower()
        if s in ("inf", "infinity"):
            return math.inf
        return Fraction(s)
    return float(x)


@dataclass(frozen=True)
class ModelParams:
    N: int
    theta: Number
    gamma: Number
    p: Number
    q: Number
    H: Number
    mu: Number = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be an integer >= 1")
        for name in ("theta", "gamma", "p", "q", "H", "mu"):
            object.__setattr__(self, name, as_number(getattr(self, name)))
        object.__setattr__(self, "N", int(self.N))
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not 0 < self.H < 1:
            raise ValueError(f"Hurst parameter must lie in (0, 1), got {self.H}")

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in (self.theta, self.gamma, self.p, self.q, self.H))

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        keys = ("N", "theta", "gamma", "p", "q", "H")
        missing = [k for k in keys if k not in d]
        if missing:
            raise ValueError(f"params missing keys: {missing}")
        return cls(**{k: d[k] for k in keys}, mu=d.get("mu", 0))

    def as_dict(self) -> dict:
        return {k: _jsonable(getattr(self, k)) for k in ("N", "theta", "gamma", "p", "q", "H", "mu")}


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else int(x)
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return x


def _f(x) -> float:
    return float(x)


class _Cmp:
    def __init__(self, exact: bool):
        self.exact = exact

    def lt(self, a, b) -> bool:
        if self.exact:
            return a < b
        a, b = float(a), float(b)
        if math.isinf(b) and not math.isinf(a):
            return b > 0
        if math.isinf(a):
            return False
        return b - a > FLOAT_RTOL * max(1.0, abs(a), abs(b))

    def gt(self, a, b) -> bool:
        return self.lt(b, a)


def _ratio(num, den):
    """``num/den`` with a zero denominator mapped to +inf (threshold never met)."""
    return math.inf if den == 0 else num / den


# constraint names, in reporting order
HYPOTHESES = (
    "2*theta > 1",
    "gamma > 0",
    "gamma < min(theta, N)",
    "H > 1/q",
    "H > N/(2*theta)",
    "H > 1/2",
    "q > N*p/(N - gamma)",
    "q > N*(p - 1)/(theta - gamma)",
    "q < inf",
)
WINDOW = ("1/r < 1/q", "1/r > (1/p)*(1/q - gamma/N)", "r > 1")
SLACKS = ("sigma > 0", "a > 0", "b > 0", "a + b - 1 > 0", "a - p*sigma > 0", "a - sigma > 0",
          "1 + (1 - p)*sigma - N*(p - 1)/(r*theta) - gamma/theta > 0")


def hypothesis_violations(params: ModelParams) -> list[str]:
    P = params
    c = _Cmp(P.exact)
    one = Fraction(1) if P.exact else 1.0
    half = one / 2
    checks = {
        "2*theta > 1": c.gt(2 * P.theta, 1),
        "gamma > 0": c.gt(P.gamma, 0),
        "gamma < min(theta, N)": c.lt(P.gamma, min(P.theta, P.N)),
        "H > 1/q": c.gt(P.H, 0 if math.isinf(P.q) else one / P.q),
        "H > N/(2*theta)": c.gt(P.H, P.N / (2 * P.theta)),
        "H > 1/2": c.gt(P.H, half),
        "q > N*p/(N - gamma)": c.gt(P.q, _ratio(P.N * P.p, P.N - P.gamma)),
        "q > N*(p - 1)/(theta - gamma)": c.gt(P.q, _ratio(P.N * (P.p - 1), P.theta - P.gamma)),
        "q < inf": not math.isinf(P.q),
    }
    return [name for name in HYPOTHESES if not checks[name]]


def default_r(p: Number, q: Number) -> Number:
    """``2pq/(p+1)``; exceeds ``q`` whenever ``p > 1``."""
    p, q = as_number(p), as_number(q)
    if not p > 1 or not q > 1:
        raise ValueError("default_r needs p > 1 and q > 1")
    return 2 * p * q / (p + 1)


@dataclass(frozen=True)
class DerivedExponents:
    r: Number
    sigma: Number
    a: Number
    b: Number
    slack: dict = field(default_factory=dict)

    @property
    def positivity(self) -> dict:
        """The six quantities that must be positive for an admissible tuple."""
        s = self.slack
        return {"sigma": self.sigma, "a": self.a, "b": self.b, "a + b - 1": s["a + b - 1"],
                "a - p*sigma": s["a - p*sigma"], "a - sigma": s["a - sigma"]}

    def as_dict(self) -> dict:
        out = {}
        for k, v in [("r", self.r), ("sigma", self.sigma), ("a", self.a), ("b", self.b), *self.slack.items()]:
            out[k] = {"exact": str(v) if isinstance(v, Fraction) else None, "value": float(v)}
        return out


def r_window(params: ModelParams) -> tuple[Number, Number]:
    """Open interval ``(lo, hi)`` that ``1/r`` must lie in."""
    P = params
    inv_q = 0 if math.isinf(P.q) else 1 / P.q
    return (inv_q - P.gamma / P.N) / P.p, inv_q


def window_violations(params: ModelParams, r: Number) -> list[str]:
    c = _Cmp(params.exact and isinstance(r, Fraction))
    lo, hi = r_window(params)
    inv_r = 0 if math.isinf(r) else 1 / r
    out = []
    if not c.lt(inv_r, hi):
        out.append(WINDOW[0])
    if not c.gt(inv_r, lo):
        out.append(WINDOW[1])
    if not c.gt(r, 1):
        out.append(WINDOW[2])
    return out


def r_interval_bounds(params: ModelParams) -> tuple[Number, Number]:
    """Diagnostic bounds on ``1/r`` implied by the window and the hypotheses."""
    P = params
    inv_q = 1 / P.q
    lo = max(inv_q - P.gamma / P.N, P.p * inv_q - P.theta / P.N) / P.p
    hi = min(1 - P.gamma / P.N, inv_q - P.gamma / P.N + P.theta / P.N, P.p * inv_q) / P.p
    return lo, hi


def exponents(params: ModelParams, r: Number | None = None) -> DerivedExponents:
    P = params
    if math.isinf(P.q):
        raise ValueError("exponents need finite q")
    r = default_r(P.p, P.q) if r is None else as_number(r)
    bad = window_violations(P, r)
    if bad:
        raise ValueError(f"r = {r} outside the admissible window: {bad}")
    ratio = P.N / P.theta
    sigma = ratio * (1 / P.q - 1 / r)
    a = 1 - ratio * (P.p / r - 1 / P.q) - P.gamma / P.theta
    b = 1 - P.p * sigma
    slack = {
        "a + b - 1": a + b - 1,
        "a - p*sigma": a - P.p * sigma,
        "a - sigma": a - sigma,
        "a + sigma": a + sigma,
        "lemma third": 1 + (1 - P.p) * sigma - P.N * (P.p - 1) / (r * P.theta) - P.gamma / P.theta,
    }
    return DerivedExponents(r, sigma, a, b, slack)


def slack_violations(exps: DerivedExponents, exact: bool) -> list[str]:
    c = _Cmp(exact)
    s = exps.slack
    values = [exps.sigma, exps.a, exps.b, s["a + b - 1"], s["a - p*sigma"], s["a - sigma"], s["lemma third"]]
    return [name for name, v in zip(SLACKS, values) if not c.gt(v, 0)]


@dataclass
class Admissibility:
    params: ModelParams
    accepted: bool
    reasons: list[str]
    hypothesis_reasons: list[str]
    exponents: DerivedExponents | None
    notes: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {
            "params": self.params.as_dict(),
            "accepted": self.accepted,
            "reasons": list(self.reasons),
            "exact_arithmetic": self.params.exact,
        }
        if self.exponents is not None:
            rec["exponents"] = self.exponents.as_dict()
        rec.update(self.notes)
        return rec


def check_admissible(params: ModelParams) -> Admissibility:
    """Accept iff every hypothesis holds and the default ``r`` meets the window and slacks.

    Rejection is a value: ``reasons`` names every violated inequality.
    """
    hyp = hypothesis_violations(params)
    reasons = list(hyp)
    exps = None
    notes = {}
    if not math.isinf(params.q) and params.q > 1:
        r = default_r(params.p, params.q)
        win = window_violations(params, r)
        reasons += win
        if not win:
            exps = exponents(params, r)
            reasons += slack_violations(exps, params.exact)
            lo, hi = r_interval_bounds(params)
            c = _Cmp(params.exact)
            notes["r_interval_check"] = bool(c.gt(1 / r, lo) and c.lt(1 / r, hi))
    elif not math.isinf(params.q):
        reasons.append("q > 1")
    return Admissibility(params, not reasons, reasons, hyp, exps, notes)


def beta_function(a: float, b: float) -> float:
    a, b = float(a), float(b)
    if a <= 0 or b <= 0:
        raise ValueError("Beta function arguments must be positive")
    return float(_beta(a, b))


# ---------------------------------------------------------------------------
# existence budget


@dataclass
class ContractionBudget:
    smoothing_constant: float
    radius: float
    c_hardy: float
    lam: float | None
    T_star: float
    diagnostics: dict = field(default_factory=dict)


def contraction_factor(T: float, p: float, exps: DerivedExponents, c_hardy: float, radius: float) -> float:
    """``C p M^{p-1} (T^{a - p sigma} + T^{a + sigma})``."""
    p = float(p)
    e1 = float(exps.slack["a - p*sigma"])
    e2 = float(exps.slack["a + sigma"])
    return c_hardy * p * radius ** (p - 1) * (T**e1 + T**e2)


def self_map_bound(T: float, params: ModelParams, exps: DerivedExponents, K: float, c_hardy: float,
                   u0_norm: float, K_of_T: Callable[[float], float], radius: float) -> float:
    a, b, sigma = float(exps.a), float(exps.b), float(exps.sigma)
    growth = max(beta_function(a, b), beta_function(a - sigma, b))
    return K * u0_norm + K_of_T(T) + c_hardy * radius ** float(params.p) * T ** (a + b - 1) * growth


def existence_budget(params: ModelParams, exps: DerivedExponents, K: float, c_hardy: float, u0_norm: float,
                     K_of_T: Callable[[float], float], levels: int = 40) -> ContractionBudget:
    """Largest ``T`` in ``{2^-j : j = 0..levels}`` where the ball maps into itself and ``lambda(T) < 1``.

    The ball radius is fixed at ``M = 2 K ||u0||_q + 1``.
    """
    if min(K, c_hardy, u0_norm) < 0:
        raise ValueError("constants and data norm must be non-negative")
    radius = 2.0 * K * u0_norm + 1.0
    tried = []
    for j in range(levels + 1):
        T = 2.0**-j
        bound = self_map_bound(T, params, exps, K, c_hardy, u0_norm, K_of_T, radius)
        lam = contraction_factor(T, params.p, exps, c_hardy, radius)
        tried.append({"T": T, "self_map_bound": bound, "lambda": lam})
        if bound <= radius and lam < 1.0:
            return ContractionBudget(K, radius, c_hardy, lam, T, {"searched": tried})
    return ContractionBudget(K, radius, c_hardy, None, 0.0,
                             {"searched": tried, "message": "no grid horizon satisfies both conditions"})
