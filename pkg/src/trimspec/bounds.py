"""Closed-form lower and upper bounds on lifted ground-state energies.

Everything here is plain real arithmetic. Each evaluator checks its
validity domain and raises :class:`DomainError` outside it.

Notation: ``Y = 2d + 1 + spr`` where ``spr`` is the spread of the
potential, ``N = 2dK - 1``, and ``K_*`` is :func:`~trimspec.lattice.k_star`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .lattice import k_star

LOG_SPACE_EXPONENT = 64


class DomainError(ValueError):
    """A bound was requested outside the parameter range where it is proven."""


@dataclass(frozen=True)
class ModelParams:
    d: int
    K: int
    Q: int
    spr: float = 0.0
    E0: float = 0.0

    def __post_init__(self):
        if self.d < 1 or self.K < 1:
            raise DomainError("d and K must be positive")
        if not 1 <= self.Q <= self.K**self.d:
            raise DomainError(f"need 1 <= Q <= K^d = {self.K ** self.d}, got Q = {self.Q}")
        if self.spr < 0:
            raise DomainError("spread must be nonnegative")

    @property
    def Y(self) -> float:
        return 2 * self.d + 1 + self.spr

    @property
    def N(self) -> int:
        return 2 * self.d * self.K - 1


@dataclass(frozen=True)
class KappaBound:
    s0: float
    Z: float
    kappa_lb: float


def _power(base: float, exponent: float) -> float:
    """``base ** exponent``, via logs when the exponent is large."""
    if abs(exponent) > LOG_SPACE_EXPONENT:
        return math.exp(exponent * math.log(base))
    return base**exponent


def log_delta_lower(p: ModelParams) -> float:
    """Natural log of :func:`delta_lower`, usable when the value underflows."""
    return math.log(p.Q) - math.log(p.N) - p.N * math.log(p.Y)


def delta_t_lower(p: ModelParams, t: float) -> float:
    """Lower bound on ``E_Γ(H, t) - E_∅(H)`` for the penalized operator."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if math.isinf(t):
        return delta_lower(p)
    Y, N = p.Y, p.N
    # 1 - (Y/(Y+t))^N computed without cancellation for small t
    tail = -math.expm1(N * math.log1p(-t / (Y + t)))
    return p.Q / N * _power(Y, -N) * tail


def delta_lower(p: ModelParams) -> float:
    """Lower bound ``Q / ((2dK-1) Y^{2dK-1})`` on ``E_Γ(H) - E_∅(H)``."""
    return math.exp(log_delta_lower(p)) if p.N > LOG_SPACE_EXPONENT else p.Q / (p.N * p.Y**p.N)


def cheeger_free_lower(d: int, K: int) -> float:
    """``1 / (4d K_*^{2d})``, a lower bound on ``E_Γ(-Δ)``."""
    return 1.0 / (4 * d * _power(k_star(K), 2 * d))


def t_large_lower(d: int, K: int, t: float) -> float:
    """``1 / ((6d-1) K_*^{2d})``, valid for ``t >= 2d - 1``."""
    if t < 2 * d - 1:
        raise DomainError(f"t_large_lower needs t >= 2d-1 = {2 * d - 1}, got t = {t}")
    return 1.0 / ((6 * d - 1) * _power(k_star(K), 2 * d))


def combined_t_lower(d: int, K: int, t: float) -> float:
    """``t / (4d K_*^{2d} (t + 4d) + 1)``, valid for all ``t >= 0`` (free Laplacian)."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    return t / (4 * d * _power(k_star(K), 2 * d) * (t + 4 * d) + 1)


@dataclass(frozen=True)
class Sandwich:
    lower_15: float
    lower_210: float
    lower_root: float
    upper: float


def sandwich_t(p: ModelParams, t: float, delta_measured: float) -> Sandwich:
    """Bounds on ``δ_Γ(H, t)`` given the (measured) trimmed lift ``δ = δ_Γ(H)``.

    ``lower_root`` is the positive root from the Schur-complement argument,
    ``lower_210 = δt / (t + 4d + δ + spr)`` its rational relaxation and
    ``lower_15 = δt / (t + 6d + 2 spr)`` the coarser form; the three are
    ordered ``lower_15 <= lower_210 <= lower_root`` whenever ``δ <= 2d + spr``.
    """
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if delta_measured < 0:
        raise DomainError("measured lift must be nonnegative")
    d, spr, delta = p.d, p.spr, delta_measured
    lower_15 = t / (t + 6 * d + 2 * spr) * delta if t > 0 else 0.0
    b = t + 4 * d + delta + spr
    lower_210 = delta * t / b if t > 0 else 0.0
    disc = max(b * b - 4 * delta * t, 0.0)
    lower_root = 2 * delta * t / (b + math.sqrt(disc)) if t > 0 else 0.0
    return Sandwich(lower_15, lower_210, lower_root, 2 * d + spr)


def kappa_lower(p: ModelParams, E1: float) -> KappaBound:
    """Analytic lower bound on the lifting rate κ at energy ``E1``.

    Valid for ``E0 < E1 < E0 + delta_lower(p)``.
    """
    gap = E1 - p.E0
    thr = delta_lower(p)
    if not gap > 0:
        raise DomainError(f"E1 = {E1} must exceed E0 = {p.E0}")
    if not gap < thr:
        raise DomainError(
            f"E1 - E0 = {gap:.6g} must be below delta_lower = {thr:.6g} (Q / ((2dK-1) Y^(2dK-1)))"
        )
    Y, N, Q = p.Y, p.N, p.Q
    frac = gap / thr
    # (1 - frac)^(-1/N) - 1 without cancellation
    growth = math.expm1(-math.log1p(-frac) / N)
    s0 = Y * growth
    c = (N + 2) / (N + 1)
    Z = c * growth
    kappa = Q / (N + 2) * _power((1 + Z) * Y, -(N + 1))
    return KappaBound(s0, Z, kappa)


def kappa_witness_s(p: ModelParams, kb: KappaBound) -> float:
    """``s = (2dK+1)/(2dK) s0``, where the lower bound is attained as a secant slope."""
    return (p.N + 2) / (p.N + 1) * kb.s0


def as_mantissa_exponent(log_value: float) -> tuple[float, int]:
    """Split ``exp(log_value)`` into ``(m, e)`` with ``1 <= m < 10`` and value ``m * 10**e``."""
    l10 = log_value / math.log(10)
    e = math.floor(l10)
    return 10 ** (l10 - e), e


def bound_rows(p: ModelParams, t_values=(), E1: float | None = None) -> list[dict]:
    """One record per (bound, parameters) with value and validity flag."""
    rows = []
    base = {"d": p.d, "K": p.K, "Q": p.Q, "spr": p.spr, "E0": p.E0}

    def add(name, fn, t=None, **extra):
        try:
            value, valid = fn(), True
        except DomainError:
            value, valid = None, False
        rows.append({"bound": name, **base, "t": t, **extra, "value": value, "valid": valid})

    add("Y", lambda: p.Y)
    add("delta_lower", lambda: delta_lower(p))
    add("log_delta_lower", lambda: log_delta_lower(p))
    add("cheeger_free_lower", lambda: cheeger_free_lower(p.d, p.K))
    add("upper", lambda: 2 * p.d + p.spr)
    for t in t_values:
        add("delta_t_lower", lambda: delta_t_lower(p, t), t)
        add("t_large_lower", lambda: t_large_lower(p.d, p.K, t), t)
        add("combined_t_lower", lambda: combined_t_lower(p.d, p.K, t), t)
    if E1 is not None:
        try:
            kb = kappa_lower(p, E1)
            vals = {"s0": kb.s0, "Z": kb.Z, "kappa_lb": kb.kappa_lb}
            ok = True
        except DomainError:
            vals, ok = {"s0": None, "Z": None, "kappa_lb": None}, False
        for name, v in vals.items():
            rows.append({"bound": name, **base, "t": None, "E1": E1, "value": v, "valid": ok})
    return rows
