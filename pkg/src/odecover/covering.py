"""Log covering-number bounds for smooth classes and ODE solution classes.

All hidden constants in the asymptotic statements are set to 1 and every log
is natural.  Each :class:`BoundReport` records this through its
``asymptotic_constants_unity`` flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .errors import DeltaOutOfRange
from .odes import AUTONOMOUS, KINDS

LN2 = math.log(2.0)
LN4 = math.log(4.0)

SOLUTIONS = "solutions"
FIRST_DERIVATIVES = "first_derivatives"
TARGETS = (SOLUTIONS, FIRST_DERIVATIVES)


@dataclass(frozen=True)
class SmoothClassSpec:
    """Functions on a box whose derivatives up to order ``beta`` are bounded by ``rho``."""

    beta: int
    rho: float = 1.0
    dim: int = 1
    domain_lo: tuple = (0.0,)
    domain_hi: tuple = (1.0,)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if len(self.domain_lo) != self.dim or len(self.domain_hi) != self.dim:
            raise ValueError("domain bounds must have one entry per dimension")
        if any(lo >= hi for lo, hi in zip(self.domain_lo, self.domain_hi)):
            raise ValueError("domain_lo must be below domain_hi in every coordinate")


@dataclass(frozen=True)
class ClassConstants:
    """Constants of a solution class.

    ``alpha`` defaults to ``min(1, b)`` and ``Cbar`` to ``C0 + b``.  Both may be
    overridden to evaluate the formulas at arbitrary constant combinations.
    """

    C0: float = 1.0
    b: float = 1.0
    L: float = 1.0
    L_K: float = 1.0
    K: int = 0
    m: int = 1
    alpha: float | None = None
    Cbar: float | None = None

    def __post_init__(self):
        if self.alpha is None:
            object.__setattr__(self, "alpha", min(1.0, self.b))
        if self.Cbar is None:
            object.__setattr__(self, "Cbar", self.C0 + self.b)
        if self.C0 < 0 or self.b < 0 or self.L < 0 or self.L_K < 0 or self.K < 0:
            raise ValueError("class constants must be non-negative")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.m < 1:
            raise ValueError("ODE order m must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ClassConstants":
        known = {k: d[k] for k in ("C0", "b", "L", "L_K", "K", "m", "alpha", "Cbar") if k in d}
        return cls(**known)


@dataclass(frozen=True)
class BoundReport:
    value: float
    formula: str
    terms: dict
    delta: float
    minimizing_gamma: int | None = None
    branch: str | None = None
    asymptotic_constants_unity: bool = field(default=True)

    def to_dict(self) -> dict:
        return {
            "formula": self.formula,
            "delta": self.delta,
            "value": self.value,
            "minimizing_gamma": self.minimizing_gamma,
            "branch": self.branch,
            "terms": dict(self.terms),
            "asymptotic_constants_unity": self.asymptotic_constants_unity,
        }


def _report(formula, terms, delta, gamma=None, branch=None) -> BoundReport:
    return BoundReport(sum(terms.values()), formula, terms, delta, gamma, branch)


def _unit_delta(delta):
    if not 0 < delta < 1:
        raise DeltaOutOfRange(f"delta must lie in (0, 1), got {delta}")


def _check_gamma(gamma):
    if int(gamma) != gamma or gamma < 0:
        raise ValueError(f"gamma must be a non-negative integer, got {gamma}")


def log_factorial_product(gamma: int) -> float:
    """``log(0! * 1! * ... * gamma!)``."""
    return sum(math.lgamma(i + 1) for i in range(gamma + 1))


def kolmogorov_upper(delta: float, gamma: int) -> float:
    """Upper bound ``delta^(-1/(gamma+1)) + (gamma+1) log(1/delta)`` for a standard smooth class."""
    _unit_delta(delta)
    _check_gamma(gamma)
    return delta ** (-1.0 / (gamma + 1)) + (gamma + 1) * math.log(1.0 / delta)


def kolmogorov_lower(delta: float, gamma: int) -> float:
    _unit_delta(delta)
    _check_gamma(gamma)
    return delta ** (-1.0 / (gamma + 1))


def l_max(L: float, alpha: float, m: int = 1) -> float:
    """Perturbation amplification factor ``e^(c alpha) (1 + (1 - e^(-c alpha)) / c)``.

    ``c`` is ``L`` for first-order ODEs and ``sqrt(L^2 + 1)`` otherwise.  At
    ``c = 0`` the expression tends to ``1 + alpha``.
    """
    if L < 0 or alpha <= 0:
        raise ValueError("need L >= 0 and alpha > 0")
    c = L if m == 1 else math.sqrt(L * L + 1.0)
    if c == 0:
        return 1.0 + alpha
    return math.exp(c * alpha) * (1.0 + (-math.expm1(-c * alpha)) / c)


def _lmax_of(consts: ClassConstants, override):
    return l_max(consts.L, consts.alpha, consts.m) if override is None else float(override)


def general_bound(
    delta: float,
    logcover_F: Callable[[float], float],
    consts: ClassConstants,
    L_max: float | None = None,
) -> BoundReport:
    """``log N(delta/L_max, F) + m log(2 C0 L_max / delta + 1)``."""
    if delta <= 0:
        raise DeltaOutOfRange("delta must be positive")
    lm = _lmax_of(consts, L_max)
    terms = {
        "logcover_F": float(logcover_F(delta / lm)),
        "initial_value": consts.m * math.log(2.0 * consts.C0 * lm / delta + 1.0),
    }
    return _report("General21", terms, delta)


def parametric_bound(delta: float, consts: ClassConstants, L_max: float | None = None) -> BoundReport:
    """``K log(1 + 2 L_max L_K / delta) + m log(2 C0 L_max / delta + 1)``."""
    if delta <= 0:
        raise DeltaOutOfRange("delta must be positive")
    lm = _lmax_of(consts, L_max)
    terms = {
        "parameters": consts.K * math.log(1.0 + 2.0 * lm * consts.L_K / delta),
        "initial_value": consts.m * math.log(2.0 * consts.C0 * lm / delta + 1.0),
    }
    return _report("Parametric", terms, delta)


def _check_fifth(delta, alpha):
    if not 0 < delta / 5.0 < alpha:
        raise DeltaOutOfRange(f"delta/5 = {delta / 5.0:g} must lie in (0, alpha={alpha:g})")


def _z1_terms(d, g, c):
    return {
        "log_factorial": log_factorial_product(g),
        "log_delta": (g + 3) / 2.0 * math.log(5.0 / d),
        "power": c.alpha * (d / 5.0) ** (-1.0 / (g + 2)) * LN2,
        "constant": math.log(4.0 * c.Cbar),
    }


def _z2_terms(d, g, c):
    return {
        "log_delta": (g + 2) / 2.0 * math.log(5.0 / d),
        "power": 2.0 * c.Cbar * LN2 * (d / 5.0) ** (-1.0 / (g + 1)),
        "constant": LN4,
        "initial_value": math.log(c.C0 / d + 1.0),
    }


def _z3_terms(d, g, c):
    return {
        "log_factorial": log_factorial_product(g),
        "log_delta": (g + 2) / 2.0 * math.log(5.0 / d),
        "power": c.alpha * (d / 5.0) ** (-1.0 / (g + 1)) * LN2,
        "constant": LN4,
    }


def _w1_terms(d, g, c):
    return {
        "log_factorial": log_factorial_product(g),
        "exponential": (g * g + g) / 2.0 * LN2,
        "log_delta": (g + 3) / 2.0 * math.log(5.0 / d),
        "power": c.alpha * (d / 5.0) ** (-1.0 / (g + 2)) * LN4,
        "constant": math.log(4.0 * c.Cbar),
    }


def _w2_terms(d, g, c):
    return {
        "log_delta": (g + 2) * (g + 3) / 6.0 * math.log(5.0 / d),
        "power": 20.0 * max(c.Cbar, 1.0) * LN2 * (d / 5.0) ** (-2.0 / (g + 1)),
        "constant": 4.0 * LN2,
        "initial_value": math.log(c.C0 / d + 1.0),
    }


def _w3_terms(d, g, c):
    return {
        "log_factorial": log_factorial_product(g),
        "exponential": (g * g + g) / 2.0 * LN2,
        "log_delta": (g + 2) / 2.0 * math.log(5.0 / d),
        "power": c.alpha * (d / 5.0) ** (-1.0 / (g + 1)) * LN4,
        "constant": LN4,
    }


_TERMS = {
    "Z1": _z1_terms, "Z2": _z2_terms, "Z3": _z3_terms,
    "W1": _w1_terms, "W2": _w2_terms, "W3": _w3_terms,
}


def formula_report(name: str, delta: float, gamma: int, consts: ClassConstants) -> BoundReport:
    """One of Z1..Z3, W1..W3 at ``(delta, gamma)`` with its term breakdown."""
    _check_gamma(gamma)
    _check_fifth(delta, consts.alpha)
    return _report(name, _TERMS[name](delta, gamma, consts), delta, gamma, name)


def z_bounds(delta: float, gamma: int, consts: ClassConstants) -> tuple:
    """``(Z1, Z2, Z3)`` at the same ``delta`` (no ``L_max`` rescaling)."""
    return tuple(formula_report(n, delta, gamma, consts).value for n in ("Z1", "Z2", "Z3"))


def w_bounds(delta: float, gamma: int, consts: ClassConstants) -> tuple:
    """``(W1, W2, W3)`` at the same ``delta`` (no ``L_max`` rescaling)."""
    return tuple(formula_report(n, delta, gamma, consts).value for n in ("W1", "W2", "W3"))


def solution_class_bound(
    delta: float,
    beta: int,
    consts: ClassConstants,
    kind: str = AUTONOMOUS,
    target: str = SOLUTIONS,
) -> BoundReport:
    """Minimum over ``gamma in {0..beta}`` of the applicable formulas.

    For solutions the candidates are ``Z1(delta)`` and ``Z2(delta / L_max)``
    (``W1``/``W2`` for nonautonomous ODEs), with the first-order unit-Lipschitz
    ``L_max``.  For first derivatives only ``Z3`` (``W3``) applies.  Ties go to
    the smallest ``gamma``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    _check_gamma(beta)
    _check_fifth(delta, consts.alpha)
    fam = "Z" if kind == AUTONOMOUS else "W"
    lm = l_max(1.0, consts.alpha, 1)

    if target == SOLUTIONS:
        branches = [(fam + "1", delta), (fam + "2", delta / lm)]
    else:
        branches = [(fam + "3", delta)]

    best = None
    for g in range(beta + 1):
        for name, d in branches:
            terms = _TERMS[name](d, g, consts)
            value = sum(terms.values())
            if best is None or value < best[0]:
                best = (value, g, name, terms)
    value, g, name, terms = best
    return BoundReport(value, name, terms, delta, g, name)


def separable_lower(delta: float, beta: int, target: str = SOLUTIONS) -> float:
    """Lower bound from separable ODEs: ``delta^(-1/(beta+2))`` (solutions) or ``delta^(-1/(beta+1))``."""
    _unit_delta(delta)
    _check_gamma(beta)
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    shift = 2 if target == SOLUTIONS else 1
    return delta ** (-1.0 / (beta + shift))
