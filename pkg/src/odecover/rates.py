"""Critical radii and rate functions for least-squares recovery of ODE solutions.

Throughout, ``s = sigma^2 / n`` and hidden constants are 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .covering import log_factorial_product
from .errors import DeltaOutOfRange, GammaUnsupported, NoSolutionInRange
from .odes import AUTONOMOUS, KINDS

M_NAMES = ("M1a", "M2a", "M1", "M2", "M3")


@dataclass(frozen=True)
class RateParams:
    n: int
    sigma: float = 1.0
    beta: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")

    @property
    def s(self) -> float:
        return self.sigma ** 2 / self.n


@dataclass(frozen=True)
class RadiusReport:
    r_squared: float
    minimizing_gamma: int
    branch: str
    active_term: str
    asymptotic_constants_unity: bool = True

    def to_dict(self) -> dict:
        return {
            "r_squared": self.r_squared,
            "minimizing_gamma": self.minimizing_gamma,
            "branch": self.branch,
            "active_term": self.active_term,
            "asymptotic_constants_unity": self.asymptotic_constants_unity,
        }


def power_exponent(which: str, gamma: int) -> float:
    """Exponent of ``s`` in the power argument of an M-function."""
    if which in ("M1a", "M1", "M3"):
        return 2.0 * (gamma + 2) / (2 * (gamma + 2) + 1)
    if which == "M2a":
        return 2.0 * (gamma + 1) / (2 * (gamma + 1) + 1)
    if which == "M2":
        return (gamma + 1.0) / (gamma + 2.0)
    raise ValueError(f"unknown M-function {which!r}")


def m_terms(which: str, gamma: int, p: RateParams) -> dict:
    """Arguments of the max defining an M-function, labelled."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    s = p.s
    if which == "M2" and gamma == 0:
        if s > 1:
            raise GammaUnsupported("M2 at gamma=0 is only defined when sigma^2/n <= 1")
        return m_terms("M2", 1, p)
    e = power_exponent(which, gamma)
    if which == "M1a":
        return {"log_factorial": s * log_factorial_product(gamma), "parametric": s, "power": s ** e}
    if which == "M2a":
        return {"parametric": s * max(gamma, 1), "power": s ** e}
    if which == "M1":
        return {
            "log_factorial": s * log_factorial_product(gamma),
            "parametric": s * max(gamma * gamma, 1),
            "power": s ** e,
        }
    if which == "M2":
        return {"parametric": s * max(gamma * gamma, 1), "power": s ** e}
    if which == "M3":
        return {"power": (max(gamma, 1) * s) ** e}
    raise ValueError(f"unknown M-function {which!r}")


def _argmax(terms: dict):
    label = max(terms, key=terms.get)  # first maximal label on ties
    return terms[label], label


def m_function(which: str, gamma: int, p: RateParams) -> float:
    return _argmax(m_terms(which, gamma, p))[0]


def critical_radius(p: RateParams, kind: str = AUTONOMOUS) -> RadiusReport:
    """``min`` over ``gamma in {0..beta}`` and over the two M-functions of the ODE kind.

    M2 at ``gamma = 0`` is skipped when ``sigma^2 / n > 1``.  Ties go to the
    smallest ``gamma``, then to the first function of the pair.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    pair = ("M1a", "M2a") if kind == AUTONOMOUS else ("M1", "M2")
    best = None
    for g in range(p.beta + 1):
        for name in pair:
            try:
                value, label = _argmax(m_terms(name, g, p))
            except GammaUnsupported:
                continue
            if best is None or value < best.r_squared:
                best = RadiusReport(value, g, name, label)
    return best


def kernel_prefactor(gamma: int) -> float:
    """``[2^(gamma+1) (gamma+1)!]^(2 / (2 gamma + 5))``."""
    return (2.0 ** (gamma + 1) * math.factorial(gamma + 1)) ** (2.0 / (2 * gamma + 5))


def kernel_terms(gamma: int, p: RateParams) -> dict:
    s = p.s
    return {
        "parametric": s * max(min(gamma, p.n), 1),
        "power": kernel_prefactor(gamma) * s ** (2.0 * (gamma + 2) / (2 * gamma + 5)),
    }


def kernel_radius(p: RateParams) -> RadiusReport:
    """Rate of the constrained kernel fit: ``min_gamma max{...}``."""
    best = None
    for g in range(p.beta + 1):
        value, label = _argmax(kernel_terms(g, p))
        if best is None or value < best.r_squared:
            best = RadiusReport(value, g, "KernelM3", label)
    return best


def standard_class_radius(gamma: int, p: RateParams) -> float:
    """``max{sigma^2 (gamma v 1) / n, s^(2(gamma+1) / (2(gamma+1)+1))}``."""
    s = p.s
    return max(s * max(gamma, 1), s ** (2.0 * (gamma + 1) / (2 * gamma + 3)))


def sample_threshold(beta: int, sigma: float = 1.0) -> float:
    """``sigma^2 (beta sqrt(log(beta v 1)))^(4 beta + 10)``; zero for ``beta <= 1``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    base = beta * math.sqrt(math.log(max(beta, 1)))
    return sigma ** 2 * base ** (4 * beta + 10)


@dataclass(frozen=True)
class Figure1Series:
    delta: float
    gammas: np.ndarray
    log_term: np.ndarray
    power_term: np.ndarray
    crossover: int | None

    def rows(self):
        for g, a, b in zip(self.gammas, self.log_term, self.power_term):
            yield int(g), float(a), float(b)

    def long_rows(self):
        """``(gamma, series_name, value)`` rows, log series first."""
        out = [(int(g), "log_term", float(v)) for g, v in zip(self.gammas, self.log_term)]
        out += [(int(g), "power_term", float(v)) for g, v in zip(self.gammas, self.power_term)]
        return out


def figure1_series(delta: float, gamma_max: int) -> Figure1Series:
    """``(gamma v 1) log(1/delta)`` against ``delta^(-1/(gamma+1))`` for ``gamma = 0..gamma_max``.

    ``crossover`` is the smallest ``gamma`` where the log series is larger, or
    ``None`` if that never happens in range.
    """
    if not 0 < delta < 1:
        raise DeltaOutOfRange(f"delta must lie in (0, 1), got {delta}")
    g = np.arange(gamma_max + 1)
    log_term = np.maximum(g, 1) * math.log(1.0 / delta)
    power_term = delta ** (-1.0 / (g + 1.0))
    above = np.nonzero(log_term > power_term)[0]
    return Figure1Series(delta, g, log_term, power_term, int(above[0]) if above.size else None)


@dataclass(frozen=True)
class Figure2Series:
    params: RateParams
    gammas: np.ndarray
    values: dict  # name -> array, NaN where undefined

    def long_rows(self):
        out = []
        for name in M_NAMES:
            for g, v in zip(self.gammas, self.values[name]):
                if np.isfinite(v):
                    out.append((int(g), name, float(v)))
        return out


def figure2_series(p: RateParams, gamma_max: int) -> Figure2Series:
    """The five M-functions on ``gamma = 0..gamma_max``; M2 starts at ``gamma = 1``."""
    g = np.arange(gamma_max + 1)
    values = {}
    for name in M_NAMES:
        col = np.full(g.shape, np.nan)
        for i, gi in enumerate(g):
            if name == "M2" and gi == 0:
                continue
            col[i] = m_function(name, int(gi), p)
        values[name] = col
    return Figure2Series(p, g, values)


def dudley_radius(
    logcover: Callable[[float], float],
    p: RateParams,
    c: float = 1.0,
    lo: float = 1e-12,
    rtol: float = 1e-8,
) -> float:
    """Smallest ``r in (0, sigma]`` with
    ``(c / sqrt(n)) * int_{r^2/(4 sigma)}^{r} sqrt(log N(d)) dd <= r^2 / sigma``.

    Returns 0 when the inequality already holds at ``r = 1e-12`` (for example a
    singleton class).
    """
    sigma, rn = p.sigma, math.sqrt(p.n)

    def gap(r):
        val, _ = integrate.quad(
            lambda d: math.sqrt(max(logcover(d), 0.0)),
            r * r / (4.0 * sigma), r, epsabs=1e-10, epsrel=1e-10, limit=200,
        )
        return c * val / rn - r * r / sigma

    if gap(sigma) > 0:
        raise NoSolutionInRange(f"critical inequality fails at r = sigma = {sigma:g}")
    if gap(lo) <= 0:
        return 0.0
    return optimize.brentq(gap, lo, sigma, xtol=1e-15, rtol=rtol)
