"""Gronwall stability bounds for pairs of ODEs, and numerical checks of them.

A pair consists of ``y^(m) = f(x, Y)`` and ``z^(m) = g(x, Z)`` with
``Y = (y, y', ..., y^(m-1))``.  If ``f`` is ``L``-Lipschitz in ``Y`` and
``|f(x, Y(x)) - g(x, Y(x))| <= phi(x)``, then for every ``k < m``

    |y^(k)(x) - z^(k)(x)| <= e^(c t) int_0^t e^(-c s) phi(a0 + s) ds + e^(c t) |Y0 - Z0|_2

with ``t = x - a0``, ``c = L`` when ``m = 1`` and ``c = sqrt(L^2 + 1)`` otherwise.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .derivs import taylor_integrate
from .errors import BoxExit, DomainExceeded, ExistenceIntervalWarning, IntegrationFailure, LipschitzWarning
from .odes import OdeInstance

M_SAMPLES = 512
M_INFLATE = 1.1
QUAD_EPSABS = 1e-10


def _zero(x):
    return 0.0


@dataclass(frozen=True)
class OdePair:
    """Two ODEs of the same order ``m = len(y0)`` on ``[a0, a0 + a]``.

    ``f`` and ``g`` take ``(x, Y)`` with ``Y`` of length ``m`` and return the
    ``m``-th derivative.  ``exact_y``/``exact_z`` optionally map ``x`` to
    ``(y, ..., y^(m-1))`` and bypass numerical integration.  ``taylor`` may hold
    ``OdeInstance`` objects for first-order pairs so the Taylor integrator is
    used.
    """

    f: Callable
    g: Callable
    y0: tuple
    z0: tuple
    L: float
    phi: Callable = _zero
    domain: tuple = (0.0, 1.0)
    b: float = 1.0
    C0: float = 1.0
    exact_y: Callable | None = field(default=None, compare=False)
    exact_z: Callable | None = field(default=None, compare=False)
    taylor: tuple | None = field(default=None, compare=False)
    name: str = "custom"

    def __post_init__(self):
        y0 = tuple(float(v) for v in np.atleast_1d(self.y0))
        z0 = tuple(float(v) for v in np.atleast_1d(self.z0))
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "z0", z0)
        if len(y0) != len(z0) or not y0:
            raise ValueError("y0 and z0 must be non-empty and of equal length")
        if self.L < 0:
            raise ValueError("Lipschitz constant must be non-negative")
        if self.domain[1] <= 0 or self.b <= 0:
            raise ValueError("domain length and box half-width must be positive")
        if max(np.linalg.norm(y0), np.linalg.norm(z0)) > self.C0 * (1 + 1e-12):
            raise ValueError("initial values must lie in the ball of radius C0")

    @property
    def order(self) -> int:
        return len(self.y0)

    @property
    def a0(self) -> float:
        return float(self.domain[0])

    @property
    def initial_gap(self) -> float:
        return float(np.linalg.norm(np.subtract(self.y0, self.z0)))

    def companion(self, which: str = "f") -> Callable:
        """First-order system ``W' = (W_2, ..., W_m, f(x, W))``."""
        rhs = self.f if which == "f" else self.g

        def F(x, w):
            return np.append(w[1:], rhs(x, w))

        return F

    def sup_rhs(self) -> float:
        """``M``: largest companion-field norm over both boxes, from a 512-point Sobol sample, inflated 10%."""
        m = self.order
        pts = qmc.Sobol(m + 1, scramble=False).random(M_SAMPLES)
        best = 0.0
        for which, centre in (("f", self.y0), ("g", self.z0)):
            F = self.companion(which)
            c = np.asarray(centre)
            samples = [(self.a0, c)]
            for p in pts:
                samples.append((self.a0 + p[0] * self.domain[1], c + self.b * (2 * p[1:] - 1)))
            for x, w in samples:
                best = max(best, float(np.linalg.norm(F(x, w))))
        return M_INFLATE * best

    def existence_interval(self) -> float:
        """``min(a, b / M)``."""
        M = self.sup_rhs()
        a = float(self.domain[1])
        return a if M == 0 else min(a, self.b / M)


def lipschitz_spot_check(pair: OdePair, samples: int = 256) -> float:
    """Largest ``|f(x, Y) - f(x, Y')| / |Y - Y'|_2`` over Sobol pairs in the ``f`` box.

    Emits :class:`LipschitzWarning` when it exceeds ``pair.L`` by more than 1e-9 relative.
    """
    m = pair.order
    pts = qmc.Sobol(2 * m + 1, scramble=False).random(samples)[1:]
    c = np.asarray(pair.y0)
    worst = 0.0
    for p in pts:
        x = pair.a0 + p[0] * pair.domain[1]
        u = c + pair.b * (2 * p[1:m + 1] - 1)
        v = c + pair.b * (2 * p[m + 1:] - 1)
        dist = float(np.linalg.norm(u - v))
        if dist > 0:
            worst = max(worst, abs(float(pair.f(x, u)) - float(pair.f(x, v))) / dist)
    if worst > pair.L * (1 + 1e-9) + 1e-12:
        warnings.warn(f"sampled Lipschitz quotient {worst:.4g} exceeds L={pair.L:g}", LipschitzWarning, stacklevel=2)
    return worst


def rate_constant(L: float, m: int) -> float:
    return float(L) if m == 1 else math.sqrt(L * L + 1.0)


def gronwall_bound(pair: OdePair, x: float, m: int | None = None, enforce_domain: bool = True) -> float:
    """Gronwall bound at ``x`` with the first-order (``m = 1``) or companion constant.

    Raises
    ------
    DomainExceeded
        If ``x`` lies outside ``[a0, a0 + min(a, b / M)]``.  With
        ``enforce_domain=False`` only ``x >= a0`` is required.
    """
    m = pair.order if m is None else int(m)
    if m < 1:
        raise ValueError("m must be at least 1")
    t = float(x) - pair.a0
    if t < -1e-15:
        raise DomainExceeded(f"x={x:g} precedes the initial point a0={pair.a0:g}")
    t = max(t, 0.0)
    if enforce_domain:
        alpha = pair.existence_interval()
        if t > alpha * (1 + 1e-12):
            raise DomainExceeded(f"x={x:g} is beyond the existence interval [{pair.a0:g}, {pair.a0 + alpha:g}]")
    c = rate_constant(pair.L, m)
    forcing = 0.0
    if t > 0:
        forcing, _ = integrate.quad(
            lambda s: math.exp(-c * s) * float(pair.phi(pair.a0 + s)),
            0.0, t, epsabs=QUAD_EPSABS, epsrel=1e-12, limit=200,
        )
    return math.exp(c * t) * (forcing + pair.initial_gap)


@dataclass(frozen=True)
class ViolationReport:
    max_ratio: float
    worst_x: float
    k: int
    zero_over_zero: bool
    xs: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "max_ratio": self.max_ratio,
            "worst_x": self.worst_x,
            "k": self.k,
            "zero_over_zero": self.zero_over_zero,
            "grid_points": int(self.xs.size),
        }


def _solve(pair: OdePair, which: str, grid: np.ndarray, quiet: bool = False) -> np.ndarray:
    """Values ``(Y(x_i))_i`` of shape ``(len(grid), m)``."""
    exact = pair.exact_y if which == "f" else pair.exact_z
    if exact is not None:
        return np.array([np.atleast_1d(exact(x)) for x in grid], float).reshape(grid.size, pair.order)
    start = np.asarray(pair.y0 if which == "f" else pair.z0)
    if pair.taylor is not None and pair.order == 1:
        ode = pair.taylor[0 if which == "f" else 1]
        with warnings.catch_warnings():
            if quiet:
                warnings.simplefilter("ignore", ExistenceIntervalWarning)
            traj = taylor_integrate(ode, grid)
        return traj.y[:, None]
    out = np.empty((grid.size, pair.order))
    inside = grid <= pair.a0
    out[inside] = start
    later = grid[~inside]
    if later.size:
        box = lambda x, w: pair.b - float(np.max(np.abs(w - start)))  # noqa: E731
        box.terminal = True
        sol = integrate.solve_ivp(
            pair.companion(which), (pair.a0, later[-1]), start, method="DOP853",
            t_eval=later, rtol=1e-12, atol=1e-14, events=box,
        )
        if sol.status == 1:
            raise BoxExit(sol.t_events[0][0])
        if not sol.success:
            raise IntegrationFailure(sol.message)
        out[~inside] = sol.y.T
    return out


def verify_pair(
    pair: OdePair,
    grid,
    m: int | None = None,
    k: int = 0,
    enforce_domain: bool = True,
    zero_tol: float = 1e-14,
) -> ViolationReport:
    """Largest ratio ``|y^(k) - z^(k)| / bound`` over ``grid``.

    A zero gap against a zero bound counts as ratio 0 and sets
    ``zero_over_zero``.  A non-zero gap against a zero bound is ``inf``.
    """
    grid = np.asarray(grid, float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a non-empty ascending 1-D sequence")
    if not 0 <= k < pair.order:
        raise ValueError(f"derivative index k must lie in [0, {pair.order - 1}]")
    lipschitz_spot_check(pair)
    quiet = not enforce_domain
    gap = np.abs(_solve(pair, "f", grid, quiet)[:, k] - _solve(pair, "g", grid, quiet)[:, k])
    bounds = np.array([gronwall_bound(pair, x, m, enforce_domain) for x in grid])
    ratios = np.zeros_like(gap)
    flag = False
    for i, (d, bd) in enumerate(zip(gap, bounds)):
        if bd > 0:
            ratios[i] = d / bd
        elif d <= zero_tol:
            flag = True
        else:
            ratios[i] = math.inf
    i = int(np.argmax(ratios))
    return ViolationReport(float(ratios[i]), float(grid[i]), int(k), flag, grid, ratios)


# builtin pairs ------------------------------------------------------------

def linear_pair(L=1.0, y0=1.0, z0=0.9, eps=0.0, domain=(0.0, 1.0), b=1.0, C0=None) -> OdePair:
    """``y' = L y`` against ``z' = L z + eps``, with closed-form solutions."""
    a0 = domain[0]

    def ey(x):
        return y0 * math.exp(L * (x - a0))

    def ez(x):
        t = x - a0
        growth = t if L == 0 else math.expm1(L * t) / L
        return z0 * math.exp(L * t) + eps * growth

    return OdePair(
        f=lambda x, w: L * w[0], g=lambda x, w: L * w[0] + eps,
        y0=(y0,), z0=(z0,), L=abs(L), phi=lambda x: abs(eps), domain=tuple(domain), b=b,
        C0=max(abs(y0), abs(z0)) if C0 is None else C0, exact_y=ey, exact_z=ez, name="linear",
    )


def sin_perturbed_pair(eps=0.05, y0=0.0, z0=0.0, domain=(0.0, 1.0), b=1.0, C0=1.0) -> OdePair:
    """``y' = sin y`` against ``z' = sin z + eps cos x``."""
    return OdePair(
        f=lambda x, w: math.sin(w[0]), g=lambda x, w: math.sin(w[0]) + eps * math.cos(x),
        y0=(y0,), z0=(z0,), L=1.0, phi=lambda x: abs(eps), domain=tuple(domain), b=b, C0=C0,
        name="sin_perturbed",
    )


def harmonic_pair(eps=0.05, y0=(1.0, 0.0), z0=(1.0, 0.0), domain=(0.0, 1.0), b=1.0, C0=1.0) -> OdePair:
    """Second order: ``y'' = -y`` against ``z'' = -z + eps cos x``."""
    return OdePair(
        f=lambda x, w: -w[0], g=lambda x, w: -w[0] + eps * math.cos(x),
        y0=tuple(y0), z0=tuple(z0), L=1.0, phi=lambda x: abs(eps), domain=tuple(domain), b=b, C0=C0,
        name="harmonic",
    )


PAIRS = {"linear": linear_pair, "sin_perturbed": sin_perturbed_pair, "harmonic": harmonic_pair}


def builtin_pair(name: str, **params) -> OdePair:
    try:
        factory = PAIRS[name]
    except KeyError:
        raise ValueError(f"unknown pair {name!r}; choose from {sorted(PAIRS)}") from None
    for key in ("domain", "y0", "z0"):
        if isinstance(params.get(key), list):
            params[key] = tuple(params[key])
    return factory(**params)


def load_pair(path: str) -> OdePair:
    """Read ``{"builtin": name, ...params}`` from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    spec = dict(spec)
    name = spec.pop("builtin", None)
    if name is None:
        raise ValueError("pair spec must name a builtin pair under 'builtin'")
    return builtin_pair(name, **spec)


def pair_from_instances(ode_f: OdeInstance, ode_g: OdeInstance, L: float, phi: Callable, domain=None) -> OdePair:
    """First-order pair built from two ODE instances; integrated with the Taylor method."""
    if ode_f.x0 != ode_g.x0:
        raise ValueError("both ODEs must start at the same abscissa")
    dom = (ode_f.x0, ode_f.box[0]) if domain is None else tuple(domain)
    b = min(ode_f.box[1], ode_g.box[1])
    return OdePair(
        f=lambda x, w: float(ode_f.f(x, w[0])), g=lambda x, w: float(ode_g.f(x, w[0])),
        y0=(ode_f.y0,), z0=(ode_g.y0,), L=L, phi=phi, domain=dom, b=b,
        C0=max(abs(ode_f.y0), abs(ode_g.y0), 1e-300), taylor=(ode_f, ode_g), name=f"{ode_f.name}|{ode_g.name}",
    )
