"""High-order solution derivatives of scalar first-order ODEs.

For ``y' = f(y)`` every derivative ``y^(k)`` is a sum of products
``f^(a_1)(y) * ... * f^(a_k)(y)`` with ``a_1 + ... + a_k = k - 1``.  Differentiating
such a product once more replaces some ``a_j`` by ``a_j + 1`` and appends a new
factor ``f`` (exponent 0), which is how the expansions here are generated.

For ``y' = f(x, y)`` a factor is a pair ``(a, b)`` standing for
``d^(a+b) f / dx^a dy^b``.  Its total derivative is
``D^(a+1, b) f + D^(a, b+1) f * f``, so a factor either gains an ``x``-order in
place or gains a ``y``-order together with one extra factor ``(0, 0)``.
Products then have variable length, with entries summing to ``k - 1``.

Identical products are merged, so a :class:`DerivExpansion` stores each
distinct product once, sorted descending, together with its multiplicity.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    BoxExit,
    ExistenceIntervalWarning,
    HypothesisViolated,
    OracleOrderExceeded,
    StepUnderflow,
)
from .odes import AUTONOMOUS, NONAUTONOMOUS, OdeInstance

MAX_K_AUTONOMOUS = 20
MAX_K_NONAUTONOMOUS = 16
MIN_STEP = 1e-12


class DerivTuple(NamedTuple):
    """One distinct product of derivatives of ``f``.

    ``entries`` holds integers (autonomous) or ``(a, b)`` pairs (nonautonomous),
    sorted descending.
    """

    entries: tuple
    multiplicity: int

    @property
    def weight(self) -> int:
        """Sum of all derivative orders in the product."""
        if self.entries and isinstance(self.entries[0], tuple):
            return sum(a + b for a, b in self.entries)
        return sum(self.entries)

    @property
    def max_order(self) -> int:
        if self.entries and isinstance(self.entries[0], tuple):
            return max(a + b for a, b in self.entries)
        return max(self.entries)


@dataclass(frozen=True)
class DerivExpansion:
    """``y^(k)`` written as a multiset of :class:`DerivTuple`."""

    order: int
    kind: str
    terms: tuple

    @property
    def total_multiplicity(self) -> int:
        return sum(t.multiplicity for t in self.terms)

    @property
    def max_order(self) -> int:
        """Highest derivative order of ``f`` appearing in any product."""
        return max(t.max_order for t in self.terms)

    def __len__(self):
        return len(self.terms)

    def as_dict(self) -> dict:
        return {t.entries: t.multiplicity for t in self.terms}


def _canon(entries) -> tuple:
    return tuple(sorted(entries, reverse=True))


def _freeze(order, kind, counter: Counter) -> DerivExpansion:
    terms = tuple(DerivTuple(e, int(c)) for e, c in sorted(counter.items(), reverse=True))
    return DerivExpansion(order, kind, terms)


def differentiate(exp: DerivExpansion) -> DerivExpansion:
    """Apply the product-rule step once, returning the expansion of order ``k + 1``."""
    out = Counter()
    for term in exp.terms:
        e, c = term.entries, term.multiplicity
        for j in range(len(e)):
            if exp.kind == AUTONOMOUS:
                out[_canon(e[:j] + (e[j] + 1,) + e[j + 1:] + (0,))] += c
            else:
                a, b = e[j]
                out[_canon(e[:j] + ((a + 1, b),) + e[j + 1:])] += c
                out[_canon(e[:j] + ((a, b + 1),) + e[j + 1:] + ((0, 0),))] += c
    return _freeze(exp.order + 1, exp.kind, out)


@lru_cache(maxsize=None)
def _expand(kind: str, k: int) -> DerivExpansion:
    if k == 1:
        first = (0,) if kind == AUTONOMOUS else ((0, 0),)
        return DerivExpansion(1, kind, (DerivTuple(first, 1),))
    return differentiate(_expand(kind, k - 1))


def _check_k(k, cap, label):
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"derivative order must be a positive integer, got {k!r}")
    if k > cap:
        raise ValueError(f"{label} expansions are capped at k={cap}, got k={k}")


def expand_autonomous(k: int, max_k: int = MAX_K_AUTONOMOUS) -> DerivExpansion:
    """Expansion of ``y^(k)`` for ``y' = f(y)``.

    The total multiplicity is exactly ``(k-1)!``.

    >>> expand_autonomous(3).as_dict()
    {(2, 0, 0): 1, (1, 1, 0): 1}
    """
    _check_k(k, max_k, "autonomous")
    return _expand(AUTONOMOUS, int(k))


def expand_nonautonomous(k: int, max_k: int = MAX_K_NONAUTONOMOUS) -> DerivExpansion:
    """Expansion of ``y^(k)`` for ``y' = f(x, y)``.

    The total multiplicity never exceeds ``2^(k-1) (k-1)!``.
    """
    _check_k(k, max_k, "nonautonomous")
    return _expand(NONAUTONOMOUS, int(k))


def expand(k: int, kind: str) -> DerivExpansion:
    return expand_autonomous(k) if kind == AUTONOMOUS else expand_nonautonomous(k)


def _multi_index(entry, kind):
    return (0, entry) if kind == AUTONOMOUS else entry


def eval_expansion(exp: DerivExpansion, ode: OdeInstance, x, y):
    """Evaluate ``sum_i mult_i * prod_j D^{p_ij} f(x, y)``.

    ``x`` and ``y`` may be arrays of matching shape.  On the true trajectory
    (``y = y(x)``) the result is ``y^(k)(x)``.
    """
    return _evaluate(exp, ode, np.asarray(x, float), np.asarray(y, float), {})


def _evaluate(exp, ode, x, y, oracle_values: dict):
    """``eval_expansion`` sharing oracle values with other expansions at the same point."""
    indices, powers, mults, top = _compiled(exp)
    if top > ode.beta_max:
        raise OracleOrderExceeded(
            f"order-{exp.order} expansion needs derivatives of f up to order "
            f"{top}, oracle supports {ode.beta_max}"
        )
    # an autonomous oracle returns 0 for x-derivatives, so the converse pairing is valid
    if exp.kind == AUTONOMOUS and ode.kind == NONAUTONOMOUS:
        raise ValueError("autonomous expansion cannot be evaluated on a nonautonomous ODE")

    shape = np.broadcast(x, y).shape
    values = []
    for p in indices:
        d = oracle_values.get(p)
        if d is None:
            d = np.broadcast_to(np.asarray(ode.deriv_oracle(p, x, y), float), shape)
            oracle_values[p] = d
        values.append(d)
    if not shape:
        return float(mults @ np.prod(np.array(values) ** powers, axis=1))
    prods = np.ones((len(mults),) + shape)
    for j, d in enumerate(values):
        e = powers[:, j]
        used = e > 0
        prods[used] *= d[None] ** e[used].reshape((-1,) + (1,) * len(shape))
    return np.tensordot(mults, prods, axes=1)


@lru_cache(maxsize=None)
def _compiled(exp: DerivExpansion):
    """Distinct multi-indices, the power of each in every product, and multiplicities."""
    indices = sorted({_multi_index(e, exp.kind) for t in exp.terms for e in t.entries})
    col = {p: j for j, p in enumerate(indices)}
    powers = np.zeros((len(exp.terms), len(indices)), dtype=int)
    for i, t in enumerate(exp.terms):
        for e in t.entries:
            powers[i, col[_multi_index(e, exp.kind)]] += 1
    mults = np.array([t.multiplicity for t in exp.terms], float)
    return indices, powers, mults, exp.max_order


def solution_derivatives(ode: OdeInstance, order: int, x, y) -> np.ndarray:
    """Stack ``[y, y', ..., y^(order)]`` evaluated at points ``(x, y)`` on a trajectory."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    out = [y + 0 * x]
    for k in range(1, order + 1):
        out.append(np.broadcast_to(eval_expansion(expand(k, ode.kind), ode, x, y), out[0].shape))
    return np.stack(out, axis=-1)


@dataclass(frozen=True)
class Trajectory:
    """Grid values of a solution and its first ``order`` derivatives.

    ``derivs[i, k]`` is ``y^(k)(xs[i])``.
    """

    xs: np.ndarray
    derivs: np.ndarray
    order: int
    steps: int

    @property
    def y(self) -> np.ndarray:
        return self.derivs[:, 0]


def default_order(ode: OdeInstance) -> int:
    return min(ode.beta_max + 1, 10)


def _step_size(coeffs, tol, scale, remaining):
    # Jorba-Zou style: control the last two retained Taylor coefficients.
    h = remaining
    for j in (len(coeffs) - 1, len(coeffs) - 2):
        c = abs(coeffs[j])
        if j >= 1 and c > 0:
            h = min(h, (tol * scale / c) ** (1.0 / j))
    return h


def taylor_integrate(
    ode: OdeInstance,
    grid: Sequence[float],
    order: int | None = None,
    tol: float = 1e-12,
) -> Trajectory:
    """Integrate ``ode`` forward from ``x0`` by Taylor series stepping.

    Taylor coefficients come from :func:`eval_expansion`.  Steps are chosen so
    that the last retained term is below ``tol * max(|y|, 1)``, and every grid
    point is hit exactly.

    Raises
    ------
    BoxExit
        If ``|y - y0|`` exceeds the box half-width ``b``.
    StepUnderflow
        If the adaptive step drops below ``1e-12``.
    """
    grid = np.asarray(grid, float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    if grid[0] < ode.x0:
        raise ValueError("grid must start at or after x0")
    order = default_order(ode) if order is None else int(order)
    if order < 1:
        raise ValueError("order must be at least 1")
    if order > ode.beta_max + 1:
        raise OracleOrderExceeded(f"Taylor order {order} needs f-derivatives beyond beta_max={ode.beta_max}")

    alpha = ode.existence_interval()
    if grid[-1] > ode.x0 + alpha * (1 + 1e-12):
        warnings.warn(
            f"grid reaches x={grid[-1]:g}, past the guaranteed existence interval "
            f"[{ode.x0:g}, {ode.x0 + alpha:g}]",
            ExistenceIntervalWarning,
            stacklevel=2,
        )

    exps = [expand(k, ode.kind) for k in range(1, order + 1)]
    factorials = np.array([math.factorial(k) for k in range(order + 1)], float)
    b = ode.box[1]

    def coeffs_at(x, y):
        c = np.empty(order + 1)
        c[0] = y
        shared = {}
        xa, ya = np.asarray(x, float), np.asarray(y, float)
        for k, e in enumerate(exps, start=1):
            c[k] = _evaluate(e, ode, xa, ya, shared)
        return c

    rows = np.empty((grid.size, order + 1))
    x, y = float(ode.x0), float(ode.y0)
    steps = 0
    for i, target in enumerate(grid):
        while target - x > 0:
            c = coeffs_at(x, y) / factorials
            h = _step_size(c, tol, max(abs(y), 1.0), target - x)
            if h < MIN_STEP and target - x > MIN_STEP:
                raise StepUnderflow(f"step {h:.3g} below {MIN_STEP:g} at x={x:.6g}")
            # Horner on the Taylor polynomial
            y_new = c[-1]
            for cj in c[-2::-1]:
                y_new = y_new * h + cj
            x = target if target - (x + h) <= 1e-15 * max(1.0, abs(target)) else x + h
            y = float(y_new)
            steps += 1
            if not np.isfinite(y) or abs(y - ode.y0) > b:
                raise BoxExit(x)
        rows[i] = coeffs_at(x, y) * 1.0
    return Trajectory(grid.copy(), rows, order, steps)


@dataclass(frozen=True)
class BoundCertificate:
    """Observed ``max |y^(k)|`` on a grid against the factorial bound."""

    order: int
    observed_max: float
    bound: float
    slack: float
    grid: np.ndarray
    worst_x: float

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "observed_max": self.observed_max,
            "bound": self.bound,
            "slack": self.slack,
            "worst_x": self.worst_x,
            "grid_points": int(len(self.grid)),
        }


def factorial_bound(k: int, kind: str) -> float:
    """``(k-1)!`` for autonomous ODEs, ``2^(k-1) (k-1)!`` for nonautonomous ones."""
    base = math.factorial(k - 1)
    return float(base if kind == AUTONOMOUS else 2 ** (k - 1) * base)


def _hypothesis_indices(kind, max_order):
    if kind == AUTONOMOUS:
        return [(0, a) for a in range(max_order + 1)]
    return [(a, s - a) for s in range(max_order + 1) for a in range(s + 1)]


def certify_bounds(
    ode: OdeInstance,
    k_max: int,
    grid: Sequence[float] | None = None,
    tol: float = 1e-8,
    grid_points: int = 101,
) -> list[BoundCertificate]:
    """Certify ``|y^(k)| <= (k-1)!`` (or ``2^(k-1)(k-1)!``) for ``k = 1..k_max``.

    The unit bound on the derivatives of ``f`` is spot-checked along the
    computed trajectory; a violation raises :class:`HypothesisViolated`
    instead of returning a meaningless certificate.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if k_max - 1 > ode.beta_max:
        raise OracleOrderExceeded(f"k_max={k_max} needs f-derivatives up to {k_max - 1}")
    if grid is None:
        grid = np.linspace(ode.x0, ode.x0 + ode.existence_interval(), grid_points)
    grid = np.asarray(grid, float)
    ys = taylor_integrate(ode, grid).y

    for p in _hypothesis_indices(ode.kind, k_max - 1):
        vals = np.abs(np.asarray(ode.deriv_oracle(p, grid, ys), float))
        worst = float(np.max(vals))
        if worst > 1 + tol:
            i = int(np.argmax(vals))
            raise HypothesisViolated(
                f"|D^{p} f| = {worst:.6g} > 1 at (x, y) = ({grid[i]:.6g}, {ys[i]:.6g})"
            )

    certs = []
    for k in range(1, k_max + 1):
        vals = np.abs(np.broadcast_to(eval_expansion(expand(k, ode.kind), ode, grid, ys), grid.shape))
        i = int(np.argmax(vals))
        bound = factorial_bound(k, ode.kind)
        certs.append(BoundCertificate(k, float(vals[i]), bound, bound - float(vals[i]), grid, float(grid[i])))
    return certs
