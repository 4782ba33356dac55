"""Scalar first-order ODE instances and the builtin registry.

An :class:`OdeInstance` carries a *derivative oracle* rather than a symbolic
right-hand side.  The oracle is called as ``oracle((px, py), x, y)`` and must
return the partial derivative ``d^(px+py) f / dx^px dy^py`` evaluated at
``(x, y)``.  Arguments may be numpy arrays; the oracle must broadcast.
Oracles are expected to be pure, which makes every routine in the package
safe to call concurrently on a shared instance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

Oracle = Callable[[tuple, "np.ndarray | float", "np.ndarray | float"], "np.ndarray | float"]

AUTONOMOUS = "autonomous"
NONAUTONOMOUS = "nonautonomous"
KINDS = (AUTONOMOUS, NONAUTONOMOUS)


@dataclass(frozen=True)
class OdeInstance:
    """``y' = f(y)`` or ``y' = f(x, y)`` with ``y(x0) = y0``.

    ``box = (a, b)`` are the half-widths of ``[x0-a, x0+a] x [y0-b, y0+b]``.
    ``beta_max`` is the highest total derivative order the oracle supports.
    """

    kind: str
    deriv_oracle: Oracle
    y0: float
    x0: float = 0.0
    box: tuple = (1.0, 1.0)
    beta_max: int = 20
    name: str = "custom"
    solution: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        a, b = self.box
        if not (a > 0 and b > 0):
            raise ValueError("box half-widths must be positive")

    def f(self, x, y):
        return self.deriv_oracle((0, 0), x, y)

    def sup_abs_f(self, n_points: int = 256, inflate: float = 1.1) -> float:
        """Grid estimate of ``max |f|`` over the box, inflated by 10%."""
        a, b = self.box
        if self.kind == AUTONOMOUS:
            ys = np.linspace(self.y0 - b, self.y0 + b, n_points)
            vals = self.f(self.x0, ys)
        else:
            side = max(2, int(round(math.sqrt(n_points))))
            xs, ys = np.meshgrid(
                np.linspace(self.x0 - a, self.x0 + a, side),
                np.linspace(self.y0 - b, self.y0 + b, side),
            )
            vals = self.f(xs, ys)
        return inflate * float(np.max(np.abs(vals)))

    def existence_interval(self) -> float:
        """``alpha = min(a, b / M)`` with ``M`` from :meth:`sup_abs_f`."""
        a, b = self.box
        m = self.sup_abs_f()
        return a if m == 0 else min(a, b / m)

    def with_(self, **changes) -> "OdeInstance":
        return replace(self, **changes)


def _zeros_like(x, y):
    return np.zeros(np.broadcast(np.asarray(x, float), np.asarray(y, float)).shape) \
        if np.ndim(x) or np.ndim(y) else 0.0


def _sin_shift(order, t):
    # d^k/dt^k sin(t) = sin(t + k*pi/2); exact signs for integer k avoid rounding at pi/2
    r = order % 4
    return (np.sin(t), np.cos(t), -np.sin(t), -np.cos(t))[r]


def _cos_shift(order, t):
    return _sin_shift(order + 1, t)


def extremal_ode(box=(1.0, 0.5)) -> OdeInstance:
    """``y' = exp(-y - 1/2)``, ``y(0) = -1/2``: every ``|y^(k)(0)|`` equals ``(k-1)!``."""

    def oracle(p, x, y):
        px, py = p
        if px:
            return _zeros_like(x, y)
        return (-1.0) ** py * np.exp(-np.asarray(y, float) - 0.5) + 0 * np.asarray(x, float)

    def solution(x):
        return -0.5 + np.log1p(np.asarray(x, float))

    return OdeInstance(AUTONOMOUS, oracle, y0=-0.5, box=box, name="extremal", solution=solution)


def linear_ode(theta=0.5, y0=1.0, box=(1.0, 1.0)) -> OdeInstance:
    """``y' = -theta * y``."""

    def oracle(p, x, y):
        px, py = p
        y = np.asarray(y, float) + 0 * np.asarray(x, float)
        if px:
            return np.zeros_like(y)
        if py == 0:
            return -theta * y
        if py == 1:
            return np.full_like(y, -theta)
        return np.zeros_like(y)

    def solution(x):
        return y0 * np.exp(-theta * np.asarray(x, float))

    return OdeInstance(AUTONOMOUS, oracle, y0=y0, box=box, name=f"linear:{theta:g}",
                       solution=solution)


def sin_ode(y0=1.0, scale=1.0, box=(1.0, 1.0)) -> OdeInstance:
    """``y' = scale * sin(y)``."""

    def oracle(p, x, y):
        px, py = p
        y = np.asarray(y, float) + 0 * np.asarray(x, float)
        if px:
            return np.zeros_like(y)
        return scale * _sin_shift(py, y)

    def solution(x):
        # tan(y/2) = tan(y0/2) * exp(scale * x)
        return 2.0 * np.arctan(np.tan(y0 / 2.0) * np.exp(scale * np.asarray(x, float)))

    return OdeInstance(AUTONOMOUS, oracle, y0=y0, box=box, name="sin", solution=solution)


def cos_ode(y0=0.0, scale=1.0, box=(1.0, 1.0)) -> OdeInstance:
    """``y' = scale * cos(y)``."""

    def oracle(p, x, y):
        px, py = p
        y = np.asarray(y, float) + 0 * np.asarray(x, float)
        if px:
            return np.zeros_like(y)
        return scale * _cos_shift(py, y)

    return OdeInstance(AUTONOMOUS, oracle, y0=y0, box=box, name="cos")


def zero_ode(y0=0.0, box=(1.0, 1.0)) -> OdeInstance:
    def oracle(p, x, y):
        return _zeros_like(x, y)

    return OdeInstance(AUTONOMOUS, oracle, y0=y0, box=box, name="zero",
                       solution=lambda x: np.full(np.shape(x), y0, dtype=float))


def sinxy_ode(y0=0.0, scale=1.0, box=(1.0, 1.0)) -> OdeInstance:
    """``y' = scale * sin(x + y)``; every partial derivative is bounded by ``scale``."""

    def oracle(p, x, y):
        return scale * _sin_shift(p[0] + p[1], np.asarray(x, float) + np.asarray(y, float))

    return OdeInstance(NONAUTONOMOUS, oracle, y0=y0, box=box, name="sinxy")


def sinx_cosy_ode(y0=0.0, scale=1.0, box=(1.0, 1.0)) -> OdeInstance:
    """``y' = scale * sin(x) * cos(y)``."""

    def oracle(p, x, y):
        return scale * _sin_shift(p[0], np.asarray(x, float)) * _cos_shift(p[1], np.asarray(y, float))

    return OdeInstance(NONAUTONOMOUS, oracle, y0=y0, box=box, name="sinx_cosy")


def cos_xmy_ode(y0=0.0, scale=0.5, box=(1.0, 1.0)) -> OdeInstance:
    """``y' = scale * cos(x - y)``."""

    def oracle(p, x, y):
        px, py = p
        t = np.asarray(x, float) - np.asarray(y, float)
        return scale * (-1.0) ** py * _cos_shift(px + py, t)

    return OdeInstance(NONAUTONOMOUS, oracle, y0=y0, box=box, name="cos_xmy")


# Separable right-hand sides f(x): name -> (k-th derivative, antiderivative with F(0) = 0).
_TWO_PI = 2.0 * math.pi
SEPARABLE = {
    "cos2pi": (
        lambda k, x: _TWO_PI ** (k - 1) * _cos_shift(k, _TWO_PI * x),
        lambda x: np.sin(_TWO_PI * x) / _TWO_PI ** 2,
    ),
    "sin": (lambda k, x: _sin_shift(k, x), lambda x: 1.0 - np.cos(x)),
    "cos": (lambda k, x: _cos_shift(k, x), lambda x: np.sin(x)),
    "expneg": (lambda k, x: (-1.0) ** k * np.exp(-x), lambda x: 1.0 - np.exp(-x)),
    "zero": (lambda k, x: 0.0 * x, lambda x: 0.0 * x),
}


def separable_ode(fname: str, y0=0.0, box=(1.0, 1.0)) -> OdeInstance:
    """``y' = f(x)`` for a tabulated ``f``; the solution is ``y0 + F(x)``."""
    try:
        deriv, anti = SEPARABLE[fname]
    except KeyError:
        raise ValueError(f"unknown separable function {fname!r}; "
                         f"choose from {sorted(SEPARABLE)}") from None

    def oracle(p, x, y):
        px, py = p
        x = np.asarray(x, float) + 0 * np.asarray(y, float)
        if py:
            return np.zeros_like(x)
        return deriv(px, x)

    def solution(x):
        return y0 + anti(np.asarray(x, float))

    return OdeInstance(NONAUTONOMOUS, oracle, y0=y0, box=box, name=f"separable:{fname}",
                       solution=solution)


_BUILTINS = {
    "extremal": extremal_ode,
    "linear": linear_ode,
    "sin": sin_ode,
    "cos": cos_ode,
    "zero": zero_ode,
    "sinxy": sinxy_ode,
    "sinx_cosy": sinx_cosy_ode,
    "cos_xmy": cos_xmy_ode,
}


def builtin_names():
    return sorted(_BUILTINS) + [f"separable:{k}" for k in sorted(SEPARABLE)]


def builtin_ode(name: str, **params) -> OdeInstance:
    """Look up a builtin ODE.

    ``linear`` accepts an inline parameter as ``linear:0.8``; separable
    right-hand sides are addressed as ``separable:<fname>``.
    """
    if "box" in params:
        params["box"] = tuple(params["box"])
    if name.startswith("separable:"):
        return separable_ode(name.split(":", 1)[1], **params)
    if name.startswith("linear:"):
        params.setdefault("theta", float(name.split(":", 1)[1]))
        name = "linear"
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown builtin ODE {name!r}; choose from {builtin_names()}") from None
    return factory(**params)


def load_ode(spec: str) -> OdeInstance:
    """Resolve a builtin name, or a JSON file ``{"builtin": name, ...params}``."""
    path = Path(spec)
    if path.suffix == ".json" and path.exists():
        params = json.loads(path.read_text())
        name = params.pop("builtin")
        return builtin_ode(name, **params)
    return builtin_ode(spec)
