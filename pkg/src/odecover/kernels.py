"""Spline-type kernels on ``[0, 1]``.

``K_0(x, x') = min(x, x')`` and for ``k > 0``

    K_k(x, x') = int_0^1 (x - t)_+^k (x' - t)_+^k dt / (k!)^2 .

The integrand is a polynomial of degree ``2k`` on ``[0, min(x, x')]`` and zero
beyond, so ``k + 1`` Gauss-Legendre nodes integrate it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def _check_unit(xs):
    xs = np.asarray(xs, float)
    if np.any(~np.isfinite(xs)) or np.any(xs < 0) or np.any(xs > 1):
        raise DomainError("kernel arguments must lie in [0, 1]")
    return xs


def _check_order(k):
    if int(k) != k or k < 0:
        raise ValueError(f"kernel order must be a non-negative integer, got {k!r}")
    return int(k)


def kernel_values(k: int, x, x2) -> np.ndarray:
    """Broadcasting evaluation of ``K_k(x, x2)``."""
    k = _check_order(k)
    x = _check_unit(x)
    x2 = _check_unit(x2)
    lo = np.minimum(x, x2)
    if k == 0:
        return lo
    nodes, weights = np.polynomial.legendre.leggauss(k + 1)
    half = lo / 2.0
    out = np.zeros(np.broadcast(x, x2).shape)
    for u, w in zip(nodes, weights):
        t = half * (u + 1.0)
        out = out + w * half * (x - t) ** k * (x2 - t) ** k
    return out / math.factorial(k) ** 2


def kernel_entry(k: int, x: float, x2: float) -> float:
    return float(kernel_values(k, x, x2))


@dataclass(frozen=True)
class KernelSystem:
    """Kernel matrix ``[K_k(x_i, x_j)]`` on a design."""

    order: int
    matrix: np.ndarray
    design: np.ndarray

    @property
    def n(self) -> int:
        return self.design.size

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def build_kernel(k: int, xs) -> KernelSystem:
    xs = _check_unit(np.atleast_1d(xs))
    mat = kernel_values(k, xs[:, None], xs[None, :])
    mat = 0.5 * (mat + mat.T)
    return KernelSystem(_check_order(k), mat, xs.copy())


def cross_kernel(k: int, x_new, xs) -> np.ndarray:
    """``[K_k(x_new_i, xs_j)]`` for predictions."""
    x_new = np.atleast_1d(np.asarray(x_new, float))
    return kernel_values(k, x_new[:, None], np.asarray(xs, float)[None, :])
