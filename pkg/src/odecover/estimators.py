"""Estimators for noisy observations ``Y_i = y(x_i) + eps_i`` of an ODE solution.

Kernel fits
    :func:`fit_constrained_krr` constrains a single weight vector through every
    kernel ``K_0..K_{beta+1}`` at once; :func:`fit_standard_spline` is the
    classical cubic-spline fit with one norm constraint and a linear part.

    Both work with the normalized Gram matrices ``K / n``.  Fitted values are
    ``K pi / sqrt(n)`` and ``pi^T (K / n) pi`` is the squared RKHS norm of the
    fitted function, so the constraint radii are norms of actual functions.

Parametric fits
    :func:`fit_nls` fits ``(theta, y0)`` by least squares on numerical (or
    closed-form) ODE solutions.  :func:`fit_picard` replaces the solution by the
    ``(R+1)``-th Picard iterate computed with a ``T``-slice midpoint rule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import BoxExit, IntegrationFailure
from .kernels import build_kernel, cross_kernel
from .odes import AUTONOMOUS, KINDS
from .qcqp import TrustRegionLS, _Profile, qcqp_solve

JITTER = 1e-12
CV_GRID = (1e-2, 1e-1, 1.0, 1e1, 1e2)


@dataclass(frozen=True)
class DesignSample:
    xs: np.ndarray
    ys: np.ndarray
    sigma: float | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, float)
        ys = np.asarray(self.ys, float)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise ValueError("xs and ys must be 1-D arrays of equal length")
        if xs.size < 2:
            raise ValueError("need at least two observations")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("xs must be strictly ascending")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self) -> int:
        return self.xs.size


@dataclass
class FitModel:
    kind: str
    intercept: np.ndarray
    weights: np.ndarray | None = None
    theta: np.ndarray | None = None
    y0: float | None = None
    fitted: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    predictor: Callable | None = field(default=None, repr=False, compare=False)

    def predict(self, x) -> np.ndarray:
        return self.predictor(np.atleast_1d(np.asarray(x, float)))

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else np.asarray(v, float).tolist()

        return {
            "method": self.kind,
            "intercept": arr(self.intercept),
            "weights": arr(self.weights),
            "theta": arr(self.theta),
            "y0": self.y0,
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


def in_sample_mse(fit: FitModel, truth: Callable, xs) -> float:
    xs = np.asarray(xs, float)
    return float(np.mean((fit.predict(xs) - np.asarray(truth(xs), float)) ** 2))


def _jittered(mat):
    n = mat.shape[0]
    return mat + JITTER * np.trace(mat) / n * np.eye(n)


# ---------------------------------------------------------------- kernel fits


def constraint_bounds(beta: int, variant: str, C: float) -> list[float]:
    """``C (k!)^2`` (autonomous) or ``C (2^k k!)^2`` (nonautonomous), ``k = 0..beta+1``."""
    if variant not in KINDS:
        raise ValueError(f"variant must be one of {KINDS}")
    base = 1 if variant == AUTONOMOUS else 2
    return [C * float(base ** k * math.factorial(k)) ** 2 for k in range(beta + 2)]


def fit_constrained_krr(
    data: DesignSample,
    beta: int = 0,
    variant: str = AUTONOMOUS,
    C: float = 1.0,
    cv: bool = False,
    method: str = "dual-newton",
) -> FitModel:
    """Least squares over ``alpha + sum_i c_i K_{beta+1}(., x_i)`` with one
    quadratic constraint per kernel order ``k = 0..beta+1``."""
    if not 0 <= beta <= 8:
        raise ValueError("beta must lie in 0..8")
    if C <= 0:
        raise ValueError("C must be positive")
    if cv:
        C = cross_validate_C(data, lambda d, c: fit_constrained_krr(d, beta, variant, c, method=method))
    xs, ys, n = data.xs, data.ys, data.n
    kernels = [build_kernel(k, xs).matrix for k in range(beta + 2)]
    top = kernels[-1]
    bounds = constraint_bounds(beta, variant, C)
    ells = [(_jittered(K) / n, r) for K, r in zip(kernels, bounds)]
    res = qcqp_solve(top / math.sqrt(n), ys, np.ones((n, 1)), ells, method=method)

    alpha, pi = float(res.alpha[0]), res.pi.copy()

    def predictor(x):
        return alpha + cross_kernel(beta + 1, x, xs) @ pi / math.sqrt(n)

    diag = res.diagnostics()
    diag.update(constraint_values=res.constraint_values.tolist(), constraint_bounds=bounds, C=C,
                beta=beta, variant=variant)
    return FitModel("ConstrainedKRR", np.array([alpha]), weights=pi, fitted=res.fitted,
                    diagnostics=diag, predictor=predictor)


class _SplineDesign:
    """Per-design factorizations for the cubic-spline fit, reused across responses."""

    def __init__(self, xs: np.ndarray):
        n = xs.size
        self.xs = xs
        self.n = n
        K = _jittered(build_kernel(1, xs).matrix)
        w, V = np.linalg.eigh(K)
        keep = w > 1e-13 * w[-1]
        self.V, self.d = V[:, keep], w[keep]
        # fitted values G pi = B u with |u|^2 = pi^T (K/n) pi
        self.B = self.V * np.sqrt(self.d)
        self.Z = np.column_stack([np.ones(n), xs])
        self.prof = _Profile(self.Z, n)
        self.A = self.prof.apply(self.B)
        self.tr = TrustRegionLS(self.A, n)


@lru_cache(maxsize=16)
def _spline_design(key: bytes) -> _SplineDesign:
    return _SplineDesign(np.frombuffer(key, dtype=float).copy())


def fit_standard_spline(data: DesignSample, radius: float = 1.0) -> FitModel:
    """``alpha_0 + alpha_1 x + sum_i c_i K_1(x, x_i)`` with squared norm at most ``radius``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    design = _spline_design(np.ascontiguousarray(data.xs, dtype=float).tobytes())
    n, ys = design.n, data.ys
    b = design.prof.apply(ys)
    # components at the round-off level of y carry no signal
    u, lam = design.tr.solve(b, radius, floor=64 * np.finfo(float).eps * float(np.linalg.norm(ys)))
    # zero radius: the kernel part is switched off and the smoother is the projection onto {1, x}
    pinned = bool(np.isinf(lam))
    if pinned:
        u, lam = np.zeros(design.B.shape[1]), 0.0
    fit_k = design.B @ u
    alpha = design.prof.intercept(ys - fit_k)
    fitted = design.Z @ alpha + fit_k
    coef = design.V @ (u / np.sqrt(design.d))  # c = pi / sqrt(n)
    pi = coef * math.sqrt(n)

    A = design.A
    station = -A.T @ (b - A @ u) / n + lam * u
    grad_f = A.T @ (b - A @ u) / n
    q = float(u @ u)
    kkt = max(
        np.abs(station).max() / (1 + np.abs(grad_f).max() + lam * np.abs(u).max()),
        abs(lam * (q - radius)) / (1 + radius) / max(1.0, lam),
        max(q - radius, 0.0) / (1 + radius),
    )
    shrink = np.zeros(design.tr.s.size) if pinned else design.tr.shrink_factors(lam)
    resid = ys - fitted
    xs = design.xs

    def predictor(x):
        return alpha[0] + alpha[1] * x + cross_kernel(1, x, xs) @ coef

    diag = {
        "objective": 0.5 * float(resid @ resid) / n,
        "constraint_slacks": [radius - q],
        "constraint_values": [q],
        "multipliers": [lam],
        "kkt_residual": float(kkt),
        "iterations": 1,
        "converged": True,
        "effective_dof": 2.0 + float(shrink.sum()),
        "smoother_frobenius2": 2.0 + float((shrink ** 2).sum()),
        "radius": radius,
    }
    return FitModel("SplineKRR", alpha, weights=pi, fitted=fitted, diagnostics=diag,
                    predictor=predictor)


def cross_validate_C(data: DesignSample, fitter: Callable, grid=CV_GRID, folds: int = 5) -> float:
    """Pick ``C`` from ``grid`` by ``folds``-fold cross-validation with interleaved folds."""
    idx = np.arange(data.n)
    best = None
    for C in grid:
        err = 0.0
        for f in range(folds):
            test = idx % folds == f
            train = DesignSample(data.xs[~test], data.ys[~test], data.sigma)
            fit = fitter(train, C)
            err += float(np.sum((fit.predict(data.xs[test]) - data.ys[test]) ** 2))
        if best is None or err < best[0]:
            best = (err, C)
    return best[1]


# ----------------------------------------------------------- parametric fits


@dataclass(frozen=True)
class OdeParamModel:
    """``y' = f(x, y; theta)`` with ``theta`` in the unit ``q``-ball and ``|y0| <= C0``."""

    f_param: Callable
    theta_dim: int
    q: float = 2.0
    L_K: float = 1.0
    y0_bound: float = 1.0
    box_b: float = 1.0
    solution: Callable | None = None  # (x, theta, y0) -> y, when known in closed form
    name: str = "custom"

    def __post_init__(self):
        if self.theta_dim < 1:
            raise ValueError("theta_dim must be at least 1")
        if not self.q >= 1:
            raise ValueError("q must lie in [1, inf]")


def linear_param_model(y0_bound=1.0, box_b=1.0) -> OdeParamModel:
    """``y' = -theta y``."""
    return OdeParamModel(
        f_param=lambda x, y, th: -th[0] * y,
        theta_dim=1, q=2.0, L_K=max(y0_bound + box_b, 1.0), y0_bound=y0_bound, box_b=box_b,
        solution=lambda x, th, y0: y0 * np.exp(-th[0] * np.asarray(x, float)),
        name="linear",
    )


def logistic_param_model(y0_bound=1.0, box_b=1.0) -> OdeParamModel:
    """``y' = theta_1 y (1 - y) + theta_2 sin(2 pi x)``."""

    def f(x, y, th):
        return th[0] * y * (1.0 - y) + th[1] * np.sin(2 * np.pi * x)

    return OdeParamModel(f, theta_dim=2, q=2.0, y0_bound=y0_bound, box_b=box_b, name="logistic")


PARAM_MODELS = {"linear": linear_param_model, "logistic": logistic_param_model}


def param_model(name: str, **kw) -> OdeParamModel:
    try:
        return PARAM_MODELS[name](**kw)
    except KeyError:
        raise ValueError(f"unknown parametric model {name!r}; choose from {sorted(PARAM_MODELS)}") from None


def _qnorm(theta, q):
    return float(np.linalg.norm(theta, ord=np.inf if np.isinf(q) else q))


def retract_to_ball(theta, q):
    """Radially shrink ``theta`` into the unit ``q``-ball."""
    nrm = _qnorm(theta, q)
    return theta if nrm <= 1 else theta / nrm


def theta_grid(dim: int, q: float, points: int = 17) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, points)
    cand = np.array(list(itertools.product(axis, repeat=dim)))
    return cand[[_qnorm(c, q) <= 1 + 1e-12 for c in cand]]


def solve_param_ode(model: OdeParamModel, theta, y0, xs) -> np.ndarray:
    """Solution values at ``xs`` (ascending, ``>= 0``), starting from ``y(0) = y0``."""
    xs = np.asarray(xs, float)
    if model.solution is not None:
        ys = np.asarray(model.solution(xs, theta, y0), float)
    else:
        lim = model.y0_bound + model.box_b

        def leave(x, y):
            return lim - abs(y[0])

        leave.terminal = True
        sol = integrate.solve_ivp(
            lambda x, y: [model.f_param(x, y[0], theta)],
            (0.0, float(xs[-1])), [float(y0)], method="DOP853",
            t_eval=xs, rtol=1e-10, atol=1e-12, events=leave,
        )
        if sol.status != 0 or sol.y.shape[1] != xs.size:
            raise IntegrationFailure(f"integration failed for theta={np.round(theta, 6).tolist()}")
        ys = sol.y[0]
    if not np.all(np.isfinite(ys)) or np.max(np.abs(ys)) > model.y0_bound + model.box_b:
        raise IntegrationFailure(f"solution left the box for theta={np.round(theta, 6).tolist()}")
    return ys


def _multistart(objective, starts, project, max_iter):
    """Nelder-Mead from each start, evaluating at projected points."""
    best = None
    for s in starts:
        res = optimize.minimize(lambda v: objective(project(v)), s, method="Nelder-Mead",
                                options={"maxiter": max_iter, "xatol": 1e-12, "fatol": 1e-16})
        v = project(res.x)
        val = objective(v)
        if best is None or val < best[0]:
            best = (val, v, res.nit)
    return best


def fit_nls(
    data: DesignSample,
    model: OdeParamModel,
    grid_points: int = 17,
    refine_top: int = 3,
    max_iter: int = 200,
) -> FitModel:
    """Nonlinear least squares over ``(theta, y0)`` in ``B_q(1) x [-C0, C0]``.

    A coarse grid over ``theta`` (with ``y0`` started at the first observation)
    picks ``refine_top`` starts for Nelder-Mead.  Candidates whose ODE solve
    fails are discarded and counted.
    """
    if model.theta_dim > 3:
        raise ValueError("grid search supports theta_dim <= 3")
    xs, ys = data.xs, data.ys
    K, C0 = model.theta_dim, model.y0_bound
    failed = []

    def sse(v):
        try:
            pred = solve_param_ode(model, v[:K], v[K], xs)
        except (IntegrationFailure, BoxExit):
            failed.append(v.tolist())
            return np.inf
        return 0.5 * float(np.mean((ys - pred) ** 2))

    def project(v):
        v = np.asarray(v, float).copy()
        v[:K] = retract_to_ball(v[:K], model.q)
        v[K] = np.clip(v[K], -C0, C0)
        return v

    y0_start = float(np.clip(ys[0], -C0, C0))
    grid = theta_grid(K, model.q, grid_points)
    scores = [sse(np.append(t, y0_start)) for t in grid]
    order = np.argsort(scores, kind="stable")[:refine_top]
    starts = [np.append(grid[i], y0_start) for i in order if np.isfinite(scores[i])]
    if not starts:
        raise IntegrationFailure("every grid candidate failed to integrate")
    val, v, nit = _multistart(sse, starts, project, max_iter)
    theta, y0 = v[:K].copy(), float(v[K])
    fitted = solve_param_ode(model, theta, y0, xs)

    def predictor(x):
        x = np.asarray(x, float)
        o = np.argsort(x, kind="stable")
        out = np.empty_like(x)
        out[o] = solve_param_ode(model, theta, y0, x[o])
        return out

    diag = {"objective": val, "iterations": int(nit), "failed_candidates": len(failed),
            "grid_size": int(len(grid))}
    return FitModel("NLS", np.array([y0]), theta=theta, y0=y0, fitted=fitted,
                    diagnostics=diag, predictor=predictor)


@dataclass(frozen=True)
class PicardIterates:
    """Iterates ``y_0 .. y_{R+1}`` stored at ``T + 1`` equispaced nodes on ``[0, alpha_bar]``."""

    nodes: np.ndarray
    values: np.ndarray  # shape (R + 2, T + 1)

    @property
    def R(self) -> int:
        return self.values.shape[0] - 2

    def __call__(self, r: int, x) -> np.ndarray:
        return np.interp(np.asarray(x, float), self.nodes, self.values[r])

    def final(self, x) -> np.ndarray:
        return self(self.values.shape[0] - 1, x)


def picard_iterates(
    model: OdeParamModel, theta, y0: float, R: int, T: int, alpha_bar: float
) -> PicardIterates:
    """``y_{r+1}(x) = y0 + int_0^x f(s, y_r(s)) ds`` by the midpoint rule with ``T`` slices.

    Midpoint values of ``y_r`` come from linear interpolation between nodes.
    """
    if R < 0 or T < 1:
        raise ValueError("need R >= 0 and T >= 1")
    if not 0 < alpha_bar < 1:
        raise ValueError("alpha_bar must lie in (0, 1)")
    theta = np.asarray(theta, float)
    h = alpha_bar / T
    nodes = np.linspace(0.0, alpha_bar, T + 1)
    mids = nodes[:-1] + 0.5 * h
    lim = model.y0_bound + model.box_b
    vals = np.empty((R + 2, T + 1))
    vals[0] = y0
    for r in range(R + 1):
        cur = vals[r]
        incr = h * np.asarray(model.f_param(mids, 0.5 * (cur[:-1] + cur[1:]), theta), float)
        vals[r + 1, 0] = y0
        vals[r + 1, 1:] = y0 + np.cumsum(incr)
        bad = np.nonzero(~(np.abs(vals[r + 1]) <= lim))[0]
        if bad.size:
            raise BoxExit(nodes[bad[0]], f"Picard iterate {r + 1} left the box at x={nodes[bad[0]]:.6g}")
    return PicardIterates(nodes, vals)


def fit_picard(
    data: DesignSample,
    model: OdeParamModel,
    y0_hat: float,
    R: int = 8,
    T: int = 256,
    alpha_bar: float | None = None,
    grid_points: int = 17,
    refine_top: int = 3,
    max_iter: int = 200,
) -> FitModel:
    """Least squares over ``theta`` of ``Y_i - y_{R+1}(x_i; theta)`` with ``y0`` fixed at ``y0_hat``."""
    xs, ys = data.xs, data.ys
    alpha_bar = float(xs[-1]) if alpha_bar is None else float(alpha_bar)
    if xs[0] < 0 or xs[-1] > alpha_bar * (1 + 1e-12):
        raise ValueError("design points must lie in [0, alpha_bar]")
    K = model.theta_dim
    failed = []

    def sse(th):
        try:
            it = picard_iterates(model, th, y0_hat, R, T, alpha_bar)
        except BoxExit:
            failed.append(np.asarray(th).tolist())
            return np.inf
        return 0.5 * float(np.mean((ys - it.final(xs)) ** 2))

    project = lambda v: retract_to_ball(np.asarray(v, float), model.q)
    grid = theta_grid(K, model.q, grid_points)
    scores = [sse(t) for t in grid]
    order = np.argsort(scores, kind="stable")[:refine_top]
    starts = [grid[i] for i in order if np.isfinite(scores[i])]
    if not starts:
        raise IntegrationFailure("every grid candidate left the box")
    val, theta, nit = _multistart(sse, starts, project, max_iter)
    iters = picard_iterates(model, theta, y0_hat, R, T, alpha_bar)

    def predictor(x):
        return iters.final(x)

    diag = {"objective": val, "iterations": int(nit), "failed_candidates": len(failed),
            "R": R, "T": T, "alpha_bar": alpha_bar}
    return FitModel("Picard", np.array([y0_hat]), theta=np.asarray(theta, float).copy(), y0=y0_hat,
                    fitted=iters.final(xs), diagnostics=diag, predictor=predictor)
