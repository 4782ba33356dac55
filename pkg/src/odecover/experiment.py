"""Monte Carlo experiments: noisy samples of an ODE solution, fits, and rate regressions.

Config files are INI text read with :mod:`configparser`::

    [experiment]
    truth = separable:cos2pi      ; builtin ODE name
    design = equispaced           ; or uniform
    interval = 1.0                ; right end of the design; default 0.95 * alpha
    n_ladder = 64, 128, 256       ; ascending sample sizes
    sigma = 0.5
    method = spline               ; spline | krr | nls | picard
    replications = 50
    seed = 20240611
    aggregate = mean              ; or trimmed (5% trimmed mean)

    [truth]                       ; optional keyword arguments of the builtin
    y0 = 0.0

    [method]                      ; optional estimator parameters
    radius = 1.0

    [output]
    runs = runs.csv
    rates = rates.json
    bounds = bounds.csv           ; omit to skip the theory table
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .derivs import taylor_integrate
from .errors import DeltaOutOfRange, InsufficientData, OdeCoverError
from .estimators import (
    DesignSample,
    fit_constrained_krr,
    fit_nls,
    fit_picard,
    fit_standard_spline,
    param_model,
)
from .odes import builtin_ode

METHODS = ("spline", "krr", "nls", "picard")
DESIGNS = ("equispaced", "uniform")
AGGREGATES = ("mean", "trimmed")
TRIM = 0.05


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@dataclass(frozen=True)
class ExperimentConfig:
    truth: str
    n_ladder: tuple
    sigma: float
    method: str = "spline"
    replications: int = 10
    seed: int = 0
    design: str = "equispaced"
    interval: float | None = None
    aggregate: str = "mean"
    truth_params: tuple = ()
    method_params: tuple = ()
    runs_path: str = "runs.csv"
    rates_path: str = "rates.json"
    bounds_path: str | None = None

    def __post_init__(self):
        ladder = tuple(int(n) for n in self.n_ladder)
        object.__setattr__(self, "n_ladder", ladder)
        object.__setattr__(self, "truth_params", tuple(sorted(dict(self.truth_params).items())))
        object.__setattr__(self, "method_params", tuple(sorted(dict(self.method_params).items())))
        if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n_ladder must be non-empty and strictly ascending")
        if ladder[0] < 2:
            raise ValueError("sample sizes must be at least 2")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}")
        if self.aggregate not in AGGREGATES:
            raise ValueError(f"aggregate must be one of {AGGREGATES}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        return cls.from_parser(parser)

    @classmethod
    def from_string(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.read_string(text)
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser) -> "ExperimentConfig":
        ex = parser["experiment"]
        out = parser["output"] if parser.has_section("output") else {}
        interval = ex.get("interval")
        return cls(
            truth=ex["truth"],
            n_ladder=tuple(int(v) for v in ex["n_ladder"].replace(",", " ").split()),
            sigma=float(ex["sigma"]),
            method=ex.get("method", "spline"),
            replications=int(ex.get("replications", "10")),
            seed=int(ex.get("seed", "0")),
            design=ex.get("design", "equispaced"),
            interval=None if interval is None else float(interval),
            aggregate=ex.get("aggregate", "mean"),
            truth_params={k: _value(v) for k, v in parser["truth"].items()} if parser.has_section("truth") else {},
            method_params={k: _value(v) for k, v in parser["method"].items()} if parser.has_section("method") else {},
            runs_path=out.get("runs", "runs.csv"),
            rates_path=out.get("rates", "rates.json"),
            bounds_path=out.get("bounds"),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_ladder"] = list(self.n_ladder)
        d["truth_params"] = dict(self.truth_params)
        d["method_params"] = dict(self.method_params)
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RunRecord:
    """One fit. ``mse`` is ``None`` when the fit failed."""

    n: int
    rep: int
    seed: int
    method: str
    mse: float | None
    failed: bool = False
    config_hash: str = field(default="", compare=False)
    wall_time: float = field(default=0.0, compare=False)
    diagnostics: dict = field(default_factory=dict, compare=False)
    error: str = field(default="", compare=False)

    @property
    def key(self) -> tuple:
        return (self.config_hash, self.n, self.rep)


def record_stream(seed: int, n: int, rep: int) -> np.random.Generator:
    """Counter-based generator for one ``(n, rep)`` cell; streams of different cells never overlap."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(n), int(rep)])))


def truth_ode(config: ExperimentConfig):
    return builtin_ode(config.truth, **dict(config.truth_params))


def design_interval(config: ExperimentConfig, ode=None) -> float:
    ode = truth_ode(config) if ode is None else ode
    right = 0.95 * ode.existence_interval() if config.interval is None else config.interval
    if not 0 < right <= 1:
        raise ValueError("design interval must lie in (0, 1]")
    return right


def truth_values(ode, xs: np.ndarray) -> np.ndarray:
    if ode.solution is not None:
        return np.asarray(ode.solution(xs), float)
    return taylor_integrate(ode, xs).y


def draw_sample(config: ExperimentConfig, n: int, rep: int, ode=None, right=None):
    """``(xs, truth, ys)`` for one cell."""
    ode = truth_ode(config) if ode is None else ode
    right = design_interval(config, ode) if right is None else right
    rng = record_stream(config.seed, n, rep)
    if config.design == "equispaced":
        xs = np.linspace(0.0, right, n)
    else:
        xs = np.sort(rng.uniform(0.0, right, n))
    truth = truth_values(ode, xs)
    ys = truth + config.sigma * rng.standard_normal(n)
    return xs, truth, ys


def run_fit(method: str, data: DesignSample, params: dict):
    p = dict(params)
    if method == "spline":
        return fit_standard_spline(data, radius=float(p.get("radius", 1.0)))
    if method == "krr":
        return fit_constrained_krr(
            data, beta=int(p.get("beta", 0)), variant=p.get("variant", "autonomous"),
            C=float(p.get("C", p.get("c", 1.0))), cv=bool(p.get("cv", False)),
        )
    model = param_model(p.get("model", "linear"))
    if method == "nls":
        return fit_nls(data, model)
    if method == "picard":
        return fit_picard(data, model, y0_hat=float(p.get("y0_hat", data.ys[0])),
                          R=int(p.get("r", p.get("R", 8))), T=int(p.get("t", p.get("T", 256))))
    raise ValueError(f"unknown method {method!r}")


def run_one(config: ExperimentConfig, n: int, rep: int, ode=None, right=None) -> RunRecord:
    start = time.perf_counter()
    xs, truth, ys = draw_sample(config, n, rep, ode, right)
    try:
        fit = run_fit(config.method, DesignSample(xs, ys, config.sigma), dict(config.method_params))
        mse = float(np.mean((fit.fitted - truth) ** 2))
        return RunRecord(n, rep, config.seed, config.method, mse, False, config.config_hash,
                         time.perf_counter() - start, fit.to_dict()["diagnostics"])
    except (OdeCoverError, ValueError, ArithmeticError) as exc:
        return RunRecord(n, rep, config.seed, config.method, None, True, config.config_hash,
                         time.perf_counter() - start, {}, f"{type(exc).__name__}: {exc}")


def _run_block(config: ExperimentConfig, n: int) -> list:
    ode = truth_ode(config)
    right = design_interval(config, ode)
    return [run_one(config, n, r, ode, right) for r in range(config.replications)]


def simulate(config: ExperimentConfig, jobs: int = 1) -> list:
    """One record per ``(n, rep)`` sorted by ``(n, rep)``; identical for any ``jobs``."""
    if jobs <= 1:
        blocks = [_run_block(config, n) for n in config.n_ladder]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(_run_block, [config] * len(config.n_ladder), config.n_ladder))
    records = [r for block in blocks for r in block]
    return sorted(records, key=lambda r: (r.n, r.rep))


@dataclass(frozen=True)
class RateReport:
    slope: float
    stderr: float
    r2: float
    intercept: float
    ns: tuple
    mean_mse: tuple
    aggregate: str = "mean"
    method: str | None = None
    target_slope: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ns"] = list(self.ns)
        d["mean_mse"] = list(self.mean_mse)
        return d


def target_exponent(beta: int) -> float:
    """``-2 (beta + 2) / (2 (beta + 2) + 1)``."""
    return -2.0 * (beta + 2) / (2 * (beta + 2) + 1)


def aggregate_mse(values, how: str = "mean") -> float:
    values = np.asarray(values, float)
    if how == "mean":
        return float(values.mean())
    if how == "trimmed":
        return float(stats.trim_mean(values, TRIM))
    raise ValueError(f"aggregate must be one of {AGGREGATES}")


def rate_regression(
    records,
    method: str | None = None,
    aggregate: str = "mean",
    min_ns: int = 3,
    min_reps: int = 10,
    beta: int | None = None,
) -> RateReport:
    """OLS of ``log(mean MSE)`` on ``log n`` over successful records.

    Raises
    ------
    InsufficientData
        With fewer than ``min_ns`` sample sizes carrying ``min_reps`` successful
        replications each.
    """
    groups: dict = {}
    for r in records:
        if r.failed or r.mse is None or (method is not None and r.method != method):
            continue
        groups.setdefault(r.n, []).append(r.mse)
    ns = sorted(n for n, v in groups.items() if len(v) >= min_reps)
    if len(ns) < min_ns:
        raise InsufficientData(
            f"need {min_ns} sample sizes with {min_reps} replications each, found {len(ns)}"
        )
    means = [aggregate_mse(groups[n], aggregate) for n in ns]
    if min(means) <= 0:
        raise InsufficientData("mean MSE is zero at some n; the log-log fit is undefined")
    fit = stats.linregress(np.log(ns), np.log(means))
    stderr = float(fit.stderr) if len(ns) > 2 else math.nan
    return RateReport(
        float(fit.slope), stderr, float(fit.rvalue ** 2), float(fit.intercept),
        tuple(ns), tuple(means), aggregate, method,
        None if beta is None else target_exponent(beta),
    )


def theory_rows(config: ExperimentConfig, records, beta: int = 0) -> list:
    """Per-n table of the empirical mean MSE next to the theoretical radii.

    ``log_covering`` is the solution-class entropy bound at ``delta`` equal to the
    critical radius, with unit class constants.
    """
    from .covering import ClassConstants, solution_class_bound
    from .rates import RateParams, critical_radius, kernel_radius, standard_class_radius

    sigma = config.sigma if config.sigma > 0 else 1.0
    rows = []
    for n in config.n_ladder:
        vals = [r.mse for r in records if r.n == n and not r.failed]
        p = RateParams(n, sigma, beta)
        crit = critical_radius(p).r_squared
        try:
            cover = solution_class_bound(math.sqrt(crit), beta, ClassConstants()).value
        except DeltaOutOfRange:
            cover = None
        rows.append({
            "n": n,
            "mean_mse": aggregate_mse(vals, config.aggregate) if vals else None,
            "critical_radius_sq": crit,
            "log_covering": cover,
            "kernel_radius_sq": kernel_radius(p).r_squared,
            "standard_radius_sq": standard_class_radius(beta, p),
        })
    return rows
