import math

import numpy as np
import pytest

from odecover import artifacts
from odecover.covering import ClassConstants, formula_report
from odecover.errors import InsufficientData
from odecover.experiment import (
    ExperimentConfig,
    RunRecord,
    aggregate_mse,
    draw_sample,
    rate_regression,
    record_stream,
    run_one,
    simulate,
    target_exponent,
    theory_rows,
)
from odecover.odes import builtin_ode
from odecover.rates import figure1_series

INI = """
[experiment]
truth = separable:cos2pi   ; smooth periodic truth
design = equispaced
interval = 1.0
n_ladder = 16, 32, 64
sigma = 0.3
method = spline
replications = 4
seed = 7

[method]
radius = 2.0

[output]
runs = out/runs.csv
rates = out/rates.json
bounds = out/bounds.csv
"""


def _cfg(**kw):
    base = dict(truth="separable:cos2pi", n_ladder=(16, 32), sigma=0.3, replications=3, seed=5, interval=1.0)
    base.update(kw)
    return ExperimentConfig(**base)


# ------------------------------------------------------------ config

def test_ini_parsing(tmp_path):
    cfg = ExperimentConfig.from_string(INI)
    assert cfg.n_ladder == (16, 32, 64)
    assert cfg.sigma == 0.3 and cfg.seed == 7 and cfg.interval == 1.0
    assert dict(cfg.method_params) == {"radius": 2.0}
    assert cfg.runs_path == "out/runs.csv" and cfg.bounds_path == "out/bounds.csv"
    path = tmp_path / "exp.ini"
    path.write_text(INI)
    assert ExperimentConfig.from_ini(path) == cfg


def test_config_hash():
    a = ExperimentConfig.from_string(INI)
    assert a.config_hash == ExperimentConfig.from_string(INI).config_hash
    assert len(a.config_hash) == 16
    assert a.config_hash != ExperimentConfig.from_string(INI.replace("seed = 7", "seed = 8")).config_hash


@pytest.mark.parametrize("bad", [
    dict(n_ladder=(32, 16)), dict(n_ladder=()), dict(n_ladder=(1, 4)), dict(replications=0),
    dict(sigma=-1.0), dict(method="lasso"), dict(design="random"), dict(aggregate="median"), dict(seed=-1),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        _cfg(**bad)


# ------------------------------------------------------------ sampling

def test_noise_moments():
    N, sigma = 100_000, 2.0
    cfg = ExperimentConfig(truth="zero", n_ladder=(N,), sigma=sigma, seed=11, interval=1.0)
    _, truth, ys = draw_sample(cfg, N, 0)
    assert np.all(truth == 0.0)
    assert abs(ys.mean()) <= 4 * sigma / math.sqrt(N)
    assert abs(ys.var(ddof=1) - sigma ** 2) <= 4 * sigma ** 2 * math.sqrt(2 / (N - 1))


def test_streams_are_per_cell():
    cfg_small = _cfg(replications=3)
    cfg_big = _cfg(replications=10)
    later = draw_sample(cfg_big, 32, 7)[2]
    early = draw_sample(cfg_big, 32, 2)[2]
    np.testing.assert_array_equal(draw_sample(cfg_small, 32, 2)[2], early)
    np.testing.assert_array_equal(draw_sample(cfg_big, 32, 7)[2], later)
    assert not np.array_equal(draw_sample(cfg_big, 32, 3)[2], early)
    a = record_stream(5, 32, 2).standard_normal(4)
    b = record_stream(5, 16, 2).standard_normal(4)
    assert not np.array_equal(a, b)


def test_uniform_design_sorted_inside_interval():
    cfg = _cfg(design="uniform", interval=0.8)
    xs, _, _ = draw_sample(cfg, 64, 0)
    assert np.all(np.diff(xs) > 0) and xs[0] >= 0 and xs[-1] <= 0.8


def test_default_interval_inside_existence():
    cfg = ExperimentConfig(truth="sin", n_ladder=(8,), sigma=0.1)
    xs, _, _ = draw_sample(cfg, 8, 0)
    assert xs[-1] == pytest.approx(0.95 * builtin_ode("sin").existence_interval())


# ------------------------------------------------------------ simulate

def test_simulate_deterministic_and_jobs_invariant():
    cfg = _cfg()
    a = simulate(cfg)
    assert a == simulate(cfg)
    assert a == simulate(cfg, jobs=2)
    assert [(r.n, r.rep) for r in a] == [(n, r) for n in (16, 32) for r in range(3)]
    assert all(r.mse >= 0 and r.config_hash == cfg.config_hash for r in a)
    assert len({r.key for r in a}) == len(a)


def test_noiseless_in_class_truth():
    cfg = _cfg(sigma=0.0, n_ladder=(32, 64, 128), replications=2)
    assert max(r.mse for r in simulate(cfg)) <= 1e-5


def test_failures_are_recorded():
    cfg = _cfg(method="krr", method_params={"beta": 9})
    recs = simulate(cfg)
    assert all(r.failed and r.mse is None and "ValueError" in r.error for r in recs)


@pytest.mark.parametrize("radius,dof", [(0.0, 2), (math.inf, 100)])
def test_zero_truth_matches_linear_smoother_dof(radius, dof):
    # at these radii the fit is a fixed linear smoother S, so E mse = sigma^2 tr(S^T S) / n exactly
    cfg = ExperimentConfig(truth="zero", n_ladder=(100,), sigma=1.0, replications=200, seed=0, interval=1.0,
                           method_params={"radius": radius})
    recs = simulate(cfg)
    mse = np.array([r.mse for r in recs])
    assert all(r.diagnostics["smoother_frobenius2"] == pytest.approx(dof) for r in recs)
    se = mse.std(ddof=1) / math.sqrt(mse.size)
    assert abs(mse.mean() - dof / 100) <= 3 * se


def test_run_one_matches_simulate():
    cfg = _cfg()
    assert run_one(cfg, 32, 1) == simulate(cfg)[4]


# ------------------------------------------------------------ rates

def _power_records(exponent=-0.8, ns=(50, 100, 200, 400), reps=10, method="spline"):
    return [RunRecord(n, r, 0, method, float(n) ** exponent) for n in ns for r in range(reps)]


def test_exact_power_law():
    rep = rate_regression(_power_records(), beta=0)
    assert rep.slope == pytest.approx(-0.8, abs=1e-12)
    assert rep.r2 == pytest.approx(1.0, abs=1e-12)
    assert rep.target_slope == pytest.approx(-0.8)
    assert rep.stderr <= 1e-12


def test_target_exponent():
    assert target_exponent(0) == pytest.approx(-0.8)
    assert target_exponent(1) == pytest.approx(-6 / 7)


def test_insufficient_data():
    with pytest.raises(InsufficientData):
        rate_regression(_power_records(ns=(50, 100)))
    with pytest.raises(InsufficientData):
        rate_regression(_power_records(reps=9))
    with pytest.raises(InsufficientData):
        rate_regression(_power_records(), method="krr")
    failed = [RunRecord(r.n, r.rep, 0, "spline", None, True) for r in _power_records()]
    with pytest.raises(InsufficientData):
        rate_regression(failed)


def test_method_filter_and_trimmed_mean():
    recs = _power_records(-0.8) + _power_records(-0.5, method="krr")
    assert rate_regression(recs, method="krr").slope == pytest.approx(-0.5, abs=1e-12)
    vals = list(np.linspace(0, 1, 20)) + [1e6]
    assert aggregate_mse(vals, "trimmed") < aggregate_mse(vals, "mean")
    assert aggregate_mse([1.0, 3.0]) == 2.0


def test_theory_rows():
    cfg = _cfg()
    rows = theory_rows(cfg, simulate(cfg))
    assert [r["n"] for r in rows] == [16, 32]
    assert all(r["critical_radius_sq"] > 0 and r["mean_mse"] > 0 for r in rows)


# ------------------------------------------------------------ artifacts

def test_runs_round_trip(tmp_path):
    recs = simulate(_cfg()) + [RunRecord(64, 0, 5, "spline", None, True)]
    for fmt in ("csv", "json"):
        path = artifacts.emit(recs, fmt, tmp_path / f"runs.{fmt}")
        assert artifacts.read_runs(path) == recs


def test_empty_runs_csv(tmp_path):
    path = artifacts.emit([], "csv", tmp_path / "runs.csv")
    assert path.read_text() == "n,rep,seed,method,mse,failed\n"


def test_figure1_csv(tmp_path):
    path = artifacts.emit(figure1_series(0.01, 8), "csv", tmp_path / "fig1.csv")
    header, rows = artifacts.read_csv(path)
    assert header == artifacts.SERIES_COLUMNS
    assert len(rows) == 18


def test_byte_stable(tmp_path):
    recs = simulate(_cfg())
    a = artifacts.emit(recs, "csv", tmp_path / "a.csv").read_bytes()
    b = artifacts.emit(simulate(_cfg()), "csv", tmp_path / "b.csv").read_bytes()
    assert a == b
    rep = [formula_report("Z1", 0.01, 2, ClassConstants())]
    assert (artifacts.emit(rep, "json", tmp_path / "c.json").read_bytes()
            == artifacts.emit(rep, "json", tmp_path / "d.json").read_bytes())


def test_bound_rows():
    reps = [formula_report(f"Z{i}", 0.01, 2, ClassConstants()) for i in (1, 2, 3)]
    header, rows = artifacts.bound_rows(reps)
    assert header[:4] == artifacts.BOUND_COLUMNS
    assert all(len(r) == len(header) for r in rows)
    assert [r[3] for r in rows] == [r.value for r in reps]


def test_emit_rejects_unknown(tmp_path):
    with pytest.raises(ValueError):
        artifacts.emit([], "xml", tmp_path / "x")
    with pytest.raises(TypeError):
        artifacts.emit(3.0, "csv", tmp_path / "x.csv")
