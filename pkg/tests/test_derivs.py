import math
import warnings
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odecover.derivs import (
    certify_bounds,
    differentiate,
    eval_expansion,
    expand_autonomous,
    expand_nonautonomous,
    factorial_bound,
    solution_derivatives,
    taylor_integrate,
)
from odecover.errors import (
    BoxExit,
    ExistenceIntervalWarning,
    HypothesisViolated,
    OracleOrderExceeded,
    StepUnderflow,
)
from odecover.odes import (
    AUTONOMOUS,
    NONAUTONOMOUS,
    OdeInstance,
    builtin_ode,
    cos_xmy_ode,
    extremal_ode,
    linear_ode,
    separable_ode,
    sin_ode,
    sinx_cosy_ode,
    sinxy_ode,
    zero_ode,
)


def identity_ode(y0=1.0, box=(1.0, 5.0)):
    """y' = y."""

    def oracle(p, x, y):
        y = np.asarray(y, float) + 0 * np.asarray(x, float)
        if p[0]:
            return np.zeros_like(y)
        return y if p[1] == 0 else (np.ones_like(y) if p[1] == 1 else np.zeros_like(y))

    return OdeInstance(AUTONOMOUS, oracle, y0=y0, box=box, name="identity")


# ---------------------------------------------------------------- expansions

def test_autonomous_small_orders():
    assert expand_autonomous(1).as_dict() == {(0,): 1}
    assert expand_autonomous(3).as_dict() == {(2, 0, 0): 1, (1, 1, 0): 1}
    assert expand_autonomous(4).as_dict() == {(3, 0, 0, 0): 1, (2, 1, 0, 0): 4, (1, 1, 1, 0): 1}


def test_nonautonomous_small_orders():
    assert expand_nonautonomous(1).as_dict() == {((0, 0),): 1}
    # y'' = f_x + f_y f
    assert expand_nonautonomous(2).as_dict() == {((1, 0),): 1, ((0, 1), (0, 0)): 1}
    assert expand_nonautonomous(3).total_multiplicity <= 8


@pytest.mark.parametrize("k", range(1, 13))
def test_autonomous_multiplicity_is_factorial(k):
    assert expand_autonomous(k).total_multiplicity == math.factorial(k - 1)


@pytest.mark.parametrize("k", range(1, 11))
def test_nonautonomous_multiplicity_bound(k):
    assert expand_nonautonomous(k).total_multiplicity <= 2 ** (k - 1) * math.factorial(k - 1)


def test_entry_weights():
    for k in range(1, 9):
        for t in expand_autonomous(k).terms:
            assert len(t.entries) == k and sum(t.entries) == k - 1
        for t in expand_nonautonomous(k).terms:
            assert t.weight == k - 1
            assert list(t.entries) == sorted(t.entries, reverse=True)


def _ordered_autonomous(k):
    """All ordered products, no merging."""
    terms = [(0,)]
    for _ in range(k - 1):
        terms = [e[:j] + (e[j] + 1,) + e[j + 1:] + (0,) for e in terms for j in range(len(e))]
    return terms


def _ordered_nonautonomous(k):
    terms = [((0, 0),)]
    for _ in range(k - 1):
        nxt = []
        for e in terms:
            for j, (a, b) in enumerate(e):
                nxt.append(e[:j] + ((a + 1, b),) + e[j + 1:])
                nxt.append(e[:j] + ((a, b + 1),) + e[j + 1:] + ((0, 0),))
        terms = nxt
    return terms


def _merged(ordered):
    return dict(Counter(tuple(sorted(e, reverse=True)) for e in ordered))


@pytest.mark.parametrize("k", range(1, 9))
def test_recurrence_matches_unmerged_enumeration(k):
    assert expand_autonomous(k).as_dict() == _merged(_ordered_autonomous(k))
    assert expand_nonautonomous(k).as_dict() == _merged(_ordered_nonautonomous(k))


@pytest.mark.parametrize("k", range(1, 9))
def test_differentiate_steps_one_order(k):
    assert differentiate(expand_autonomous(k)) == expand_autonomous(k + 1)
    assert differentiate(expand_nonautonomous(k)) == expand_nonautonomous(k + 1)


def test_order_caps():
    with pytest.raises(ValueError):
        expand_autonomous(21)
    with pytest.raises(ValueError):
        expand_nonautonomous(17)
    with pytest.raises(ValueError):
        expand_autonomous(0)


# ---------------------------------------------------------------- evaluation

def test_eval_examples():
    assert eval_expansion(expand_autonomous(1), identity_ode(), 0.0, 2.0) == pytest.approx(2.0)
    assert eval_expansion(expand_autonomous(3), extremal_ode(), 0.0, -0.5) == pytest.approx(2.0)
    assert eval_expansion(expand_autonomous(2), sin_ode(), 0.0, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_eval_requires_oracle_order():
    ode = identity_ode().with_(beta_max=2)
    with pytest.raises(OracleOrderExceeded):
        eval_expansion(expand_autonomous(5), ode, 0.0, 1.0)


def test_eval_autonomous_expansion_rejects_nonautonomous_ode():
    with pytest.raises(ValueError):
        eval_expansion(expand_autonomous(2), sinxy_ode(), 0.0, 0.0)


def test_nonautonomous_expansion_on_autonomous_ode_agrees():
    ode = sin_ode(y0=0.7)
    for k in range(1, 7):
        a = eval_expansion(expand_autonomous(k), ode, 0.0, 0.7)
        b = eval_expansion(expand_nonautonomous(k), ode, 0.0, 0.7)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("k", range(1, 9))
def test_extremal_tightness(k):
    ode = extremal_ode()
    val = eval_expansion(expand_autonomous(k), ode, 0.0, -0.5)
    assert abs(val) / math.factorial(k - 1) == pytest.approx(1.0, abs=1e-9)
    assert np.sign(val) == (-1) ** (k - 1)


def _fd_weights(offsets, k):
    """Finite-difference weights for the k-th derivative on integer offsets."""
    offsets = np.asarray(offsets, float)
    V = np.vander(offsets, increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[k] = math.factorial(k)
    return np.linalg.solve(V, rhs)


@pytest.mark.parametrize("k", range(1, 6))
def test_eval_matches_finite_differences_of_trajectory(k):
    ode = sin_ode(y0=1.0)
    h, centre, half = 0.04, 0.45, 7
    offsets = np.arange(-half, half + 1)
    grid = centre + h * offsets
    traj = taylor_integrate(ode, grid, order=10)
    fd = _fd_weights(offsets, k) @ traj.y / h ** k
    exact = eval_expansion(expand_autonomous(k), ode, centre, traj.y[half])
    assert fd == pytest.approx(exact, rel=1e-4)


def test_solution_derivatives_shape_and_values():
    out = solution_derivatives(identity_ode(), 4, 0.0, 1.0)
    np.testing.assert_allclose(out, np.ones(5))


# ---------------------------------------------------------------- integration

# the grid runs past the guaranteed existence interval
@pytest.mark.filterwarnings("ignore::odecover.errors.ExistenceIntervalWarning")
def test_taylor_exponential():
    traj = taylor_integrate(identity_ode(box=(1.0, 5.0)), [0.0, 0.5, 1.0], order=6)
    np.testing.assert_allclose(traj.y, np.exp([0.0, 0.5, 1.0]), rtol=0, atol=1e-8)


def test_taylor_constant():
    traj = taylor_integrate(zero_ode(y0=0.3), np.linspace(0, 1, 5))
    np.testing.assert_array_equal(traj.y, 0.3)


# the grid runs past the guaranteed existence interval
@pytest.mark.filterwarnings("ignore::odecover.errors.ExistenceIntervalWarning")
def test_taylor_extremal_closed_form():
    ode = extremal_ode(box=(1.0, 1.0))
    xs = np.linspace(0.0, 0.9, 10)
    traj = taylor_integrate(ode, xs)
    expected = np.log(np.exp(-0.5) + xs * np.exp(-0.5))
    np.testing.assert_allclose(traj.y, expected, rtol=0, atol=1e-8)


def test_taylor_grid_validation():
    with pytest.raises(ValueError):
        taylor_integrate(zero_ode(), [0.5, 0.2])
    with pytest.raises(ValueError):
        taylor_integrate(zero_ode(), [])
    with pytest.raises(OracleOrderExceeded):
        taylor_integrate(identity_ode().with_(beta_max=2), [0.0, 0.1], order=5)


def test_box_exit():
    ode = linear_ode(theta=-3.0, y0=1.0, box=(1.0, 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExistenceIntervalWarning)
        with pytest.raises(BoxExit):
            taylor_integrate(ode, [0.0, 1.0])


def test_existence_warning():
    ode = linear_ode(theta=-3.0, y0=1.0, box=(1.0, 0.5))
    with pytest.warns(ExistenceIntervalWarning):
        with pytest.raises(BoxExit):
            taylor_integrate(ode, [0.0, 1.0])


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_step_underflow():
    stiff = linear_ode(theta=-1e15, y0=1.0, box=(1.0, 1e300))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExistenceIntervalWarning)
        with pytest.raises(StepUnderflow):
            taylor_integrate(stiff, [0.0, 1e-3])


# ---------------------------------------------------------------- certificates

def test_certify_extremal_tight_at_origin():
    certs = certify_bounds(extremal_ode(), 6)
    for c in certs:
        assert c.worst_x == 0.0
        assert c.observed_max == pytest.approx(math.factorial(c.order - 1), rel=1e-9)
        assert c.slack >= -1e-8


def test_certify_sin_nonnegative_slack():
    assert all(c.slack >= 0 for c in certify_bounds(sin_ode(), 6))


def test_certify_zero_field():
    certs = certify_bounds(zero_ode(), 5)
    assert all(c.observed_max == 0.0 for c in certs if c.order >= 2)


@pytest.mark.parametrize("ode", [sinxy_ode(), sinx_cosy_ode(), cos_xmy_ode(),
                                 separable_ode("sin"), separable_ode("cos"),
                                 separable_ode("expneg")], ids=lambda o: o.name)
def test_certify_nonautonomous_family(ode):
    certs = certify_bounds(ode, 6)
    for c in certs:
        assert c.bound == factorial_bound(c.order, NONAUTONOMOUS)
        assert c.slack >= -1e-8


def test_hypothesis_violation_is_reported():
    with pytest.raises(HypothesisViolated):
        certify_bounds(linear_ode(theta=2.0), 3)


def test_certify_needs_oracle_order():
    with pytest.raises(OracleOrderExceeded):
        certify_bounds(sin_ode().with_(beta_max=2), 5)


def test_builtin_registry():
    assert builtin_ode("linear:0.8").name == "linear:0.8"
    assert builtin_ode("separable:cos2pi").kind == NONAUTONOMOUS
    with pytest.raises(ValueError):
        builtin_ode("nope")


@settings(max_examples=30, deadline=None)
@given(st.floats(-3.0, 3.0), st.integers(1, 7))
def test_both_rules_agree_on_autonomous_fields(y0, k):
    ode = sin_ode(y0=y0)
    a = eval_expansion(expand_autonomous(k), ode, 0.0, y0)
    b = eval_expansion(expand_nonautonomous(k), ode, 0.0, y0)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)
