import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from odecover.covering import (
    ClassConstants,
    SmoothClassSpec,
    formula_report,
    general_bound,
    kolmogorov_lower,
    kolmogorov_upper,
    l_max,
    log_factorial_product,
    parametric_bound,
    separable_lower,
    solution_class_bound,
    w_bounds,
    z_bounds,
)
from odecover.errors import DeltaOutOfRange
from odecover.odes import AUTONOMOUS, NONAUTONOMOUS

UNIT = ClassConstants(C0=1.0, b=1.0, Cbar=1.0)
LMAX_UNIT = 2 * math.e - 1


def test_kolmogorov_values():
    assert kolmogorov_upper(0.01, 1) == pytest.approx(19.2103, abs=1e-4)
    assert kolmogorov_upper(0.001, 2) == pytest.approx(30.723, abs=1e-3)
    assert kolmogorov_upper(1 - 1e-12, 0) == pytest.approx(1.0, abs=1e-9)
    assert kolmogorov_lower(0.01, 1) == pytest.approx(10.0)
    assert kolmogorov_lower(0.25, 0) == pytest.approx(4.0)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0])
def test_kolmogorov_delta_range(delta):
    with pytest.raises(DeltaOutOfRange):
        kolmogorov_upper(delta, 1)
    with pytest.raises(DeltaOutOfRange):
        kolmogorov_lower(delta, 1)


def test_l_max_values():
    assert l_max(1.0, 1.0, 1) == pytest.approx(4.43656, abs=1e-5)
    assert l_max(0.0, 1.0, 2) == pytest.approx(LMAX_UNIT, rel=1e-14)
    assert l_max(1.0, 1e-12, 1) == pytest.approx(1.0, abs=1e-11)
    assert l_max(0.0, 0.5, 1) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        l_max(-1.0, 1.0)


def _l_max_numeric(L, alpha, m):
    """Supremum over a grid of exp(c x) (1 + int_0^x exp(-c s) ds)."""
    c = L if m == 1 else math.sqrt(L * L + 1)
    best = 0.0
    for x in np.linspace(0.0, alpha, 41):
        val, _ = integrate.quad(lambda s: math.exp(-c * s), 0.0, x, epsabs=1e-14, epsrel=1e-14)
        best = max(best, math.exp(c * x) * (1 + val))
    return best


def test_l_max_matches_quadrature():
    rng = np.random.default_rng(11)
    for _ in range(50):
        L = float(rng.uniform(1e-6, 3.0))
        alpha = float(rng.uniform(1e-6, 1.0))
        m = int(rng.integers(1, 3))
        assert l_max(L, alpha, m) == pytest.approx(_l_max_numeric(L, alpha, m), abs=1e-10)


def test_general_bound_examples():
    singleton = ClassConstants(C0=0.0)
    assert general_bound(0.3, lambda d: 0.0, singleton).value == 0.0
    rep = general_bound(0.1, lambda d: 0.0, ClassConstants(C0=1.0), L_max=4.43656)
    assert rep.value == pytest.approx(4.4968, abs=1e-4)
    rep = general_bound(0.5, lambda d: 1.0 / d, ClassConstants(C0=1.0), L_max=2.0)
    assert rep.value == pytest.approx(6.1972, abs=1e-4)
    assert rep.terms["logcover_F"] == pytest.approx(4.0)


def test_parametric_bound_examples():
    c = ClassConstants(C0=0.0, K=1, L_K=1.0)
    assert parametric_bound(1.0, c, L_max=1.0).value == pytest.approx(1.0986, abs=1e-4)
    assert parametric_bound(0.7, ClassConstants(C0=0.0, K=0)).value == 0.0
    c = ClassConstants(C0=1.0, K=2, L_K=1.0)
    assert parametric_bound(0.1, c, L_max=4.43656).value == pytest.approx(13.490, abs=1e-3)


def test_z_examples():
    z1, z2, z3 = z_bounds(0.5, 0, UNIT)
    assert z1 == pytest.approx(7.0321, abs=1e-4)
    assert z3 == pytest.approx(10.620, abs=1e-3)
    assert log_factorial_product(4) == pytest.approx(math.log(288), abs=1e-12)
    assert log_factorial_product(4) == pytest.approx(5.6630, abs=1e-4)


def test_w_examples():
    w1, w2, _ = w_bounds(0.5, 0, UNIT)
    z1 = z_bounds(0.5, 0, UNIT)[0]
    assert w1 - z1 == pytest.approx(2.1919, abs=1e-4)
    assert w2 == pytest.approx(1392.47, abs=1e-2)


def test_w1_minus_z1_identity():
    for g in range(6):
        for d in (0.05, 0.5, 2.0):
            w1 = w_bounds(d, g, UNIT)[0]
            z1 = z_bounds(d, g, UNIT)[0]
            extra = (g * g + g) / 2 * math.log(2) + (d / 5) ** (-1 / (g + 2)) * math.log(2)
            assert w1 - z1 == pytest.approx(extra, rel=1e-12)


def test_factorial_overtakes_exponential_at_five():
    first = next(g for g in range(20) if log_factorial_product(g) >= (g * g + g) / 2 * math.log(2))
    # gamma = 0 is a trivial tie (both sides zero); the first non-trivial crossing is 5
    assert first == 0
    assert next(g for g in range(1, 20)
                if log_factorial_product(g) >= (g * g + g) / 2 * math.log(2)) == 5


@pytest.mark.parametrize("delta", [5.0, 6.0, 0.0])
def test_fifth_precondition(delta):
    with pytest.raises(DeltaOutOfRange):
        z_bounds(delta, 1, UNIT)
    with pytest.raises(DeltaOutOfRange):
        solution_class_bound(delta, 1, UNIT)


def test_terms_sum_to_value():
    for name in ("Z1", "Z2", "Z3", "W1", "W2", "W3"):
        for g in range(5):
            rep = formula_report(name, 0.3, g, UNIT)
            assert rep.value == pytest.approx(sum(rep.terms.values()), abs=1e-12)
            assert rep.asymptotic_constants_unity is True


def _brute_force(delta, beta, consts, kind, target):
    fam = "Z" if kind == AUTONOMOUS else "W"
    lm = l_max(1.0, consts.alpha, 1)
    cands = []
    for g in range(beta + 1):
        if target == "solutions":
            cands.append((formula_report(fam + "1", delta, g, consts).value, g, fam + "1"))
            cands.append((formula_report(fam + "2", delta / lm, g, consts).value, g, fam + "2"))
        else:
            cands.append((formula_report(fam + "3", delta, g, consts).value, g, fam + "3"))
    best = min(c[0] for c in cands)
    return next(c for c in cands if c[0] == best)


def test_solution_bound_brute_force_example():
    rep = solution_class_bound(0.5, 6, UNIT)
    value, g, branch = _brute_force(0.5, 6, UNIT, AUTONOMOUS, "solutions")
    assert (rep.value, rep.minimizing_gamma, rep.branch) == (value, g, branch)


@pytest.mark.parametrize("kind", [AUTONOMOUS, NONAUTONOMOUS])
@pytest.mark.parametrize("target", ["solutions", "first_derivatives"])
def test_solution_bound_equals_enumeration(kind, target):
    for beta in range(11):
        for delta in np.geomspace(1e-4, 4.0, 20):
            rep = solution_class_bound(float(delta), beta, UNIT, kind, target)
            value, g, branch = _brute_force(float(delta), beta, UNIT, kind, target)
            assert rep.value == value
            assert rep.minimizing_gamma == g
            assert rep.branch == branch


def test_beta_zero_single_candidate():
    rep = solution_class_bound(0.5, 0, UNIT)
    assert rep.minimizing_gamma == 0


def test_monotone_in_delta_and_beta():
    for beta in range(6):
        vals = [solution_class_bound(d, beta, UNIT).value for d in (0.1, 0.2, 0.4)]
        assert vals[0] >= vals[1] >= vals[2]
    for d in (0.01, 0.1, 1.0):
        vals = [solution_class_bound(d, b, UNIT, NONAUTONOMOUS).value for b in range(8)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_separable_lower_values():
    assert separable_lower(1 / 16, 2) == pytest.approx(2.0)
    assert separable_lower(0.01, 0) == pytest.approx(10.0)
    assert separable_lower(0.01, 0, "first_derivatives") == pytest.approx(100.0)
    with pytest.raises(DeltaOutOfRange):
        separable_lower(1.0, 0)


def test_sandwich():
    for beta in range(11):
        for d in np.geomspace(1e-4, 0.9, 20):
            d = float(d)
            assert separable_lower(d, beta) <= solution_class_bound(d, beta, UNIT, NONAUTONOMOUS).value
            assert kolmogorov_lower(d, beta + 1) <= kolmogorov_upper(d, beta + 1)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 0.99), st.integers(0, 12))
def test_kolmogorov_ordering_property(delta, gamma):
    assert kolmogorov_lower(delta, gamma) <= kolmogorov_upper(delta, gamma)


def test_class_constant_defaults_and_validation():
    c = ClassConstants(C0=2.0, b=0.5)
    assert c.alpha == 0.5 and c.Cbar == 2.5
    with pytest.raises(ValueError):
        ClassConstants(C0=-1.0)
    with pytest.raises(ValueError):
        ClassConstants(m=0)
    assert ClassConstants.from_dict({"C0": 3, "ignored": 1}).C0 == 3


def test_smooth_class_spec_validation():
    SmoothClassSpec(beta=2)
    with pytest.raises(ValueError):
        SmoothClassSpec(beta=1, rho=0)
    with pytest.raises(ValueError):
        SmoothClassSpec(beta=1, dim=2, domain_lo=(0.0, 0.0), domain_hi=(1.0, 0.0))
