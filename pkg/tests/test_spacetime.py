from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frweuler.spacetime import (
    ConformalHorizonError,
    SpacetimeDomainError,
    SpecValidationError,
    TabulatedRangeError,
    Verdict,
    christoffel,
    classify,
    conformal_horizon,
    conformal_time,
    decay_function,
    evaluate,
    exponential,
    invert_conformal_time,
    load_table,
    power_law,
    tabulated,
)

SPECS = [exponential(1.0), exponential(0.3), power_law(1.0), power_law(2.0), power_law(0.5)]


def test_evaluate_examples():
    assert evaluate(exponential(1.0), 2.0) == pytest.approx((1.0, 1.0), abs=1e-15)
    Om, om = evaluate(power_law(2.0), math.e)
    assert Om == pytest.approx(2.0, abs=1e-15)
    assert om == pytest.approx(2.0 / math.e, rel=1e-15)


@pytest.mark.parametrize("spec", SPECS)
def test_normalization_at_one(spec):
    assert evaluate(spec, 1.0)[0] == 0.0


def test_evaluate_domain_errors():
    with pytest.raises(SpacetimeDomainError):
        evaluate(exponential(1.0), 0.5)
    spec = tabulated([(1.0, 0.0), (2.0, 1.0), (3.0, 1.5)])
    with pytest.raises(TabulatedRangeError):
        evaluate(spec, 3.5)


def test_tabulated_interpolation():
    spec = tabulated([(1.0, 0.0), (2.0, 1.0), (3.0, 1.5)])
    Om, om = evaluate(spec, 1.5)
    assert Om == pytest.approx(0.5)
    # centered difference of the samples around the interior node
    assert evaluate(spec, 2.0)[1] == pytest.approx(0.75)
    assert om >= 0.0


def test_tabulated_validation(tmp_path):
    with pytest.raises(SpecValidationError):
        tabulated([(1.0, 0.0), (2.0, 1.0), (3.0, 0.5)])
    with pytest.raises(SpecValidationError):
        tabulated([(1.5, 0.0), (2.0, 1.0)])
    path = tmp_path / "table.csv"
    path.write_text("1.0,0.0\n2.0,0.5\n4.0,2.0\n")
    spec = load_table(path)
    assert evaluate(spec, 3.0)[0] == pytest.approx(1.25)


def test_christoffel_examples():
    c = christoffel(exponential(1.0), 1.0)
    assert c.gamma0[0, 0] == 1.0 and c.gammaj[0, 0] == 1.0
    c = christoffel(power_law(1.0), 2.0)
    assert c.gamma0[0, 0] == pytest.approx(2.0, rel=1e-14)
    G = c.full()
    assert np.count_nonzero(G) == 9
    np.testing.assert_array_equal(G, np.swapaxes(G, 1, 2))


def test_christoffel_vanishes_with_omega():
    flat = tabulated([(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)])
    assert not np.any(christoffel(flat, 2.0).full())


@pytest.mark.parametrize(
    "spec, c2, verdict",
    [
        (exponential(1.0), 1 / 3, Verdict.STABLE_INTEGRABLE),
        (power_law(1.0), 1 / 3, Verdict.UNSTABLE_NONINTEGRABLE),
        (power_law(2.0, 0.05), 0.1, Verdict.STABLE_INTEGRABLE),
        (power_law(1.0), 0.0, Verdict.STABLE_INTEGRABLE),
        (power_law(0.5), 0.0, Verdict.UNSTABLE_NONINTEGRABLE),
        (power_law(1.0), 0.1, Verdict.UNSTABLE_NONINTEGRABLE),
    ],
)
def test_classify_examples(spec, c2, verdict):
    assert classify(spec, c2).verdict is verdict


def test_classify_integral_values():
    # closed forms: int_1^inf e^{-(s-1)} ds = 1, int_1^inf s^{-1.9} ds = 1/0.9
    assert classify(exponential(1.0), 1 / 3).integral_estimates[2] == pytest.approx(1.0, rel=1e-6)
    est = classify(power_law(2.0, 0.05), 0.1).integral_estimates[1]
    assert est == pytest.approx(1.0 / 0.9, rel=1e-3)


def test_classify_a3_failure_is_not_stable():
    # q larger than 1 - 3c^2 violates the decay-function bound
    res = classify(exponential(1.0, decay_q=0.9), 0.1)
    assert not res.a3_checked
    assert res.verdict is not Verdict.STABLE_INTEGRABLE


def test_classify_refinement_never_flips():
    for spec in SPECS:
        for c2 in (0.0, 0.1, 1 / 3):
            a = classify(spec, c2).verdict
            b = classify(spec, c2, subdivisions=2).verdict
            assert {a, b} != {Verdict.STABLE_INTEGRABLE, Verdict.UNSTABLE_NONINTEGRABLE}


def test_conformal_time_examples():
    assert conformal_time(exponential(1.0), 1.0) == 1.0
    assert conformal_time(power_law(1.0), math.e) == pytest.approx(2.0, rel=1e-12)
    assert conformal_horizon(exponential(1.0)) == pytest.approx(2.0, rel=1e-10)
    assert math.isinf(conformal_horizon(power_law(1.0)))
    # Omega = 2 ln t gives tau = 2 - 1/t
    assert conformal_horizon(power_law(2.0)) == pytest.approx(2.0, rel=1e-10)


def test_invert_examples():
    assert invert_conformal_time(exponential(1.0), 1.0) == 1.0
    assert invert_conformal_time(power_law(1.0), 2.0) == pytest.approx(math.e, rel=1e-12)
    with pytest.raises(ConformalHorizonError):
        invert_conformal_time(exponential(1.0), 3.0)


@given(
    spec=st.sampled_from(SPECS),
    t1=st.floats(1.0, 30.0),
    dt=st.floats(1e-3, 10.0),
)
def test_monotone_in_t(spec, t1, dt):
    assert evaluate(spec, t1 + dt)[0] >= evaluate(spec, t1)[0]
    assert conformal_time(spec, t1 + dt) > conformal_time(spec, t1)


@given(spec=st.sampled_from(SPECS), t=st.floats(1.0, 20.0))
def test_round_trip(spec, t):
    # keep tau distinguishable from a finite horizon in double precision
    tau = conformal_time(spec, t)
    back = invert_conformal_time(spec, tau)
    assert abs(conformal_time(spec, back) - tau) <= 1e-10 * tau


@given(q=st.floats(0.0, 2.0), Om=st.floats(0.0, 20.0))
def test_decay_function_bounds(q, Om):
    spec = exponential(1.0, decay_q=q)
    assert decay_function(spec, Om) >= 1.0
    assert decay_function(spec, Om + 0.5) >= decay_function(spec, Om)
