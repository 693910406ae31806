from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from frweuler.fluid import CompactCompressive, FluidState, Grid, SoundSpeed, background, perturb, smooth_bump
from frweuler.integrator import ShockGuard, Status, StepControl
from frweuler.shocklab import (
    Functionals,
    RescaledState,
    christodoulou_functionals,
    contrast_experiment,
    from_minkowski,
    predicted_shock_time,
    shock_conditions,
    shock_report,
    to_minkowski,
    worker_threads,
)
from frweuler.spacetime import exponential, power_law

from conftest import smooth_state


def radial_state(grid: Grid, profile, weight: float = 0.0, rho_bar: float = 1.0) -> RescaledState:
    X = grid.coordinates()
    r = np.sqrt(sum(X[i] ** 2 for i in grid.active))
    f = profile(r)
    U = np.zeros((3,) + grid.dims)
    safe = np.where(r > 0, r, 1.0)
    for i in grid.active:
        U[i] = weight * f * np.where(r > 0, X[i] / safe, 0.0)
    return RescaledState(grid, rho_bar * (1.0 + f), U, 1.0)


def shell(r):
    return 0.01 * smooth_bump((np.asarray(r) - 0.6) / 0.35)


def test_to_minkowski_identity_at_one():
    s = smooth_state(Grid((8, 8, 1)), 0.1)
    rs = to_minkowski(s, power_law(1.0), rho_bar=2.0)
    assert rs.tau == 1.0
    np.testing.assert_array_equal(rs.U, s.u)
    np.testing.assert_allclose(rs.rho_prime, 2.0 * np.exp(s.L), rtol=1e-15)


def test_background_maps_to_rho_bar():
    s = background(Grid((4, 4, 4))).with_fields(t=3.0)
    rs = to_minkowski(s, exponential(1.0), rho_bar=1.5)
    np.testing.assert_array_equal(rs.rho_prime, 1.5)
    assert rs.tau == pytest.approx(2.0 - math.exp(-2.0))


@given(t=st.floats(1.0, 20.0), seed=st.integers(0, 100))
def test_round_trip(t, seed):
    s = smooth_state(Grid((4, 4, 4)), 0.1, t=t, seed=seed)
    spec = power_law(1.0)
    back = from_minkowski(to_minkowski(s, spec, 1.3), spec, 1.3)
    assert back.t == pytest.approx(t, rel=1e-13)
    np.testing.assert_allclose(back.L, s.L, atol=1e-13)
    np.testing.assert_allclose(back.u, s.u, rtol=1e-13, atol=1e-16)


def test_reduction_needs_radiation():
    s = background(Grid((4, 4, 4)))
    with pytest.raises(ValueError):
        to_minkowski(s, power_law(1.0), c2=SoundSpeed(0.1))


def test_background_functionals():
    g = Grid((64, 1, 1), (4.0, 1.0, 1.0))
    rs = to_minkowski(background(g), power_law(1.0))
    fun = christodoulou_functionals(rs, 1.0, 0.75)
    assert fun == Functionals(0.0, 0.0, 0.0)
    cond = shock_conditions(fun, 0.75)
    assert cond.small_data and cond.q_dominates and cond.degenerate and not cond.all_met
    rep = shock_report(rs, 1.0, power_law(1.0))
    assert rep.to_dict()["tau_max"] == "unreachable"


@pytest.mark.parametrize("r", [0.5, 1.0, 1.2])
def test_radius_domain(r):
    g = Grid((64, 1, 1), (4.0, 1.0, 1.0))
    rs = to_minkowski(background(g), power_law(1.0))
    with pytest.raises(ValueError):
        christodoulou_functionals(rs, 1.0, r)
    with pytest.raises(ValueError):
        shock_conditions(Functionals(0.0, 0.0, 0.0), r)


def test_support_check():
    g = Grid((64, 1, 1), (4.0, 1.0, 1.0))
    rs = radial_state(g, lambda r: 0.01 * np.exp(-r * r))
    with pytest.raises(ValueError):
        christodoulou_functionals(rs, 1.0, 0.75)


def test_q_matches_radial_quadrature_1d():
    g = Grid((4000, 1, 1), (4.0, 1.0, 1.0))
    r = 0.75
    rs = radial_state(g, shell)
    got = christodoulou_functionals(rs, 1.0, r).Q_r
    expected = 2.0 * r * float(shell(r)) + 2.0 * quad(lambda s: 2.0 * float(shell(s)), r, 1.0)[0]
    # the annulus indicator is first-order accurate at its edges
    assert got == pytest.approx(expected, rel=2e-3)


def test_q_matches_radial_quadrature_3d():
    g = Grid((64, 64, 64), (3.0, 3.0, 3.0))
    r = 0.75
    rs = radial_state(g, shell)
    got = christodoulou_functionals(rs, 1.0, r).Q_r
    surface = r * float(shell(r)) * 4.0 * math.pi * r * r
    volume = quad(lambda s: 2.0 * float(shell(s)) * 4.0 * math.pi * s * s, r, 1.0)[0]
    assert got == pytest.approx(surface + volume, rel=2e-2)


@pytest.mark.parametrize("weight", [1.0, -1.0])
def test_q_sign_follows_radial_velocity(weight):
    g = Grid((48, 48, 1), (3.0, 3.0, 1.0))
    rs = radial_state(g, shell, weight)
    rs = RescaledState(g, np.ones(g.dims), rs.U, 1.0)
    assert np.sign(christodoulou_functionals(rs, 1.0, 0.7).Q_r) == weight


@given(a=st.sampled_from([1e-3, 1e-2, 1e-1]))
def test_functional_homogeneity(a):
    g = Grid((800, 1, 1), (3.0, 1.0, 1.0))
    base = RescaledState(g, *_compressive(g, 1.0))
    scaled = RescaledState(g, *_compressive(g, a))
    f1 = christodoulou_functionals(base, 1.0, 0.75)
    fa = christodoulou_functionals(scaled, 1.0, 0.75)
    for x, y in zip((f1.D_M, f1.S_annulus, f1.Q_r), (fa.D_M, fa.S_annulus, fa.Q_r)):
        assert y == pytest.approx(a * x, rel=1e-12)


def _compressive(g, a):
    s = perturb(background(g), CompactCompressive(), 1.0)
    # linear profile: rho' - rho_bar and U proportional to a
    return 1.0 + a * np.expm1(s.L), a * s.u


def test_small_data_condition_flips():
    g = Grid((800, 1, 1), (3.0, 1.0, 1.0))
    verdicts = []
    for a in (0.1, 0.01, 0.001):
        fun = christodoulou_functionals(RescaledState(g, *_compressive(g, a)), 1.0, 0.75)
        assert fun.Q_r > 0.0
        verdicts.append(shock_conditions(fun, 0.75).q_dominates)
    assert verdicts == [False, True, True]


def test_predicted_shock_time_examples():
    r = 0.75
    st_ = predicted_shock_time(0.25 / math.log(2.0), r, 1.0, power_law(1.0))
    assert st_.tau_max == pytest.approx(2.0, rel=1e-14)
    assert st_.t_max == pytest.approx(math.e, rel=1e-10)
    far = predicted_shock_time(0.25 / math.log(3.0), r, 1.0, exponential(1.0))
    assert far.tau_max == pytest.approx(3.0) and far.t_max is None and not far.reachable
    assert predicted_shock_time(1e12, r, 1.0, exponential(1.0)).tau_max == pytest.approx(1.0)
    with pytest.raises(ValueError):
        predicted_shock_time(0.0, r, 1.0, exponential(1.0))


@given(q1=st.floats(0.05, 10.0), q2=st.floats(0.05, 10.0), c=st.floats(0.1, 5.0))
def test_shock_time_monotone(q1, q2, c):
    lo, hi = sorted((q1, q2))
    spec = power_law(1.0)
    assert predicted_shock_time(hi, 0.75, c, spec).tau_max <= predicted_shock_time(lo, 0.75, c, spec).tau_max
    assert predicted_shock_time(lo, 0.75, c, spec).tau_max <= predicted_shock_time(lo, 0.75, 2 * c, spec).tau_max


def test_exponential_has_unreachable_bound():
    # any tau_max beyond the total conformal time 1 + 1/H is unreachable
    assert predicted_shock_time(0.25 / math.log(2.5), 0.75, 1.0, exponential(1.0)).t_max is None
    assert predicted_shock_time(0.25 / math.log(1.5), 0.75, 1.0, exponential(1.0)).t_max is not None


def test_report_json(tmp_path):
    g = Grid((800, 1, 1), (3.0, 1.0, 1.0))
    rs = RescaledState(g, *_compressive(g, 0.01))
    rep = shock_report(rs, 1.0, power_law(1.0), observed_blowup_tau=6.2)
    path = tmp_path / "shock.json"
    rep.to_json(path)
    import json

    d = json.loads(path.read_text())
    assert set(d) == {
        "r", "D_M", "S_annulus", "Q_r", "conditions_met", "C_prime", "tau_max", "t_max", "observed_blowup_tau"
    }
    assert d["tau_max"] == pytest.approx(math.exp(0.25 / d["Q_r"]))
    assert d["observed_blowup_tau"] == 6.2


def _quick_contrast(spec_a, spec_b, amplitude=0.25):
    g = Grid((400, 1, 1), (4.0, 1.0, 1.0))
    ctl = StepControl(cfl=0.5, dt_max=0.01, t_end=1e6, tau_end=4.0, shock_guard=ShockGuard(gradient_factor=3.0))
    return contrast_experiment(CompactCompressive(), amplitude, spec_a, spec_b, ctl, g)


def test_contrast_swap():
    res = _quick_contrast(power_law(1.0), power_law(2.0))
    assert res.unstable.status is Status.SHOCK_GUARD_TRIPPED
    assert res.stable.status is Status.REACHED_END
    assert res.tau_end_stable == pytest.approx(1.99)
    swapped = _quick_contrast(power_law(2.0), power_law(1.0))
    assert swapped.unstable.status is Status.REACHED_END
    assert swapped.stable.status is Status.SHOCK_GUARD_TRIPPED
    assert swapped.stable.tau_stop == pytest.approx(res.unstable.tau_stop, rel=1e-12)


def test_contrast_zero_amplitude():
    res = _quick_contrast(power_law(1.0), power_law(2.0), amplitude=0.0)
    for o in (res.unstable, res.stable):
        assert o.status is Status.REACHED_END and o.max_gradient == 0.0


def test_worker_threads(monkeypatch):
    monkeypatch.delenv("FRW_EULER_THREADS", raising=False)
    assert worker_threads() == 2
    monkeypatch.setenv("FRW_EULER_THREADS", "1")
    assert worker_threads() == 1
