from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from frweuler.euler_rhs import (
    Scheme,
    coefficient_matrices,
    derivative,
    laplacian,
    rhs,
    rhs_at,
    spatial_gradient,
    verify_matrix_form,
)
from frweuler.fluid import FluidState, Grid, SoundSpeed, background
from frweuler.spacetime import exponential, power_law

C2S = [0.0, 0.1, 1 / 3]


def oracle_matrices(u, Omega, omega, c2):
    """Coefficients assembled from ``Pi`` and the metric at a single point."""
    e2 = math.exp(2.0 * Omega)
    u = np.asarray(u, dtype=float)
    u0 = math.sqrt(1.0 + e2 * u @ u)
    U = np.r_[u0, u]
    Pi = np.outer(U, U) + np.diag([-1.0, 1 / e2, 1 / e2, 1 / e2])
    s = c2 / (1.0 + c2)
    A0 = np.zeros((4, 4))
    A0[0, 0] = u0
    A0[0, 1:] = (1.0 + c2) * e2 * u / u0
    A = []
    for a in range(3):
        M = np.zeros((4, 4))
        M[0, 0] = u[a]
        M[0, 1 + a] = 1.0 + c2
        for j in range(3):
            M[1 + j, 0] = s * Pi[1 + j, 1 + a]
            M[1 + j, 1 + j] = u[a]
        A.append(M)
    for j in range(3):
        A0[1 + j, 0] = s * Pi[1 + j, 0]
        A0[1 + j, 1 + j] = u0
    b = np.r_[-omega * (1.0 + c2) * e2 * (u @ u) / u0, omega * (3 * c2 - 2) * u0 * u]
    return A0, A, b


@pytest.mark.parametrize("scheme", list(Scheme))
def test_constant_field_gradient(scheme):
    g = Grid((8, 8, 8))
    np.testing.assert_array_equal(spatial_gradient(np.full(g.dims, 3.0), g, scheme), 0.0)


def test_spectral_exact_on_resolved_modes():
    g = Grid((32, 1, 1), (3.0, 1.0, 1.0))
    x = g.coordinates()[0]
    k = 2.0 * math.pi / 3.0
    d = derivative(np.sin(k * x), g, 0, Scheme.SPECTRAL)
    np.testing.assert_allclose(d, k * np.cos(k * x), atol=1e-12)
    d3 = derivative(np.sin(5 * k * x), g, 0, Scheme.SPECTRAL, order=3)
    np.testing.assert_allclose(d3, -((5 * k) ** 3) * np.cos(5 * k * x), atol=1e-9)


@pytest.mark.parametrize("scheme, rate", [(Scheme.CENTRAL2, 4.0), (Scheme.CENTRAL4, 16.0)])
def test_central_refinement(scheme, rate):
    def err(n):
        g = Grid((n, 1, 1))
        x = g.coordinates()[0]
        f = np.exp(np.sin(x))
        return np.max(np.abs(derivative(f, g, 0, scheme) - derivative(f, g, 0, Scheme.SPECTRAL)))

    ratio = err(64) / err(128)
    assert ratio == pytest.approx(rate, rel=0.05)


def test_laplacian_second_order():
    def err(n):
        g = Grid((n, n, 1))
        X = g.coordinates()
        f = np.sin(X[0]) * np.cos(2 * X[1])
        return np.max(np.abs(laplacian(f, g) + 5.0 * f))

    assert err(32) / err(64) == pytest.approx(4.0, rel=0.05)


@pytest.mark.parametrize("c2", C2S)
def test_background_fixed_point(c2):
    s = background(Grid((8, 8, 8))).with_fields(t=1.7)
    s = s.with_fields(L=np.full(s.grid.dims, 0.4))
    r = rhs(s, exponential(1.0), SoundSpeed(c2))
    assert not np.any(r.dL_dt) and not np.any(r.du_dt)


@pytest.mark.parametrize("c2", C2S)
def test_linearized_homogeneous_rate(c2):
    g = Grid((1, 1, 1))
    u = np.full((3, 1, 1, 1), 1e-7)
    s = FluidState(g, np.zeros(g.dims), u, 2.0)
    r = rhs(s, exponential(1.0), SoundSpeed(c2))
    np.testing.assert_allclose(r.du_dt / u, 3 * c2 - 2, rtol=1e-10)


@pytest.mark.parametrize("c2", C2S)
@pytest.mark.parametrize("scheme", list(Scheme))
def test_rhs_against_independent_matrices(c2, scheme, make_state):
    g = Grid((6, 5, 4))
    s = make_state(g, 0.1, t=1.3, seed=int(100 * c2) + 7)
    spec = power_law(1.5)
    Omega, omega = 1.5 * math.log(1.3), 1.5 / 1.3
    r = rhs_at(s, Omega, omega, SoundSpeed(c2), scheme)
    dL = spatial_gradient(s.L, g, scheme)
    du = np.stack([spatial_gradient(s.u[j], g, scheme) for j in range(3)])
    worst = 0.0
    for idx in np.ndindex(g.dims):
        A0, A, b = oracle_matrices(s.u[(slice(None),) + idx], Omega, omega, c2)
        dW = np.vstack([dL[(slice(None),) + idx], du[(slice(None), slice(None)) + idx]])  # (4, 3)
        ref = np.linalg.solve(A0, b - sum(A[a] @ dW[:, a] for a in range(3)))
        got = np.r_[r.dL_dt[idx], r.du_dt[(slice(None),) + idx]]
        worst = max(worst, np.max(np.abs(got - ref)) / max(1.0, np.max(np.abs(ref))))
    assert worst < 1e-12
    assert verify_matrix_form(s, spec, SoundSpeed(c2), scheme) < 1e-10


def test_verify_matrix_form_background():
    s = background(Grid((4, 4, 4)))
    assert verify_matrix_form(s, exponential(1.0), SoundSpeed(0.1)) == 0.0


def test_coefficient_examples():
    m = coefficient_matrices(np.zeros(3), 0.0, SoundSpeed(1 / 3))
    np.testing.assert_array_equal(m.A0, np.eye(4))
    np.testing.assert_array_equal(m.A0_inv, np.eye(4))
    assert m.det_A0 == 1.0
    np.testing.assert_allclose(m.A[0][0], [0.0, 4.0 / 3.0, 0.0, 0.0])


@given(
    u=st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3),
    Om=st.floats(-1.0, 2.0),
    c2=st.sampled_from(C2S + [0.2]),
)
def test_inverse_and_determinant(u, Om, c2):
    m = coefficient_matrices(np.array(u), Om, SoundSpeed(c2))
    np.testing.assert_allclose(m.A0_inv @ m.A0, np.eye(4), atol=1e-12 * np.max(np.abs(m.A0)) ** 2)
    assert m.det_A0 == pytest.approx(np.linalg.det(m.A0), rel=1e-10)
    A0, A, _ = oracle_matrices(u, Om, 0.0, c2)
    np.testing.assert_allclose(m.A0, A0, rtol=1e-14, atol=1e-14)
    for a in range(3):
        np.testing.assert_allclose(m.A[a], A[a], rtol=1e-14, atol=1e-14)


def test_regime_continuity_near_radiation(make_state):
    s = make_state(Grid((6, 6, 6)), 0.05, t=1.4)
    spec = exponential(1.0)
    a = rhs(s, spec, SoundSpeed(1 / 3))
    b = rhs(s, spec, SoundSpeed(1 / 3 - 1e-9))
    scale = np.max(np.abs(a.du_dt))
    assert np.max(np.abs(a.du_dt - b.du_dt)) <= 1e-7 * scale
    assert np.max(np.abs(a.dL_dt - b.dL_dt)) <= 1e-7 * np.max(np.abs(a.dL_dt))


def test_dust_has_no_pressure_gradient():
    g = Grid((16, 1, 1))
    s = background(g)
    s = s.with_fields(L=0.1 * np.sin(g.coordinates()[0]))
    r = rhs(s, exponential(1.0), SoundSpeed(0.0))
    assert not np.any(r.du_dt)
    # pressure makes density gradients push the fluid
    assert np.any(rhs(s, exponential(1.0), SoundSpeed(0.1)).du_dt)


def test_viscosity_damps_modes():
    g = Grid((32, 1, 1))
    x = g.coordinates()[0]
    s = background(g).with_fields(L=1e-3 * np.cos(4 * x))
    plain = rhs_at(s, 0.0, 0.0, SoundSpeed(0.0), Scheme.CENTRAL2)
    visc = rhs_at(s, 0.0, 0.0, SoundSpeed(0.0), Scheme.CENTRAL2, viscosity=0.5)
    assert np.sum((visc.dL_dt - plain.dL_dt) * s.L) < 0.0
