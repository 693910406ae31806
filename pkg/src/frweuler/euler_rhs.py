"""Right-hand side of the relativistic Euler system on an FLRW-type background.

Time derivatives are evaluated from the isolated-time-derivative formulas.
An independent route, a pointwise linear solve with the coefficient matrices
of the first-order symmetric form, is provided for cross-validation.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .fluid import FluidState, Grid, Regime, SoundSpeed
from .spacetime import ScaleFactorSpec, evaluate

__all__ = [
    "Scheme",
    "DegenerateStateError",
    "RhsFields",
    "CoefficientMatrices",
    "derivative",
    "spatial_gradient",
    "laplacian",
    "velocity_gradient",
    "rhs",
    "rhs_at",
    "coefficient_matrices",
    "verify_matrix_form",
    "GUARD_TOL",
]

GUARD_TOL = 1e-12


class Scheme(str, enum.Enum):
    SPECTRAL = "spectral"
    CENTRAL4 = "central-4"
    CENTRAL2 = "central-2"


class DegenerateStateError(ArithmeticError):
    """The denominator ``1 - c^2 g_ab u^a u^b / (u^0)^2`` fell below the guard."""


# ---------------------------------------------------------------------------
# spatial calculus


def _wavenumbers(n: int, length: float) -> np.ndarray:
    return 2.0 * math.pi * np.fft.rfftfreq(n, d=length / n)


def derivative(f: np.ndarray, grid: Grid, axis: int, scheme: Scheme | str, order: int = 1) -> np.ndarray:
    """``order``-th derivative of a periodic field along ``axis``.

    Suppressed directions (``n = 1``) return zeros for ``order >= 1``.
    """
    scheme = Scheme(scheme)
    if order == 0:
        return np.array(f, dtype=float, copy=True)
    n = grid.dims[axis]
    if n == 1:
        return np.zeros_like(f, dtype=float)
    h = grid.spacing[axis]
    if scheme is Scheme.SPECTRAL:
        k = _wavenumbers(n, grid.lengths[axis])
        mult = (1j * k) ** order
        if order % 2 == 1 and n % 2 == 0:
            mult[-1] = 0.0  # Nyquist mode has no odd derivative
        shape = [1] * f.ndim
        shape[axis] = k.size
        fh = np.fft.rfft(f, axis=axis) * mult.reshape(shape)
        return np.fft.irfft(fh, n=n, axis=axis)
    out = np.asarray(f, dtype=float)
    for _ in range(order):
        if scheme is Scheme.CENTRAL2:
            out = (np.roll(out, -1, axis) - np.roll(out, 1, axis)) / (2.0 * h)
        else:
            out = (
                -np.roll(out, -2, axis)
                + 8.0 * np.roll(out, -1, axis)
                - 8.0 * np.roll(out, 1, axis)
                + np.roll(out, 2, axis)
            ) / (12.0 * h)
    return out


def spatial_gradient(f: np.ndarray, grid: Grid, scheme: Scheme | str = Scheme.SPECTRAL) -> np.ndarray:
    """Gradient ``(d_1 f, d_2 f, d_3 f)`` stacked along a leading axis."""
    return np.stack([derivative(f, grid, i, scheme) for i in range(3)])


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order three-point Laplacian over the active directions."""
    out = np.zeros_like(f, dtype=float)
    for i in grid.active:
        h = grid.spacing[i]
        out += (np.roll(f, -1, i) - 2.0 * f + np.roll(f, 1, i)) / h**2
    return out


def velocity_gradient(u: np.ndarray, grid: Grid, scheme: Scheme | str) -> np.ndarray:
    """``du[j, k] = d_k u^j``."""
    return np.stack([spatial_gradient(u[j], grid, scheme) for j in range(3)])


# ---------------------------------------------------------------------------
# isolated time derivatives


@dataclass(frozen=True, eq=False)
class RhsFields:
    dL_dt: np.ndarray
    du_dt: np.ndarray  # (3, ...)
    triangle_prime0: np.ndarray


def _factor_3c2m1(c2: SoundSpeed) -> float:
    # exact zero in the radiation case
    return 0.0 if c2.regime is Regime.RADIATION else 3.0 * c2.c2 - 1.0


def isolated_derivatives(
    u: np.ndarray,
    dL: np.ndarray,
    du: np.ndarray,
    Omega: float,
    omega: float,
    c2: SoundSpeed,
) -> RhsFields:
    """Pointwise evaluation given ``u``, ``dL[k] = d_k L`` and ``du[j, k] = d_k u^j``."""
    cs2 = c2.c2
    f31 = _factor_3c2m1(c2)
    s = cs2 / (1.0 + cs2)
    e2 = math.exp(2.0 * Omega)

    guu = e2 * np.einsum("a...,a...->...", u, u)
    u0 = np.sqrt(1.0 + guu)
    x = guu / u0**2
    den = 1.0 - cs2 * x
    if np.any(den < GUARD_TOL) or not np.all(np.isfinite(den)):
        raise DegenerateStateError("sonic normalization breakdown: 1 - c^2 g(u,u)/(u^0)^2 below guard")
    div = np.einsum("aa...->...", du)
    u_dL = np.einsum("a...,a...->...", u, dL)
    guku = e2 * np.einsum("a...,k...,ak...->...", u, u, du)
    u_du = np.einsum("a...,ja...->j...", u, du)  # u^a d_a u^j

    triangle = (
        -omega * (1.0 + cs2) * f31 * x / den
        + ((cs2 - 1.0) * u_dL / u0 - (1.0 + cs2) * div / u0 + (1.0 + cs2) * guku / u0**3) / den
    )
    triangle0 = (
        omega * f31 * (guu / u0) / den
        - s * ((1.0 - x) / den) * u_dL
        + (cs2 * x / den) * div
        - (guku / u0**2) / den
    )
    triangle_j = (
        omega * cs2 * f31 * u * (x / den)
        + cs2 * u * ((div / u0 - guku / u0**3) / den)
        - (cs2**2 / (1.0 + cs2)) * u * (((1.0 - x) / den) * u_dL / u0)
        - u_du / u0
        - s * dL / (e2 * u0)
    )
    du_dt = omega * (3.0 * cs2 - 2.0) * u + triangle_j
    return RhsFields(triangle, du_dt, triangle0)


def rhs_at(
    state: FluidState,
    Omega: float,
    omega: float,
    c2: SoundSpeed,
    scheme: Scheme | str = Scheme.SPECTRAL,
    viscosity: float = 0.0,
) -> RhsFields:
    """Time derivatives for explicitly given ``Omega`` and ``omega``.

    ``viscosity = nu`` adds ``nu h^2 Lap`` to every evolved field, with ``h``
    the smallest active spacing.
    """
    grid = state.grid
    dL = spatial_gradient(state.L, grid, scheme)
    du = velocity_gradient(state.u, grid, scheme)
    out = isolated_derivatives(state.u, dL, du, Omega, omega, c2)
    if viscosity:
        h = min(grid.spacing[i] for i in grid.active)
        nu = viscosity * h * h
        dL_dt = out.dL_dt + nu * laplacian(state.L, grid)
        du_dt = out.du_dt + nu * np.stack([laplacian(state.u[j], grid) for j in range(3)])
        out = RhsFields(dL_dt, du_dt, out.triangle_prime0)
    return out


def rhs(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    scheme: Scheme | str = Scheme.SPECTRAL,
    viscosity: float = 0.0,
) -> RhsFields:
    """Time derivatives ``(d_t L, d_t u^j)`` at ``state.t``."""
    Omega, omega = evaluate(spec, state.t)
    return rhs_at(state, Omega, omega, c2, scheme, viscosity)


# ---------------------------------------------------------------------------
# matrix form


@dataclass(frozen=True, eq=False)
class CoefficientMatrices:
    """Matrices with shape ``(..., 4, 4)``; ``A`` stacks ``A^1, A^2, A^3`` first."""

    A0: np.ndarray
    A: np.ndarray
    A0_inv: np.ndarray
    det_A0: np.ndarray
    b: np.ndarray


def coefficient_matrices(u, Omega: float, c2: SoundSpeed, omega: float = 0.0) -> CoefficientMatrices:
    """Coefficient matrices at one point (``u`` of shape ``(3,)``) or a field (``(3, ...)``).

    ``b`` is the inhomogeneous array, which needs ``omega``.
    """
    u = np.asarray(u, dtype=float)
    cs2 = c2.c2
    s = cs2 / (1.0 + cs2)
    e2 = math.exp(2.0 * Omega)
    shape = u.shape[1:]
    guu = e2 * np.einsum("a...,a...->...", u, u)
    u0 = np.sqrt(1.0 + guu)
    u_low = e2 * u
    Pi_j0 = u0[None] * u if shape else u0 * u

    A0 = np.zeros(shape + (4, 4))
    A0[..., 0, 0] = u0
    for a in range(3):
        A0[..., 0, 1 + a] = (1.0 + cs2) * u_low[a] / u0
    for j in range(3):
        A0[..., 1 + j, 0] = s * Pi_j0[j]
        A0[..., 1 + j, 1 + j] = u0

    A = np.zeros((3,) + shape + (4, 4))
    for a in range(3):
        A[a, ..., 0, 0] = u[a]
        A[a, ..., 0, 1 + a] = 1.0 + cs2
        for j in range(3):
            Pi_ja = u[j] * u[a] + (1.0 / e2 if j == a else 0.0)
            A[a, ..., 1 + j, 0] = s * Pi_ja
            A[a, ..., 1 + j, 1 + j] = u[a]

    # explicit inverse, including the diagonal corrections d_j
    Pi00 = u0**2 - 1.0
    pref = 1.0 / (u0**2 - cs2 * Pi00)
    inv = np.zeros(shape + (4, 4))
    inv[..., 0, 0] = u0
    for a in range(3):
        inv[..., 0, 1 + a] = -(1.0 + cs2) * u_low[a] / u0
    pu = [Pi_j0[k] * u_low[k] for k in range(3)]
    for j in range(3):
        inv[..., 1 + j, 0] = -s * Pi_j0[j]
        d_j = (cs2 / u0**2) * sum(pu[k] for k in range(3) if k != j)
        for k in range(3):
            if j == k:
                inv[..., 1 + j, 1 + k] = u0 - d_j
            else:
                inv[..., 1 + j, 1 + k] = (cs2 / u0**2) * Pi_j0[j] * u_low[k]
    inv *= np.asarray(pref)[..., None, None]

    det = u0**2 * (u0**2 * (1.0 - cs2) + cs2)
    b = np.zeros(shape + (4,))
    b[..., 0] = -omega * (1.0 + cs2) * guu / u0
    for j in range(3):
        b[..., 1 + j] = omega * (3.0 * cs2 - 2.0) * u0 * u[j]
    return CoefficientMatrices(A0, A, inv, det, b)


def verify_matrix_form(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    scheme: Scheme | str = Scheme.SPECTRAL,
) -> float:
    """Relative max-norm gap between ``rhs`` and a pointwise solve of ``A^0 dW = b - A^a d_a W``.

    The gap is divided by ``max |dW|`` when that is nonzero.
    """
    Omega, omega = evaluate(spec, state.t)
    grid = state.grid
    fast = rhs_at(state, Omega, omega, c2, scheme)
    mats = coefficient_matrices(state.u, Omega, c2, omega)
    if np.any(mats.det_A0 <= 0.0):
        raise np.linalg.LinAlgError("singular A^0 encountered")
    W = np.concatenate([state.L[None], state.u])
    dW = np.stack([np.stack([derivative(W[m], grid, a, scheme) for m in range(4)], axis=-1) for a in range(3)])
    rhs_vec = mats.b - np.einsum("a...mn,a...n->...m", mats.A, dW)
    ref = np.linalg.solve(mats.A0, rhs_vec[..., None])[..., 0]
    got = np.concatenate([fast.dL_dt[..., None], np.moveaxis(fast.du_dt, 0, -1)], axis=-1)
    gap = float(np.max(np.abs(got - ref)))
    scale = float(np.max(np.abs(ref)))
    return gap / scale if scale > 0.0 else gap
