"""Norms, energies, the order-0 divergence identity and decay fits.

All spatial derivatives use the solver's own scheme, so identities are checked
in the same discrete calculus that drives the evolution.
"""
from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .euler_rhs import Scheme, derivative, rhs, velocity_gradient
from .fluid import FluidState, Grid, Regime, SoundSpeed
from .integrator import max_velocity_gradient, step
from .spacetime import ScaleFactorSpec, conformal_time, decay_function, evaluate

__all__ = [
    "SobolevOrder",
    "Norms",
    "Energy",
    "DiagnosticsRecord",
    "FitError",
    "CSV_COLUMNS",
    "multi_indices",
    "partial_derivatives",
    "sobolev_norm",
    "norms",
    "energy",
    "ratio_E_to_norm",
    "dissipation_integrand",
    "divergence_rhs_order0",
    "divergence_residual_order0",
    "decay_fit",
    "Recorder",
    "write_csv",
    "read_csv",
]

CSV_COLUMNS = (
    "t",
    "tau",
    "Omega",
    "omega",
    "S_N",
    "U_Nm1",
    "S_N_velocity",
    "E_N",
    "E_N_velocity",
    "E_Nm1_density",
    "sup_u",
    "sup_L",
    "max_grad_u",
    "div_residual",
    "ratio_E_to_norm",
)


class FitError(ValueError):
    """The decay fit window is empty or contains non-positive ``sup_u``."""


@dataclass(frozen=True)
class SobolevOrder:
    N: int = 3

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"Sobolev order must be an integer >= 1, got {self.N!r}")
        if self.N < 3:
            warnings.warn(f"Sobolev order N={self.N} is below the standing assumption N >= 3", stacklevel=2)


def _order(N) -> int:
    return N.N if isinstance(N, SobolevOrder) else int(N)


def multi_indices(grid: Grid, N: int) -> list[tuple[int, int, int]]:
    """All derivative counts ``alpha`` with ``|alpha| <= N`` over the active directions."""
    active = grid.active
    out = []
    for total in range(N + 1):
        for combo in itertools.combinations_with_replacement(active, total):
            alpha = [0, 0, 0]
            for i in combo:
                alpha[i] += 1
            out.append(tuple(alpha))
    return out


def partial_derivatives(
    f: np.ndarray, grid: Grid, indices: Sequence[tuple[int, int, int]], scheme: Scheme | str
) -> list[np.ndarray]:
    """``d_alpha f`` for each ``alpha``; spectral derivatives share one forward transform."""
    scheme = Scheme(scheme)
    if scheme is not Scheme.SPECTRAL:
        out = []
        for alpha in indices:
            g = f
            for axis, k in enumerate(alpha):
                if k:
                    g = derivative(g, grid, axis, scheme, order=k)
            out.append(np.array(g, dtype=float, copy=True))
        return out
    fh = np.fft.rfftn(f)
    ks = []
    for axis in range(3):
        n, l = grid.dims[axis], grid.lengths[axis]
        freq = np.fft.rfftfreq(n, l / n) if axis == 2 else np.fft.fftfreq(n, l / n)
        shape = [1, 1, 1]
        shape[axis] = freq.size
        ks.append((2.0 * math.pi * freq).reshape(shape))
    out = []
    for alpha in indices:
        if not any(alpha):
            out.append(np.array(f, dtype=float, copy=True))
            continue
        mult = np.ones(1, dtype=complex)
        for axis, k in enumerate(alpha):
            if not k:
                continue
            m = (1j * ks[axis]) ** k
            n = grid.dims[axis]
            if k % 2 == 1 and n % 2 == 0:
                nyq = [slice(None)] * 3
                nyq[axis] = n // 2
                m = m.copy()
                m[tuple(nyq)] = 0.0
            mult = mult * m
        out.append(np.fft.irfftn(fh * mult, s=grid.dims, axes=(0, 1, 2)))
    return out


def sobolev_norm(f: np.ndarray, grid: Grid, N: int, scheme: Scheme | str = Scheme.SPECTRAL) -> float:
    """``(sum_{|alpha| <= N} ||d_alpha f||_{L^2}^2)^{1/2}`` by the midpoint rule."""
    if N < 0:
        return 0.0
    ders = partial_derivatives(f, grid, multi_indices(grid, N), scheme)
    return math.sqrt(sum(grid.integrate(d * d) for d in ders))


# ---------------------------------------------------------------------------
# norms and energies


@dataclass(frozen=True)
class Norms:
    S_N: float
    U_Nm1: Optional[float] = None
    S_N_velocity: Optional[float] = None


@dataclass(frozen=True)
class Energy:
    E_N: Optional[float] = None
    E_N_velocity: Optional[float] = None
    E_Nm1_density: Optional[float] = None
    clamped: bool = False


def norms(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    N: SobolevOrder | int = 3,
    scheme: Scheme | str = Scheme.SPECTRAL,
) -> Norms:
    """Regime-dependent fluid norm, plus the lower-order velocity norm or the dust velocity part."""
    N = _order(N)
    grid = state.grid
    Omega, _ = evaluate(spec, state.t)
    regime = c2.regime
    u_N = [sobolev_norm(state.u[j], grid, N, scheme) for j in range(3)]
    if regime is Regime.DUST:
        vel = math.exp(2.0 * Omega) * sum(u_N)
        return Norms(sobolev_norm(state.L, grid, N - 1, scheme) + vel, None, vel)
    L_N = sobolev_norm(state.L, grid, N, scheme)
    base = L_N + math.exp(Omega) * sum(u_N)
    if regime is Regime.RADIATION:
        return Norms(base)
    low = math.sqrt(sum(sobolev_norm(state.u[j], grid, N - 1, scheme) ** 2 for j in range(3)))
    U = math.exp(Omega) * decay_function(spec, Omega) * low
    return Norms(base + U, U, None)


def _sqrt_clamped(x: float) -> tuple[float, bool]:
    if x < 0.0:
        return 0.0, True
    return math.sqrt(x), False


def energy(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    N: SobolevOrder | int = 3,
    scheme: Scheme | str = Scheme.SPECTRAL,
) -> Energy:
    """Energies from the time component of the energy currents, summed over ``|alpha| <= N``."""
    N = _order(N)
    grid = state.grid
    Omega, _ = evaluate(spec, state.t)
    e2 = math.exp(2.0 * Omega)
    cs2 = c2.c2
    u = state.u
    u0 = np.sqrt(1.0 + e2 * np.einsum("a...,a...->...", u, u))
    idx = multi_indices(grid, N)
    dL = partial_derivatives(state.L, grid, idx, scheme)
    du = [partial_derivatives(u[j], grid, idx, scheme) for j in range(3)]

    vel_total = 0.0
    dens_total = 0.0
    full_total = 0.0
    for n, alpha in enumerate(idx):
        ud = np.stack([du[j][n] for j in range(3)])
        gud = e2 * np.einsum("a...,a...->...", ud, ud)
        ud0 = e2 * np.einsum("a...,a...->...", u, ud) / u0
        quad = -(ud0**2) + gud
        Ld = dL[n]
        if c2.regime is Regime.DUST:
            vel_total += grid.integrate(e2 * u0 * quad)
            if sum(alpha) <= N - 1:
                dens_total += grid.integrate(u0 * Ld * Ld)
        else:
            J0 = (cs2 / (1.0 + cs2)) * u0 * Ld * Ld + 2.0 * cs2 * ud0 * Ld + (1.0 + cs2) * u0 * quad
            full_total += grid.integrate(J0)
    if c2.regime is Regime.DUST:
        ev, f1 = _sqrt_clamped(vel_total)
        ed, f2 = _sqrt_clamped(dens_total)
        return Energy(None, ev, ed, f1 or f2)
    e, flag = _sqrt_clamped(full_total)
    return Energy(e, None, None, flag)


def ratio_E_to_norm(en: Energy, nm: Norms, c2: SoundSpeed) -> float:
    """Energy over norm, pairing each regime's energy with its full norm.

    Intermediate: ``sqrt(E_N^2 + U_{N-1}^2) / S_N``; radiation ``E_N / S_N``;
    dust ``sqrt(E_vel^2 + E_dens^2) / S_N``.  Returns NaN for a zero norm.
    """
    if nm.S_N == 0.0:
        return math.nan
    if c2.regime is Regime.DUST:
        return math.hypot(en.E_N_velocity, en.E_Nm1_density) / nm.S_N
    if c2.regime is Regime.RADIATION:
        return en.E_N / nm.S_N
    return math.hypot(en.E_N, nm.U_Nm1) / nm.S_N


# ---------------------------------------------------------------------------
# order-0 divergence identity


def dissipation_integrand(state: FluidState, spec: ScaleFactorSpec, c2: SoundSpeed) -> np.ndarray:
    """``2(1+c^2)(3c^2-1) omega u^0 g_ab u^a u^b`` for the order-0 variation; exactly 0 at c^2 = 1/3."""
    Omega, omega = evaluate(spec, state.t)
    if c2.regime is Regime.RADIATION:
        return np.zeros(state.grid.dims)
    gu = math.exp(2.0 * Omega) * np.einsum("a...,a...->...", state.u, state.u)
    u0 = np.sqrt(1.0 + gu)
    return 2.0 * (1.0 + c2.c2) * (3.0 * c2.c2 - 1.0) * omega * u0 * gu


def _current_integral(state: FluidState, spec: ScaleFactorSpec, c2: SoundSpeed) -> float:
    """``int J^0[W, W]`` (dust: velocity plus density current)."""
    Omega, _ = evaluate(spec, state.t)
    e2 = math.exp(2.0 * Omega)
    gu = e2 * np.einsum("a...,a...->...", state.u, state.u)
    u0 = np.sqrt(1.0 + gu)
    ud0 = gu / u0
    quad = -(ud0**2) + gu
    L = state.L
    cs2 = c2.c2
    if c2.regime is Regime.DUST:
        J0 = e2 * u0 * quad + u0 * L * L
    else:
        J0 = (cs2 / (1.0 + cs2)) * u0 * L * L + 2.0 * cs2 * ud0 * L + (1.0 + cs2) * u0 * quad
    return state.grid.integrate(J0)


def divergence_rhs_order0(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    scheme: Scheme | str = Scheme.SPECTRAL,
) -> float:
    """``int d_mu J^mu`` for the order-0 variation from the derivative-free identity.

    For order 0, ``F = -omega (1+c^2) g_ab u^a u^b / u^0`` and ``G^j = 0``.
    The u^0-variation source is
    ``G^0 = g_ab [u^nu d_nu (u^a/u^0)] u^b + 3 c^2 omega u^0 u0dot``.
    """
    grid = state.grid
    Omega, omega = evaluate(spec, state.t)
    e2 = math.exp(2.0 * Omega)
    cs2 = c2.c2
    u, L = state.u, state.L
    r = rhs(state, spec, c2, scheme)
    gu = e2 * np.einsum("a...,a...->...", u, u)
    u0 = np.sqrt(1.0 + gu)
    ud0 = gu / u0  # u0dot for the variation (L, u)
    quad = -(ud0**2) + gu

    du = velocity_gradient(u, grid, scheme)
    div_u = r.triangle_prime0 + np.einsum("aa...->...", du)  # d_mu u^mu
    dt_ratio = (r.du_dt * u0 - u * r.triangle_prime0) / u0**2  # d_t (u^a / u^0)
    ratio = u / u0
    transport = u0 * dt_ratio + np.stack(
        [sum(u[k] * derivative(ratio[a], grid, k, scheme) for k in range(3)) for a in range(3)]
    )
    g_transport_u = e2 * np.einsum("a...,a...->...", transport, u)
    F = -omega * (1.0 + cs2) * gu / u0
    G0 = g_transport_u + 3.0 * cs2 * omega * u0 * ud0

    if c2.regime is Regime.DUST:
        velocity = e2 * (div_u * quad - 2.0 * omega * u0 * ud0**2 - 2.0 * G0 * ud0)
        uk_du = np.einsum("k...,bk...->b...", u, du)  # u^k d_k u^b
        density = (
            div_u * L * L
            + (4.0 / u0) * omega * gu * L
            + (2.0 / u0**2) * e2 * np.einsum("a...,a...->...", u, uk_du) * L
            - 2.0 * np.einsum("aa...->...", du) * L
            + 2.0 * F * L
        )
        return grid.integrate(velocity + density)

    s = cs2 / (1.0 + cs2)
    integrand = (
        s * div_u * L * L
        + (1.0 + cs2) * div_u * quad
        + 2.0 * cs2 * e2 * np.einsum("a...,a...->...", dt_ratio, u) * L
        + 4.0 * cs2 * omega * (gu / u0) * L
        + dissipation_integrand(state, spec, c2)
        + 2.0 * s * F * L
        - 2.0 * (1.0 + cs2) * G0 * ud0
    )
    return grid.integrate(integrand)


def divergence_residual_order0(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    dt_probe: float,
    scheme: Scheme | str = Scheme.SPECTRAL,
) -> float:
    """``|d/dt int J^0 - int d_mu J^mu|`` with the time derivative from two RK4 probe steps."""
    if not dt_probe > 0.0:
        raise ValueError("dt_probe must be positive")
    if state.t - dt_probe < 1.0 and spec.family.value == "tabulated":
        raise ValueError("backward probe leaves the tabulated range")
    plus = step(state, spec, c2, dt_probe, scheme)
    minus = step(state, spec, c2, -dt_probe, scheme)
    lhs = (_current_integral(plus, spec, c2) - _current_integral(minus, spec, c2)) / (2.0 * dt_probe)
    return abs(lhs - divergence_rhs_order0(state, spec, c2, scheme))


# ---------------------------------------------------------------------------
# records and fits


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    tau: float
    Omega: float
    omega: float
    S_N: float
    U_Nm1: Optional[float]
    S_N_velocity: Optional[float]
    E_N: Optional[float]
    E_N_velocity: Optional[float]
    E_Nm1_density: Optional[float]
    sup_u: float
    sup_L: float
    max_grad_u: float
    div_residual: Optional[float]
    ratio_E_to_norm: float

    def row(self) -> list[str]:
        return ["" if v is None else repr(float(v)) for v in (getattr(self, c) for c in CSV_COLUMNS)]


class Recorder:
    """Observer for ``integrator.run`` producing one ``DiagnosticsRecord`` per call.

    ``rescaled_gradient=True`` reports ``max |d (e^Omega u)|``, the gradient of
    the velocity evolved in the conformal frame.
    """

    def __init__(
        self,
        spec: ScaleFactorSpec,
        c2: SoundSpeed,
        N: SobolevOrder | int = 3,
        scheme: Scheme | str = Scheme.SPECTRAL,
        dt_probe: Optional[float] = None,
        rescaled_gradient: bool = False,
    ):
        self.spec = spec
        self.c2 = c2
        self.N = _order(N)
        self.scheme = Scheme(scheme)
        self.dt_probe = dt_probe
        self.rescaled_gradient = rescaled_gradient

    def __call__(self, state: FluidState, tau: Optional[float] = None) -> DiagnosticsRecord:
        spec, c2 = self.spec, self.c2
        Omega, omega = evaluate(spec, state.t)
        if tau is None:
            tau = conformal_time(spec, state.t)
        nm = norms(state, spec, c2, self.N, self.scheme)
        en = energy(state, spec, c2, self.N, self.scheme)
        grad = max_velocity_gradient(state, self.scheme)
        if self.rescaled_gradient:
            grad *= math.exp(Omega)
        resid = None
        if self.dt_probe is not None and state.t - self.dt_probe >= 1.0:
            resid = divergence_residual_order0(state, spec, c2, self.dt_probe, self.scheme)
        return DiagnosticsRecord(
            t=state.t,
            tau=tau,
            Omega=Omega,
            omega=omega,
            S_N=nm.S_N,
            U_Nm1=nm.U_Nm1,
            S_N_velocity=nm.S_N_velocity,
            E_N=en.E_N,
            E_N_velocity=en.E_N_velocity,
            E_Nm1_density=en.E_Nm1_density,
            sup_u=float(np.max(np.abs(state.u))),
            sup_L=float(np.max(np.abs(state.L))),
            max_grad_u=grad,
            div_residual=resid,
            ratio_E_to_norm=ratio_E_to_norm(en, nm, c2),
        )


def decay_fit(series: Iterable[DiagnosticsRecord], window: tuple[float, float]) -> float:
    """Least-squares slope of ``ln sup_u`` against ``Omega`` over records with ``t`` in ``window``."""
    t1, t2 = window
    pts = [(r.Omega, r.sup_u) for r in series if t1 <= r.t <= t2]
    if len(pts) < 2:
        raise FitError(f"fewer than two records in window {window}")
    Om = np.array([p[0] for p in pts])
    su = np.array([p[1] for p in pts])
    if np.any(su <= 0.0) or not np.all(np.isfinite(su)):
        raise FitError("sup_u must be positive throughout the fit window")
    if np.ptp(Om) == 0.0:
        raise FitError("Omega is constant on the fit window")
    return float(np.polyfit(Om, np.log(su), 1)[0])


def write_csv(path: str | Path, records: Iterable[DiagnosticsRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_csv(path: str | Path) -> list[DiagnosticsRecord]:
    names = {f.name for f in fields(DiagnosticsRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {k: (None if v == "" else float(v)) for k, v in row.items() if k in names}
            out.append(DiagnosticsRecord(**vals))
    return out
