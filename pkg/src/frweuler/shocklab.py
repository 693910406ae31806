"""Radiation-fluid reduction to Minkowski space and shock-formation functionals.

For ``c^2 = 1/3`` the rescaled variables ``rho' = e^{4 Omega} rho`` and
``U = e^Omega u`` solve the flat-space Euler equations in conformal time.
The Christodoulou data functionals are evaluated on the unit ball around the
box center, restricted to the active directions in reduced-dimension runs.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import map_coordinates

from .euler_rhs import Scheme
from .diagnostics import multi_indices, partial_derivatives
from .fluid import (
    CompactCompressive,
    FluidState,
    Grid,
    Regime,
    SoundSpeed,
    background,
    perturb,
)
from .integrator import Frame, RunOutcome, StepControl, run
from .spacetime import (
    ConformalHorizonError,
    ScaleFactorSpec,
    conformal_horizon,
    conformal_time,
    evaluate,
    invert_conformal_time,
)

__all__ = [
    "RescaledState",
    "Functionals",
    "ShockConditions",
    "ShockTime",
    "ShockReport",
    "ContrastResult",
    "to_minkowski",
    "from_minkowski",
    "christodoulou_functionals",
    "shock_conditions",
    "predicted_shock_time",
    "shock_report",
    "contrast_experiment",
    "worker_threads",
]

RADIATION = SoundSpeed(1.0 / 3.0)
_W = 4.0 / math.sqrt(3.0)


@dataclass(frozen=True, eq=False)
class RescaledState:
    grid: Grid
    rho_prime: np.ndarray
    U: np.ndarray  # (3, ...)
    tau: float = 1.0

    def __post_init__(self):
        if np.any(self.rho_prime <= 0.0):
            raise ValueError("rho_prime must be positive")

    @property
    def U_tau(self) -> np.ndarray:
        return np.sqrt(1.0 + np.einsum("a...,a...->...", self.U, self.U))


def _require_radiation(c2: SoundSpeed) -> None:
    if c2.regime is not Regime.RADIATION:
        raise ValueError(f"the conformal reduction needs c2 = 1/3, got {c2.c2}")


def to_minkowski(
    state: FluidState, spec: ScaleFactorSpec, rho_bar: float = 1.0, c2: SoundSpeed = RADIATION
) -> RescaledState:
    """``rho' = e^{4 Omega} rho = rho_bar e^L``, ``U = e^Omega u``, ``tau = tau(t)``."""
    _require_radiation(c2)
    Omega, _ = evaluate(spec, state.t)
    return RescaledState(
        state.grid, rho_bar * np.exp(state.L), math.exp(Omega) * state.u, conformal_time(spec, state.t)
    )


def from_minkowski(
    rs: RescaledState, spec: ScaleFactorSpec, rho_bar: float = 1.0, c2: SoundSpeed = RADIATION
) -> FluidState:
    """Inverse of ``to_minkowski``."""
    _require_radiation(c2)
    t = invert_conformal_time(spec, rs.tau) if rs.tau != 1.0 else 1.0
    Omega, _ = evaluate(spec, t)
    return FluidState(rs.grid, np.log(rs.rho_prime / rho_bar), math.exp(-Omega) * rs.U, t)


# ---------------------------------------------------------------------------
# data functionals


@dataclass(frozen=True)
class Functionals:
    D_M: float
    S_annulus: float
    Q_r: float


def _active_measure(grid: Grid) -> float:
    return float(np.prod([grid.spacing[i] for i in grid.active])) if grid.active else 1.0


def _radius(grid: Grid) -> np.ndarray:
    X = grid.coordinates()
    return np.sqrt(sum(X[i] ** 2 for i in grid.active)) if grid.active else np.zeros(grid.dims)


def _sphere_quadrature(d: int, r: float, n_theta: int, n_phi: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``(k, d)`` on the radius-``r`` sphere in ``R^d`` and surface weights."""
    if d == 1:
        return np.array([[r], [-r]]), np.ones(2)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    if d == 2:
        nodes = r * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        return nodes, np.full(n_phi, 2.0 * math.pi * r / n_phi)
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)  # cos(theta)
    M, P = np.meshgrid(mu, phi, indexing="ij")
    S = np.sqrt(1.0 - M**2)
    nodes = r * np.stack([S * np.cos(P), S * np.sin(P), M], axis=-1).reshape(-1, 3)
    w = (r * r * np.outer(wmu, np.full(n_phi, 2.0 * math.pi / n_phi))).reshape(-1)
    return nodes, w


def _interpolate(f: np.ndarray, grid: Grid, points: np.ndarray) -> np.ndarray:
    """Periodic trilinear interpolation at active-coordinate ``points`` of shape ``(k, d)``."""
    coords = np.zeros((3, points.shape[0]))
    for col, i in enumerate(grid.active):
        coords[i] = (points[:, col] + 0.5 * grid.lengths[i]) / grid.spacing[i]
    return map_coordinates(f, coords, order=1, mode="grid-wrap")


def christodoulou_functionals(
    data: RescaledState,
    rho_bar: float,
    r: float,
    M: int = 1,
    scheme: Scheme | str = Scheme.SPECTRAL,
    n_theta: int = 64,
    n_phi: int = 128,
    support_tol: float = 1e-10,
) -> Functionals:
    """``D_M``, the order-1 annular norm and ``Q(r)`` for data on the unit ball.

    Integrals use the Lebesgue measure of the active directions; in plane or
    axial symmetry the ball, annulus and sphere are those of ``R^1`` or ``R^2``.
    """
    if not 2.0 / 3.0 <= r < 1.0:
        raise ValueError(f"r must lie in [2/3, 1), got {r}")
    grid = data.grid
    if not grid.active:
        raise ValueError("functionals need at least one active direction")
    if any(grid.lengths[i] / 2.0 <= 1.0 for i in grid.active):
        raise ValueError("the box must strictly contain the unit ball")
    drho = data.rho_prime - rho_bar
    fields_ = [drho] + [data.U[j] for j in range(3)]
    radius = _radius(grid)
    outside = radius > 1.0
    scale = max(float(np.max(np.abs(f))) for f in fields_)
    if scale > 0.0 and max(float(np.max(np.abs(f[outside]), initial=0.0)) for f in fields_) > support_tol * scale:
        raise ValueError("perturbation is not supported in the unit ball")

    dv = _active_measure(grid)
    idx_M = multi_indices(grid, M)
    idx_1 = multi_indices(grid, 1)
    D = 0.0
    S = 0.0
    annulus = (radius >= r) & (radius <= 1.0)
    for f in fields_:
        D += math.sqrt(sum(float(np.sum(g * g)) * dv for g in partial_derivatives(f, grid, idx_M, scheme)))
        S += math.sqrt(sum(float(np.sum((g * g)[annulus])) * dv for g in partial_derivatives(f, grid, idx_1, scheme)))

    X = grid.coordinates()
    safe = np.where(radius > 0.0, radius, 1.0)
    UN = sum(data.U[i] * np.where(radius > 0.0, X[i] / safe, 0.0) for i in grid.active)
    d = len(grid.active)
    nodes, w = _sphere_quadrature(d, r, n_theta, n_phi)
    normal = nodes / r
    U_n = sum(_interpolate(data.U[i], grid, nodes) * normal[:, col] for col, i in enumerate(grid.active))
    surface = float(np.sum(w * r * (_interpolate(drho, grid, nodes) + _W * rho_bar * U_n)))
    volume = float(np.sum((2.0 * drho + _W * rho_bar * UN)[annulus])) * dv
    return Functionals(D, S, surface + volume)


@dataclass(frozen=True)
class ShockConditions:
    small_data: bool
    q_dominates: bool
    radius_ok: bool
    degenerate: bool

    @property
    def all_met(self) -> bool:
        return self.small_data and self.q_dominates and self.radius_ok and not self.degenerate


def shock_conditions(fun: Functionals, r: float, C: float = 1.0, epsilon: float = 0.01) -> ShockConditions:
    """``D_M <= eps``; ``Q >= C sqrt(D)(sqrt(D) + sqrt(1-r)) S``; ``2/3 <= r < 1``."""
    if not 2.0 / 3.0 <= r < 1.0:
        raise ValueError(f"r must lie in [2/3, 1), got {r}")
    sD = math.sqrt(fun.D_M)
    bound = C * sD * (sD + math.sqrt(1.0 - r)) * fun.S_annulus
    return ShockConditions(
        small_data=fun.D_M <= epsilon,
        q_dominates=fun.Q_r >= bound,
        radius_ok=True,
        degenerate=fun.Q_r <= 0.0,
    )


@dataclass(frozen=True)
class ShockTime:
    tau_max: float
    t_max: Optional[float]

    @property
    def reachable(self) -> bool:
        return self.t_max is not None


def predicted_shock_time(Q_r: float, r: float, C_prime: float, spec: ScaleFactorSpec) -> ShockTime:
    """``tau_max = exp(C'(1-r)/Q_r)`` and its coordinate time, or ``None`` past the horizon."""
    if not Q_r > 0.0:
        raise ValueError(f"Q_r must be positive, got {Q_r}")
    with np.errstate(over="ignore"):
        tau_max = math.exp(min(C_prime * (1.0 - r) / Q_r, 700.0))
    try:
        t_max = invert_conformal_time(spec, tau_max)
    except ConformalHorizonError:
        t_max = None
    return ShockTime(tau_max, t_max)


@dataclass
class ShockReport:
    r: float
    D_M: float
    S_annulus: float
    Q_r: float
    conditions_met: dict
    C_prime: float
    tau_max: Optional[float]
    t_max: Optional[float]
    observed_blowup_tau: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("tau_max", "t_max"):
            if d[key] is None:
                d[key] = "unreachable"
        return d

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def shock_report(
    data: RescaledState,
    rho_bar: float,
    spec: ScaleFactorSpec,
    r: float = 0.75,
    M: int = 1,
    C: float = 1.0,
    C_prime: float = 1.0,
    epsilon: float = 0.01,
    scheme: Scheme | str = Scheme.SPECTRAL,
    observed_blowup_tau: Optional[float] = None,
) -> ShockReport:
    fun = christodoulou_functionals(data, rho_bar, r, M, scheme)
    cond = shock_conditions(fun, r, C, epsilon)
    if fun.Q_r > 0.0:
        st = predicted_shock_time(fun.Q_r, r, C_prime, spec)
        tau_max, t_max = st.tau_max, st.t_max
    else:
        tau_max, t_max = None, None
    return ShockReport(
        r=r,
        D_M=fun.D_M,
        S_annulus=fun.S_annulus,
        Q_r=fun.Q_r,
        conditions_met={
            "small_data": cond.small_data,
            "q_dominates": cond.q_dominates,
            "radius": cond.radius_ok,
            "degenerate": cond.degenerate,
        },
        C_prime=C_prime,
        tau_max=tau_max,
        t_max=t_max,
        observed_blowup_tau=observed_blowup_tau,
    )


# ---------------------------------------------------------------------------
# contrast experiment


@dataclass
class ContrastResult:
    unstable: RunOutcome
    stable: RunOutcome
    tau_end_unstable: float
    tau_end_stable: float
    initial_state: FluidState = field(repr=False, default=None)


def _leg_tau_end(spec: ScaleFactorSpec, ctl: StepControl, horizon_fraction: float) -> float:
    sup = conformal_horizon(spec)
    if math.isfinite(sup):
        return 1.0 + horizon_fraction * (sup - 1.0)
    if ctl.tau_end is not None:
        return ctl.tau_end
    return conformal_time(spec, ctl.t_end)


def worker_threads() -> int:
    """Worker cap from ``FRW_EULER_THREADS`` (default 2)."""
    try:
        return max(1, int(os.environ.get("FRW_EULER_THREADS", "2")))
    except ValueError:
        return 1


def contrast_experiment(
    profile: CompactCompressive,
    amplitude: float,
    spec_unstable: ScaleFactorSpec,
    spec_stable: ScaleFactorSpec,
    ctl: StepControl,
    grid: Grid,
    rho_bar: float = 1.0,
    scheme: Scheme | str = Scheme.CENTRAL2,
    viscosity: float = 0.0,
    horizon_fraction: float = 0.99,
    observer_factory=None,
) -> ContrastResult:
    """Evolve identical compressive radiation data in the Minkowski frame under two specs.

    A leg whose spec has a finite conformal horizon ``tau_sup`` stops at
    ``1 + horizon_fraction (tau_sup - 1)``.  A leg with an unbounded conformal
    range runs to ``ctl.tau_end`` (or the conformal time of ``ctl.t_end``).
    ``observer_factory(spec)`` may supply a per-leg observer.
    """
    if not 0.0 < horizon_fraction < 1.0:
        raise ValueError("horizon_fraction must lie in (0, 1)")
    state = perturb(background(grid, rho_bar), profile, amplitude)

    def leg(spec: ScaleFactorSpec) -> tuple[RunOutcome, float]:
        tau_end = _leg_tau_end(spec, ctl, horizon_fraction)
        leg_ctl = StepControl(
            cfl=ctl.cfl,
            dt_max=ctl.dt_max,
            t_end=ctl.t_end,
            shock_guard=ctl.shock_guard,
            record_interval=ctl.record_interval,
            fixed_dt=ctl.fixed_dt,
            tau_end=tau_end,
            max_steps=ctl.max_steps,
        )
        obs = observer_factory(spec) if observer_factory is not None else None
        return run(state, spec, RADIATION, leg_ctl, Frame.CONFORMAL_MINKOWSKI, scheme, viscosity, obs), tau_end

    with ThreadPoolExecutor(max_workers=min(2, worker_threads())) as pool:
        fu = pool.submit(leg, spec_unstable)
        fs = pool.submit(leg, spec_stable)
        (ou, tu), (os_, ts) = fu.result(), fs.result()
    return ContrastResult(ou, os_, tu, ts, state)
