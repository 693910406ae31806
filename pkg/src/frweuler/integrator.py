"""Explicit RK4 time stepping with CFL control and a C^1 blow-up guard.

Two frames are supported.  ``CoordinateTime`` integrates the full system in
``t``.  ``ConformalMinkowski`` (radiation only) rescales once to
``(L, U = e^Omega u)``, integrates the flat-space equations in conformal time
``tau`` and maps back whenever the observer is called.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .euler_rhs import DegenerateStateError, Scheme, rhs_at, spatial_gradient
from .fluid import FluidState, Grid, Regime, SoundSpeed
from .spacetime import (
    ScaleFactorSpec,
    conformal_horizon,
    conformal_time,
    evaluate,
    invert_conformal_time,
)

__all__ = [
    "Frame",
    "ShockGuard",
    "StepControl",
    "Status",
    "RunOutcome",
    "NonFiniteStateError",
    "step",
    "cfl_dt",
    "max_velocity_gradient",
    "run",
]


class NonFiniteStateError(ArithmeticError):
    """An update produced NaN or Inf."""


class Frame(str, enum.Enum):
    COORDINATE_TIME = "coordinate"
    CONFORMAL_MINKOWSKI = "conformal-minkowski"


class Status(str, enum.Enum):
    REACHED_END = "ReachedEnd"
    SHOCK_GUARD_TRIPPED = "ShockGuardTripped"
    NON_FINITE = "NonFinite"


@dataclass(frozen=True)
class ShockGuard:
    """Stop when ``max |d u|`` or ``max |W|`` exceeds its threshold.

    With ``gradient_threshold=None`` the threshold is ``gradient_factor`` times
    the initial maximal velocity gradient (no gradient stop if that is zero).
    """

    gradient_threshold: Optional[float] = None
    value_threshold: float = 1.0e3
    gradient_factor: float = 100.0

    def __post_init__(self):
        if self.gradient_threshold is not None and not self.gradient_threshold > 0.0:
            raise ValueError("gradient_threshold must be positive")
        if not self.value_threshold > 0.0 or not self.gradient_factor > 0.0:
            raise ValueError("guard thresholds must be positive")


@dataclass(frozen=True)
class StepControl:
    """Step-size policy.

    ``t_end`` is a coordinate time.  In the conformal frame the run stops at
    ``tau_end`` if given, otherwise at the conformal time of ``t_end``.
    ``fixed_dt`` replaces the CFL rule (steps are still shortened to land on
    record and end times).  ``record_interval`` is measured in the active time
    variable.
    """

    cfl: float = 0.5
    dt_max: float = 0.05
    t_end: float = 2.0
    shock_guard: ShockGuard = field(default_factory=ShockGuard)
    record_interval: Optional[float] = None
    fixed_dt: Optional[float] = None
    tau_end: Optional[float] = None
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not (self.dt_max > 0.0 and math.isfinite(self.dt_max)):
            raise ValueError(f"dt_max must be positive and finite, got {self.dt_max}")
        if self.fixed_dt is not None and not self.fixed_dt > 0.0:
            raise ValueError("fixed_dt must be positive")
        if self.record_interval is not None and not self.record_interval > 0.0:
            raise ValueError("record_interval must be positive")


@dataclass
class RunOutcome:
    status: Status
    steps_taken: int
    final_state: FluidState
    t_stop: float
    tau_stop: float
    initial_max_gradient: float
    max_gradient: float  # largest max |d u| over all accepted steps
    gradient_history: list = field(default_factory=list)  # (active time, max |d u|)
    records: list = field(default_factory=list)

    @property
    def gradient_growth(self) -> float:
        if self.initial_max_gradient == 0.0:
            return 0.0 if self.max_gradient == 0.0 else math.inf
        return self.max_gradient / self.initial_max_gradient


# ---------------------------------------------------------------------------


Clock = Callable[[float], "tuple[float, float]"]


def _minkowski_clock(_t: float) -> tuple[float, float]:
    return 0.0, 0.0


def _rk4(state: FluidState, dt: float, clock: Clock, c2: SoundSpeed, scheme, viscosity: float) -> FluidState:
    def f(s: FluidState):
        Om, om = clock(s.t)
        r = rhs_at(s, Om, om, c2, scheme, viscosity)
        return r.dL_dt, r.du_dt

    L, u, t = state.L, state.u, state.t
    k1 = f(state)
    k2 = f(state.with_fields(L=L + 0.5 * dt * k1[0], u=u + 0.5 * dt * k1[1], t=t + 0.5 * dt))
    k3 = f(state.with_fields(L=L + 0.5 * dt * k2[0], u=u + 0.5 * dt * k2[1], t=t + 0.5 * dt))
    k4 = f(state.with_fields(L=L + dt * k3[0], u=u + dt * k3[1], t=t + dt))
    new = state.with_fields(
        L=L + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        u=u + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        t=t + dt,
    )
    if not new.is_finite():
        raise NonFiniteStateError(f"non-finite values after step to t={t + dt}")
    return new


def step(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    dt: float,
    scheme: Scheme | str = Scheme.SPECTRAL,
    viscosity: float = 0.0,
) -> FluidState:
    """One classical RK4 step in coordinate time.

    ``dt`` must be nonzero.  Negative steps are allowed for backward probes.
    """
    if dt == 0.0 or not math.isfinite(dt):
        raise ValueError(f"dt must be finite and nonzero, got {dt}")
    return _rk4(state, dt, lambda t: evaluate(spec, t), c2, scheme, viscosity)


def cfl_dt(
    state: FluidState,
    Omega: float,
    c2: SoundSpeed,
    grid: Grid,
    cfl: float,
    dt_max: float = math.inf,
) -> float:
    """``cfl * min h_i / lambda`` with ``lambda = e^{-Omega}(max|e^Omega u^i|/u^0 + c_s)``, capped by ``dt_max``."""
    eO = math.exp(Omega)
    U = eO * state.u
    u0 = np.sqrt(1.0 + np.einsum("a...,a...->...", U, U))
    vmax = float(np.max(np.abs(U) / u0[None])) if U.size else 0.0
    lam = (vmax + c2.cs) / eO
    h = min((grid.spacing[i] for i in grid.active), default=math.inf)
    dt = cfl * h / lam if lam > 0.0 else math.inf
    dt = min(dt, dt_max)
    if not (dt > 0.0 and math.isfinite(dt)):
        raise ValueError("no finite time step: set a finite dt_max")
    return dt


def max_velocity_gradient(state: FluidState, scheme: Scheme | str = Scheme.SPECTRAL) -> float:
    """``max |d_k u^j|`` over all components and active directions."""
    if not state.grid.active:
        return 0.0
    return float(max(np.max(np.abs(spatial_gradient(state.u[j], state.grid, scheme))) for j in range(3)))


def _max_value(state: FluidState) -> float:
    return float(max(np.max(np.abs(state.L)), np.max(np.abs(state.u))))


def run(
    state: FluidState,
    spec: ScaleFactorSpec,
    c2: SoundSpeed,
    ctl: StepControl,
    frame: Frame | str = Frame.COORDINATE_TIME,
    scheme: Scheme | str = Scheme.SPECTRAL,
    viscosity: float = 0.0,
    observer: Optional[Callable[[FluidState, float], Any]] = None,
) -> RunOutcome:
    """Integrate from ``state.t`` to the configured end, or until the guard trips.

    ``observer(state, tau)`` receives coordinate-frame states at ``t0``, at every
    record interval and at the stop time.  Its return values are collected in
    ``RunOutcome.records``.  The guard and the gradient history use the evolved
    velocity, which is ``U = e^Omega u`` in the conformal frame.
    """
    frame = Frame(frame)
    scheme = Scheme(scheme)
    t0 = state.t
    if frame is Frame.CONFORMAL_MINKOWSKI:
        if c2.regime is not Regime.RADIATION:
            raise ValueError("the conformal Minkowski frame requires c2 = 1/3")
        Om0, _ = evaluate(spec, t0)
        tau0 = conformal_time(spec, t0)
        native = FluidState(state.grid, state.L.copy(), math.exp(Om0) * state.u, tau0)
        if ctl.tau_end is not None:
            s_end = ctl.tau_end
        else:
            s_end = conformal_time(spec, ctl.t_end) if ctl.t_end > t0 else tau0
        if s_end >= conformal_horizon(spec):
            raise ValueError(f"tau_end={s_end} is beyond the conformal horizon")
        clock: Clock = _minkowski_clock

        def to_coord(s: FluidState) -> tuple[FluidState, float]:
            t = invert_conformal_time(spec, s.t) if s.t > tau0 else t0
            Om, _ = evaluate(spec, t)
            return FluidState(s.grid, s.L.copy(), math.exp(-Om) * s.u, t), s.t

        def Omega_now(s: FluidState) -> float:
            return 0.0
    else:
        native = state
        s_end = ctl.t_end

        def clock(t: float) -> tuple[float, float]:
            return evaluate(spec, t)

        def to_coord(s: FluidState) -> tuple[FluidState, float]:
            return s, conformal_time(spec, s.t)

        def Omega_now(s: FluidState) -> float:
            return evaluate(spec, s.t)[0]

    if s_end < native.t:
        raise ValueError(f"end time {s_end} precedes the start time {native.t}")

    g0 = max_velocity_gradient(native, scheme)
    guard = ctl.shock_guard
    if guard.gradient_threshold is not None:
        grad_thr = guard.gradient_threshold
    else:
        grad_thr = guard.gradient_factor * g0 if g0 > 0.0 else math.inf

    records: list = []
    history: list = [(native.t, g0)]
    last_emit = [None]

    def emit(s: FluidState) -> None:
        last_emit[0] = s.t
        if observer is not None:
            cs, tau = to_coord(s)
            records.append(observer(cs, tau))

    def outcome(status: Status, s: FluidState, steps: int, peak: float) -> RunOutcome:
        cs, tau = to_coord(s) if s.is_finite() else (s, s.t)
        return RunOutcome(status, steps, cs, cs.t, tau, g0, peak, history, records)

    emit(native)
    interval = ctl.record_interval
    n_rec = 1
    next_rec = native.t + interval if interval else math.inf
    steps = 0
    grad = g0
    peak = g0
    cur = native
    end_tol = 1e-13 * max(1.0, abs(s_end))
    while s_end - cur.t > end_tol:
        if steps >= ctl.max_steps:
            raise RuntimeError(f"max_steps={ctl.max_steps} exceeded at t={cur.t}")
        if ctl.fixed_dt is not None:
            dt = ctl.fixed_dt
        else:
            dt = cfl_dt(cur, Omega_now(cur), c2, cur.grid, ctl.cfl, ctl.dt_max)
        target = min(s_end, next_rec)
        snap = cur.t + dt >= target - 1e-9 * dt
        if snap:
            dt = target - cur.t
        try:
            cur = _rk4(cur, dt, clock, c2, scheme, viscosity)
        except (NonFiniteStateError, DegenerateStateError):
            return outcome(Status.NON_FINITE, cur.with_fields(t=cur.t + dt), steps + 1, peak)
        steps += 1
        if snap:
            cur = cur.with_fields(t=target)  # remove accumulated rounding in t
        grad = max_velocity_gradient(cur, scheme)
        peak = max(peak, grad)
        if grad > grad_thr or _max_value(cur) > guard.value_threshold:
            history.append((cur.t, grad))
            emit(cur)
            return outcome(Status.SHOCK_GUARD_TRIPPED, cur, steps, peak)
        if snap and target == next_rec:
            history.append((cur.t, grad))
            emit(cur)
            n_rec += 1
            next_rec = native.t + n_rec * interval
    if last_emit[0] != cur.t:
        history.append((cur.t, grad))
        emit(cur)
    return outcome(Status.REACHED_END, cur, steps, peak)
