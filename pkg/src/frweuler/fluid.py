"""Fluid state on a periodic box and its kinematic quantities.

The unknowns are the log-normalized density ``L = ln(e^{3(1+c^2) Omega} rho / rho_bar)``
and the spatial four-velocity components ``u^1, u^2, u^3``.  The background
solution is ``L = 0, u = 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from .spacetime import ScaleFactorSpec, evaluate

__all__ = [
    "Grid",
    "Regime",
    "SoundSpeed",
    "FluidState",
    "FourierMode",
    "GaussianBump",
    "CompactCompressive",
    "PerturbationError",
    "background",
    "u0",
    "projection",
    "density",
    "perturb",
    "write_snapshot",
    "read_snapshot",
    "FIELDS",
]

FIELDS = ("L", "u1", "u2", "u3")


class PerturbationError(ValueError):
    """Raised for perturbations that do not fit the box."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``prod [-l_i/2, l_i/2)``; any ``n_i`` may be 1."""

    dims: tuple[int, int, int]
    lengths: tuple[float, float, float] = (2 * math.pi, 2 * math.pi, 2 * math.pi)

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        lengths = tuple(float(x) for x in self.lengths)
        if len(dims) != 3 or len(lengths) != 3:
            raise ValueError("Grid needs three dims and three box lengths")
        if any(n < 1 for n in dims):
            raise ValueError(f"grid dims must be positive, got {dims}")
        if any(not (x > 0.0 and math.isfinite(x)) for x in lengths):
            raise ValueError(f"box lengths must be positive, got {lengths}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "lengths", lengths)

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(l / n for l, n in zip(self.lengths, self.dims))

    @property
    def active(self) -> tuple[int, ...]:
        """Directions with more than one grid point."""
        return tuple(i for i, n in enumerate(self.dims) if n > 1)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_volume(self) -> float:
        return self.volume / float(np.prod(self.dims))

    def axis(self, i: int) -> np.ndarray:
        n, l = self.dims[i], self.lengths[i]
        if n == 1:
            return np.zeros(1)
        return -0.5 * l + (l / n) * np.arange(n)

    def coordinates(self) -> list[np.ndarray]:
        return np.meshgrid(*(self.axis(i) for i in range(3)), indexing="ij")

    def integrate(self, f: np.ndarray) -> float:
        """Midpoint (= trapezoid) rule over the periodic box."""
        return float(np.sum(f) * self.cell_volume)


class Regime(str, enum.Enum):
    DUST = "dust"
    INTERMEDIATE = "intermediate"
    RADIATION = "radiation"


@dataclass(frozen=True)
class SoundSpeed:
    """Equation-of-state constant ``c^2`` in ``p = c^2 rho``, restricted to ``[0, 1/3]``."""

    c2: float

    def __post_init__(self):
        c2 = float(self.c2)
        if not 0.0 <= c2 <= 1.0 / 3.0:
            raise ValueError(f"c2 must lie in [0, 1/3], got {self.c2!r}")
        object.__setattr__(self, "c2", c2)

    @property
    def regime(self) -> Regime:
        if self.c2 == 0.0:
            return Regime.DUST
        if self.c2 == 1.0 / 3.0:
            return Regime.RADIATION
        return Regime.INTERMEDIATE

    @property
    def cs(self) -> float:
        return math.sqrt(self.c2)


@dataclass(frozen=True, eq=False)
class FluidState:
    grid: Grid
    L: np.ndarray
    u: np.ndarray  # shape (3, n1, n2, n3)
    t: float = 1.0

    def __post_init__(self):
        if self.L.shape != self.grid.dims or self.u.shape != (3,) + self.grid.dims:
            raise ValueError(
                f"field shapes {self.L.shape}, {self.u.shape} do not match grid {self.grid.dims}"
            )

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.L)) and np.all(np.isfinite(self.u)))

    def field(self, name: str) -> np.ndarray:
        if name == "L":
            return self.L
        return self.u[_velocity_index(name)]

    def with_fields(self, L=None, u=None, t=None) -> "FluidState":
        return replace(
            self,
            L=self.L if L is None else L,
            u=self.u if u is None else u,
            t=self.t if t is None else t,
        )


def _velocity_index(name: str) -> int:
    try:
        return {"u1": 0, "u2": 1, "u3": 2}[name]
    except KeyError:
        raise ValueError(f"unknown field {name!r}; expected one of {FIELDS}") from None


def background(grid: Grid, rho_bar: float = 1.0) -> FluidState:
    """The homogeneous isotropic solution ``L = 0, u = 0`` at ``t = 1``."""
    if not rho_bar > 0.0:
        raise ValueError(f"rho_bar must be positive, got {rho_bar!r}")
    return FluidState(grid, np.zeros(grid.dims), np.zeros((3,) + grid.dims), 1.0)


def spatial_norm_sq(u: np.ndarray, Omega: float) -> np.ndarray:
    """``g_ab u^a u^b = e^{2 Omega} delta_ab u^a u^b``."""
    return math.exp(2.0 * Omega) * np.einsum("a...,a...->...", u, u)


def u0(state: FluidState, Omega: float) -> np.ndarray:
    """Time component ``u^0 = (1 + g_ab u^a u^b)^{1/2}``."""
    return np.sqrt(1.0 + spatial_norm_sq(state.u, Omega))


def projection(state: FluidState, Omega: float) -> np.ndarray:
    """``Pi^{mu nu} = u^mu u^nu + (g^{-1})^{mu nu}`` as an array ``(4, 4, n1, n2, n3)``."""
    U = np.concatenate([u0(state, Omega)[None], state.u])
    Pi = np.einsum("m...,n...->mn...", U, U)
    Pi[0, 0] -= 1.0
    inv = math.exp(-2.0 * Omega)
    for j in range(1, 4):
        Pi[j, j] += inv
    return Pi


def density(state: FluidState, spec: ScaleFactorSpec, c2: SoundSpeed, rho_bar: float) -> np.ndarray:
    """Physical energy density ``rho = rho_bar e^{-3(1+c^2) Omega(t)} e^L``."""
    Omega, _ = evaluate(spec, state.t)
    return rho_bar * np.exp(-3.0 * (1.0 + c2.c2) * Omega + state.L)


# ---------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class FourierMode:
    """``a cos(2 pi k.x / l + phase)`` added to one field."""

    field: str
    wavevector: tuple[int, int, int]
    phase: float = 0.0


@dataclass(frozen=True)
class GaussianBump:
    """``a exp(-|x - c|^2 / (2 w^2))`` (periodic distance) added to one field.

    The bump is treated as supported within ``5 w`` of its center.
    """

    field: str
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    width: float = 0.5


@dataclass(frozen=True)
class CompactCompressive:
    """Radial simple-wave pulse supported in the ball of ``radius`` around the box center.

    With ``phi`` a smooth shell bump peaking at ``shell_center * radius`` of
    half-width ``shell_halfwidth * radius``, the perturbation of amplitude ``a``
    sets ``rho'/rho_bar -> (rho'/rho_bar)(1 + a phi)`` and adds
    ``velocity_weight * a * phi * N`` to ``u``, with ``N`` the outward radial
    unit vector over the active directions.  The default weight ``sqrt(3)/4``
    makes the linearized radiation pulse purely outgoing; a negative weight
    gives an inward velocity profile.
    """

    radius: float = 1.0
    shell_center: float = 0.55
    shell_halfwidth: float = 0.4
    velocity_weight: float = math.sqrt(3.0) / 4.0


Perturbation = Union[FourierMode, GaussianBump, CompactCompressive]


def smooth_bump(z: np.ndarray) -> np.ndarray:
    """``exp(1 - 1/(1 - z^2))`` on ``|z| < 1``, zero outside; peak value 1."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - z[inside] ** 2))
    return out


def _periodic_offsets(grid: Grid, center) -> list[np.ndarray]:
    X = grid.coordinates()
    offs = []
    for i in range(3):
        if grid.dims[i] == 1:
            offs.append(np.zeros(grid.dims))
            continue
        l = grid.lengths[i]
        d = X[i] - center[i]
        offs.append(d - l * np.round(d / l))
    return offs


def _add(state: FluidState, name: str, profile: np.ndarray) -> FluidState:
    if name == "L":
        return state.with_fields(L=state.L + profile)
    u = state.u.copy()
    u[_velocity_index(name)] += profile
    return state.with_fields(u=u)


def compressive_profile(grid: Grid, mode: CompactCompressive) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(phi, N)``: the shell bump and the outward radial unit vector field."""
    half = min(grid.lengths[i] for i in grid.active) / 2.0 if grid.active else 0.0
    if not 0.0 < mode.radius < half:
        raise PerturbationError(
            f"compressive support radius {mode.radius} must lie strictly inside the box (half-width {half})"
        )
    lo = mode.shell_center - mode.shell_halfwidth
    hi = mode.shell_center + mode.shell_halfwidth
    if not (0.0 < lo and hi <= 1.0):
        raise PerturbationError("shell must lie inside (0, radius]")
    X = grid.coordinates()
    r = np.sqrt(sum(X[i] ** 2 for i in grid.active)) if grid.active else np.zeros(grid.dims)
    phi = smooth_bump((r / mode.radius - mode.shell_center) / mode.shell_halfwidth)
    N = np.zeros((3,) + grid.dims)
    safe = np.where(r > 0.0, r, 1.0)
    for i in grid.active:
        N[i] = np.where(r > 0.0, X[i] / safe, 0.0)
    return phi, N


def perturb(state: FluidState, mode: Perturbation, amplitude: float) -> FluidState:
    """Add ``amplitude`` times the profile described by ``mode``."""
    if not math.isfinite(amplitude):
        raise ValueError(f"amplitude must be finite, got {amplitude!r}")
    grid = state.grid
    if isinstance(mode, FourierMode):
        k = tuple(int(x) for x in mode.wavevector)
        for i in range(3):
            if k[i] != 0 and grid.dims[i] == 1:
                raise PerturbationError(f"wavevector component {i} nonzero on a suppressed direction")
        X = grid.coordinates()
        arg = sum(2.0 * math.pi * k[i] * X[i] / grid.lengths[i] for i in range(3)) + mode.phase
        return _add(state, mode.field, amplitude * np.cos(arg))
    if isinstance(mode, GaussianBump):
        if not mode.width > 0.0:
            raise PerturbationError("bump width must be positive")
        for i in grid.active:
            if 5.0 * mode.width > grid.lengths[i] / 2.0:
                raise PerturbationError(
                    f"bump support 5*width={5 * mode.width} exceeds half the box ({grid.lengths[i] / 2})"
                )
        d = _periodic_offsets(grid, mode.center)
        r2 = sum(d[i] ** 2 for i in grid.active) if grid.active else np.zeros(grid.dims)
        return _add(state, mode.field, amplitude * np.exp(-r2 / (2.0 * mode.width**2)))
    if isinstance(mode, CompactCompressive):
        phi, N = compressive_profile(grid, mode)
        L = state.L + np.log1p(amplitude * phi)
        u = state.u + mode.velocity_weight * amplitude * phi[None] * N
        return state.with_fields(L=L, u=u)
    raise TypeError(f"unknown perturbation {mode!r}")


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(path: str | Path, state: FluidState, c2: SoundSpeed) -> None:
    """Header ``FRWEULER v1 n1 n2 n3 l1 l2 l3 t c2`` then L, u1, u2, u3 as little-endian float64."""
    g = state.grid
    header = "FRWEULER v1 {} {} {} {!r} {!r} {!r} {!r} {!r}\n".format(
        *g.dims, *g.lengths, float(state.t), float(c2.c2)
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for arr in (state.L, *state.u):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))


def read_snapshot(path: str | Path) -> tuple[FluidState, SoundSpeed]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if header[:2] != ["FRWEULER", "v1"] or len(header) != 10:
            raise ValueError(f"{path}: not a FRWEULER v1 snapshot")
        dims = tuple(int(x) for x in header[2:5])
        lengths = tuple(float(x) for x in header[5:8])
        t, c2 = float(header[8]), float(header[9])
        n = int(np.prod(dims))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != 4 * n:
        raise ValueError(f"{path}: expected {4 * n} values, found {data.size}")
    arrays = data.reshape(4, *dims).astype(float)
    grid = Grid(dims, lengths)
    return FluidState(grid, arrays[0].copy(), arrays[1:].copy(), t), SoundSpeed(c2)
