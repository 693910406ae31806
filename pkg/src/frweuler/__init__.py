"""Relativistic Euler laboratory on prescribed FLRW-type expanding spacetimes."""
from __future__ import annotations

from .euler_rhs import Scheme, coefficient_matrices, rhs, spatial_gradient, verify_matrix_form
from .fluid import (
    CompactCompressive,
    FluidState,
    FourierMode,
    GaussianBump,
    Grid,
    Regime,
    SoundSpeed,
    background,
    density,
    perturb,
    projection,
    read_snapshot,
    u0,
    write_snapshot,
)
from .integrator import Frame, RunOutcome, ShockGuard, Status, StepControl, cfl_dt, run, step
from .spacetime import (
    ScaleFactorSpec,
    Verdict,
    classify,
    conformal_horizon,
    conformal_time,
    evaluate,
    exponential,
    invert_conformal_time,
    power_law,
    tabulated,
)

__version__ = "0.1.0"
