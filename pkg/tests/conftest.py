from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from frweuler.fluid import FluidState, Grid

settings.register_profile(
    "frweuler", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("frweuler")


def smooth_state(grid: Grid, amplitude: float, t: float = 1.0, seed: int = 0) -> FluidState:
    """Low-mode trigonometric data with random phases on ``grid``."""
    rng = np.random.default_rng(seed)
    X = grid.coordinates()
    k = [2.0 * np.pi / grid.lengths[i] if i in grid.active else 0.0 for i in range(3)]

    def field() -> np.ndarray:
        f = np.zeros(grid.dims)
        for _ in range(3):
            m = rng.integers(0, 3, size=3) * np.array([1 if i in grid.active else 0 for i in range(3)])
            ph = rng.uniform(0.0, 2.0 * np.pi)
            f += np.cos(sum(m[i] * k[i] * X[i] for i in range(3)) + ph)
        return amplitude * f / 3.0

    return FluidState(grid, field(), np.stack([field() for _ in range(3)]), t)


@pytest.fixture
def grid16() -> Grid:
    return Grid((16, 16, 16))


@pytest.fixture
def make_state():
    return smooth_state


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
