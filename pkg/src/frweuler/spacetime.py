"""Prescribed expanding backgrounds ``g = -dt^2 + e^{2 Omega(t)} sum (dx^j)^2``.

A :class:`ScaleFactorSpec` fixes the expansion law ``Omega(t)`` with
``Omega(1) = 0`` and the decay function ``F(Omega) = exp(q Omega)`` used by
the intermediate sound-speed regime.  This module evaluates ``Omega`` and
``omega = dOmega/dt``, the Christoffel symbols of the metric, the
integrability class of the expansion law, and the conformal time map
``dtau/dt = exp(-Omega)``.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "Family",
    "ScaleFactorSpec",
    "Verdict",
    "ExpansionClass",
    "Christoffel",
    "SpacetimeDomainError",
    "TabulatedRangeError",
    "SpecValidationError",
    "ConformalHorizonError",
    "exponential",
    "power_law",
    "tabulated",
    "load_table",
    "evaluate",
    "decay_function",
    "christoffel",
    "classify",
    "conformal_time",
    "conformal_horizon",
    "invert_conformal_time",
]


class SpacetimeDomainError(ValueError):
    """Raised for times before the initial slice ``t = 1``."""


class TabulatedRangeError(ValueError):
    """Raised when a tabulated expansion law is asked to extrapolate."""


class SpecValidationError(ValueError):
    """Raised for malformed or non-monotone expansion laws."""


class ConformalHorizonError(ValueError):
    """The requested conformal time lies beyond this spacetime's conformal horizon."""

    def __init__(self, tau: float, tau_sup: float):
        self.tau = tau
        self.tau_sup = tau_sup
        super().__init__(
            f"conformal time {tau!r} is unreachable: the shock bound lies beyond "
            f"this spacetime's conformal horizon (total conformal time {tau_sup!r})"
        )


class Family(str, enum.Enum):
    EXPONENTIAL = "exponential"
    POWER_LAW = "power_law"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class ScaleFactorSpec:
    """Expansion law ``Omega(t)`` plus the decay exponent ``q`` of ``F(Omega) = e^{q Omega}``.

    ``rate`` is ``H`` for the exponential family (``Omega = H (t - 1)``) and
    ``Q`` for the power-law family (``Omega = Q ln t``).  Tabulated laws carry
    their ``(t, Omega)`` samples, first row ``(1, 0)``.
    """

    family: Family
    rate: float = 0.0
    decay_q: float = 0.0
    samples: tuple[tuple[float, float], ...] = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not self.decay_q >= 0.0 or not math.isfinite(self.decay_q):
            raise SpecValidationError(f"decay_q must be a finite number >= 0, got {self.decay_q!r}")
        if self.family is Family.TABULATED:
            _validate_samples(self.samples)
        elif not (self.rate > 0.0 and math.isfinite(self.rate)):
            raise SpecValidationError(f"{self.family.value} rate must be > 0, got {self.rate!r}")

    @property
    def t_max(self) -> float:
        """Largest time at which the law is defined."""
        if self.family is Family.TABULATED:
            return self.samples[-1][0]
        return math.inf

    # cached arrays for tabulated laws
    def _table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_cached_table")
        if cached is None:
            arr = np.asarray(self.samples, dtype=float)
            ts, om = arr[:, 0], arr[:, 1]
            rates = np.gradient(om, ts) if len(ts) > 2 else np.full_like(ts, (om[-1] - om[0]) / (ts[-1] - ts[0]))
            cached = (ts, om, rates)
            object.__setattr__(self, "_cached_table", cached)
        return cached


def _validate_samples(samples) -> None:
    if len(samples) < 2:
        raise SpecValidationError("a tabulated expansion law needs at least two samples")
    t0, om0 = samples[0]
    if t0 != 1.0 or om0 != 0.0:
        raise SpecValidationError(f"first tabulated sample must be (1, 0), got ({t0}, {om0})")
    for (ta, oa), (tb, ob) in zip(samples, samples[1:]):
        if not tb > ta:
            raise SpecValidationError(f"tabulated times must increase strictly ({ta} -> {tb})")
        if ob < oa:
            raise SpecValidationError(f"Omega must be nondecreasing ({oa} at t={ta} -> {ob} at t={tb})")


def exponential(H: float, decay_q: float = 0.0) -> ScaleFactorSpec:
    return ScaleFactorSpec(Family.EXPONENTIAL, rate=H, decay_q=decay_q)


def power_law(Q: float, decay_q: float = 0.0) -> ScaleFactorSpec:
    return ScaleFactorSpec(Family.POWER_LAW, rate=Q, decay_q=decay_q)


def tabulated(samples, decay_q: float = 0.0) -> ScaleFactorSpec:
    return ScaleFactorSpec(
        Family.TABULATED,
        decay_q=decay_q,
        samples=tuple((float(t), float(o)) for t, o in samples),
    )


def load_table(path: str | Path, decay_q: float = 0.0) -> ScaleFactorSpec:
    """Read a two-column ``t Omega`` text file (ascending ``t``, first row ``1 0``).

    Columns may be separated by whitespace or commas; ``#`` starts a comment.
    """
    text = Path(path).read_text().replace(",", " ")
    data = np.loadtxt(io.StringIO(text), ndmin=2)
    if data.shape[1] != 2:
        raise SpecValidationError(f"{path}: expected two columns 't Omega', got {data.shape[1]}")
    return tabulated(data.tolist(), decay_q=decay_q)


def _check_time(spec: ScaleFactorSpec, t: float) -> None:
    if not t >= 1.0:
        raise SpacetimeDomainError(f"time must satisfy t >= 1, got {t!r}")
    if t > spec.t_max:
        raise TabulatedRangeError(f"t={t!r} outside tabulated range [1, {spec.t_max}]")


def evaluate(spec: ScaleFactorSpec, t: float) -> tuple[float, float]:
    """Return ``(Omega(t), omega(t))``."""
    _check_time(spec, t)
    if spec.family is Family.EXPONENTIAL:
        return spec.rate * (t - 1.0), spec.rate
    if spec.family is Family.POWER_LAW:
        return spec.rate * math.log(t), spec.rate / t
    ts, om, rates = spec._table()
    return float(np.interp(t, ts, om)), float(np.interp(t, ts, rates))


def _omega_of(spec: ScaleFactorSpec, t):
    """Vectorised ``Omega(t)`` without range checks (internal quadrature use)."""
    if spec.family is Family.EXPONENTIAL:
        return spec.rate * (t - 1.0)
    if spec.family is Family.POWER_LAW:
        return spec.rate * np.log(t)
    ts, om, _ = spec._table()
    return np.interp(t, ts, om)


def decay_function(spec: ScaleFactorSpec, Omega: float) -> float:
    """``F(Omega) = exp(q Omega)``."""
    return math.exp(spec.decay_q * Omega)


@dataclass(frozen=True)
class Christoffel:
    """Nonzero Christoffel symbols at one time.

    ``gamma0[j, k] = Gamma^0_{jk} = omega e^{2 Omega} delta_{jk}`` and
    ``gammaj[j, k] = Gamma^j_{k0} = Gamma^j_{0k} = omega delta^j_k``.
    """

    Omega: float
    omega: float
    gamma0: np.ndarray
    gammaj: np.ndarray

    def full(self) -> np.ndarray:
        """All 64 components as ``G[alpha, mu, nu] = Gamma^alpha_{mu nu}``."""
        G = np.zeros((4, 4, 4))
        G[0, 1:, 1:] = self.gamma0
        G[1:, 1:, 0] = self.gammaj
        G[1:, 0, 1:] = self.gammaj
        return G


def christoffel(spec: ScaleFactorSpec, t: float) -> Christoffel:
    Omega, omega = evaluate(spec, t)
    eye = np.eye(3)
    return Christoffel(Omega, omega, omega * math.exp(2.0 * Omega) * eye, omega * eye)


# ---------------------------------------------------------------------------
# integrability classification


class Verdict(str, enum.Enum):
    STABLE_INTEGRABLE = "StableIntegrable"
    UNSTABLE_NONINTEGRABLE = "UnstableNonintegrable"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class ExpansionClass:
    """Result of :func:`classify`.

    ``integral_estimates`` holds, for the dust, intermediate and radiation
    integrands in that order, a finite value (convergent), ``inf``
    (divergent) or ``None`` (inconclusive at the horizon).
    """

    verdict: Verdict
    integral_estimates: tuple[float | None, float | None, float | None]
    a3_checked: bool
    branch: str
    sampled_Omega_range: tuple[float, float]

    def to_dict(self) -> dict:
        def enc(v):
            if v is None:
                return None
            return "divergent" if math.isinf(v) else v

        return {
            "verdict": self.verdict.value,
            "branch": self.branch,
            "integral_estimates": {
                "dust": enc(self.integral_estimates[0]),
                "intermediate": enc(self.integral_estimates[1]),
                "radiation": enc(self.integral_estimates[2]),
            },
            "a3_checked": self.a3_checked,
            "sampled_Omega_range": list(self.sampled_Omega_range),
        }


def _branch_integrands(spec: ScaleFactorSpec) -> dict[str, Callable[[float], float]]:
    q = spec.decay_q
    return {
        "dust": lambda s: math.exp(-2.0 * _omega_of(spec, s)),
        "intermediate": lambda s: math.exp((q - 1.0) * _omega_of(spec, s)),
        "radiation": lambda s: math.exp(-_omega_of(spec, s)),
    }


def _segment_integral(f, a: float, b: float, subdivisions: int) -> float:
    edges = np.linspace(a, b, subdivisions + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=200)
        total += val
    return total


def improper_integral(
    f: Callable[[float], float],
    horizon: float,
    tol: float,
    subdivisions: int = 1,
) -> float | None:
    """Estimate ``int_1^inf f(s) ds`` for ``f >= 0`` by doubling the upper limit.

    Returns the value when the extrapolated tail drops below ``tol``,
    ``math.inf`` when partial integrals grow by at least ``1 + tol`` with
    non-shrinking increments across three consecutive doublings, and ``None``
    when neither happens before ``horizon``.
    """
    total = 0.0
    prev_inc = None
    growth_run = 0
    lo = 1.0
    while lo < horizon:
        hi = min(2.0 * lo, horizon)
        inc = _segment_integral(f, lo, hi, subdivisions)
        new_total = total + inc
        if prev_inc is not None and hi == 2.0 * lo:
            if inc == 0.0:
                return new_total
            ratio = inc / prev_inc if prev_inc > 0.0 else math.inf
            if ratio < 1.0 - tol:
                tail = inc * ratio / (1.0 - ratio)
                if tail < tol:
                    return new_total + tail
            growing = total > 0.0 and new_total >= (1.0 + tol) * total
            if growing and ratio >= 1.0 - tol:
                growth_run += 1
                if growth_run >= 3:
                    return math.inf
            else:
                growth_run = 0
        total = new_total
        prev_inc = inc
        lo = hi
    return None


def classify(
    spec: ScaleFactorSpec,
    c2: float,
    horizon: float = 2.0**40,
    tol: float = 1e-8,
    subdivisions: int = 1,
) -> ExpansionClass:
    """Classify ``spec`` against the integrability hypotheses for sound speed ``c2``.

    The branch integral is ``int e^{-2 Omega}`` (dust), ``int e^{-Omega} F(Omega)``
    (``0 < c2 < 1/3``) or ``int e^{-Omega}`` (radiation).  In the intermediate
    regime the decay function must also satisfy ``0 < q <= 1 - 3 c2``, which
    makes ``F`` unbounded with ``int dOmega / F < inf``; convergence with a
    failed decay-function check is reported as indeterminate.
    """
    if not horizon > 1.0:
        raise ValueError(f"horizon must exceed 1, got {horizon!r}")
    if not tol > 0.0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if not 0.0 <= c2 <= 1.0 / 3.0:
        raise ValueError(f"c2 must lie in [0, 1/3], got {c2!r}")
    horizon = min(horizon, spec.t_max)
    integrands = _branch_integrands(spec)
    estimates = tuple(
        improper_integral(integrands[name], horizon, tol, subdivisions)
        for name in ("dust", "intermediate", "radiation")
    )
    if c2 == 0.0:
        branch, idx = "dust", 0
    elif c2 == 1.0 / 3.0:
        branch, idx = "radiation", 2
    else:
        branch, idx = "intermediate", 1
    a3 = branch != "intermediate" or 0.0 < spec.decay_q <= 1.0 - 3.0 * c2
    value = estimates[idx]
    if value is None:
        verdict = Verdict.INDETERMINATE
    elif math.isinf(value):
        verdict = Verdict.UNSTABLE_NONINTEGRABLE
    elif a3:
        verdict = Verdict.STABLE_INTEGRABLE
    else:
        verdict = Verdict.INDETERMINATE
    om_hi = float(_omega_of(spec, horizon))
    return ExpansionClass(verdict, estimates, a3, branch, (0.0, om_hi))


# ---------------------------------------------------------------------------
# conformal time


def _integral_e_minus_omega(spec: ScaleFactorSpec, a: float, b: float, scale: float = 1.0) -> float:
    """``int_a^b e^{-Omega}``; ``scale`` is the size of the quantity it will be added to."""
    f = lambda s: math.exp(-_omega_of(spec, s))
    total = 0.0
    lo = a
    while lo < b:
        hi = min(2.0 * lo, b)
        if hi - lo <= 1e-6 * hi:
            # Simpson is exact to rounding on such short pieces, where quad's error estimate breaks down
            val = (hi - lo) * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi)) / 6.0
        else:
            # accuracy below the rounding of the running total is not needed
            val, _ = integrate.quad(f, lo, hi, epsabs=1e-16 * max(scale, total), epsrel=1e-13, limit=200)
        total += val
        lo = hi
    return total


def conformal_time(spec: ScaleFactorSpec, t: float) -> float:
    """``tau(t) = 1 + int_1^t e^{-Omega(s)} ds``."""
    _check_time(spec, t)
    return 1.0 + _integral_e_minus_omega(spec, 1.0, t)


def conformal_horizon(spec: ScaleFactorSpec, tol: float = 1e-12) -> float:
    """Supremum of the conformal time; ``inf`` for non-integrable laws."""
    if spec.family is Family.TABULATED:
        return conformal_time(spec, spec.t_max)
    val = improper_integral(_branch_integrands(spec)["radiation"], 2.0**60, tol)
    return math.inf if val is None else 1.0 + val


def invert_conformal_time(spec: ScaleFactorSpec, tau: float, rtol: float = 1e-14) -> float:
    """Coordinate time ``t`` with ``conformal_time(spec, t) == tau``.

    Raises :class:`ConformalHorizonError` when ``tau`` is not below the
    conformal horizon.
    """
    if not tau >= 1.0:
        raise SpacetimeDomainError(f"conformal time must satisfy tau >= 1, got {tau!r}")
    if tau == 1.0:
        return 1.0
    tau_sup = conformal_horizon(spec)
    if tau >= tau_sup:
        raise ConformalHorizonError(tau, tau_sup)

    # bracket [lo, hi] with tau(lo) <= tau < tau(hi), accumulating tau(lo)
    lo, tau_lo = 1.0, 1.0
    hi = 2.0
    while True:
        if hi > spec.t_max:
            hi = spec.t_max
        tau_hi = tau_lo + _integral_e_minus_omega(spec, lo, hi, tau_lo)
        if tau_hi >= tau:
            break
        if hi >= spec.t_max or hi > 2.0**1000:
            raise ConformalHorizonError(tau, tau_hi)
        lo, tau_lo, hi = hi, tau_hi, 2.0 * hi

    # safeguarded Newton on g(t) = tau(t) - tau, dg/dt = e^{-Omega}
    t, g_t = lo, tau_lo - tau
    for _ in range(200):
        slope = math.exp(-float(_omega_of(spec, t)))
        t_new = t - g_t / slope if slope > 0.0 else math.nan
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        g_new = tau_lo - tau + _integral_e_minus_omega(spec, lo, t_new, tau)
        if g_new < 0.0:
            lo, tau_lo, g_new = t_new, tau + g_new, g_new
        else:
            hi = t_new
        converged = abs(t_new - t) <= rtol * t_new or hi - lo <= rtol * hi
        t, g_t = t_new, g_new
        if converged or abs(g_t) <= 1e-15 * tau:
            break
    return t
