"""Command-line scenario runner.

Configuration files are flat ``key = value`` text with ``#`` comments.
Perturbations are indexed entries such as::

    perturb.1 = fourier field=L k=1,0,0 phase=0 amplitude=1e-3
    perturb.2 = gaussian field=u1 center=0,0,0 width=0.4 amplitude=1e-3
    perturb.3 = compressive radius=1 shell_center=0.55 shell_halfwidth=0.4 amplitude=0.25

``phase=random`` draws the phase from the run's ``seed``.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import diagnostics as dg
from .euler_rhs import Scheme
from .fluid import (
    FIELDS,
    CompactCompressive,
    FourierMode,
    GaussianBump,
    Grid,
    SoundSpeed,
    background,
    perturb,
    write_snapshot,
)
from .integrator import Frame, ShockGuard, Status, StepControl, run
from .shocklab import contrast_experiment, shock_report, to_minkowski, worker_threads
from .spacetime import (
    ScaleFactorSpec,
    classify,
    conformal_time,
    exponential,
    load_table,
    power_law,
)

__all__ = ["ConfigError", "ConfigValidationError", "RunConfig", "parse_config", "parse_text", "execute", "main"]

SCENARIOS = ("classify", "stability", "decay-fit", "conformal-check", "shock-contrast", "divergence-check")
FAMILIES = ("exponential", "power_law", "tabulated")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_GUARD = 2


@dataclass(frozen=True)
class ConfigError:
    line: Optional[int]
    key: str
    message: str

    def __str__(self) -> str:
        where = f"line {self.line}" if self.line is not None else "config"
        return f"{where}: {self.key}: {self.message}"


class ConfigValidationError(ValueError):
    def __init__(self, errors: list[ConfigError]):
        self.errors = errors
        super().__init__("\n".join(str(e) for e in errors))


# ---------------------------------------------------------------------------
# value parsers


def _float(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _int(text: str) -> int:
    return int(text.strip())


def _triple(conv: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated values")
        return tuple(conv(p) for p in parts)

    return parse


def _choice(options: tuple[str, ...]) -> Callable[[str], str]:
    def parse(text: str) -> str:
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _float_list(text: str) -> tuple:
    return tuple(_float(p) for p in text.replace(" ", "").split(",") if p)


def _str(text: str) -> str:
    return text.strip()


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str
    check: Optional[Callable[[Any], Optional[str]]] = None


def _positive(v) -> Optional[str]:
    return None if v > 0 else "must be positive"


def _nonneg(v) -> Optional[str]:
    return None if v >= 0 else "must be non-negative"


def _c2_check(v) -> Optional[str]:
    return None if 0.0 <= v <= 1.0 / 3.0 else "c2 must lie in [0, 1/3]"


def _cfl_check(v) -> Optional[str]:
    return None if 0.0 < v <= 1.0 else "cfl must lie in (0, 1]"


def _r_check(v) -> Optional[str]:
    return None if 2.0 / 3.0 <= v < 1.0 else "r must lie in [2/3, 1)"


def _frac_check(v) -> Optional[str]:
    return None if 0.0 < v < 1.0 else "must lie in (0, 1)"


def _dims_check(v) -> Optional[str]:
    return None if all(n >= 1 for n in v) else "grid dims must be positive"


def _lengths_check(v) -> Optional[str]:
    return None if all(x > 0 for x in v) else "box lengths must be positive"


def _order_check(v) -> Optional[str]:
    return None if v >= 1 else "N must be >= 1"


TWO_PI = 2.0 * math.pi
REQUIRED = object()

SCHEMA: dict[str, Key] = {
    "scenario": Key(_choice(SCENARIOS), REQUIRED, "experiment to run"),
    # spacetime
    "family": Key(_choice(FAMILIES), REQUIRED, "scale-factor family"),
    "H": Key(_float, None, "exponential rate (family = exponential)", _positive),
    "Q": Key(_float, None, "power-law exponent (family = power_law)", _positive),
    "table_path": Key(_str, None, "two-column t Omega file (family = tabulated)"),
    "decay_q": Key(_float, 0.0, "decay exponent q of F(Omega) = e^{q Omega}", _nonneg),
    "contrast_family": Key(_choice(FAMILIES), None, "stable-leg family (shock-contrast)"),
    "contrast_H": Key(_float, None, "stable-leg exponential rate", _positive),
    "contrast_Q": Key(_float, None, "stable-leg power-law exponent", _positive),
    "contrast_table_path": Key(_str, None, "stable-leg table file"),
    "contrast_decay_q": Key(_float, 0.0, "stable-leg decay exponent", _nonneg),
    "horizon": Key(_float, 2.0**40, "classifier sampling horizon in t", _positive),
    "tol": Key(_float, 1e-8, "classifier tolerance", _positive),
    # fluid
    "c2": Key(_float, REQUIRED, "sound speed squared", _c2_check),
    "rho_bar": Key(_float, 1.0, "background density constant", _positive),
    "dims": Key(_triple(_int), (16, 16, 16), "grid points per direction", _dims_check),
    "lengths": Key(_triple(_float), (TWO_PI, TWO_PI, TWO_PI), "box lengths", _lengths_check),
    "seed": Key(_int, 0, "seed for phase=random"),
    # integrator
    "cfl": Key(_float, 0.5, "CFL number", _cfl_check),
    "dt_max": Key(_float, 0.05, "time-step cap", _positive),
    "fixed_dt": Key(_float, None, "fixed step, overriding the CFL rule", _positive),
    "t_end": Key(_float, 2.0, "final coordinate time", _positive),
    "tau_end": Key(_float, None, "final conformal time (conformal frame)", _positive),
    "record_interval": Key(_float, 0.5, "diagnostics cadence in the active time", _positive),
    "gradient_threshold": Key(_float, None, "absolute guard on max |du|", _positive),
    "gradient_factor": Key(_float, 100.0, "guard as a multiple of the initial max |du|", _positive),
    "value_threshold": Key(_float, 1e3, "guard on max |W|", _positive),
    "frame": Key(_choice(tuple(f.value for f in Frame)), "coordinate", "time frame"),
    "scheme": Key(_choice(tuple(s.value for s in Scheme)), "spectral", "spatial derivative scheme"),
    "viscosity": Key(_float, 0.0, "artificial viscosity nu (adds nu h^2 Lap)", _nonneg),
    # diagnostics
    "N": Key(_int, 3, "Sobolev order", _order_check),
    "dt_probe": Key(_float, None, "probe step for the divergence residual", _positive),
    "refinements": Key(_int, 4, "number of probe or step halvings", _positive),
    "fit_t1": Key(_float, None, "decay-fit window start"),
    "fit_t2": Key(_float, None, "decay-fit window end"),
    "conformal_steps": Key(_int, 50, "steps per record segment at the coarse level", _positive),
    # shocklab
    "r": Key(_float, 0.75, "annulus inner radius", _r_check),
    "M": Key(_int, 1, "order of the data norm", _nonneg),
    "C": Key(_float, 1.0, "constant in the Q(r) condition", _positive),
    "C_prime": Key(_float, 1.0, "constant in the shock-time bound", _positive),
    "epsilon": Key(_float, 0.01, "smallness bound on D_M", _positive),
    "horizon_fraction": Key(_float, 0.99, "fraction of a finite conformal range to run", _frac_check),
    # output
    "out_dir": Key(_str, "out", "output directory"),
    "snapshot_times": Key(_float_list, (), "coordinate times for binary snapshots (must be record times)"),
}

PERTURB_KINDS = ("fourier", "gaussian", "compressive")


@dataclass
class RunConfig:
    values: dict[str, Any]
    perturbations: list[tuple[str, dict[str, Any]]] = field(default_factory=list)
    source: Optional[str] = None

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def scenario(self) -> str:
        return self.values["scenario"]

    def spec(self, prefix: str = "") -> ScaleFactorSpec:
        v = self.values
        family = v[prefix + "family"]
        q = v[prefix + "decay_q"]
        if family == "exponential":
            return exponential(v[prefix + "H"], q)
        if family == "power_law":
            return power_law(v[prefix + "Q"], q)
        return load_table(v[prefix + "table_path"], q)

    @property
    def c2(self) -> SoundSpeed:
        return SoundSpeed(self.values["c2"])

    @property
    def grid(self) -> Grid:
        return Grid(self.values["dims"], self.values["lengths"])

    def to_text(self) -> str:
        """Effective configuration, defaults applied, in the input format."""
        lines = []
        for key in SCHEMA:
            val = self.values.get(key)
            if val is None or (key == "snapshot_times" and not val):
                continue
            lines.append(f"{key} = {_fmt(val)}")
        for n, (kind, params) in enumerate(self.perturbations, start=1):
            body = " ".join(f"{k}={_fmt(v)}" for k, v in params.items())
            lines.append(f"perturb.{n} = {kind} {body}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict[str, str]:
        out = {}
        for line in self.to_text().splitlines():
            k, _, v = line.partition(" = ")
            out[k] = v
        return out


# ---------------------------------------------------------------------------
# parsing


def _parse_perturbation(text: str) -> tuple[str, dict[str, Any]]:
    parts = text.split()
    if not parts or parts[0] not in PERTURB_KINDS:
        raise ValueError(f"perturbation kind must be one of {', '.join(PERTURB_KINDS)}")
    kind = parts[0]
    raw = {}
    for item in parts[1:]:
        k, sep, v = item.partition("=")
        if not sep:
            raise ValueError(f"expected name=value, got {item!r}")
        raw[k] = v
    allowed = {
        "fourier": {"field", "k", "phase", "amplitude"},
        "gaussian": {"field", "center", "width", "amplitude"},
        "compressive": {"radius", "shell_center", "shell_halfwidth", "velocity_weight", "amplitude"},
    }[kind]
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown {kind} parameters: {', '.join(sorted(unknown))}")
    if "amplitude" not in raw:
        raise ValueError("amplitude is required")
    p: dict[str, Any] = {}
    if kind in ("fourier", "gaussian"):
        if raw.get("field") not in FIELDS:
            raise ValueError(f"field must be one of {', '.join(FIELDS)}")
        p["field"] = raw["field"]
    if kind == "fourier":
        if "k" not in raw:
            raise ValueError("k is required")
        p["k"] = _triple(_int)(raw["k"])
        ph = raw.get("phase", "0")
        p["phase"] = "random" if ph == "random" else _float(ph)
    elif kind == "gaussian":
        p["center"] = _triple(_float)(raw.get("center", "0,0,0"))
        p["width"] = _float(raw.get("width", "0.5"))
        if not p["width"] > 0:
            raise ValueError("width must be positive")
    else:
        d = CompactCompressive()
        for name in ("radius", "shell_center", "shell_halfwidth", "velocity_weight"):
            p[name] = _float(raw[name]) if name in raw else getattr(d, name)
    p["amplitude"] = _float(raw["amplitude"])
    if not math.isfinite(p["amplitude"]):
        raise ValueError("amplitude must be finite")
    return kind, p


def parse_text(text: str, source: Optional[str] = None) -> RunConfig:
    """Parse configuration text, collecting every error before raising."""
    errors: list[ConfigError] = []
    values: dict[str, Any] = {}
    lines_of: dict[str, int] = {}
    perts: dict[int, tuple[int, tuple[str, dict]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            errors.append(ConfigError(lineno, key or raw.strip(), "expected 'key = value'"))
            continue
        if key in lines_of:
            errors.append(ConfigError(lineno, key, f"duplicate key (first on line {lines_of[key]})"))
            continue
        lines_of[key] = lineno
        if key.startswith("perturb."):
            idx = key[len("perturb.") :]
            if not idx.isdigit():
                errors.append(ConfigError(lineno, key, "perturbation keys look like perturb.<n>"))
                continue
            try:
                perts[int(idx)] = (lineno, _parse_perturbation(val))
            except ValueError as exc:
                errors.append(ConfigError(lineno, key, str(exc)))
            continue
        spec = SCHEMA.get(key)
        if spec is None:
            errors.append(ConfigError(lineno, key, "unknown key"))
            continue
        try:
            parsed = spec.parse(val)
        except (ValueError, ZeroDivisionError) as exc:
            errors.append(ConfigError(lineno, key, f"cannot parse {val!r}: {exc}"))
            continue
        if spec.check is not None:
            msg = spec.check(parsed)
            if msg:
                errors.append(ConfigError(lineno, key, f"{msg} (got {val})"))
                continue
        values[key] = parsed

    for key, spec in SCHEMA.items():
        if key in values or key in lines_of:
            continue
        if spec.default is REQUIRED:
            errors.append(ConfigError(None, key, "missing required key"))
        else:
            values[key] = spec.default

    def need(key: str, why: str) -> None:
        if values.get(key) is None and key not in lines_of:
            errors.append(ConfigError(None, key, f"missing required key ({why})"))

    for prefix in ("", "contrast_"):
        fam = values.get(prefix + "family")
        if fam is None:
            continue
        need(prefix + {"exponential": "H", "power_law": "Q", "tabulated": "table_path"}[fam], f"{prefix}family = {fam}")
    scenario = values.get("scenario")
    if scenario == "shock-contrast":
        need("contrast_family", "scenario = shock-contrast")
        comp = [p for _, (_, p) in perts.items() if p[0] == "compressive"]
        if len(comp) != 1 or len(perts) != 1:
            errors.append(ConfigError(None, "perturb", "shock-contrast needs exactly one compressive perturbation"))
        if values.get("c2") is not None and values["c2"] != 1.0 / 3.0:
            errors.append(ConfigError(lines_of.get("c2"), "c2", "shock-contrast requires c2 = 1/3"))
    if scenario == "conformal-check" and values.get("c2") is not None and values["c2"] != 1.0 / 3.0:
        errors.append(ConfigError(lines_of.get("c2"), "c2", "conformal-check requires c2 = 1/3"))
    if values.get("frame") == "conformal-minkowski" and values.get("c2") not in (None, 1.0 / 3.0):
        errors.append(ConfigError(lines_of.get("frame"), "frame", "the conformal frame requires c2 = 1/3"))
    if scenario == "decay-fit":
        need("fit_t1", "scenario = decay-fit")
        need("fit_t2", "scenario = decay-fit")
        if values.get("fit_t1") is not None and values.get("fit_t2") is not None and not values["fit_t1"] < values["fit_t2"]:
            errors.append(ConfigError(lines_of.get("fit_t2"), "fit_t2", "fit window must satisfy fit_t1 < fit_t2"))
    if scenario == "divergence-check":
        need("dt_probe", "scenario = divergence-check")
    if errors:
        raise ConfigValidationError(errors)

    base = Path(source).parent if source else Path.cwd()
    for key in ("table_path", "contrast_table_path", "out_dir"):
        if values.get(key) is not None:
            values[key] = str((base / values[key]).resolve())
    cfg = RunConfig(values, [perts[k][1] for k in sorted(perts)], source)
    # constraints that need constructed objects
    late: list[ConfigError] = []
    try:
        spec = cfg.spec()
        if scenario != "classify" and values["t_end"] > spec.t_max:
            late.append(ConfigError(lines_of.get("t_end"), "t_end", "t_end beyond the tabulated range"))
    except (ValueError, OSError) as exc:
        late.append(ConfigError(lines_of.get("family"), "family", str(exc)))
    if values.get("contrast_family") is not None:
        try:
            cfg.spec("contrast_")
        except (ValueError, OSError) as exc:
            late.append(ConfigError(lines_of.get("contrast_family"), "contrast_family", str(exc)))
    try:
        st = background(cfg.grid, values["rho_bar"])
        for kind, p in cfg.perturbations:
            perturb(st, _mode(kind, p, np.random.default_rng(0)), 0.0)
    except ValueError as exc:
        late.append(ConfigError(None, "perturb", str(exc)))
    if late:
        raise ConfigValidationError(late)
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    """Parse a ``key = value`` file, or the ``config`` block of a ``report.json``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        block = json.loads(text).get("config")
        if not isinstance(block, dict):
            raise ConfigValidationError([ConfigError(None, "config", "report.json has no config block")])
        text = "".join(f"{k} = {v}\n" for k, v in block.items())
    return parse_text(text, str(path))


# ---------------------------------------------------------------------------
# execution


def _mode(kind: str, p: dict, rng: np.random.Generator):
    if kind == "fourier":
        phase = rng.uniform(0.0, 2.0 * math.pi) if p["phase"] == "random" else p["phase"]
        return FourierMode(p["field"], p["k"], phase)
    if kind == "gaussian":
        return GaussianBump(p["field"], p["center"], p["width"])
    return CompactCompressive(p["radius"], p["shell_center"], p["shell_halfwidth"], p["velocity_weight"])


def initial_state(cfg: RunConfig):
    rng = np.random.default_rng(cfg["seed"])
    st = background(cfg.grid, cfg["rho_bar"])
    for kind, p in cfg.perturbations:
        st = perturb(st, _mode(kind, p, rng), p["amplitude"])
    return st


def step_control(cfg: RunConfig) -> StepControl:
    return StepControl(
        cfl=cfg["cfl"],
        dt_max=cfg["dt_max"],
        t_end=cfg["t_end"],
        shock_guard=ShockGuard(cfg["gradient_threshold"], cfg["value_threshold"], cfg["gradient_factor"]),
        record_interval=cfg["record_interval"],
        fixed_dt=cfg["fixed_dt"],
        tau_end=cfg["tau_end"],
    )


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _snapshot_observer(cfg: RunConfig, recorder, out: Path):
    times = list(cfg["snapshot_times"])

    def observe(state, tau):
        for ts in times:
            if math.isclose(state.t, ts, rel_tol=1e-9, abs_tol=1e-12):
                write_snapshot(out / f"snapshot_t{ts!r}.bin", state, cfg.c2)
        return recorder(state, tau)

    return observe


def _run_series(cfg: RunConfig, out: Path):
    spec, c2 = cfg.spec(), cfg.c2
    frame = Frame(cfg["frame"])
    rec = dg.Recorder(spec, c2, cfg["N"], cfg["scheme"], cfg["dt_probe"], frame is Frame.CONFORMAL_MINKOWSKI)
    outcome = run(
        initial_state(cfg), spec, c2, step_control(cfg), frame, cfg["scheme"], cfg["viscosity"],
        _snapshot_observer(cfg, rec, out),
    )
    dg.write_csv(out / "series.csv", outcome.records)
    return outcome


def _outcome_dict(o) -> dict:
    return {
        "status": o.status.value,
        "steps_taken": o.steps_taken,
        "t_stop": o.t_stop,
        "tau_stop": o.tau_stop,
        "initial_max_gradient": o.initial_max_gradient,
        "max_gradient": o.max_gradient,
    }


def _scenario_classify(cfg: RunConfig, out: Path, report: dict) -> int:
    ec = classify(cfg.spec(), cfg["c2"], cfg["horizon"], cfg["tol"])
    report["classification"] = ec.to_dict()
    print(json.dumps(ec.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _scenario_stability(cfg: RunConfig, out: Path, report: dict) -> int:
    o = _run_series(cfg, out)
    report["outcome"] = _outcome_dict(o)
    print(f"stability: {o.status.value} after {o.steps_taken} steps at t={o.t_stop:.6g}")
    return EXIT_GUARD if o.status is Status.SHOCK_GUARD_TRIPPED else (EXIT_OK if o.status is Status.REACHED_END else EXIT_ERROR)


def _scenario_decay_fit(cfg: RunConfig, out: Path, report: dict) -> int:
    o = _run_series(cfg, out)
    report["outcome"] = _outcome_dict(o)
    slope = dg.decay_fit(o.records, (cfg["fit_t1"], cfg["fit_t2"]))
    c2 = cfg["c2"]
    report["decay_fit"] = {
        "window": [cfg["fit_t1"], cfg["fit_t2"]],
        "slope": slope,
        "homogeneous_rate": 3.0 * c2 - 2.0,
        "envelope_rate": -(1.0 + cfg["decay_q"]),
    }
    print(f"decay-fit: slope {slope:.6g} (homogeneous rate {3 * c2 - 2:.6g})")
    return EXIT_OK if o.status is Status.REACHED_END else EXIT_GUARD


def _segmented_runs(cfg: RunConfig, steps: int):
    """Coordinate and conformal runs with matched record times, ``steps`` RK4 steps per segment."""
    spec, c2 = cfg.spec(), cfg.c2
    st = initial_state(cfg)
    t0 = st.t
    interval = cfg["record_interval"]
    n_seg = max(1, int(math.ceil((cfg["t_end"] - t0) / interval - 1e-9)))
    times = [min(t0 + k * interval, cfg["t_end"]) for k in range(1, n_seg + 1)]
    a = b = st
    rows = []
    for t in times:
        ctl_a = StepControl(fixed_dt=(t - a.t) / steps, t_end=t, dt_max=1.0)
        a = run(a, spec, c2, ctl_a, Frame.COORDINATE_TIME, cfg["scheme"], cfg["viscosity"]).final_state
        tau_a, tau_b = conformal_time(spec, t), conformal_time(spec, b.t)
        ctl_b = StepControl(fixed_dt=(tau_a - tau_b) / steps, t_end=t, dt_max=1.0, tau_end=tau_a)
        b = run(b, spec, c2, ctl_b, Frame.CONFORMAL_MINKOWSKI, cfg["scheme"], cfg["viscosity"]).final_state
        ra, rb = to_minkowski(a, spec, cfg["rho_bar"]), to_minkowski(b, spec, cfg["rho_bar"])
        d = max(float(np.max(np.abs(ra.rho_prime - rb.rho_prime))), float(np.max(np.abs(ra.U - rb.U))))
        rows.append((t, tau_a, d))
    return rows


def _scenario_conformal(cfg: RunConfig, out: Path, report: dict) -> int:
    levels = [cfg["conformal_steps"] * 2**k for k in range(max(2, cfg["refinements"]))]
    with ThreadPoolExecutor(max_workers=worker_threads()) as pool:
        curves = list(pool.map(lambda n: _segmented_runs(cfg, n), levels))
    with open(out / "conformal.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "tau"] + [f"discrepancy_steps{n}" for n in levels])
        for i in range(len(curves[0])):
            w.writerow([repr(curves[0][i][0]), repr(curves[0][i][1])] + [repr(c[i][2]) for c in curves])
    finals = [c[-1][2] for c in curves]
    ratios = [finals[i] / finals[i + 1] if finals[i + 1] > 0 else math.inf for i in range(len(finals) - 1)]
    report["conformal_check"] = {"steps_per_segment": levels, "final_discrepancy": finals, "ratios": ratios}
    print("conformal-check: final discrepancies " + ", ".join(f"{d:.3e}" for d in finals))
    return EXIT_OK


def _scenario_divergence(cfg: RunConfig, out: Path, report: dict) -> int:
    spec, c2 = cfg.spec(), cfg.c2
    st = initial_state(cfg)
    if cfg["t_end"] > st.t:
        ctl = StepControl(cfl=cfg["cfl"], dt_max=cfg["dt_max"], t_end=cfg["t_end"], fixed_dt=cfg["fixed_dt"])
        st = run(st, spec, c2, ctl, Frame.COORDINATE_TIME, cfg["scheme"], cfg["viscosity"]).final_state
    probes = [cfg["dt_probe"] / 2**k for k in range(cfg["refinements"])]
    res = [dg.divergence_residual_order0(st, spec, c2, dt, cfg["scheme"]) for dt in probes]
    with open(out / "divergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dt_probe", "residual", "ratio"])
        for i, (dt, r) in enumerate(zip(probes, res)):
            w.writerow([repr(dt), repr(r), "" if i == 0 else repr(res[i - 1] / r if r > 0 else math.inf)])
    report["divergence_check"] = {"t": st.t, "dt_probe": probes, "residual": res}
    print("divergence-check: residuals " + ", ".join(f"{r:.3e}" for r in res))
    return EXIT_OK


def _scenario_shock(cfg: RunConfig, out: Path, report: dict) -> int:
    kind, p = cfg.perturbations[0]
    profile = _mode(kind, p, np.random.default_rng(cfg["seed"]))
    su, ss = cfg.spec(), cfg.spec("contrast_")
    c2 = cfg.c2

    def factory(spec):
        return dg.Recorder(spec, c2, cfg["N"], cfg["scheme"], None, rescaled_gradient=True)

    res = contrast_experiment(
        profile, p["amplitude"], su, ss, step_control(cfg), cfg.grid, cfg["rho_bar"], cfg["scheme"],
        cfg["viscosity"], cfg["horizon_fraction"], factory,
    )
    dg.write_csv(out / "series_unstable.csv", res.unstable.records)
    dg.write_csv(out / "series_stable.csv", res.stable.records)
    data = to_minkowski(res.initial_state, su, cfg["rho_bar"])
    tripped = res.unstable.status is Status.SHOCK_GUARD_TRIPPED
    rep = shock_report(
        data, cfg["rho_bar"], su, cfg["r"], cfg["M"], cfg["C"], cfg["C_prime"], cfg["epsilon"],
        Scheme.SPECTRAL, res.unstable.tau_stop if tripped else None,
    )
    rep_stable = shock_report(data, cfg["rho_bar"], ss, cfg["r"], cfg["M"], cfg["C"], cfg["C_prime"], cfg["epsilon"])
    body = rep.to_dict()
    body["contrast"] = {
        "stable_tau_max": rep_stable.to_dict()["tau_max"],
        "stable_t_max": rep_stable.to_dict()["t_max"],
    }
    _write_json(out / "shock_report.json", body)
    report["unstable_leg"] = _outcome_dict(res.unstable) | {"tau_end": res.tau_end_unstable}
    report["stable_leg"] = _outcome_dict(res.stable) | {"tau_end": res.tau_end_stable}
    print(
        f"shock-contrast: unstable leg {res.unstable.status.value} at tau={res.unstable.tau_stop:.6g} "
        f"(growth {res.unstable.gradient_growth:.3g}x); stable leg {res.stable.status.value} at "
        f"tau={res.stable.tau_stop:.6g} (growth {res.stable.gradient_growth:.3g}x)"
    )
    if tripped:
        print("shock-contrast: guard trip on the unstable leg is the expected outcome")
        return EXIT_GUARD
    return EXIT_OK


SCENARIO_RUNNERS = {
    "classify": _scenario_classify,
    "stability": _scenario_stability,
    "decay-fit": _scenario_decay_fit,
    "conformal-check": _scenario_conformal,
    "shock-contrast": _scenario_shock,
    "divergence-check": _scenario_divergence,
}


def execute(cfg: RunConfig) -> int:
    """Run the configured scenario, write artifacts under ``out_dir`` and return the exit status."""
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    report: dict[str, Any] = {"scenario": cfg.scenario, "config": cfg.to_dict()}
    try:
        status = SCENARIO_RUNNERS[cfg.scenario](cfg, out, report)
    except Exception as exc:  # noqa: BLE001 - reported with scenario context
        report["error"] = f"{type(exc).__name__}: {exc}"
        _write_json(out / "report.json", report)
        print(f"{cfg.scenario}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    report["exit_status"] = status
    _write_json(out / "report.json", report)
    return status


def defaults_text() -> str:
    lines = ["# frweuler configuration keys; commented keys are required or unset by default"]
    for key, spec in SCHEMA.items():
        lines.append(f"# {spec.doc}")
        if spec.default is REQUIRED:
            lines.append(f"# {key} = <required>")
        elif spec.default is None or spec.default == ():
            lines.append(f"# {key} =")
        else:
            lines.append(f"{key} = {_fmt(spec.default)}")
    lines.append("# perturb.1 = fourier field=L k=1,0,0 phase=0 amplitude=1e-3")
    return "\n".join(lines) + "\n"


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="frweuler", description="Relativistic Euler laboratory on FLRW-type backgrounds")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the scenario in a config file")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="validate a config file")
    p_val.add_argument("config")
    sub.add_parser("print-defaults", help="print every key with its default")
    args = parser.parse_args(argv)

    if args.command == "print-defaults":
        sys.stdout.write(defaults_text())
        return EXIT_OK
    try:
        cfg = parse_config(args.config)
    except ConfigValidationError as exc:
        for e in exc.errors:
            print(f"{args.config}: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.command == "validate":
        print(f"{args.config}: ok ({cfg.scenario})")
        return EXIT_OK
    return execute(cfg)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
