"""Scenario configuration and the coupled time loop.

Each step solves the ice momentum with the tracers of the previous step,
transports the tracers with the new velocity, then moves the icebergs
through the new ice field and grounds those that reached shallow water.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .advection import upwind_step
from .diagnostics import (
    PHI_MODES,
    DiagnosticsRecord,
    OutputWriter,
    initial_energy,
    phi_increment,
    region_integral,
    stability_bound_increment,
)
from .errors import ConfigurationError, SolverError
from .icebergs import GroundingRegion, IcebergParticle, ground_bergs, step_icebergs
from .mesh import build_uniform_mesh
from .momentum import SolverConfig, make_linear_solver, solve_momentum
from .params import DragParams, Params, RheologyParams
from .state import BoundaryData, Forcing, cell_value_at, init_state, interp_node_field

logger = logging.getLogger(__name__)

__all__ = [
    "ScenarioConfig",
    "RunResult",
    "SCENARIOS",
    "builtin_scenario",
    "default_dt",
    "load_config",
    "dump_config",
    "validate_config",
    "run_scenario",
]

KM = 1000.0
DAY = 86400.0
SCENARIOS = ("stability", "refinement", "radius", "dynamic")

# initial berg centers (km) that ground / stay free in the dynamic experiment
DYNAMIC_GROUNDED = [(110, 108), (110, 118), (110, 122), (110, 125), (123, 143), (132, 156)]
DYNAMIC_FREE = [
    (40, 64), (133, 167), (133, 171), (133, 187), (199, 256), (200, 250), (200, 259),
    (201, 253), (203, 261), (223, 417), (293, 201), (310, 345), (334, 25),
]
SHALLOW_RECT = ((111 * KM, 100 * KM), (200 * KM, 165 * KM))


def default_dt(resolution):
    """600 s at 8 km, proportional to the cell size."""
    return 600.0 * resolution / 8000.0


@dataclass
class ScenarioConfig:
    """Everything needed to run one simulation."""

    name: str = "custom"
    extent: tuple = (512 * KM, 512 * KM)
    resolution: float = 8 * KM
    dt: float | None = None  # None -> default_dt(resolution)
    duration: float = 3 * DAY
    output_cadence: int = 144
    a0: float = 0.5
    h0: float = 1.0
    a_in: float | None = None  # None -> a0
    h_in: float | None = None  # None -> h0
    advection: bool = True
    forcing: Forcing = field(default_factory=lambda: Forcing(v_o=(0.05, 0.0)))
    params: Params = field(default_factory=Params)
    bergs: list = field(default_factory=list)
    grounding: GroundingRegion | None = None
    regions: dict = field(default_factory=dict)  # name -> ((x0, y0), (x1, y1))
    phi_mode: str = "discrete_point"
    solver: SolverConfig = field(default_factory=SolverConfig)

    @property
    def time_step(self):
        return default_dt(self.resolution) if self.dt is None else self.dt

    @property
    def boundary(self):
        return BoundaryData(
            a_in=self.a0 if self.a_in is None else self.a_in,
            h_in=self.h0 if self.h_in is None else self.h_in,
        )

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def validate_config(cfg):
    """Pre-flight checks; raises ConfigurationError on the first problem.

    Returns the mesh so callers need not build it twice.
    """
    if cfg.duration < 0:
        raise ConfigurationError("duration must be non-negative")
    if cfg.time_step <= 0:
        raise ConfigurationError("dt must be positive")
    if cfg.output_cadence < 1:
        raise ConfigurationError("output cadence must be at least 1 step")
    if cfg.phi_mode not in PHI_MODES:
        raise ConfigurationError(f"phi mode must be one of {PHI_MODES}")
    mesh = build_uniform_mesh(cfg.extent, cfg.resolution)
    cfg.boundary  # validates inflow data
    if not 0.0 <= cfg.a0 <= 1.0 or cfg.h0 < 0:
        raise ConfigurationError("initial state needs a0 in [0, 1] and h0 >= 0")
    ids = [b.id for b in cfg.bergs]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("iceberg ids must be unique")
    for b in cfg.bergs:
        if not mesh.contains(b.x):
            raise ConfigurationError(f"iceberg {b.id} at {tuple(b.x)} lies outside the domain")
    for name, rect in cfg.regions.items():
        (x0, y0), (x1, y1) = rect
        if not (x1 > x0 and y1 > y0 and mesh.contains((x0, y0)) and mesh.contains((x1, y1))):
            raise ConfigurationError(f"region {name!r} must be a non-empty rectangle in the domain")
    if cfg.advection:
        speed = float(np.max(np.abs(cfg.forcing.ocean)))
        if speed * cfg.time_step > cfg.resolution:
            raise ConfigurationError(
                f"dt = {cfg.time_step:g} s breaks the advective CFL limit for |v_o| = {speed:g} m/s; "
                f"use dt <= {cfg.resolution / speed:.4g} s"
            )
    if cfg.params.drag.ocean_drag_mode == "linearized":
        cfg.params.drag.linear_drag_coefficient(cfg.forcing.ocean)
    return mesh


# ---------------------------------------------------------------------------
# built-in experiments


def _twin_bergs(x_km, ys_km, r):
    return [IcebergParticle((x_km * KM, y * KM), r, 200.0, grounded=True, id=k + 1)
            for k, y in enumerate(ys_km)]


def builtin_scenario(name, resolution=None, radius=None, duration=None):
    """Configuration of one of the four reference experiments.

    ``stability``: advection off, linearized ocean drag, two grounded bergs.
    ``refinement``: two grounded bergs with transport, 10 days.
    ``radius``: as ``refinement`` on the 8 km mesh, for varying berg radius.
    ``dynamic``: 19 drifting bergs and a shallow rectangle, 3 days, half the
    default time step.
    """
    if name not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    r = 1000.0 if radius is None else float(radius)
    res = 8 * KM if resolution is None else float(resolution)
    base = ScenarioConfig(name=name, resolution=res)
    if name == "stability":
        cfg = base.replace(
            advection=False,
            params=Params().with_changes(ocean_drag_mode="linearized"),
            bergs=_twin_bergs(159, (159, 157), r),
            duration=3 * DAY,
        )
    elif name in ("refinement", "radius"):
        cfg = base.replace(
            bergs=_twin_bergs(158, (158, 154), r),
            duration=(10 if name == "refinement" else 3) * DAY,
            regions={
                # aligned with the 16 km grid lines around the node at (160, 160) km
                "before": ((128 * KM, 144 * KM), (160 * KM, 176 * KM)),
                "after": ((160 * KM, 144 * KM), (192 * KM, 176 * KM)),
            },
        )
    else:
        bergs = [IcebergParticle((x * KM, y * KM), r, 200.0, id=k + 1)
                 for k, (x, y) in enumerate(DYNAMIC_GROUNDED + DYNAMIC_FREE)]
        # explicit berg drag diverges at the default step when several bergs
        # ground at once in weak ice, so this scenario runs at half of it
        cfg = base.replace(bergs=bergs, grounding=GroundingRegion(*SHALLOW_RECT), duration=3 * DAY,
                           dt=default_dt(res) / 2)
    if duration is not None:
        cfg = cfg.replace(duration=float(duration))
    return cfg


# ---------------------------------------------------------------------------
# INI reading and writing

_PARAM_SECTIONS = (("rheology", RheologyParams), ("drag", DragParams))


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {s!r}")


def _coerce(cls, name, raw):
    default = next(f for f in dataclasses.fields(cls) if f.name == name).default
    if isinstance(default, bool):
        return _parse_bool(raw)
    if isinstance(default, str):
        return raw.strip()
    if default is None or isinstance(default, float):
        return None if raw.strip().lower() in ("", "none") else float(raw)
    if isinstance(default, int):
        return int(raw)
    return raw


def _get(sec, key, conv=float, default=None):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except ValueError as exc:
        raise ConfigurationError(f"[{sec.name}] {key}: {exc}") from exc


def load_config(source):
    """Read a scenario from an INI file path or string (see docs/config.md)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (C_o, P_star)
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {source}: {exc}") from exc
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc

    known = {"scenario", "domain", "time", "initial", "inflow", "forcing", "rheology",
             "drag", "model", "solver", "grounding"}
    for s in cp.sections():
        if s not in known and not s.startswith(("iceberg.", "region.")):
            raise ConfigurationError(f"unknown config section [{s}]")

    sec = lambda name: cp[name] if cp.has_section(name) else None  # noqa: E731
    cfg = ScenarioConfig()
    if sec("scenario") is not None and "name" in cp["scenario"]:
        cfg.name = cp["scenario"]["name"].strip()

    d = sec("domain")
    cfg.extent = (_get(d, "extent_x", default=cfg.extent[0]), _get(d, "extent_y", default=cfg.extent[1]))
    cfg.resolution = _get(d, "resolution", default=cfg.resolution)

    t = sec("time")
    cfg.dt = _get(t, "dt", default=None)
    cfg.duration = _get(t, "duration", default=cfg.duration)
    cfg.output_cadence = _get(t, "output_cadence", int, cfg.output_cadence)

    i = sec("initial")
    cfg.a0 = _get(i, "a0", default=cfg.a0)
    cfg.h0 = _get(i, "h0", default=cfg.h0)
    b = sec("inflow")
    cfg.a_in = _get(b, "a_in", default=None)
    cfg.h_in = _get(b, "h_in", default=None)

    f = sec("forcing")
    cfg.forcing = Forcing(
        v_o=(_get(f, "ocean_u", default=0.05), _get(f, "ocean_v", default=0.0)),
        v_a=(_get(f, "wind_u", default=0.0), _get(f, "wind_v", default=0.0)),
        coriolis=_get(f, "coriolis", _parse_bool, False),
        f=_get(f, "f", default=1.46e-4),
    )

    changes = {}
    for name, cls in _PARAM_SECTIONS:
        s = sec(name)
        if s is None:
            continue
        names = {fl.name for fl in dataclasses.fields(cls)}
        for key, raw in s.items():
            if key not in names:
                raise ConfigurationError(f"[{name}] unknown key {key!r}")
            try:
                changes[key] = _coerce(cls, key, raw)
            except ValueError as exc:
                raise ConfigurationError(f"[{name}] {key}: {exc}") from exc
    m = sec("model")
    if m is not None and "h_floor" in m:
        changes["h_floor"] = float(m["h_floor"])
    cfg.params = Params().with_changes(**changes)
    cfg.advection = _get(m, "advection", _parse_bool, True)
    cfg.phi_mode = _get(m, "phi_mode", str.strip, cfg.phi_mode)

    s = sec("solver")
    if s is not None:
        sk = {}
        for key, raw in s.items():
            if key not in {fl.name for fl in dataclasses.fields(SolverConfig)}:
                raise ConfigurationError(f"[solver] unknown key {key!r}")
            sk[key] = _coerce(SolverConfig, key, raw)
        cfg.solver = SolverConfig(**sk)

    g = sec("grounding")
    if g is not None:
        cfg.grounding = GroundingRegion(
            (_get(g, "x0"), _get(g, "y0")), (_get(g, "x1"), _get(g, "y1")))

    for s_name in cp.sections():
        s = cp[s_name]
        if s_name.startswith("region."):
            cfg.regions[s_name[7:]] = ((_get(s, "x0"), _get(s, "y0")), (_get(s, "x1"), _get(s, "y1")))
        elif s_name.startswith("iceberg."):
            try:
                bid = int(s_name[8:])
            except ValueError:
                raise ConfigurationError(f"iceberg section needs an integer id: [{s_name}]") from None
            if "x" not in s or "y" not in s:
                raise ConfigurationError(f"[{s_name}] needs x and y")
            cfg.bergs.append(IcebergParticle(
                (_get(s, "x"), _get(s, "y")), _get(s, "r", default=1000.0),
                _get(s, "h", default=200.0), grounded=_get(s, "grounded", _parse_bool, False),
                id=bid))
    return cfg


def dump_config(cfg):
    """INI text that :func:`load_config` reads back to the same scenario."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["scenario"] = {"name": cfg.name}
    cp["domain"] = {"extent_x": repr(cfg.extent[0]), "extent_y": repr(cfg.extent[1]),
                    "resolution": repr(cfg.resolution)}
    cp["time"] = {"dt": repr(cfg.time_step), "duration": repr(cfg.duration),
                  "output_cadence": str(cfg.output_cadence)}
    cp["initial"] = {"a0": repr(cfg.a0), "h0": repr(cfg.h0)}
    bd = cfg.boundary
    cp["inflow"] = {"a_in": repr(bd.a_in), "h_in": repr(bd.h_in)}
    fo = cfg.forcing
    cp["forcing"] = {"ocean_u": repr(float(fo.v_o[0])), "ocean_v": repr(float(fo.v_o[1])),
                     "wind_u": repr(float(fo.v_a[0])), "wind_v": repr(float(fo.v_a[1])),
                     "coriolis": str(fo.coriolis).lower(), "f": repr(fo.f)}
    for name, obj in (("rheology", cfg.params.rheology), ("drag", cfg.params.drag)):
        cp[name] = {k: _ini_value(v) for k, v in dataclasses.asdict(obj).items()}
    cp["model"] = {"advection": str(cfg.advection).lower(), "phi_mode": cfg.phi_mode,
                   "h_floor": repr(cfg.params.h_floor)}
    cp["solver"] = {k: _ini_value(v) for k, v in dataclasses.asdict(cfg.solver).items()}
    if cfg.grounding is not None:
        (x0, y0), (x1, y1) = cfg.grounding.lower, cfg.grounding.upper
        cp["grounding"] = {"x0": repr(float(x0)), "y0": repr(float(y0)),
                           "x1": repr(float(x1)), "y1": repr(float(y1))}
    for name, ((x0, y0), (x1, y1)) in cfg.regions.items():
        cp[f"region.{name}"] = {"x0": repr(float(x0)), "y0": repr(float(y0)),
                                "x1": repr(float(x1)), "y1": repr(float(y1))}
    for b in cfg.bergs:
        cp[f"iceberg.{b.id}"] = {"x": repr(float(b.x[0])), "y": repr(float(b.x[1])),
                                 "r": repr(float(b.r)), "h": repr(float(b.h)),
                                 "grounded": str(bool(b.grounded)).lower()}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _ini_value(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# time loop


@dataclass
class RunResult:
    config: ScenarioConfig
    state: object
    bergs: list
    records: list
    reports: list
    out_dir: Path | None = None
    snapshots: dict = field(default_factory=dict)  # step -> (v, a, h) when requested


def _sampler(state):
    def sample(x):
        return interp_node_field(state.mesh, state.v, x), float(cell_value_at(state.mesh, state.a, x))
    return sample


def run_scenario(cfg, out_dir=None, keep_snapshots=(), on_step=None):
    """Run a scenario, optionally writing CSV output to ``out_dir``.

    Parameters
    ----------
    keep_snapshots : iterable of int
        Steps whose ``(v, a, h)`` arrays are kept in ``RunResult.snapshots``.
    on_step : callable, optional
        Called as ``on_step(step, state, bergs, record)`` after every step.

    Raises
    ------
    ConfigurationError
        If the pre-flight checks fail.
    SolverError
        If a momentum solve does not converge; carries the step and report.
    """
    mesh = validate_config(cfg)
    params = cfg.params
    dt_nominal = cfg.time_step
    state = init_state(mesh, cfg.a0, cfg.h0)
    bergs = [b.copy() for b in cfg.bergs]
    if cfg.grounding is not None:
        ground_bergs(bergs, cfg.grounding)
    keep = set(keep_snapshots)

    writer = None
    if out_dir is not None:
        writer = OutputWriter(out_dir, cfg.output_cadence)
        (Path(out_dir) / "config.ini").write_text(dump_config(cfg), encoding="utf-8")

    try:
        bound_rate = stability_bound_increment(cfg.forcing, params, mesh.area, state.h)
    except ConfigurationError:
        bound_rate = math.nan
        logger.info("no linear drag coefficient: stability bound not evaluated")
    alt_mode = next(m for m in PHI_MODES if m != cfg.phi_mode)

    def diagnose(t, prev, iters):
        rec = DiagnosticsRecord(t=t, newton_iters=iters)
        rec.phi_increment = phi_increment(state, bergs, params, cfg.phi_mode)
        rec.phi_increment_alt = phi_increment(state, bergs, params, alt_mode)
        if prev is None:
            rec.bound_rhs = initial_energy(state, params)
        else:
            # left-endpoint rule
            step = t - prev.t
            rec.phi_cumulative = prev.phi_cumulative + step * prev.phi_increment
            rec.bound_rhs = prev.bound_rhs + step * bound_rate
        rec.region_integrals = {k: region_integral(mesh, state.a, r) for k, r in cfg.regions.items()}
        return rec

    records = [diagnose(0.0, None, 0)]
    reports = []
    snapshots = {}
    if 0 in keep:
        snapshots[0] = (state.v.copy(), state.a.copy(), state.h.copy())
    if writer is not None:
        writer.write(state, bergs, records[0], 0, force_snapshot=True)

    n_steps = int(math.ceil(cfg.duration / dt_nominal - 1e-9)) if cfg.duration > 0 else 0
    linear = make_linear_solver(cfg.solver)
    logger.info("scenario %s: %d steps of %g s on %d x %d cells", cfg.name, n_steps,
                dt_nominal, mesh.n_cells_x, mesh.n_cells_y)
    for n in range(1, n_steps + 1):
        t_new = min(n * dt_nominal, cfg.duration)
        dt = t_new - state.t
        # (1) momentum with the tracers of the previous step
        v, report = solve_momentum(state, state.v, dt, cfg.forcing, bergs, params,
                                   cfg.solver, linear)
        reports.append(report)
        if not report.converged:
            raise SolverError(
                f"momentum solve failed at step {n} (t = {t_new:g} s): residual "
                f"{report.residual_norm:.3e} > tolerance {report.tolerance:.3e} "
                f"after {report.iterations} iterations", report=report, step=n)
        state.v = v
        # (2) tracer transport with the new velocity
        if cfg.advection:
            state.a, state.h = upwind_step(state, v, dt, cfg.boundary)
        state.t = t_new
        # the functional sees v(t_n) and the grounded set of the previous step
        rec = diagnose(t_new, records[-1], report.iterations)
        # (3, 4) iceberg velocity and position, then grounding
        step_icebergs(bergs, dt, _sampler(state), cfg.forcing, cfg.grounding, params, mesh)
        records.append(rec)
        if n in keep:
            snapshots[n] = (state.v.copy(), state.a.copy(), state.h.copy())
        if writer is not None:
            writer.write(state, bergs, rec, n, force_snapshot=(n == n_steps))
        if on_step is not None:
            on_step(n, state, bergs, rec)
        if n % 50 == 0:
            logger.info("step %d/%d t=%.0f s, %d iterations", n, n_steps, t_new, report.iterations)
    return RunResult(cfg, state, bergs, records, reports,
                     Path(out_dir) if out_dir is not None else None, snapshots)
