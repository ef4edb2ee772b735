"""
Experiment runner: single runs, refinement sweeps, monitor suites and the
published accuracy tables, all written as CSV.

Commands
--------
  run      one model/scheme/grid, solution snapshots + per-step monitors
  sweep    the same spec over several cell counts, errors + fitted rates
  monitor  run with monitors and write a pass/fail report
  table1   print the published accuracy tables and their fits (--run reproduces them)
  presets  list the built-in experiment presets

Settings come from (lowest to highest precedence) the model preset, a flat
YAML file given with --config, and command-line flags.

Exit codes
----------
  0 success, 1 bad configuration, 2 solver or metric error, 3 monitor failure
"""

import argparse
import csv
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml
from tqdm import tqdm

from baselines import BASELINE_CFL, BaselineKind, baseline_dt, baseline_step, parse_baseline
from errors import ConfigInvalid, MetricError, NoFlowError, SolverError
from lescheme import CellField, Grid, SchemeConfig, noflow_slopes, nsle_step, parse_k_shift, resolve_k, select_dt
from limiters import parse_limiter
from metrics import (TABLE1_KK, TABLE1_KK_FIT, TABLE1_LWR, TABLE1_LWR_FIT, ErrorTable,
                     cell_averages, fit_rate, l1_error, l1_norm, tv_eps, w1_error)
from models import (LWR_DIRECTIONS, Burgers, KeyfitzKranzer, LinearAdvection, kk_initial,
                    kk_noflow_slopes, kk_step, lwr_nonlocal_model)

logger = logging.getLogger(__name__)

VERSION = "noflow 1.0.0"
EPS = np.finfo(float).eps
TIME_TOLERANCE = 1e-12

MODELS = ("burgers_p1", "burgers_p2", "burgers_sine", "lwr_backward", "lwr_forward",
          "keyfitz_kranzer", "custom")
SCHEMES = ("nsle", "godunov", "rusanov", "lax_friedrichs")
SCALAR_LOCAL = ("burgers_p1", "burgers_p2", "burgers_sine", "custom")
OUTPUTS = ("solution", "monitors", "errors")
EXACT_MODELS = ("burgers_p1", "burgers_p2", "custom")
ENTROPY_TOLERANCE = 1e-10

PRESETS = {
    "burgers_p1": {"n_cells": 512, "t_final": 0.15},
    "burgers_p2": {"n_cells": 512, "t_final": 0.5},
    "burgers_sine": {"n_cells": 512, "t_final": 0.1},
    "lwr_backward": {"n_cells": 2048, "t_final": 10.0, "snapshots": (2.5, 5.01, 7.5, 10.0),
                     "reference_cells": 8192},
    "lwr_forward": {"n_cells": 512, "t_final": 10.0, "snapshots": (2.5, 5.01, 7.5, 10.0),
                    "reference_cells": 8192},
    "keyfitz_kranzer": {"n_cells": 512, "t_final": 0.5, "reference_cells": 65536},
    "custom": {"n_cells": 256, "t_final": 1.0, "speed": 1.0, "profile": "box"},
}


# --------------------------------------------------------------------------- #
# 1.  Experiment spec                                                          #
# --------------------------------------------------------------------------- #

def _as_tuple(value):
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    if np.isscalar(value):
        value = [value]
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class ExperimentSpec:
    model: str = "burgers_p1"
    scheme: str = "nsle"
    n_cells: int = 512
    t_final: float = 0.15
    limiter: str = "mm2"
    cfl: float = None
    k_mode: str = "zero"
    tvni: bool = False
    snapshots: tuple = ()
    reference_cells: int = None
    kernel_min_cells: int = 8
    v_max: float = 1.0
    dt_scale: float = 1.0
    entropy_levels: object = ()
    speed: float = 1.0
    profile: str = "box"
    out_dir: str = "results"
    outputs: tuple = ("solution", "monitors")

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigInvalid(f"Unknown model '{self.model}'. Choose from {MODELS}")
        if self.scheme not in SCHEMES:
            raise ConfigInvalid(f"Unknown scheme '{self.scheme}'. Choose from {SCHEMES}")
        if self.scheme != "nsle" and self.model not in SCALAR_LOCAL:
            raise ConfigInvalid(f"Baseline '{self.scheme}' runs only on {SCALAR_LOCAL}, not '{self.model}'")
        try:
            n_cells = int(self.n_cells)
            t_final = float(self.t_final)
        except (TypeError, ValueError):
            raise ConfigInvalid(f"Bad cell count or final time: {self.n_cells!r}, {self.t_final!r}") from None
        if n_cells < 16:
            raise ConfigInvalid(f"Need at least 16 cells, got {n_cells}")
        if not t_final > 0:
            raise ConfigInvalid(f"t_final must be positive, got {t_final}")
        object.__setattr__(self, "n_cells", n_cells)
        object.__setattr__(self, "t_final", t_final)

        snapshots = _as_tuple(self.snapshots)
        if any(not 0 <= s <= t_final for s in snapshots):
            raise ConfigInvalid(f"Snapshot times {snapshots} must lie in [0, {t_final}]")
        object.__setattr__(self, "snapshots", snapshots)
        if self.entropy_levels != "auto":
            object.__setattr__(self, "entropy_levels", _as_tuple(self.entropy_levels))
        outputs = self.outputs
        if isinstance(outputs, str):
            outputs = [o for o in outputs.replace(" ", "").split(",") if o]
        object.__setattr__(self, "outputs", tuple(outputs))
        unknown = set(self.outputs) - set(OUTPUTS)
        if unknown:
            raise ConfigInvalid(f"Unknown outputs {sorted(unknown)}. Choose from {OUTPUTS}")
        if "errors" in self.outputs and self.model not in EXACT_MODELS:
            raise ConfigInvalid(f"The errors output needs an exact solution ({EXACT_MODELS}); "
                                f"use sweep for '{self.model}'")

        if self.cfl is not None:
            object.__setattr__(self, "cfl", float(self.cfl))
            limit = 0.5 if self.scheme == "nsle" else 1.0
            if not 0 < self.cfl <= limit:
                raise ConfigInvalid(f"cfl for {self.scheme} must lie in (0, {limit}], got {self.cfl}")
        object.__setattr__(self, "v_max", float(self.v_max))
        if not self.v_max > 0:
            raise ConfigInvalid(f"v_max must be positive, got {self.v_max}")
        object.__setattr__(self, "dt_scale", float(self.dt_scale))
        if not self.dt_scale > 0:
            raise ConfigInvalid(f"dt_scale must be positive, got {self.dt_scale}")
        if self.reference_cells is not None and int(self.reference_cells) < 16:
            raise ConfigInvalid(f"reference_cells must be >= 16, got {self.reference_cells}")
        # fail early on unparsable settings
        self.scheme_config()

    @property
    def effective_cfl(self):
        if self.cfl is not None:
            return self.cfl
        return 0.45 if self.scheme == "nsle" else BASELINE_CFL

    def scheme_config(self):
        cfl = self.effective_cfl if self.scheme == "nsle" else SchemeConfig.cfl_number
        return SchemeConfig(limiter=parse_limiter(self.limiter), cfl_number=cfl,
                            k_shift=parse_k_shift(self.k_mode), tvni_mode=bool(self.tvni))

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return ExperimentSpec(**values)


SPEC_KEYS = {f.name for f in fields(ExperimentSpec)}


def load_config(path):
    """Flat key-value YAML file as a dict."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigInvalid(f"Cannot read config file {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"Config file {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigInvalid(f"Config file {path} must hold key: value pairs")
    return data


def build_spec(config=None, **overrides):
    """Preset < config file < explicit overrides (None means not given)."""
    from_file = load_config(config) if config else {}
    given = {k: v for k, v in overrides.items() if v is not None}
    unknown = (set(from_file) | set(given)) - SPEC_KEYS
    if unknown:
        raise ConfigInvalid(f"Unknown setting(s) {sorted(unknown)}. Known: {sorted(SPEC_KEYS)}")
    model = given.get("model", from_file.get("model", "burgers_p1"))
    if model not in PRESETS:
        raise ConfigInvalid(f"Unknown model '{model}'. Choose from {MODELS}")
    values = {"model": model, **PRESETS[model], **from_file, **given}
    return ExperimentSpec(**values)


# --------------------------------------------------------------------------- #
# 2.  Problem setup                                                            #
# --------------------------------------------------------------------------- #

def make_model(spec):
    if spec.model.startswith("burgers_"):
        return Burgers(spec.model.split("_", 1)[1])
    if spec.model.startswith("lwr_"):
        x1, x2 = LWR_DIRECTIONS[spec.model.split("_", 1)[1]]
        return lwr_nonlocal_model(x1, x2, spec.v_max, min_cells=spec.kernel_min_cells)
    if spec.model == "keyfitz_kranzer":
        return KeyfitzKranzer()
    return LinearAdvection(spec.speed, spec.profile)


def primary_component(spec):
    """Component used for error tables."""
    if spec.model == "keyfitz_kranzer":
        return "u1"
    return "rho" if spec.model.startswith("lwr_") else "u"


def initial_state(model, grid):
    if isinstance(model, KeyfitzKranzer):
        return kk_initial(model, grid)
    values = cell_averages(lambda x, t: model.initial(x), grid, 0.0, model.breakpoints(0.0))
    return CellField(values, grid)


def components(spec, state):
    """Named CellFields of a state."""
    if spec.model == "keyfitz_kranzer":
        return state.fields()
    return {primary_component(spec): state}


def _clip(dt, t, t_stop):
    """Step size and new time; the last step lands exactly on t_stop."""
    if t + dt >= t_stop - TIME_TOLERANCE * max(1.0, abs(t_stop)):
        return t_stop - t, t_stop
    return dt, t + dt


class Stepper:
    """Base class for time integrators driven by the run loop."""
    name = "BASE"

    def advance(self, state, t, t_stop):
        """Returns (state, report, t_new)."""
        raise NotImplementedError


class NSLEStepper(Stepper):
    name = "NSLE"

    def __init__(self, model, cfg, value_range, dt_scale=1.0, entropy_levels=()):
        self.model = model
        self.cfg = cfg
        self.k = resolve_k(cfg, model, value_range)
        self.flux_bound = model.derivative_bounds(*value_range)[1] if cfg.tvni_mode else None
        self.dt_scale = dt_scale
        self.entropy_levels = entropy_levels

    def advance(self, state, t, t_stop):
        f_edges = noflow_slopes(state, self.model, self.cfg.limiter, t)
        dt = select_dt(f_edges, state.grid.h, self.cfg, self.k, self.flux_bound) * self.dt_scale
        dt, t_new = _clip(dt, t, t_stop)
        state, report = nsle_step(state, self.model, self.cfg, dt, t, k=self.k, f_edges=f_edges,
                                  entropy_levels=self.entropy_levels)
        return state, report, t_new


class KKStepper(NSLEStepper):
    name = "NSLE_KK"

    def advance(self, state, t, t_stop):
        f_edges = kk_noflow_slopes(state, self.model, self.cfg.limiter, t)
        dt = select_dt(f_edges, state.r.grid.h, self.cfg, self.k, self.flux_bound) * self.dt_scale
        dt, t_new = _clip(dt, t, t_stop)
        state, report = kk_step(state, self.model, self.cfg, dt, t, k=self.k, f_edges=f_edges)
        return state, report, t_new


class BaselineStepper(Stepper):
    def __init__(self, model, kind: BaselineKind, safety=BASELINE_CFL, dt_scale=1.0):
        self.model = model
        self.kind = kind
        self.name = kind.name
        self.safety = safety
        self.dt_scale = dt_scale

    def advance(self, state, t, t_stop):
        dt = baseline_dt(state, self.model, self.safety) * self.dt_scale
        dt, t_new = _clip(dt, t, t_stop)
        state, report = baseline_step(state, self.model, self.kind, dt, t)
        return state, report, t_new


def entropy_levels_for(spec, value_range):
    if spec.entropy_levels == "auto":
        lo, hi = value_range
        return tuple(np.linspace(lo, hi, 7)[1:-1])
    return spec.entropy_levels


def make_stepper(spec, model, state):
    if spec.scheme != "nsle":
        return BaselineStepper(model, parse_baseline(spec.scheme), spec.effective_cfl, spec.dt_scale)
    cfg = spec.scheme_config()
    if isinstance(model, KeyfitzKranzer):
        return KKStepper(model, cfg, state.r.value_range, spec.dt_scale)
    value_range = state.value_range
    return NSLEStepper(model, cfg, value_range, spec.dt_scale,
                       entropy_levels_for(spec, value_range))


# --------------------------------------------------------------------------- #
# 3.  Run                                                                      #
# --------------------------------------------------------------------------- #

@dataclass
class MonitorRow:
    step: int
    t: float
    dt: float
    mass: float
    tv: float
    umin: float
    umax: float
    entropy_residual: float = None


@dataclass
class RunArtifacts:
    spec: ExperimentSpec
    grid: Grid
    initial: dict
    final: dict
    snapshots: list = field(default_factory=list)     # (t, {component: CellField})
    monitors: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    t_reached: float = 0.0
    wall_time: float = 0.0
    error: NoFlowError = None


def run(spec, stop_on_error=True, progress=False):
    """
    Time loop for one spec.

    Solver errors propagate unless stop_on_error is False, in which case the
    run ends early and the error is kept on the artifacts.
    """
    start = time.perf_counter()
    model = make_model(spec)
    grid = Grid(model.domain[0], model.domain[1], spec.n_cells, model.boundary)
    state = initial_state(model, grid)
    stepper = make_stepper(spec, model, state)
    logger.info("run %s/%s cells=%d t_final=%g", spec.model, spec.scheme, spec.n_cells, spec.t_final)

    artifacts = RunArtifacts(spec, grid, components(spec, state), {})
    stops = sorted(set(spec.snapshots) | {spec.t_final})
    if stops[0] == 0.0:
        artifacts.snapshots.append((0.0, components(spec, state)))
        stops = stops[1:]

    t, step = 0.0, 0
    bar = tqdm(total=spec.t_final, unit="t", disable=not progress, leave=False)
    try:
        for t_stop in stops:
            while t < t_stop:
                state, report, t_new = stepper.advance(state, t, t_stop)
                bar.update(t_new - t)
                t, step = t_new, step + 1
                artifacts.reports.append(report)
                artifacts.monitors.append(MonitorRow(
                    step, t, report.dt_used, report.mass, report.tv_eps,
                    report.u_min, report.u_max, report.max_entropy_residual))
            artifacts.snapshots.append((t_stop, components(spec, state)))
    except SolverError as exc:
        logger.warning("run stopped at t=%.6g after %d steps: %s", t, step, exc)
        if stop_on_error:
            raise
        artifacts.error = exc
    finally:
        bar.close()

    artifacts.final = components(spec, state)
    artifacts.t_reached = t
    artifacts.wall_time = time.perf_counter() - start
    logger.info("run %s done: %d steps in %.2fs", spec.model, step, artifacts.wall_time)
    return artifacts


# --------------------------------------------------------------------------- #
# 4.  Sweep                                                                    #
# --------------------------------------------------------------------------- #

def threads():
    value = os.environ.get("NOFLOW_THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        count = int(value)
    except ValueError:
        raise ConfigInvalid(f"NOFLOW_THREADS must be an integer, got '{value}'") from None
    if count < 1:
        raise ConfigInvalid(f"NOFLOW_THREADS must be >= 1, got {count}")
    return count


def sweep(spec, cell_counts, progress=False):
    """
    Errors of the primary component at t_final for every cell count.

    The reference is the exact solution when the model has one, otherwise a
    run on spec.reference_cells (a common multiple of every cell count).
    """
    cell_counts = sorted({int(n) for n in cell_counts})
    if not cell_counts:
        raise ConfigInvalid("A sweep needs at least one cell count")
    model = make_model(spec)
    name = primary_component(spec)
    specs = [spec.replace(n_cells=n, snapshots=()) for n in cell_counts]

    reference, breakpoints = None, ()
    if model.has_exact:
        reference, breakpoints = model.exact, model.breakpoints(spec.t_final)
    else:
        ref_cells = spec.reference_cells or 2 * cell_counts[-1]
        bad = [n for n in cell_counts if ref_cells % n]
        if bad:
            raise ConfigInvalid(f"reference_cells={ref_cells} is not a multiple of {bad}")
        specs.append(spec.replace(n_cells=ref_cells, snapshots=()))

    with ThreadPoolExecutor(max_workers=min(threads(), len(specs))) as pool:
        futures = [pool.submit(run, s) for s in specs]
        for _ in tqdm(futures, total=len(futures), disable=not progress, desc="sweep"):
            pass
        results = [f.result() for f in futures]

    if reference is None:
        reference = results.pop().final[name]

    table = ErrorTable()
    for result in results:
        add_error_row(table, result.final[name], model, reference, spec.t_final, breakpoints)
    return table


def add_error_row(table, U, model, reference, t, breakpoints=()):
    """L1 (and W1 for Burgers) error of U against a reference field or exact solution."""
    l1 = l1_error(U, reference, t, breakpoints)
    w1 = w1_error(U, reference, t, breakpoints) if isinstance(model, Burgers) else None
    table.add_row(U.grid.n_cells, U.grid.h, l1, w1)
    return table


def run_errors(spec, artifacts):
    """One-row error table of a finished run against the exact solution at the time reached."""
    model = make_model(spec)
    if not model.has_exact:
        raise ConfigInvalid(f"'{spec.model}' has no exact solution; use sweep")
    t = artifacts.t_reached
    return add_error_row(ErrorTable(), artifacts.final[primary_component(spec)], model,
                         model.exact, t, model.breakpoints(t))


# --------------------------------------------------------------------------- #
# 5.  Monitor suite                                                            #
# --------------------------------------------------------------------------- #

@dataclass
class MonitorCheck:
    name: str
    status: str          # pass, fail or skip
    worst: float = 0.0
    tolerance: float = 0.0
    detail: str = ""

    @property
    def failed(self):
        return self.status == "fail"


def _check(name, worst, tolerance, detail=""):
    return MonitorCheck(name, "pass" if worst <= tolerance else "fail", float(worst), tolerance, detail)


def entropy_check(reports, tolerance=ENTROPY_TOLERANCE):
    """Worst per-cell Kruzhkov residual over the steps that computed one."""
    residuals = [r.max_entropy_residual for r in reports if r.max_entropy_residual is not None]
    if not residuals:
        return MonitorCheck("entropy", "skip", detail="no entropy levels")
    return _check("entropy", max(residuals), tolerance, f"{len(residuals)} steps")


def monitor_suite(spec):
    """
    Run spec and check conservation, the maximum principle, TV nonincrease,
    the entropy residual and L1 stability on every step. Never raises for
    solver failures; they become a failing 'solver' row.
    """
    result = run(spec, stop_on_error=False)
    checks = []
    if result.error is None:
        checks.append(MonitorCheck("solver", "pass"))
    else:
        checks.append(MonitorCheck("solver", "fail", detail=f"{type(result.error).__name__}: {result.error}"))

    reports = result.reports
    n = result.grid.n_cells
    if not reports:
        return checks

    defects = [max(map(abs, getattr(r, "mass_defects", ()) or (r.mass_defect,))) for r in reports]
    scale = max(1.0, max(abs(r.mass) for r in reports))
    checks.append(_check("conservation", max(defects) / scale, 10 * EPS * n, "per-step mass defect"))

    if spec.model == "keyfitz_kranzer":
        checks.append(MonitorCheck("max_principle", "skip", detail="system"))
        checks.append(MonitorCheck("tvni", "skip", detail="system"))
        drift = max(r.drift for r in reports)
        checks.append(MonitorCheck("kk_drift", "pass", drift, float("inf"), "reported only"))
    else:
        U0 = result.initial[primary_component(spec)]
        lo, hi = U0.value_range
        span = max(1.0, abs(lo), abs(hi))
        overshoot = max(max(lo - r.u_min, r.u_max - hi, 0.0) for r in reports)
        checks.append(_check("max_principle", overshoot, 1e-12 * span, f"range [{lo:.6g}, {hi:.6g}]"))

        tv = [tv_eps(U0)] + [r.tv_eps for r in reports]
        growth = max(max(b - a for a, b in zip(tv, tv[1:])), 0.0)
        checks.append(_check("tvni", growth, 1e-12 * max(1.0, tv[0])))

    checks.append(entropy_check(reports))

    U0 = result.initial[primary_component(spec)]
    if result.grid.boundary == "periodic" and U0.values.min() >= 0 and spec.model != "keyfitz_kranzer":
        norm0 = l1_norm(U0)
        growth = max(max(l1_norm(U) for _, comps in result.snapshots for U in comps.values()) - norm0, 0.0)
        checks.append(_check("l1_stability", growth, 1e-12 * max(1.0, norm0)))
    else:
        checks.append(MonitorCheck("l1_stability", "skip", detail="needs periodic nonnegative data"))

    for c in checks:
        logger.info("monitor %-14s %s worst=%.3e tol=%.3e %s", c.name, c.status, c.worst, c.tolerance, c.detail)
    return checks


# --------------------------------------------------------------------------- #
# 6.  Output files                                                             #
# --------------------------------------------------------------------------- #

def _num(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _num(v) for v in row])
    return path


def write_solution(path, artifacts):
    rows = []
    for t, comps in artifacts.snapshots:
        for name, U in comps.items():
            rows.extend((name, x, v, t) for x, v in zip(U.grid.centers(), U.values))
    return write_csv(path, ("component", "x", "value", "time"), rows)


def write_monitors(path, artifacts):
    rows = [(m.step, m.t, m.dt, m.mass, m.tv, m.umin, m.umax, m.entropy_residual)
            for m in artifacts.monitors]
    return write_csv(path, ("step", "t", "dt", "mass", "tv", "umin", "umax", "entropy_residual"), rows)


def write_errors(path, table):
    return write_csv(path, ("cells", "h", "l1", "w1"), table.to_rows())


def write_report(path, checks):
    rows = [(c.name, c.status, c.worst, c.tolerance, c.detail) for c in checks]
    return write_csv(path, ("check", "status", "worst", "tolerance", "detail"), rows)


def write_metadata(path, spec, **extra):
    meta = {"version": VERSION, "spec": asdict(spec), "scheme_cfl": spec.effective_cfl}
    if spec.scheme != "nsle":
        meta["baseline_cfl"] = spec.effective_cfl
    meta.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(_plain(meta), fh, sort_keys=False)
    return path


def _plain(value):
    """Convert tuples and numpy scalars so safe_dump accepts them."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


# --------------------------------------------------------------------------- #
# 7.  Command line                                                             #
# --------------------------------------------------------------------------- #

TABLE1 = {
    # name: (spec overrides, printed rows, printed fit)
    "lwr": ({"model": "lwr_backward", "t_final": 0.5, "kernel_min_cells": 1, "reference_cells": 8192},
            TABLE1_LWR, TABLE1_LWR_FIT),
    "kk": ({"model": "keyfitz_kranzer", "t_final": 0.5, "reference_cells": 65536},
           TABLE1_KK, TABLE1_KK_FIT),
}

SPEC_FLAGS = ("model", "scheme", "n_cells", "t_final", "limiter", "cfl", "k_mode", "tvni",
              "snapshots", "reference_cells", "kernel_min_cells", "v_max", "out_dir", "outputs",
              "entropy_levels", "dt_scale")


def add_experiment_options(parser):
    parser.add_argument("--model", choices=MODELS)
    parser.add_argument("--scheme", choices=SCHEMES)
    parser.add_argument("--cells", dest="n_cells", type=int, help="number of cells")
    parser.add_argument("--tfinal", dest="t_final", type=float, help="final time")
    parser.add_argument("--limiter", help="mm2, mm3, mm3:<alpha> or uno")
    parser.add_argument("--cfl", type=float)
    parser.add_argument("--k-mode", dest="k_mode", help="zero, auto or a number >= 0")
    parser.add_argument("--tvni", action=argparse.BooleanOptionalAction, default=None,
                        help="also enforce the TVNI timestep")
    parser.add_argument("--snapshots", help="comma-separated snapshot times")
    parser.add_argument("--reference-cells", dest="reference_cells", type=int)
    parser.add_argument("--kernel-min-cells", dest="kernel_min_cells", type=int)
    parser.add_argument("--v-max", dest="v_max", type=float, help="free-road speed of the LWR model")
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--outputs", help="comma-separated subset of solution, monitors, errors")
    parser.add_argument("--config", help="YAML file of key: value settings")


def spec_from_args(args):
    flags = {name: getattr(args, name, None) for name in SPEC_FLAGS}
    return build_spec(args.config, **flags)


def cmd_run(args):
    spec = spec_from_args(args)
    artifacts = run(spec, progress=True)
    out = Path(spec.out_dir)
    if "solution" in spec.outputs:
        write_solution(out / "solution.csv", artifacts)
    if "monitors" in spec.outputs:
        write_monitors(out / "monitors.csv", artifacts)
    if "errors" in spec.outputs:
        write_errors(out / "errors.csv", run_errors(spec, artifacts))
    write_metadata(out / "metadata.yaml", spec, wall_time=artifacts.wall_time,
                   steps=len(artifacts.monitors))
    print(f"{spec.model}/{spec.scheme}: {len(artifacts.monitors)} steps to t={artifacts.t_reached:g} "
          f"in {artifacts.wall_time:.2f}s")
    if artifacts.monitors:
        last = artifacts.monitors[-1]
        print(f"  mass={last.mass:.15g}  tv={last.tv:.6g}  range=[{last.umin:.6g}, {last.umax:.6g}]")
    print(f"  results in {out}/")
    return 0


def _print_table(table):
    print(f"{'cells':>8} {'h':>12} {'L1':>12} {'W1':>12}")
    for n, h, l1, w1 in table.to_rows():
        print(f"{n:>8d} {h:>12.5g} {l1:>12.4g} {'-' if w1 is None else format(w1, '.4g'):>12}")


def cmd_sweep(args):
    spec = spec_from_args(args)
    try:
        counts = [int(c) for c in args.cells_list.split(",") if c.strip()]
    except ValueError:
        raise ConfigInvalid(f"Bad cell list '{args.cells_list}'") from None
    start = time.perf_counter()
    table = sweep(spec, counts, progress=True)
    out = Path(spec.out_dir)
    write_errors(out / "errors.csv", table)

    fits = {}
    if len(table.rows) > 1:
        fits["l1"] = table.fit("l1")
        if table.rows[0].w1 is not None:
            fits["w1"] = table.fit("w1")
    write_metadata(out / "metadata.yaml", spec, cells=counts, wall_time=time.perf_counter() - start,
                   fits={k: list(v) for k, v in fits.items()})
    _print_table(table)
    for norm, (c, p) in fits.items():
        print(f"{norm.upper()} fit: E = {c:.4g} h^{p:.4f}")
    return 0


def cmd_monitor(args):
    spec = spec_from_args(args)
    checks = monitor_suite(spec)
    write_report(Path(spec.out_dir) / "monitor_report.csv", checks)
    for c in checks:
        print(f"{c.name:<14} {c.status:<5} worst={c.worst:.3e} tol={c.tolerance:.3e} {c.detail}")
    return 3 if any(c.failed for c in checks) else 0


def cmd_table1(args):
    overrides, rows, (c_printed, p_printed) = TABLE1[args.which]
    c_fit, p_fit = fit_rate([(h, e) for _, h, e in rows])
    print(f"{'cells':>8} {'h':>12} {'L1 (printed)':>14}")
    for n, h, e in rows:
        print(f"{n:>8d} {h:>12.5g} {e:>14.4g}")
    print(f"printed fit: E = {c_printed:g} h^{p_printed:g}; "
          f"refit of printed rows: E = {c_fit:.4g} h^{p_fit:.4f}")
    if not args.run:
        return 0

    spec = build_spec(None, out_dir=args.out_dir, **overrides)
    table = sweep(spec, [n for n, _, _ in rows], progress=True)
    write_errors(Path(args.out_dir) / f"table1_{args.which}.csv", table)
    for (n, _, printed), row in zip(rows, table.rows):
        print(f"{n:>8d} computed={row.l1:.4g} printed={printed:.4g} ratio={row.l1 / printed:.3f}")
    c_new, p_new = table.fit("l1")
    print(f"computed fit: E = {c_new:.4g} h^{p_new:.4f}")
    return 0


def cmd_presets(args):
    for name in MODELS:
        settings = ", ".join(f"{k}={v}" for k, v in PRESETS[name].items())
        print(f"{name:<16} {settings}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="noflow", description="Nonstaggered Lagrangian-Eulerian experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for INFO, -vv for per-step DEBUG")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("run", help="one run; solution.csv, monitors.csv, metadata.yaml")
    add_experiment_options(p)
    p.set_defaults(func=cmd_run)

    p = commands.add_parser("sweep", help="refinement sweep; errors.csv and fitted rates")
    add_experiment_options(p)
    p.add_argument("--cells-list", dest="cells_list", default="128,256,512,1024,2048",
                   help="comma-separated cell counts")
    p.set_defaults(func=cmd_sweep)

    p = commands.add_parser("monitor", help="run with monitors; exit 3 on failure")
    add_experiment_options(p)
    p.add_argument("--entropy-levels", dest="entropy_levels", default="auto",
                   help="comma-separated Kruzhkov levels, 'auto', or '' for none")
    p.add_argument("--dt-scale", dest="dt_scale", type=float,
                   help="multiply every selected timestep (values above 1 force solver failures)")
    p.set_defaults(func=cmd_monitor)

    p = commands.add_parser("table1", help="published accuracy tables and their fits")
    p.add_argument("--which", choices=sorted(TABLE1), default="lwr")
    p.add_argument("--run", action="store_true", help="recompute the table (minutes)")
    p.add_argument("--out-dir", dest="out_dir", default="results")
    p.set_defaults(func=cmd_table1)

    p = commands.add_parser("presets", help="list the built-in presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    """Parse argv, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"Configuration error: {exc}", file=sys.stderr)
        return 1
    except (SolverError, MetricError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
