"""
Flux models: the no-flow slope f = H/u, its derivative, initial data and
exact solutions where they are known.

Models
------
  LinearAdvection   H = a u                        periodic transport
  Burgers           H = u^2/2                      problems p1, p2, sine
  NonlocalLWR       H = rho V_max (1-rho)(1-rho*eta)   traffic with a look-ahead kernel
  KeyfitzKranzer    H_u = u phi(|u|)               solved as (r, u1, u2) with f = phi(r)
"""

import logging
from dataclasses import dataclass

import numpy as np

from errors import ConfigInvalid, KernelUnresolved, NegativeRadius
from lescheme import CONSTANT, PERIODIC, CellField, StepReport, nsle_step, reconstruct_edges
from metrics import cell_averages, mass

logger = logging.getLogger(__name__)

SAMPLES = 10_000
SAFETY = 1.05


class FluxModel:
    """Base class for flux models."""
    name = "BASE"
    convex = False
    sonic_point = 0.0
    domain = (0.0, 1.0)
    boundary = PERIODIC

    def H(self, u, x=None, t=0.0):
        raise NotImplementedError

    def f(self, u, x=None, t=0.0):
        raise NotImplementedError

    def df(self, u, x=None, t=0.0):
        """Derivative of f with respect to u."""
        raise NotImplementedError

    def dH(self, u, x=None, t=0.0):
        return self.f(u, x, t) + np.asarray(u, dtype=float) * self.df(u, x, t)

    def initial(self, x):
        raise NotImplementedError

    def exact(self, x, t):
        """Exact solution, or None when no closed form is known."""
        return None

    @property
    def has_exact(self):
        return type(self).exact is not FluxModel.exact

    def breakpoints(self, t):
        """Points where the exact solution jumps or kinks at time t."""
        return ()

    def pre_step(self, U, t):
        """Hook run before the no-flow slopes are evaluated for U."""

    def derivative_bounds(self, lo, hi):
        """
        (max |u f'(u)|, max |(u f)'(u)|) over [lo, hi], sampled densely and
        scaled by a 5% safety factor.
        """
        u = np.linspace(min(lo, hi), max(lo, hi), SAMPLES)
        u_fprime = np.abs(u * np.broadcast_to(self.df(u), u.shape))
        flux_prime = np.abs(np.broadcast_to(self.dH(u), u.shape))
        return SAFETY * float(u_fprime.max()), SAFETY * float(flux_prime.max())


# --------------------------------------------------------------------------- #
# 1.  Linear advection                                                         #
# --------------------------------------------------------------------------- #

class LinearAdvection(FluxModel):
    """u_t + a u_x = 0 on a periodic domain."""
    name = "LINEAR"
    convex = True

    def __init__(self, speed=1.0, profile="sine", domain=(0.0, 1.0)):
        if profile not in ("sine", "box"):
            raise ConfigInvalid(f"Unknown linear advection profile '{profile}'")
        self.speed = float(speed)
        self.profile = profile
        self.domain = tuple(domain)
        # Godunov minimises a linear flux at the upwind end of the interval
        self.sonic_point = -np.inf if self.speed >= 0 else np.inf

    def H(self, u, x=None, t=0.0):
        return self.speed * np.asarray(u, dtype=float)

    def f(self, u, x=None, t=0.0):
        return np.full(np.shape(u), self.speed)

    def df(self, u, x=None, t=0.0):
        return np.zeros(np.shape(u))

    def initial(self, x):
        x_left, x_right = self.domain
        s = (np.asarray(x, dtype=float) - x_left) / (x_right - x_left)
        if self.profile == "sine":
            return 1.5 + 0.5 * np.sin(2 * np.pi * s)
        return np.where((s >= 0.25) & (s < 0.5), 1.0, 0.0)

    def exact(self, x, t):
        x_left, x_right = self.domain
        shifted = x_left + np.mod(np.asarray(x, dtype=float) - self.speed * t - x_left,
                                  x_right - x_left)
        return self.initial(shifted)

    def breakpoints(self, t):
        if self.profile == "sine":
            return ()
        x_left, x_right = self.domain
        length = x_right - x_left
        return tuple(x_left + np.mod(frac * length + self.speed * t, length) for frac in (0.25, 0.5))


# --------------------------------------------------------------------------- #
# 2.  Burgers                                                                  #
# --------------------------------------------------------------------------- #

BURGERS_PROBLEMS = {
    # name: (domain, boundary)
    "p1": ((0.0, 1.0), CONSTANT),
    "p2": ((-1.0, 1.0), CONSTANT),
    "sine": ((0.0, 1.0), PERIODIC),
}


class Burgers(FluxModel):
    """u_t + (u^2/2)_x = 0."""
    name = "BURGERS"
    convex = True
    sonic_point = 0.0

    def __init__(self, problem="p1"):
        if problem not in BURGERS_PROBLEMS:
            raise ConfigInvalid(f"Unknown Burgers problem '{problem}'. Choose from {sorted(BURGERS_PROBLEMS)}")
        self.problem = problem
        self.domain, self.boundary = BURGERS_PROBLEMS[problem]

    def H(self, u, x=None, t=0.0):
        u = np.asarray(u, dtype=float)
        return 0.5 * u * u

    def f(self, u, x=None, t=0.0):
        return 0.5 * np.asarray(u, dtype=float)

    def df(self, u, x=None, t=0.0):
        return np.full(np.shape(u), 0.5)

    def initial(self, x):
        x = np.asarray(x, dtype=float)
        if self.problem == "p1":
            return np.select([x < 0.25, x < 0.5], [2.0, 1.0], 0.0)
        if self.problem == "p2":
            return np.where(x < 0.0, -1.0, 1.0)
        return 1.5 + 0.5 * np.sin(2 * np.pi * x)

    @property
    def has_exact(self):
        return self.problem in ("p1", "p2")

    def exact(self, x, t):
        """
        P1: two shocks (speeds 3/2 and 1/2) that merge at t = 1/4, x = 5/8 into
        one shock at 3/8 + t. P2: rarefaction u = x/t on [-t, t].
        """
        x = np.asarray(x, dtype=float)
        if self.problem == "p1":
            if t < 0.25:
                fast, slow = (1 + 6 * t) / 4, (1 + t) / 2
                return np.select([x < fast, x < slow], [2.0, 1.0], 0.0)
            return np.where(x < 0.375 + t, 2.0, 0.0)
        if self.problem == "p2":
            if t <= 0:
                return self.initial(x)
            return np.clip(x / t, -1.0, 1.0)
        return None

    def breakpoints(self, t):
        if self.problem == "p1":
            if t < 0.25:
                return ((1 + 6 * t) / 4, (1 + t) / 2)
            return (0.375 + t,)
        if self.problem == "p2":
            return (-t, t) if t > 0 else (0.0,)
        return ()


# --------------------------------------------------------------------------- #
# 3.  Nonlocal traffic model                                                   #
# --------------------------------------------------------------------------- #

class NonlocalKernel:
    """
    Normalised kernel eta(z) = alpha ((z + x1)(x2 - z))^(5/2) on [-x1, x2],
    sampled at the cell centres seen from an edge (at='edges') or from a
    centre (at='centers').
    """

    def __init__(self, x1, x2, h, min_cells=8, at="edges"):
        if x1 < 0 or x2 < 0 or x1 + x2 <= 0:
            raise ConfigInvalid(f"Kernel support [-{x1}, {x2}] is empty")
        if at not in ("edges", "centers"):
            raise ConfigInvalid(f"Kernel evaluation point must be 'edges' or 'centers', got '{at}'")
        if (x1 + x2) / h < min_cells:
            raise KernelUnresolved(
                f"Kernel support {x1 + x2:g} spans {(x1 + x2) / h:.2f} cells, need {min_cells}")
        self.x1, self.x2, self.h, self.at = float(x1), float(x2), float(h), at
        shift = 0.5 if at == "edges" else 0.0
        taps = np.arange(int(np.floor(-x1 / h - shift)) - 1, int(np.ceil(x2 / h - shift)) + 2)
        raw = self.shape((taps + shift) * h)
        keep = raw > 0
        if not np.any(keep):
            raise KernelUnresolved(f"No cell centre falls inside the kernel support [-{x1}, {x2}]")
        self.taps = taps[keep]
        self.alpha = 1.0 / float(np.sum(raw[keep]) * h)
        self.weights = self.alpha * raw[keep]

    def shape(self, z):
        """Unnormalised kernel profile."""
        z = np.asarray(z, dtype=float)
        base = np.clip((z + self.x1) * (self.x2 - z), 0.0, None)
        inside = (z >= -self.x1) & (z <= self.x2)
        return np.where(inside, base ** 2.5, 0.0)

    def convolve(self, values, grid):
        """Discrete (rho * eta) at every edge (n+1 values) or centre (n values)."""
        width = int(np.max(np.abs(self.taps))) + 1
        padded = grid.pad(values, width)
        count = grid.n_cells + (1 if self.at == "edges" else 0)
        out = np.zeros(count)
        for tap, weight in zip(self.taps, self.weights):
            start = width + tap
            out += weight * self.h * padded[start:start + count]
        return out


LWR_DIRECTIONS = {"backward": (0.25, 0.0), "forward": (0.0, 0.25)}


class NonlocalLWR(FluxModel):
    """
    rho_t + (rho V)_x = 0 with V = V_max (1 - rho)(1 - rho * eta).

    The convolution is refreshed from the current density before every step
    and read at the edges where f is evaluated.
    """
    name = "LWR"
    domain = (-5.0, 5.0)
    boundary = CONSTANT

    def __init__(self, direction="backward", v_max=1.0, min_cells=8, support=None):
        if support is None:
            if direction not in LWR_DIRECTIONS:
                raise ConfigInvalid(f"Unknown kernel direction '{direction}'. Choose from {sorted(LWR_DIRECTIONS)}")
            support = LWR_DIRECTIONS[direction]
        self.direction = direction
        self.x1, self.x2 = (float(s) for s in support)
        self.v_max = float(v_max)
        self.min_cells = min_cells
        self.kernel = None
        self._grid = None
        self._edges = None
        self._conv = None

    def kernel_for(self, grid):
        if self._grid != grid:
            self.kernel = NonlocalKernel(self.x1, self.x2, grid.h, self.min_cells)
            self._grid = grid
            self._edges = grid.edges()
        return self.kernel

    def pre_step(self, U, t):
        self._conv = self.kernel_for(U.grid).convolve(U.values, U.grid)

    def convolution(self, x):
        """(rho * eta)(x) from the last refresh; 0 before the first one."""
        if x is None or self._conv is None:
            return np.zeros(np.shape(x)) if x is not None else 0.0
        return np.interp(x, self._edges, self._conv)

    def velocity(self, rho, x=None, t=0.0):
        rho = np.asarray(rho, dtype=float)
        return self.v_max * (1.0 - rho) * (1.0 - self.convolution(x))

    def H(self, u, x=None, t=0.0):
        return np.asarray(u, dtype=float) * self.velocity(u, x, t)

    def f(self, u, x=None, t=0.0):
        return self.velocity(u, x, t)

    def df(self, u, x=None, t=0.0):
        return -self.v_max * (1.0 - self.convolution(x)) * np.ones(np.shape(u))

    def initial(self, x):
        """Three queues on an empty road, then a jam for x >= 1.5."""
        x = np.asarray(x, dtype=float)
        return np.select(
            [(x >= -2.8) & (x <= -1.8), (x >= -1.2) & (x <= -0.2), (x >= 0.6) & (x <= 1.0), x >= 1.5],
            [0.5, 0.75, 0.75, 1.0], 0.0)

    def breakpoints(self, t):
        return (-2.8, -1.8, -1.2, -0.2, 0.6, 1.0, 1.5) if t == 0 else ()


# --------------------------------------------------------------------------- #
# 4.  Keyfitz-Kranzer system                                                   #
# --------------------------------------------------------------------------- #

class KeyfitzKranzer(FluxModel):
    """Radius equation r_t + (r phi(r))_x = 0 with phi(r) = r^2 - 4r + 5.5."""
    name = "KK"
    domain = (-1.0, 1.0)
    boundary = PERIODIC

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return r * r - 4.0 * r + 5.5

    def H(self, u, x=None, t=0.0):
        return np.asarray(u, dtype=float) * self.phi(u)

    def f(self, u, x=None, t=0.0):
        return self.phi(u)

    def df(self, u, x=None, t=0.0):
        return 2.0 * np.asarray(u, dtype=float) - 4.0

    def initial(self, x):
        """(r, u1, u2) with r = sin(pi x) + 1.5 and direction (sin pi x, cos pi x)."""
        x = np.asarray(x, dtype=float)
        r = np.sin(np.pi * x) + 1.5
        return r, r * np.sin(np.pi * x), r * np.cos(np.pi * x)


@dataclass(frozen=True)
class KKState:
    r: CellField
    u1: CellField
    u2: CellField

    COMPONENTS = ("r", "u1", "u2")

    def fields(self):
        return {name: getattr(self, name) for name in self.COMPONENTS}


@dataclass
class KKStepReport(StepReport):
    masses: tuple = ()
    mass_defects: tuple = ()
    drift: float = 0.0


def kk_initial(model, grid):
    """Cell averages of the initial (r, u1, u2)."""
    parts = [cell_averages(lambda x, t, i=i: model.initial(x)[i], grid) for i in range(3)]
    return KKState(*(CellField(p, grid) for p in parts))


def kk_drift(state):
    """L1 distance between r and |u|, which the exact solution keeps at 0."""
    speed = np.hypot(state.u1.values, state.u2.values)
    return float(np.sum(np.abs(state.r.values - speed)) * state.r.grid.h)


def kk_noflow_slopes(state, model, limiter, t=0.0):
    """Shared no-flow slope phi(r) at the edges."""
    edge_r = reconstruct_edges(state.r, limiter)
    if np.any(edge_r < 0):
        e = int(np.argmin(edge_r))
        raise NegativeRadius(f"Reconstructed radius {edge_r[e]:.3e} < 0 at edge {e}")
    return model.f(edge_r)


def kk_step(state, model, cfg, dt, t=0.0, k=0.0, f_edges=None):
    """Advance r, u1 and u2 with the same no-flow slopes."""
    if f_edges is None:
        f_edges = kk_noflow_slopes(state, model, cfg.limiter, t)
    new, reports = {}, {}
    for name, component in state.fields().items():
        new[name], reports[name] = nsle_step(component, model, cfg, dt, t, k=k, f_edges=f_edges)
    state = KKState(**new)
    if state.r.values.min() < 0:
        j = int(np.argmin(state.r.values))
        raise NegativeRadius(f"Radius {state.r.values[j]:.3e} < 0 in cell {j}")
    report = KKStepReport(
        **vars(reports["r"]),
        masses=tuple(mass(c) for c in new.values()),
        mass_defects=tuple(reports[name].mass_defect for name in KKState.COMPONENTS),
        drift=kk_drift(state),
    )
    return state, report


# --------------------------------------------------------------------------- #
# 5.  Factories                                                                #
# --------------------------------------------------------------------------- #

def linear_advection_model(speed=1.0, profile="sine"):
    return LinearAdvection(speed, profile)


def burgers_model(problem="p1"):
    return Burgers(problem)


def burgers_sine_model():
    return Burgers("sine")


def lwr_model(direction="backward", v_max=1.0, min_cells=8):
    return NonlocalLWR(direction, v_max, min_cells)


def lwr_nonlocal_model(x1, x2, v_max=1.0, grid=None, min_cells=8):
    """LWR model with kernel support [-x1, x2]; a grid is checked for resolution up front."""
    direction = next((name for name, s in LWR_DIRECTIONS.items() if s == (x1, x2)), "custom")
    model = NonlocalLWR(direction, v_max, min_cells, support=(x1, x2))
    if grid is not None:
        model.kernel_for(grid)
    return model


def kk_model():
    return KeyfitzKranzer()
