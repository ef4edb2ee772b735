"""
Nonstaggered Lagrangian-Eulerian stepper for scalar conservation laws.

One step on a fixed uniform grid:

  1. reconstruct edge states from the limited piecewise-linear profile
  2. evaluate the no-flow slope f = H/u at every edge
  3. move the edges along the no-flow curves and rescale the averages
  4. project the moved cells back onto the fixed grid with weights c_{-1}, c_0, c_{+1}

The step is conservative: with F_{j+1/2} = f+_{j+1/2} Ubar_j - f-_{j+1/2} Ubar_{j+1}
it reads h U_j^{n+1} = h U_j - dt (F_{j+1/2} - F_{j-1/2}).
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from errors import (ConfigInvalid, DegenerateCell, NegativeCoefficient,
                    NonFiniteSlope)
from limiters import LimiterKind, MM2Limiter
from metrics import kruzhkov_residual, mass, tv_eps

logger = logging.getLogger(__name__)

PERIODIC = "periodic"
CONSTANT = "constant"
BOUNDARIES = (PERIODIC, CONSTANT)

GHOST = 3                   # a five-cell window at the outermost edge
MIN_WIDTH_FRACTION = 0.25   # evolved widths must stay above h/4
COEFF_TOLERANCE = 1e-14


# --------------------------------------------------------------------------- #
# 1.  Grid and fields                                                          #
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Grid:
    """Uniform grid of n_cells on [x_left, x_right]."""
    x_left: float
    x_right: float
    n_cells: int
    boundary: str = PERIODIC

    def __post_init__(self):
        if not self.x_right > self.x_left:
            raise ConfigInvalid(f"Empty domain [{self.x_left}, {self.x_right}]")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ConfigInvalid(f"Need at least two cells, got {self.n_cells}")
        if self.boundary not in BOUNDARIES:
            raise ConfigInvalid(f"Unknown boundary '{self.boundary}'. Choose from {BOUNDARIES}")

    @property
    def h(self):
        return (self.x_right - self.x_left) / self.n_cells

    def centers(self):
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.h

    def edges(self):
        return self.x_left + np.arange(self.n_cells + 1) * self.h

    def pad(self, values, width):
        """Ghost cells: periodic copies or constant extension of the end values."""
        mode = "wrap" if self.boundary == PERIODIC else "edge"
        return np.pad(np.asarray(values, dtype=float), width, mode=mode)


@dataclass(frozen=True)
class CellField:
    """Cell averages on a grid."""
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_cells,):
            raise ConfigInvalid(
                f"Field has shape {values.shape}, grid has {self.grid.n_cells} cells")
        object.__setattr__(self, "values", values)

    def with_values(self, values):
        return CellField(values, self.grid)

    @property
    def value_range(self):
        return float(self.values.min()), float(self.values.max())


# --------------------------------------------------------------------------- #
# 2.  Configuration                                                            #
# --------------------------------------------------------------------------- #

K_ZERO = "zero"
K_AUTO = "auto"


def parse_k_shift(value):
    """'zero', 'auto' or a nonnegative number."""
    if isinstance(value, str):
        text = value.strip().lower()
        if text in (K_ZERO, K_AUTO):
            return text
        try:
            value = float(text)
        except ValueError:
            raise ConfigInvalid(f"k shift must be 'zero', 'auto' or a number, got '{value}'") from None
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ConfigInvalid(f"k shift must be finite and >= 0, got {value}")
    return K_ZERO if value == 0 else value


@dataclass(frozen=True)
class SchemeConfig:
    limiter: LimiterKind = field(default_factory=MM2Limiter)
    cfl_number: float = 0.45
    k_shift: object = K_ZERO
    tvni_mode: bool = False
    dt_max: float = 1.0

    def __post_init__(self):
        if not 0 < self.cfl_number <= 0.5:
            raise ConfigInvalid(f"cfl_number must lie in (0, 0.5], got {self.cfl_number}")
        if not self.dt_max > 0:
            raise ConfigInvalid(f"dt_max must be positive, got {self.dt_max}")
        if not isinstance(self.limiter, LimiterKind):
            raise ConfigInvalid(f"Not a limiter: {self.limiter!r}")
        object.__setattr__(self, "k_shift", parse_k_shift(self.k_shift))


@dataclass
class StepReport:
    """What one step did, for the monitors and the CSV log."""
    dt_used: float
    mass: float
    tv_eps: float
    u_min: float
    u_max: float
    new_widths_min: float
    k: float = 0.0
    boundary_flux: float = 0.0
    mass_defect: float = 0.0
    max_entropy_residual: float = None


# --------------------------------------------------------------------------- #
# 3.  Step pieces                                                              #
# --------------------------------------------------------------------------- #

def reconstruct_edges(U, limiter):
    """
    Edge states U_{j-1/2} for the n+1 edges of the grid.

    U_{j-1/2} = (U_{j-1} + U_j)/2 + (U'_j - U'_{j-1})/8
    """
    n = U.grid.n_cells
    padded = U.grid.pad(U.values, GHOST)
    slopes = limiter.slopes(padded)
    left = slice(GHOST - 1, GHOST + n)
    right = slice(GHOST, GHOST + n + 1)
    return 0.5 * (padded[left] + padded[right]) + 0.125 * (slopes[right] - slopes[left])


def noflow_slopes(U, model, limiter, t=0.0):
    """No-flow slope f = H/u at every edge, shape (n+1,)."""
    model.pre_step(U, t)
    edge_values = reconstruct_edges(U, limiter)
    f = np.asarray(model.f(edge_values, U.grid.edges(), t), dtype=float)
    f = np.array(np.broadcast_to(f, edge_values.shape))
    bad = np.flatnonzero(~np.isfinite(f))
    if bad.size:
        e = int(bad[0])
        raise NonFiniteSlope(
            f"No-flow slope at edge {e} (x={U.grid.edges()[e]:.6g}, u={edge_values[e]:.6g}) is {f[e]}")
    return f


def evolve_widths(f_edges, h, dt):
    """Cell widths after the edges move along the no-flow curves."""
    widths = h + np.diff(f_edges) * dt
    if np.any(widths < MIN_WIDTH_FRACTION * h):
        j = int(np.argmin(widths))
        raise DegenerateCell(
            f"Cell {j} shrinks to width {widths[j]:.3e} (h={h:.3e}, dt={dt:.3e}); reduce the timestep")
    return widths


def conserve(U, widths):
    """Averages on the moved cells: Ubar_j = h U_j / h'_j."""
    return U.with_values(U.grid.h * U.values / widths)


def split_flux(f_edges, k=0.0):
    """f+ = max(f, 0) + k and f- = max(-f, 0) + k, so f = f+ - f-."""
    f_edges = np.asarray(f_edges, dtype=float)
    return np.maximum(f_edges, 0.0) + k, np.maximum(-f_edges, 0.0) + k


def edge_flux(ubar, f_split):
    """Numerical flux F_{j+1/2} = f+ Ubar_j - f- Ubar_{j+1} on the n+1 edges."""
    f_plus, f_minus = f_split
    padded = ubar.grid.pad(ubar.values, 1)
    return f_plus * padded[:-1] - f_minus * padded[1:]


def project(ubar, f_split, dt):
    """Project the moved-cell averages back onto the fixed grid."""
    f_plus, f_minus = f_split
    grid = ubar.grid
    h = grid.h
    c_minus = f_plus[:-1] * dt
    c_plus = f_minus[1:] * dt
    c_zero = h - c_minus - c_plus
    if np.any(c_zero < -COEFF_TOLERANCE * h):
        j = int(np.argmin(c_zero))
        raise NegativeCoefficient(
            f"Projection weight c0 = {c_zero[j]:.3e} < 0 in cell {j} (dt={dt:.3e}); reduce the timestep")
    padded = grid.pad(ubar.values, 1)
    values = (c_minus * padded[:-2] + c_zero * padded[1:-1] + c_plus * padded[2:]) / h
    return ubar.with_values(values)


# --------------------------------------------------------------------------- #
# 4.  Timestep and shift                                                       #
# --------------------------------------------------------------------------- #

def auto_k(model, value_range, limiter=None):
    """Smallest shift covering max |u f'(u)| over the range, times the limiter bound."""
    limiter = limiter or MM2Limiter()
    u_fprime, _ = model.derivative_bounds(*value_range)
    return u_fprime * limiter.bound()


def resolve_k(cfg, model, value_range):
    """Numeric k for a config; 'auto' uses the invariant range of the data."""
    if cfg.k_shift == K_ZERO:
        return 0.0
    if cfg.k_shift == K_AUTO:
        return auto_k(model, value_range, cfg.limiter)
    return float(cfg.k_shift)


def select_dt(f_edges, h, cfg, k=0.0, flux_bound=None):
    """
    Largest timestep the weak CFL condition allows.

    dt = cfl h / (max|f| + k); with tvni_mode the step is also capped so that
    (dt/h)(2k + M (L1 + L2)) <= 1, where M = flux_bound bounds |(u f)'|.
    Returns cfg.dt_max when nothing moves.
    """
    speed = float(np.max(np.abs(f_edges))) + k
    dt = cfg.dt_max if speed <= 0 else min(cfg.dt_max, cfg.cfl_number * h / speed)
    if cfg.tvni_mode:
        if flux_bound is None:
            raise ConfigInvalid("tvni_mode needs a bound on |(u f)'|")
        denom = 2.0 * k + flux_bound * 2.0 * cfg.limiter.bound()
        if denom > 0:
            dt = min(dt, h / denom)
    return dt


# --------------------------------------------------------------------------- #
# 5.  Full step                                                                #
# --------------------------------------------------------------------------- #

def nsle_step(U, model, cfg, dt, t=0.0, k=None, f_edges=None, entropy_levels=()):
    """
    Advance U by one step of size dt.

    Returns (U_new, StepReport). k defaults to the config's shift resolved on
    U's own range; pass the shift resolved on the initial data to keep it fixed
    over a run. f_edges may carry no-flow slopes already computed for U.
    """
    grid = U.grid
    h = grid.h
    if k is None:
        k = resolve_k(cfg, model, U.value_range)
    if f_edges is None:
        f_edges = noflow_slopes(U, model, cfg.limiter, t)

    widths = evolve_widths(f_edges, h, dt)
    ubar = conserve(U, widths)
    f_split = split_flux(f_edges, k)
    U_new = project(ubar, f_split, dt)

    flux = edge_flux(ubar, f_split)
    boundary_flux = 0.0 if grid.boundary == PERIODIC else float(flux[-1] - flux[0])
    old_mass, new_mass = mass(U), mass(U_new)

    residual = None
    if len(entropy_levels):
        edges = grid.edges()
        residual = max(
            kruzhkov_residual(U, U_new, f_split, A, dt,
                              split_flux(model.f(A, edges, t), k))
            for A in entropy_levels)

    report = StepReport(
        dt_used=dt,
        mass=new_mass,
        tv_eps=tv_eps(U_new),
        u_min=float(U_new.values.min()),
        u_max=float(U_new.values.max()),
        new_widths_min=float(widths.min()),
        k=k,
        boundary_flux=boundary_flux,
        mass_defect=new_mass - old_mass + dt * boundary_flux,
        max_entropy_residual=residual,
    )
    logger.debug("t=%.6g dt=%.3e mass=%.15g tv=%.6g range=[%.6g, %.6g]",
                 t, dt, report.mass, report.tv_eps, report.u_min, report.u_max)
    return U_new, report


def semidiscrete_rhs(U, model, limiter, k=0.0, t=0.0):
    """
    Right-hand side of the semidiscrete form dU/dt = L(U).

    L(U)_j = (U_{j-1} f+_{j-1/2} - U_j f-_{j-1/2} - U_j f+_{j+1/2} + U_{j+1} f-_{j+1/2}) / h
    """
    f_plus, f_minus = split_flux(noflow_slopes(U, model, limiter, t), k)
    padded = U.grid.pad(U.values, 1)
    left, mid, right = padded[:-2], padded[1:-1], padded[2:]
    rhs = (left * f_plus[:-1] - mid * f_minus[:-1]
           - mid * f_plus[1:] + right * f_minus[1:]) / U.grid.h
    return U.with_values(rhs)
