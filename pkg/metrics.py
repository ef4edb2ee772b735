"""
Error norms, conserved-quantity monitors and convergence fits.

Fields are anything with ``.values`` (one number per cell) and ``.grid``
(with ``h``, ``n_cells``, ``x_left``, ``x_right`` and ``boundary``).
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre
from scipy.stats import linregress

from errors import IncompatibleGrids, MassMismatch, NeedTwoPoints

logger = logging.getLogger(__name__)

GAUSS_POINTS = 5
MASS_TOLERANCE = 1e-8


# --------------------------------------------------------------------------- #
# 1.  Simple functionals                                                       #
# --------------------------------------------------------------------------- #

def mass(U):
    """Integral of the cell averages."""
    return float(np.sum(U.values) * U.grid.h)


def l1_norm(U):
    return float(np.sum(np.abs(U.values)) * U.grid.h)


def tv_eps(U):
    """
    Total variation scaled by the cell width, sum |U_{j+1} - U_j| h.

    On a periodic grid the wrap-around jump is included.
    """
    values = np.asarray(U.values, dtype=float)
    jumps = np.diff(values)
    total = np.sum(np.abs(jumps))
    if U.grid.boundary == "periodic":
        total += abs(values[0] - values[-1])
    return float(total * U.grid.h)


# --------------------------------------------------------------------------- #
# 2.  Reference cell averages                                                  #
# --------------------------------------------------------------------------- #

def cell_averages(func, grid, t=0.0, breakpoints=()):
    """
    Cell averages of func(x, t) by 5-point Gauss-Legendre quadrature.

    Cells that contain a breakpoint (a discontinuity of func) are split there
    and each piece is integrated separately.
    """
    nodes, weights = roots_legendre(GAUSS_POINTS)
    h = grid.h
    centers = grid.centers()
    x = centers[:, None] + 0.5 * h * nodes[None, :]
    averages = 0.5 * np.asarray(func(x, t), dtype=float) @ weights

    edges = grid.edges()
    for b in breakpoints:
        if not edges[0] < b < edges[-1]:
            continue
        j = min(int(np.searchsorted(edges, b)) - 1, grid.n_cells - 1)
        left, right = edges[j], edges[j + 1]
        if b <= left or b >= right:
            continue
        total = 0.0
        for a, c in ((left, b), (b, right)):
            xs = 0.5 * (a + c) + 0.5 * (c - a) * nodes
            total += 0.5 * (c - a) * float(np.dot(weights, func(xs, t)))
        averages[j] = total / h
    return averages


def block_average(fine_values, ratio):
    """Average consecutive blocks of `ratio` fine cells onto one coarse cell."""
    fine_values = np.asarray(fine_values, dtype=float)
    if ratio < 1 or fine_values.size % ratio:
        raise IncompatibleGrids(
            f"Cannot average {fine_values.size} cells in blocks of {ratio}")
    return fine_values.reshape(-1, ratio).mean(axis=1)


def reference_averages(U, reference, t=0.0, breakpoints=()):
    """
    Reference values on U's grid.

    `reference` is either a callable exact solution ref(x, t) or a finer field
    on the same domain whose cell count is a multiple of U's.
    """
    grid = U.grid
    if callable(reference):
        return cell_averages(reference, grid, t, breakpoints)
    fine = reference.grid
    same_domain = np.isclose(fine.x_left, grid.x_left) and np.isclose(fine.x_right, grid.x_right)
    if not same_domain or fine.n_cells % grid.n_cells:
        raise IncompatibleGrids(
            f"Reference grid ({fine.n_cells} cells on [{fine.x_left}, {fine.x_right}]) does not "
            f"refine ({grid.n_cells} cells on [{grid.x_left}, {grid.x_right}])")
    return block_average(reference.values, fine.n_cells // grid.n_cells)


# --------------------------------------------------------------------------- #
# 3.  Error norms                                                              #
# --------------------------------------------------------------------------- #

def l1_error(U, reference, t=0.0, breakpoints=()):
    """L1 distance sum |U_j - ref_j| h."""
    ref = reference_averages(U, reference, t, breakpoints)
    return float(np.sum(np.abs(U.values - ref)) * U.grid.h)


def _abs_integral_linear(a, b, h):
    """Integral over a cell of |P| where P runs linearly from a to b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    same_sign = a * b >= 0
    denom = np.where(same_sign, 1.0, np.abs(a) + np.abs(b))
    crossing = h * (a * a + b * b) / (2.0 * denom)
    return np.where(same_sign, 0.5 * h * (np.abs(a) + np.abs(b)), crossing)


def w1_error(U, reference, t=0.0, breakpoints=()):
    """
    Wasserstein-1 distance between U and the reference.

    Equals the integral of |P| where P is the primitive of the difference,
    piecewise linear over the cells, so the integral is exact.
    """
    ref = reference_averages(U, reference, t, breakpoints)
    h = U.grid.h
    diff = np.asarray(U.values, dtype=float) - ref
    primitive = np.concatenate(([0.0], np.cumsum(diff * h)))
    scale = max(1.0, float(np.sum(np.abs(ref)) * h))
    if abs(primitive[-1]) > MASS_TOLERANCE * scale:
        raise MassMismatch(
            f"W1 needs equal masses; the profiles differ by {primitive[-1]:.3e}")
    return float(np.sum(_abs_integral_linear(primitive[:-1], primitive[1:], h)))


def kruzhkov_residual(U_old, U_new, f_split, A, dt, f_split_at_A):
    """
    Largest cell residual of the discrete Kruzhkov inequality for level A.

    f_split holds (f+, f-) on the n+1 edges; f_split_at_A holds f+(A), f-(A)
    (scalars or per-edge arrays). The flux terms use the evolved averages
    that the projection moves, so the residual is 0 for A outside the data
    range and for constant fields.
    """
    f_plus, f_minus = (np.asarray(a, dtype=float) for a in f_split)
    a_plus, a_minus = (np.broadcast_to(np.asarray(a, dtype=float), f_plus.shape)
                       for a in f_split_at_A)
    grid = U_old.grid
    h = grid.h
    widths = h + np.diff(f_plus - f_minus) * dt
    evolved = grid.pad(U_old.values * h / widths, 1)
    left, mid, right = evolved[:-2], evolved[1:-1], evolved[2:]

    inflow_left = np.abs(left * f_plus[:-1] - A * a_plus[:-1])
    outflow_right = np.abs(mid * f_plus[1:] - A * a_plus[1:])
    inflow_right = np.abs(right * f_minus[1:] - A * a_minus[1:])
    outflow_left = np.abs(mid * f_minus[:-1] - A * a_minus[:-1])

    change = (np.abs(U_new.values - A) - np.abs(U_old.values - A)) / dt
    residual = change - (inflow_left - outflow_right + inflow_right - outflow_left) / h
    return float(np.max(residual))


def sonic_jump_ratio(U, x_sonic=0.0, neighbours=3):
    """
    Jump across the sonic point relative to the neighbouring differences.

    Returns |U_{s+1} - U_s| divided by the median |difference| of the
    `neighbours` pairs on each side, where the sonic edge sits between s and
    s+1. Values near 1 mean the profile passes smoothly through the sonic
    point; a dog-leg shows up as a ratio well above 1.
    """
    values = np.asarray(U.values, dtype=float)
    s = int(np.argmin(np.abs(U.grid.edges()[1:-1] - x_sonic)))
    jumps = np.abs(np.diff(values))
    side = np.concatenate((jumps[max(0, s - neighbours):s],
                           jumps[s + 1:s + 1 + neighbours]))
    reference = float(np.median(side)) if side.size else 0.0
    if reference == 0.0:
        return float("inf") if jumps[s] > 0 else 1.0
    return float(jumps[s] / reference)


# --------------------------------------------------------------------------- #
# 4.  Convergence fits                                                         #
# --------------------------------------------------------------------------- #

def fit_rate(rows):
    """
    Least-squares fit of log E = log C + p log h.

    Returns (C, p). Rows are (h, E) pairs with h, E > 0.
    """
    rows = [(float(h), float(e)) for h, e in rows]
    if len({h for h, _ in rows}) < 2:
        raise NeedTwoPoints(f"Need two distinct grid sizes to fit a rate, got {len(rows)} rows")
    hs, errs = np.array(rows).T
    if np.any(hs <= 0) or np.any(errs <= 0):
        raise NeedTwoPoints("Grid sizes and errors must be positive to fit a rate")
    fit = linregress(np.log(hs), np.log(errs))
    return float(np.exp(fit.intercept)), float(fit.slope)


@dataclass
class ErrorRow:
    n_cells: int
    h: float
    l1: float
    w1: float = None


@dataclass
class ErrorTable:
    """Errors per grid size with their fitted rates."""
    rows: list = field(default_factory=list)

    def add_row(self, n_cells, h, l1, w1=None):
        self.rows.append(ErrorRow(int(n_cells), float(h), float(l1), w1))
        self.rows.sort(key=lambda r: -r.h)
        logger.info("cells=%d h=%.5g L1=%.4g W1=%s", n_cells, h, l1,
                    "-" if w1 is None else f"{w1:.4g}")

    def fit(self, norm="l1"):
        """(C, p) for the L1 or W1 column."""
        pairs = [(r.h, getattr(r, norm)) for r in self.rows if getattr(r, norm) is not None]
        return fit_rate(pairs)

    def to_rows(self):
        """Rows as plain tuples (n_cells, h, l1, w1) for CSV output."""
        return [(r.n_cells, r.h, r.l1, r.w1) for r in self.rows]


# Published accuracy tables: (cells, h, L1 error)
TABLE1_LWR = (
    (64, 0.15625, 9.4e-1),
    (128, 0.07813, 5.29e-1),
    (256, 0.03906, 3.17e-1),
    (512, 0.01953, 1.99e-1),
    (1024, 0.00976, 1.12e-1),
    (2048, 0.00488, 5.82e-2),
    (4096, 0.00244, 2.28e-2),
)
TABLE1_LWR_FIT = (5.034, 0.856)

TABLE1_KK = (
    (512, 3.90e-3, 2.46e-1),
    (1024, 1.95e-3, 1.34e-1),
    (2048, 9.76e-4, 6.68e-2),
    (4096, 4.88e-4, 3.21e-2),
    (8192, 2.44e-4, 1.52e-2),
    (16384, 1.22e-4, 6.4e-3),
    (32768, 6.10e-5, 2.04e-3),
)
# the constant of this fit corresponds to h = 1/cells
TABLE1_KK_FIT = (71.161, 1.13037)
