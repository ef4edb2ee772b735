"""Classical first-order finite-volume schemes used as comparison baselines."""

import logging

import numpy as np

from errors import ConfigInvalid, NonConvexFlux
from lescheme import PERIODIC, StepReport
from metrics import mass, tv_eps

logger = logging.getLogger(__name__)

BASELINE_CFL = 0.9


class BaselineKind:
    """Base class for two-point numerical fluxes."""
    name = "BASE"

    def flux(self, model, u_left, u_right, x, t, h, dt):
        raise NotImplementedError

    def __repr__(self):
        return self.name


class GodunovFlux(BaselineKind):
    """Exact Riemann flux for a convex H with minimum at model.sonic_point."""
    name = "GODUNOV"

    def flux(self, model, u_left, u_right, x, t, h, dt):
        if not model.convex:
            raise NonConvexFlux(f"Godunov baseline needs a convex flux; {model.name} is not")
        lo = np.minimum(u_left, u_right)
        hi = np.maximum(u_left, u_right)
        # min of H over [uL, uR] when uL <= uR, max over [uR, uL] otherwise
        rising = model.H(np.clip(model.sonic_point, lo, hi), x, t)
        falling = np.maximum(model.H(u_left, x, t), model.H(u_right, x, t))
        return np.where(u_left <= u_right, rising, falling)


class RusanovFlux(BaselineKind):
    """Local Lax-Friedrichs flux."""
    name = "RUSANOV"

    def flux(self, model, u_left, u_right, x, t, h, dt):
        speed = np.maximum(np.abs(model.dH(u_left, x, t)), np.abs(model.dH(u_right, x, t)))
        central = 0.5 * (model.H(u_left, x, t) + model.H(u_right, x, t))
        return central - 0.5 * speed * (u_right - u_left)


class LaxFriedrichsFlux(BaselineKind):
    name = "LAX_FRIEDRICHS"

    def flux(self, model, u_left, u_right, x, t, h, dt):
        central = 0.5 * (model.H(u_left, x, t) + model.H(u_right, x, t))
        return central - 0.5 * h / dt * (u_right - u_left)


BASELINES = {"godunov": GodunovFlux, "rusanov": RusanovFlux, "lax_friedrichs": LaxFriedrichsFlux}


def parse_baseline(text):
    key = str(text).strip().lower().replace("-", "_")
    if key not in BASELINES:
        raise ConfigInvalid(f"Unknown baseline '{text}'. Choose from {sorted(BASELINES)}")
    return BASELINES[key]()


def baseline_flux(kind, model, u_left, u_right, h=1.0, dt=1.0, x=None, t=0.0):
    """Numerical flux of one baseline for the states on either side of an edge."""
    return kind.flux(model, np.asarray(u_left, dtype=float), np.asarray(u_right, dtype=float),
                     x, t, h, dt)


def baseline_dt(U, model, safety=BASELINE_CFL, dt_max=1.0):
    """Classical CFL step: safety * h / max |H'(u)| over the cells."""
    speed = float(np.max(np.abs(model.dH(U.values))))
    if speed <= 0:
        return dt_max
    return min(dt_max, safety * U.grid.h / speed)


def baseline_step(U, model, kind, dt, t=0.0):
    """
    One conservative update U - dt/h (F_{j+1/2} - F_{j-1/2}).

    Returns (U_new, StepReport) with the same bookkeeping as the NSLE step.
    """
    grid = U.grid
    padded = grid.pad(U.values, 1)
    flux = kind.flux(model, padded[:-1], padded[1:], grid.edges(), t, grid.h, dt)
    U_new = U.with_values(U.values - dt / grid.h * (flux[1:] - flux[:-1]))

    boundary_flux = 0.0 if grid.boundary == PERIODIC else float(flux[-1] - flux[0])
    old_mass, new_mass = mass(U), mass(U_new)
    report = StepReport(
        dt_used=dt,
        mass=new_mass,
        tv_eps=tv_eps(U_new),
        u_min=float(U_new.values.min()),
        u_max=float(U_new.values.max()),
        new_widths_min=grid.h,
        boundary_flux=boundary_flux,
        mass_defect=new_mass - old_mass + dt * boundary_flux,
    )
    logger.debug("%s t=%.6g dt=%.3e mass=%.15g", kind.name, t, dt, new_mass)
    return U_new, report
