"""
Slope limiters for the piecewise-linear reconstruction.

Every limiter maps a five-cell window (u_{j-2}, ..., u_{j+2}) to a limited
slope U'_j. Windows are the last axis of a numpy array, so one call handles a
single window, a batch of random windows or a whole padded grid.

Kinds
-----
  MM2  : minmod of the one-sided differences
  MM3  : minmod of (alpha*D+, centred difference, alpha*D-), alpha > 0
  UNO  : minmod of second-order corrected one-sided differences
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import ConfigInvalid

WINDOW = 5


# --------------------------------------------------------------------------- #
# 1.  Minmod primitives                                                        #
# --------------------------------------------------------------------------- #

def mm2(sigma, tau):
    """Two-argument minmod: the smaller magnitude if the signs agree, else 0."""
    sigma = np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return 0.5 * (np.sign(sigma) + np.sign(tau)) * np.minimum(np.abs(sigma), np.abs(tau))


def mm3(sigma, tau, gamma):
    """Three-argument minmod as nested two-argument minmods."""
    return mm2(mm2(sigma, tau), gamma)


def mm3_literal(sigma, tau, gamma):
    """
    Three-argument minmod written with the product of pairwise sign sums.

    Returns the same values as mm3; kept so both forms can be checked
    against each other.
    """
    sigma = np.asarray(sigma, dtype=float)
    tau = np.asarray(tau, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    s, t, g = np.sign(sigma), np.sign(tau), np.sign(gamma)
    smallest = np.minimum(np.minimum(np.abs(sigma), np.abs(tau)), np.abs(gamma))
    return 0.125 * (s + t) * (s + g) * (t + g) * smallest


# --------------------------------------------------------------------------- #
# 2.  Limiter kinds                                                            #
# --------------------------------------------------------------------------- #

class LimiterKind:
    """Base class for slope limiters."""
    name = "BASE"
    theta_max = 1.0

    def slope(self, window):
        raise NotImplementedError

    def bound(self):
        """Bound L on the edge-difference coefficients, 1/2 + theta_max/8."""
        return 0.5 + self.theta_max / 8.0

    def slopes(self, padded):
        """
        Limited slope for every cell of a padded 1D array.

        Returns an array of the same length; the two outermost cells on each
        side have no complete window and get slope 0.
        """
        padded = np.asarray(padded, dtype=float)
        out = np.zeros_like(padded)
        if padded.size >= WINDOW:
            out[2:-2] = self.slope(sliding_window_view(padded, WINDOW))
        return out

    def __repr__(self):
        return self.name

    def __eq__(self, other):
        return type(self) is type(other) and vars(self) == vars(other)

    def __hash__(self):
        return hash((self.name, tuple(sorted(vars(self).items()))))


class MM2Limiter(LimiterKind):
    """Minmod of the forward and backward differences."""
    name = "MM2"

    def slope(self, window):
        w = np.asarray(window, dtype=float)
        return mm2(w[..., 3] - w[..., 2], w[..., 2] - w[..., 1])


class MM3Limiter(LimiterKind):
    """Monotonized-central minmod with steepness alpha."""
    name = "MM3"

    def __init__(self, alpha=1.4):
        if not alpha > 0:
            raise ConfigInvalid(f"MM3 alpha must be positive, got {alpha}")
        self.alpha = float(alpha)
        self.theta_max = max(1.0, self.alpha)

    def slope(self, window):
        w = np.asarray(window, dtype=float)
        forward = w[..., 3] - w[..., 2]
        backward = w[..., 2] - w[..., 1]
        centred = 0.5 * (w[..., 3] - w[..., 1])
        return mm3(self.alpha * forward, centred, self.alpha * backward)

    def __repr__(self):
        return f"MM3({self.alpha:g})"


class UNOLimiter(LimiterKind):
    """Uniformly non-oscillatory slope; exact on quadratics."""
    name = "UNO"
    theta_max = 2.0

    def slope(self, window):
        w = np.asarray(window, dtype=float)
        forward = w[..., 3] - w[..., 2]
        backward = w[..., 2] - w[..., 1]
        # second differences centred at j+1, j, j-1
        d2_right = w[..., 4] - 2.0 * w[..., 3] + w[..., 2]
        d2_mid = w[..., 3] - 2.0 * w[..., 2] + w[..., 1]
        d2_left = w[..., 2] - 2.0 * w[..., 1] + w[..., 0]
        delta_right = 0.5 * mm2(d2_right, d2_mid)
        delta_left = 0.5 * mm2(d2_mid, d2_left)
        return mm2(forward - delta_right, backward + delta_left)


LIMITERS = {"mm2": MM2Limiter, "mm3": MM3Limiter, "uno": UNOLimiter}


def slope(kind, window):
    """Limited slope of one window (or a batch of windows along the last axis)."""
    return kind.slope(window)


def parse_limiter(text):
    """Parse 'mm2', 'mm3', 'mm3:1.2' or 'uno' into a limiter instance."""
    name, _, arg = str(text).strip().lower().partition(":")
    if name not in LIMITERS:
        raise ConfigInvalid(f"Unknown limiter '{text}'. Choose from {sorted(LIMITERS)}")
    if arg:
        if name != "mm3":
            raise ConfigInvalid(f"Limiter '{name}' takes no parameter")
        try:
            return MM3Limiter(float(arg))
        except ValueError:
            raise ConfigInvalid(f"Bad MM3 alpha '{arg}'") from None
    return LIMITERS[name]()
