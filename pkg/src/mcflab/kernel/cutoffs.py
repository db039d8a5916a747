"""Time cutoff ``zeta``, smooth step ``eta`` and its primitive ``H``."""

import numpy as np

STEP_MAX_SLOPE = 1.875
STEP_DEFECT = 0.5


def smooth_step(z):
    """Quintic step ``6z^5 - 15z^4 + 10z^3`` clamped to [0, 1]."""
    z = np.clip(np.asarray(z, float), 0.0, 1.0)
    return z ** 3 * (10 - 15 * z + 6 * z * z)


def smooth_step_derivative(z):
    z = np.asarray(z, float)
    inside = (z > 0) & (z < 1)
    zc = np.clip(z, 0.0, 1.0)
    return np.where(inside, 30 * zc * zc * (1 - zc) ** 2, 0.0)


def step_primitive(z):
    """``H(z) = int_0^z eta``; equals ``z - 1/2`` for ``z >= 1``."""
    z = np.asarray(z, float)
    zc = np.clip(z, 0.0, 1.0)
    inner = zc ** 4 * (2.5 - 3 * zc + zc * zc)
    return np.where(z >= 1, z - STEP_DEFECT, inner)


class Cutoffs:
    """Cutoff functions for a time window.

    ``zeta`` equals ``delta`` on ``[t1, t2]``, equals ``r1`` outside
    ``(t3, t4)`` and is a monotone quintic in between.
    """

    def __init__(self, delta, r1, t1, t2, t3, t4):
        if not t3 < t1 < t2 < t4:
            raise ValueError("need t3 < t1 < t2 < t4")
        if not 0 < delta < r1:
            raise ValueError("need 0 < delta < r1")
        self.delta, self.r1 = float(delta), float(r1)
        self.t1, self.t2, self.t3, self.t4 = map(float, (t1, t2, t3, t4))

    def zeta(self, t):
        t = np.asarray(t, float)
        gap = self.r1 - self.delta
        down = smooth_step((t - self.t3) / (self.t1 - self.t3))
        up = smooth_step((t - self.t2) / (self.t4 - self.t2))
        return self.delta + gap * ((1 - down) + up)

    def zeta_derivative(self, t):
        t = np.asarray(t, float)
        gap = self.r1 - self.delta
        down = smooth_step_derivative((t - self.t3) / (self.t1 - self.t3)) / (self.t1 - self.t3)
        up = smooth_step_derivative((t - self.t2) / (self.t4 - self.t2)) / (self.t4 - self.t2)
        return gap * (up - down)

    def zeta_slope_bound(self):
        """``2 r1 (1/(t1 - t3) + 1/(t4 - t2))``."""
        return 2 * self.r1 * (1 / (self.t1 - self.t3) + 1 / (self.t4 - self.t2))

    eta = staticmethod(smooth_step)
    eta_derivative = staticmethod(smooth_step_derivative)
    H = staticmethod(step_primitive)

    @staticmethod
    def H_derivative(z):
        return smooth_step(z)


def cutoffs(delta, r1, t1, t2, t3, t4):
    """Return ``(zeta, eta, H)`` as callables; see :class:`Cutoffs`."""
    c = Cutoffs(delta, r1, t1, t2, t3, t4)
    return c.zeta, c.eta, c.H
