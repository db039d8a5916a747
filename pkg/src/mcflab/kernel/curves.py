"""Lipschitz singular curves and time-sampled measures."""

import csv

import numpy as np


class LipschitzError(ValueError):
    """Curve samples violate the declared Lipschitz bound."""


class SingularCurve:
    """Lipschitz curve ``xi(t)`` sampled at increasing times.

    Between samples the curve is linearly interpolated; outside the sampled
    range it is held constant. On the sphere interpolated points are projected
    back to the unit sphere.

    Parameters
    ----------
    times : array_like, shape (k,)
        Strictly increasing sample times.
    positions : array_like, shape (k, dim)
        Curve positions.
    sigma : float, optional
        Lipschitz constant. Defaults to the smallest one consistent with the
        samples.
    on_sphere : bool
        Project interpolated points to the unit sphere.
    """

    def __init__(self, times, positions, sigma=None, on_sphere=False):
        self.times = np.asarray(times, float).ravel()
        self.positions = np.asarray(positions, float)
        if self.positions.ndim != 2 or len(self.positions) != len(self.times):
            raise ValueError("positions must have shape (len(times), dim)")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("curve samples must be strictly time-sorted")
        self.on_sphere = on_sphere
        speeds = self._speeds()
        smax = float(speeds.max()) if len(speeds) else 0.0
        self.sigma = smax if sigma is None else float(sigma)
        if smax > self.sigma * (1 + 1e-12) + 1e-15:
            raise LipschitzError(
                "sample speed %.6g exceeds sigma = %.6g" % (smax, self.sigma))

    def _speeds(self):
        if len(self.times) < 2:
            return np.zeros(0)
        steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return steps / np.diff(self.times)

    @classmethod
    def static(cls, point, t0=0.0, t1=1.0):
        p = np.asarray(point, float)
        return cls([t0, t1], [p, p], sigma=0.0,
                   on_sphere=(len(p) == 3))

    @classmethod
    def from_csv(cls, path, sigma=None, on_sphere=None):
        """Read ``t, x, y[, z]`` rows; a header line is optional."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    if rows:
                        raise
        data = np.array(rows, float)
        if on_sphere is None:
            on_sphere = data.shape[1] == 4
        return cls(data[:, 0], data[:, 1:], sigma=sigma, on_sphere=on_sphere)

    def to_csv(self, path):
        cols = "xyz"[: self.positions.shape[1]]
        with open(path, "w") as fh:
            fh.write("t," + ",".join(cols) + "\n")
            for t, p in zip(self.times, self.positions):
                fh.write("%.17g," % t + ",".join("%.17g" % v for v in p) + "\n")

    def position(self, t):
        """Interpolated positions at times ``t``, shape ``t.shape + (dim,)``."""
        t = np.asarray(t, float)
        out = np.stack([np.interp(t, self.times, self.positions[:, j])
                        for j in range(self.positions.shape[1])], axis=-1)
        if self.on_sphere:
            out = out / np.linalg.norm(out, axis=-1, keepdims=True)
        return out

    def reversed(self, t_lo, t_hi):
        """The curve ``s -> xi(t_lo + t_hi - s)``."""
        t = t_lo + t_hi - self.times[::-1]
        return SingularCurve(t, self.positions[::-1], sigma=self.sigma,
                             on_sphere=self.on_sphere)

    def check_lipschitz(self, t_lo, t_hi, n=257):
        """Re-validate the bound on a fine grid of interpolated points."""
        t = np.linspace(t_lo, t_hi, n)
        p = self.position(t)
        speed = np.linalg.norm(np.diff(p, axis=0), axis=1) / np.diff(t)
        return bool(np.all(speed <= self.sigma * (1 + 1e-9) + 1e-12))


class MeasureSamples:
    """Nonnegative measure on the time line with piecewise-constant density.

    Parameters
    ----------
    edges : array_like, shape (n + 1,)
        Increasing cell boundaries.
    densities : array_like, shape (n,)
        Density on each cell; zero outside ``[edges[0], edges[-1]]``.
    """

    def __init__(self, edges, densities):
        self.edges = np.asarray(edges, float).ravel()
        self.densities = np.asarray(densities, float).ravel()
        if len(self.edges) != len(self.densities) + 1:
            raise ValueError("need one more edge than densities")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if np.any(self.densities < 0):
            raise ValueError("densities must be nonnegative")

    @classmethod
    def lebesgue(cls, a, b, density=1.0):
        return cls([a, b], [density])

    @classmethod
    def from_csv(cls, path):
        """Read ``t, density`` rows; the density of the last row is ignored."""
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row[:2]])
                except ValueError:
                    if rows:
                        raise
        data = np.array(rows, float)
        return cls(data[:, 0], data[:-1, 1])

    def density(self, t):
        t = np.asarray(t, float)
        idx = np.searchsorted(self.edges, t, side="right") - 1
        inside = (idx >= 0) & (idx < len(self.densities))
        return np.where(inside, self.densities[np.clip(idx, 0, len(self.densities) - 1)], 0.0)

    def mass(self, a=-np.inf, b=np.inf):
        lo = np.clip(self.edges[:-1], a, b)
        hi = np.clip(self.edges[1:], a, b)
        return float(np.sum(self.densities * (hi - lo)))

    def breakpoints(self):
        return self.edges.copy()
