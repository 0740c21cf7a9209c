"""Sampled physical fields and similarity profiles.

Velocity arrays put the component axis right after the time axis:
``(n_t, 3, *grid.shape)`` for time-dependent fields and ``(3, *grid.shape)``
for static ones.  Time grids are uniform in ``log t``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .grids import BoxGrid, LogSphericalGrid, RegularAxis, interp_multilinear, rotation_about_x3


def log_time_axis(times):
    """RegularAxis in ``log t`` for a log-uniform time grid."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ConfigurationError("physical times must be positive")
    lt = np.log(times)
    if lt.size == 1:
        return RegularAxis(lt[0], 1.0, 1, False, "log_t")
    step = (lt[-1] - lt[0]) / (lt.size - 1)
    if not np.allclose(np.diff(lt), step, rtol=1e-9, atol=1e-12):
        raise ConfigurationError("time samples must be uniform in log t")
    return RegularAxis(lt[0], step, lt.size, False, "log_t")


def log_uniform_times(t_min, t_max, n):
    return np.exp(np.linspace(np.log(t_min), np.log(t_max), n))


@dataclass
class PhysicalField:
    """Velocity ``v`` and pressure ``pi`` sampled in physical variables.

    ``frame_alpha`` is ``None`` for an Eulerian field (node ``x`` is fixed);
    otherwise the field lives in the similarity frame and node ``y`` of
    ``grid`` sits at ``x = sqrt(t) R(alpha log t) y`` at time ``t``.
    """

    grid: object
    times: np.ndarray | None
    velocity: np.ndarray
    pressure: np.ndarray | None = None
    frame_alpha: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)
            if np.any(self.times <= 0):
                raise ConfigurationError("t_min must be positive")
            expected = (self.times.size, 3) + tuple(self.grid.shape)
        else:
            expected = (3,) + tuple(self.grid.shape)
        if self.velocity.shape != expected:
            raise ConfigurationError(f"velocity shape {self.velocity.shape} != {expected}")

    @property
    def is_static(self):
        return self.times is None

    def positions(self, n=None):
        """Physical node coordinates ``(..., 3)`` at time level ``n``."""
        pts = _grid_points_last(self.grid)
        if self.frame_alpha is None:
            return pts
        t = self.times[n]
        rot = rotation_about_x3(self.frame_alpha * np.log(t))
        return np.sqrt(t) * pts @ rot.T

    def with_values(self, velocity, pressure=None):
        return replace(self, velocity=velocity, pressure=pressure)


@dataclass
class ProfileTrajectory:
    """Profile ``u(y, s)`` (and ``p``) on a uniform ``s`` grid.

    For periodic trajectories ``s`` covers ``[0, T)`` with the endpoint
    identified, so ``s[i] = i * T / n_s``.
    """

    grid: object
    s: np.ndarray
    velocity: np.ndarray
    pressure: np.ndarray | None = None
    period: float | None = None
    alpha: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        expected = (self.s.size, 3) + tuple(self.grid.shape)
        if self.velocity.shape != expected:
            raise ConfigurationError(f"profile shape {self.velocity.shape} != {expected}")
        if self.period is not None and self.s.size > 1:
            ds = self.period / self.s.size
            if not np.allclose(self.s, self.s[0] + ds * np.arange(self.s.size), atol=1e-12):
                raise ConfigurationError("periodic profiles need s = s0 + i*T/n_s")

    @property
    def ds(self):
        if self.period is not None:
            return self.period / self.s.size
        return float(self.s[1] - self.s[0]) if self.s.size > 1 else 1.0

    def periodicity_defect(self, other_end=None):
        """Relative l2 mismatch between the first slice and ``other_end``.

        ``other_end`` defaults to the last stored slice, which is the right
        comparison when ``s`` samples the closed interval ``[s0, s0 + T]``.
        """
        first = self.velocity[0]
        last = self.velocity[-1] if other_end is None else other_end
        denom = max(np.sqrt(np.sum(first**2)), 1e-30)
        return float(np.sqrt(np.sum((last - first) ** 2)) / denom)

    def at_s(self, s):
        """Linear interpolation in ``s`` (periodic when ``period`` is set)."""
        axis = RegularAxis(self.s[0], self.ds, self.s.size, self.period is not None, "s")
        return interp_multilinear(self.velocity, (axis,), (np.asarray(s, dtype=float),))


class PointCloud:
    """Scattered points ``(..., 3)`` usable wherever a grid supplies nodes."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)
        self.shape = self.points.shape[:-1]


def _grid_points_last(grid):
    if isinstance(grid, PointCloud):
        return grid.points
    if isinstance(grid, BoxGrid):
        return np.moveaxis(grid.points, 0, -1)
    if isinstance(grid, LogSphericalGrid):
        return grid.points
    raise ConfigurationError(f"unsupported grid {grid!r}")


def grid_points(grid):
    """Node coordinates with the Cartesian component last."""
    return _grid_points_last(grid)


def sample_eulerian(fld, x, t, what="velocity"):
    """Interpolate an Eulerian field at points ``x[..., 3]`` and times ``t``.

    Interpolation is multilinear in the grid coordinates and linear in
    ``log t``.  Velocity samples come back with the component axis last,
    shape ``x.shape``; pressure samples have shape ``x.shape[:-1]``.
    """
    if fld.frame_alpha is not None:
        raise ConfigurationError("sample_eulerian needs an Eulerian field")
    x = np.asarray(x, dtype=float)
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    data = fld.velocity if what == "velocity" else fld.pressure
    if data is None:
        raise ConfigurationError(f"field has no {what}")
    vector = what == "velocity"
    grid = fld.grid
    if isinstance(grid, LogSphericalGrid):
        lr, th, az = grid.locate(x)
        coords = [lr, th, az]
        axes = list(grid.axes)
        r_nodes = np.exp(grid.coordinates[0])
    elif isinstance(grid, BoxGrid):
        coords = [x[..., 0], x[..., 1], x[..., 2]]
        axes = list(grid.axes)
        r_nodes = None
    else:
        raise ConfigurationError(f"unsupported grid {grid!r}")
    vals = data
    if not fld.is_static:
        axes = [log_time_axis(fld.times)] + axes
        coords = [np.log(t)] + coords
    if vector:
        vals = np.moveaxis(vals, -4, -1)  # components last
    # weight by the homogeneity degree: |x| v and |x|^2 pi are scale invariant
    degree = 1 if vector else 2
    if r_nodes is not None:
        w = r_nodes**degree
        vals = vals * (w[..., None] if vector else w)
    out = interp_multilinear(vals, axes, coords)
    if r_nodes is not None:
        w = np.exp(degree * coords[-3])
        out = out / (w[..., None] if vector else w)
    return out
