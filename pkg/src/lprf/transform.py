"""Similarity transforms and PDE residuals.

Physical variables ``(v, pi)(x, t)`` and profile variables ``(u, p)(y, s)``
are related by

    v(x, t) = t^-1/2 R(theta) u(y, s),   pi(x, t) = t^-1 p(y, s),
    y = R(theta)^T x / sqrt(t),          s = log t,   theta = alpha s.

The residuals are strong-form surrogates evaluated with finite differences
(or spectral derivatives on periodic boxes); they say nothing about the
weak formulation against periodic test fields.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .fields import (
    PhysicalField,
    ProfileTrajectory,
    grid_points,
    log_time_axis,
    sample_eulerian,
)
from .grids import BoxGrid, LogSphericalGrid, RegularAxis, fd4_derivative, fd4_periodic, interp_multilinear, rotation_about_x3


def _rotate(vec, angle):
    """Apply ``R(angle)`` to a components-first vector array."""
    rot = rotation_about_x3(angle)
    return np.einsum("ij,j...->i...", rot, vec)


def to_profile(field, alpha=0.0, grid=None, s=None, period=None):
    """Map a physical field to profile variables.

    With ``grid=None`` the field must already live in the similarity frame
    with the same ``alpha``; the map is then a pointwise rescaling and the
    exact inverse of :func:`from_profile`.  Otherwise ``(grid, s)`` gives the
    profile nodes and the Eulerian field is interpolated at
    ``x = sqrt(t) R(alpha s) y``, ``t = e^s``.
    """
    if field.is_static:
        raise ConfigurationError("to_profile needs a time-dependent field")
    if grid is None:
        if field.frame_alpha is None or not np.isclose(field.frame_alpha, alpha):
            raise ConfigurationError("field is not in the similarity frame for this alpha")
        s_nodes = np.log(field.times)
        u = np.stack(
            [np.sqrt(t) * _rotate(field.velocity[n], -alpha * sn) for n, (t, sn) in enumerate(zip(field.times, s_nodes))]
        )
        p = None
        if field.pressure is not None:
            p = field.pressure * field.times.reshape((-1,) + (1,) * (field.pressure.ndim - 1))
        return ProfileTrajectory(field.grid, s_nodes, u, p, period=period, alpha=alpha)

    if s is None:
        raise ConfigurationError("target s nodes are required with a target grid")
    s = np.asarray(s, dtype=float)
    y = grid_points(grid)
    us, ps = [], []
    for sn in s:
        t = np.exp(sn)
        x = np.sqrt(t) * y @ rotation_about_x3(alpha * sn).T
        v = np.moveaxis(sample_eulerian(field, x, t), -1, 0)
        us.append(np.sqrt(t) * _rotate(v, -alpha * sn))
        if field.pressure is not None:
            ps.append(t * sample_eulerian(field, x, t, what="pressure"))
    p = np.stack(ps) if ps else None
    return ProfileTrajectory(grid, s, np.stack(us), p, period=period, alpha=alpha)


def sample_profile(traj, y, s):
    """Interpolate a profile at points ``y[..., 3]`` and log-times ``s``.

    Linear in ``s`` (periodic when the trajectory has a period) and
    multilinear in space; returns components last.
    """
    y = np.asarray(y, dtype=float)
    s = np.broadcast_to(np.asarray(s, dtype=float), y.shape[:-1])
    g = traj.grid
    s_axis = RegularAxis(traj.s[0], traj.ds, traj.s.size, traj.period is not None, "s")
    vals = np.moveaxis(traj.velocity, 1, -1)
    if isinstance(g, LogSphericalGrid):
        lr, th, az = g.locate(y)
        vals = vals * np.exp(g.coordinates[0])[..., None]
        out = interp_multilinear(vals, (s_axis,) + g.axes, (s, lr, th, az))
        return out / np.exp(lr)[..., None]
    if isinstance(g, BoxGrid):
        return interp_multilinear(vals, (s_axis,) + g.axes, (s, y[..., 0], y[..., 1], y[..., 2]))
    raise ConfigurationError(f"unsupported grid {g!r}")


def from_profile(traj, alpha=0.0, grid=None, times=None):
    """Map a profile trajectory back to physical variables.

    Without a target the result lives in the similarity frame (node ``y``
    at ``x = sqrt(t) R(alpha s) y``) and inverts :func:`to_profile` exactly.
    With ``(grid, times)`` the profile is interpolated onto Eulerian nodes.
    """
    if grid is None:
        times = np.exp(traj.s)
        v = np.stack(
            [_rotate(traj.velocity[n], alpha * sn) / np.sqrt(t) for n, (t, sn) in enumerate(zip(times, traj.s))]
        )
        pi = None
        if traj.pressure is not None:
            pi = traj.pressure / times.reshape((-1,) + (1,) * (traj.pressure.ndim - 1))
        return PhysicalField(traj.grid, times, v, pi, frame_alpha=alpha)

    if times is None:
        raise ConfigurationError("target times are required with a target grid")
    times = np.asarray(times, dtype=float)
    x = grid_points(grid)
    vs = []
    for t in times:
        sn = np.log(t)
        y = x @ rotation_about_x3(-alpha * sn).T / np.sqrt(t)
        u = np.moveaxis(sample_profile(traj, y, sn), -1, 0)
        vs.append(_rotate(u, alpha * sn) / np.sqrt(t))
    return PhysicalField(grid, times, np.stack(vs))


@dataclass
class ResidualReport:
    """Momentum residual samples with interior norms."""

    momentum: np.ndarray
    momentum_norm: float
    divergence_norm: float
    reference_norm: float
    mask: np.ndarray

    @property
    def relative(self):
        return self.momentum_norm / max(self.reference_norm, 1e-30)


class SpatialOps:
    """Gradient, Jacobian and Laplacian on a box: spectral or fourth-order stencils."""

    def __init__(self, grid, spectral=False):
        if not isinstance(grid, BoxGrid):
            raise ConfigurationError("residuals are evaluated on box grids")
        if grid.N < 4:
            raise ConfigurationError("grid too coarse: need at least 4 nodes per direction")
        self.grid = grid
        self.spectral = spectral

    def d(self, f, axis):
        if self.spectral:
            return self.grid.spectral_derivative(f, axis)
        return fd4_derivative(f, self.grid.h, f.ndim - 3 + axis)

    def jacobian(self, v):
        """``J[i, j] = d_i v_j``."""
        return np.stack([self.d(v, i) for i in range(3)])

    def grad(self, f):
        return np.stack([self.d(f, i) for i in range(3)])

    def laplacian(self, v):
        if self.spectral:
            return self.grid.laplacian(v)
        h = self.grid.h
        nd = v.ndim
        return sum(fd4_derivative(v, h, nd - 3 + a, order=2) for a in range(3))

    def div(self, v):
        return sum(self.d(v[i], i) for i in range(3))


def _time_derivative(values, step, periodic):
    if values.shape[0] < 4:
        raise ConfigurationError("grid too coarse: need at least 4 time levels")
    if periodic:
        return fd4_periodic(values, step, axis=0)
    if values.shape[0] < 5:
        return np.gradient(values, step, axis=0, edge_order=2)
    return fd4_derivative(values, step, 0)


def leray_residual(traj, alpha=0.0, spectral=False, linear_only=False, interior=0.9):
    """Residual of the (rotating) time-dependent Leray system.

        d_s u + a J u - (a J y).grad u - u/2 - (y/2).grad u - Lap u + u.grad u + grad p

    with ``a = alpha``.  ``linear_only`` drops the nonlinear and pressure
    terms (the operator satisfied by heat-flow profiles).  Norms are taken
    over the interior (outer shell of width ``1 - interior`` excluded) and
    over ``s`` with the trajectory's spacing.
    """
    ops = SpatialOps(traj.grid, spectral)
    g = traj.grid
    u = traj.velocity
    y = g.points
    du_ds = _time_derivative(u, traj.ds, traj.period is not None)
    mask = g.interior_mask(interior)
    res = np.empty_like(u)
    div_sq = 0.0
    for n in range(u.shape[0]):
        un = u[n]
        jac = ops.jacobian(un)
        drift = 0.5 * np.einsum("i...,ij...->j...", y, jac)
        r = du_ds[n] - 0.5 * un - drift - ops.laplacian(un)
        if alpha:
            ju = np.stack([-un[1], un[0], np.zeros_like(un[2])])
            jy = np.stack([-y[1], y[0], np.zeros_like(y[2])])
            r = r + alpha * ju - alpha * np.einsum("i...,ij...->j...", jy, jac)
        if not linear_only:
            r = r + np.einsum("i...,ij...->j...", un, jac)
            if traj.pressure is not None:
                r = r + ops.grad(traj.pressure[n])
        res[n] = r
        div_sq += g.integrate(ops.div(un) ** 2, mask)
    ds = traj.ds
    mom = np.sqrt(ds * sum(g.integrate(np.sum(res[n] ** 2, axis=0), mask) for n in range(u.shape[0])))
    ref = np.sqrt(ds * sum(g.integrate(np.sum(u[n] ** 2, axis=0), mask) for n in range(u.shape[0])))
    return ResidualReport(res, float(mom), float(np.sqrt(ds * div_sq)), float(ref), mask)


def nse_residual(field, spectral=False, interior=0.9, include_nonlinear=True):
    """Residual ``d_t v - Lap v + v.grad v + grad pi`` of an Eulerian box field.

    Times must be uniform in ``log t``; ``d_t = t^-1 d_(log t)``.  Norms
    are ``L2(dx dt)`` over the interior nodes.
    """
    if field.is_static or field.frame_alpha is not None:
        raise ConfigurationError("nse_residual needs an Eulerian time-dependent field")
    ops = SpatialOps(field.grid, spectral)
    g = field.grid
    v = field.velocity
    ta = log_time_axis(field.times)
    dv = _time_derivative(v, ta.step, False) / field.times[:, None, None, None, None]
    mask = g.interior_mask(interior)
    res = np.empty_like(v)
    div_sq = mom_sq = ref_sq = 0.0
    dt = field.times * ta.step
    for n in range(v.shape[0]):
        vn = v[n]
        r = dv[n] - ops.laplacian(vn)
        if include_nonlinear:
            r = r + np.einsum("i...,ij...->j...", vn, ops.jacobian(vn))
        if field.pressure is not None:
            r = r + ops.grad(field.pressure[n])
        res[n] = r
        mom_sq += dt[n] * g.integrate(np.sum(r**2, axis=0), mask)
        ref_sq += dt[n] * g.integrate(np.sum(vn**2, axis=0), mask)
        div_sq += dt[n] * g.integrate(ops.div(vn) ** 2, mask)
    return ResidualReport(res, float(np.sqrt(mom_sq)), float(np.sqrt(div_sq)), float(np.sqrt(ref_sq)), mask)
