"""Sampling grids, multilinear interpolation and differentiation operators.

Two grid families are used throughout:

* :class:`LogSphericalGrid` -- nodes uniform in ``(log r, theta, azimuth)``.
  Scalings ``x -> lam x`` and rotations about the x3-axis act on it as index
  shifts, which is what the symmetry algebra needs.
* :class:`BoxGrid` -- cell-centred uniform Cartesian nodes on ``[-L, L]^3``,
  periodic when used with FFTs, otherwise differentiated with fourth-order
  centred stencils.

Vector fields on a box are arrays of shape ``(3, N, N, N)``; the component
index comes first.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .errors import ConfigurationError, DomainError

_SNAP = 1e-9


@dataclass(frozen=True)
class RegularAxis:
    """Uniform axis ``start + i*step`` for ``i < n``, optionally periodic."""

    start: float
    step: float
    n: int
    periodic: bool = False
    name: str = "axis"

    @property
    def nodes(self):
        return self.start + self.step * np.arange(self.n)

    @property
    def stop(self):
        return self.start + self.step * (self.n - 1)


def _axis_weights(axis, c):
    u = (np.asarray(c, dtype=float) - axis.start) / axis.step
    near = np.rint(u)
    u = np.where(np.abs(u - near) < _SNAP, near, u)
    if axis.periodic:
        u = np.mod(u, axis.n)
        u = np.where(u >= axis.n - _SNAP, 0.0, u)
        i0 = np.floor(u).astype(np.int64)
        f = u - i0
        return i0, (i0 + 1) % axis.n, f, None
    bad = (u < 0) | (u > axis.n - 1)
    if axis.n == 1:
        i0 = np.zeros(u.shape, dtype=np.int64)
        return i0, i0, np.zeros(u.shape), bad
    i0 = np.clip(np.floor(u).astype(np.int64), 0, axis.n - 2)
    f = u - i0
    return i0, i0 + 1, f, bad


def interp_multilinear(values, axes, coords):
    """Multilinear interpolation of ``values`` sampled on regular axes.

    Parameters
    ----------
    values : ndarray
        Samples with leading shape ``tuple(a.n for a in axes)``; any trailing
        axes are carried along.
    axes : sequence of RegularAxis
    coords : sequence of ndarray
        One broadcast-compatible coordinate array per axis.

    Raises
    ------
    DomainError
        If a coordinate lies outside a non-periodic axis.
    """
    values = np.asarray(values)
    coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
    shape = coords[0].shape
    tail = values.shape[len(axes):]
    parts = []
    for axis, c in zip(axes, coords):
        i0, i1, f, bad = _axis_weights(axis, c)
        if bad is not None and np.any(bad):
            idx = tuple(int(v) for v in np.argwhere(bad)[0])
            point = tuple(float(cc[idx]) for cc in coords)
            raise DomainError(
                f"{axis.name}={float(c[idx]):.6g} outside "
                f"[{axis.start:.6g}, {axis.stop:.6g}] at sample point {point}",
                point=point,
            )
        parts.append((i0, i1, f))
    out = np.zeros(shape + tail, dtype=np.result_type(values, float))
    expand = (Ellipsis,) + (None,) * len(tail)
    for corner in product((0, 1), repeat=len(axes)):
        weight = np.ones(shape)
        index = []
        for (i0, i1, f), bit in zip(parts, corner):
            weight = weight * (f if bit else 1.0 - f)
            index.append(i1 if bit else i0)
        if not np.any(weight):
            continue
        out += weight[expand] * values[tuple(index)]
    return out


def rotation_about_x3(angle):
    """Rotation matrices about the x3-axis, broadcasting over ``angle``."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    z, o = np.zeros_like(angle), np.ones_like(angle)
    return np.stack(
        [np.stack([c, -s, z], -1), np.stack([s, c, z], -1), np.stack([z, z, o], -1)],
        -2,
    )


@dataclass(frozen=True)
class LogSphericalGrid:
    """Nodes ``r = exp(log_r0 + i*dlogr)``, cell-centred polar angle, periodic azimuth."""

    log_r0: float
    dlogr: float
    n_r: int
    n_theta: int
    n_az: int

    @classmethod
    def spanning(cls, r_min, r_max, lam, per_factor, n_theta=8, n_az=8):
        """Grid from ``r_min`` to at least ``r_max`` with ``per_factor`` nodes per factor ``lam``.

        ``r_min`` is rounded down to a power of ``lam`` so that the annulus
        ``1 <= |x| < lam`` always falls on nodes.
        """
        if lam <= 1:
            raise ConfigurationError("lam must exceed 1")
        dlogr = np.log(lam) / per_factor
        i_min = int(np.floor(np.log(r_min) / dlogr + _SNAP))
        i_max = int(np.ceil(np.log(r_max) / dlogr - _SNAP))
        return cls(i_min * dlogr, dlogr, i_max - i_min + 1, n_theta, n_az)

    @property
    def axes(self):
        return (
            RegularAxis(self.log_r0, self.dlogr, self.n_r, False, "log_r"),
            RegularAxis(0.5 * np.pi / self.n_theta, np.pi / self.n_theta, self.n_theta, False, "theta"),
            RegularAxis(0.0, 2 * np.pi / self.n_az, self.n_az, True, "azimuth"),
        )

    @property
    def shape(self):
        return (self.n_r, self.n_theta, self.n_az)

    @cached_property
    def coordinates(self):
        """Meshed ``(log_r, theta, azimuth)`` arrays."""
        return np.meshgrid(*(a.nodes for a in self.axes), indexing="ij")

    @cached_property
    def points(self):
        """Cartesian node positions, shape ``shape + (3,)``."""
        lr, th, az = self.coordinates
        r = np.exp(lr)
        return np.stack(
            [r * np.sin(th) * np.cos(az), r * np.sin(th) * np.sin(az), r * np.cos(th)], -1
        )

    @cached_property
    def volumes(self):
        """Lebesgue cell volumes ``r^3 sin(theta) dlogr dtheta daz``."""
        lr, th, _ = self.coordinates
        dth = np.pi / self.n_theta
        daz = 2 * np.pi / self.n_az
        return np.exp(3 * lr) * np.sin(th) * self.dlogr * dth * daz

    def locate(self, x):
        """``(log_r, theta, azimuth)`` of Cartesian points ``x[..., 3]``."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        th = np.arccos(np.clip(x[..., 2] / r, -1.0, 1.0))
        az = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * np.pi)
        return np.log(r), th, az


class BoxGrid:
    """Cell-centred grid on ``[-L, L]^3`` with ``N`` nodes per direction.

    The origin is never a node (for even ``N``), so fields homogeneous of
    degree -1 can be sampled directly.
    """

    def __init__(self, L, N):
        if N < 4:
            raise ConfigurationError("BoxGrid needs at least 4 nodes per direction")
        if L <= 0:
            raise ConfigurationError("box half-width must be positive")
        self.L = float(L)
        self.N = int(N)
        self.h = 2 * self.L / self.N
        self.x = -self.L + (np.arange(self.N) + 0.5) * self.h

    def __repr__(self):
        return f"BoxGrid(L={self.L!r}, N={self.N!r})"

    def __eq__(self, other):
        return isinstance(other, BoxGrid) and self.L == other.L and self.N == other.N

    def __hash__(self):
        return hash((self.L, self.N))

    @property
    def shape(self):
        return (self.N,) * 3

    @property
    def cell_volume(self):
        return self.h**3

    @property
    def axes(self):
        return tuple(RegularAxis(self.x[0], self.h, self.N, False, f"x{i + 1}") for i in range(3))

    @cached_property
    def points(self):
        """Node coordinates, shape ``(3, N, N, N)``."""
        return np.stack(np.meshgrid(self.x, self.x, self.x, indexing="ij"))

    @cached_property
    def radius(self):
        return np.sqrt(np.sum(self.points**2, axis=0))

    def interior_mask(self, fraction=0.9):
        """Nodes with every coordinate inside ``fraction * L`` (outer shell dropped)."""
        p = self.points
        return np.all(np.abs(p) <= fraction * self.L, axis=0)

    def ball_mask(self, radius):
        return self.radius <= radius

    # spectral machinery (real FFTs over the last three axes)
    @cached_property
    def wavenumbers(self):
        k = 2 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        kr = 2 * np.pi * np.fft.rfftfreq(self.N, d=self.h)
        return (k[:, None, None], k[None, :, None], kr[None, None, :])

    @cached_property
    def k2(self):
        kx, ky, kz = self.wavenumbers
        return kx**2 + ky**2 + kz**2

    @cached_property
    def _odd_mask(self):
        # zero the Nyquist plane for odd-order derivatives
        kx, ky, kz = self.wavenumbers
        nyq = np.pi / self.h
        return [
            (np.abs(np.abs(k) - nyq) > 1e-12 * nyq).astype(float) for k in (kx, ky, kz)
        ]

    def fft(self, f):
        return np.fft.rfftn(f, axes=(-3, -2, -1))

    def ifft(self, F):
        return np.fft.irfftn(F, s=self.shape, axes=(-3, -2, -1))

    def spectral_derivative(self, f, axis):
        k = self.wavenumbers[axis] * self._odd_mask[axis]
        return self.ifft(1j * k * self.fft(f))

    def grad(self, f):
        F = self.fft(f)
        return np.stack(
            [self.ifft(1j * self.wavenumbers[a] * self._odd_mask[a] * F) for a in range(3)]
        )

    def jacobian(self, v):
        """``J[i, j] = d v_j / d x_i`` for a vector field ``v``."""
        V = self.fft(v)
        return np.stack(
            [self.ifft(1j * self.wavenumbers[a] * self._odd_mask[a] * V) for a in range(3)]
        )

    def div(self, v):
        V = self.fft(v)
        return self.ifft(
            sum(1j * self.wavenumbers[a] * self._odd_mask[a] * V[a] for a in range(3))
        )

    def laplacian(self, f):
        return self.ifft(-self.k2 * self.fft(f))

    def inverse_laplacian(self, f):
        """Zero-mean solution ``g`` of ``Delta g = f``."""
        F = self.fft(f)
        k2 = self.k2.copy()
        k2[0, 0, 0] = 1.0
        G = -F / k2
        G[..., 0, 0, 0] = 0.0
        return self.ifft(G)

    def leray(self, v):
        """Solenoidal projection ``I - grad Delta^{-1} div``."""
        V = self.fft(v)
        ks = [self.wavenumbers[a] * self._odd_mask[a] for a in range(3)]
        k2 = sum(k**2 for k in ks)
        k2 = np.where(k2 == 0, 1.0, k2)
        kv = sum(ks[a] * V[a] for a in range(3)) / k2
        return np.stack([self.ifft(V[a] - ks[a] * kv) for a in range(3)])

    def integrate(self, f, mask=None):
        if mask is not None:
            f = f * mask
        return float(np.sum(f) * self.cell_volume)

    def l2(self, v, mask=None):
        sq = np.sum(v**2, axis=0) if v.ndim == 4 else v**2
        return np.sqrt(self.integrate(sq, mask))

    def lp(self, v, p, mask=None):
        mag = np.sqrt(np.sum(v**2, axis=0)) if v.ndim == 4 else np.abs(v)
        if mask is not None:
            mag = mag[mask]
        if np.isinf(p):
            return float(mag.max()) if mag.size else 0.0
        return float((np.sum(mag**p) * self.cell_volume) ** (1.0 / p))

    def crop(self, f, target):
        """Restrict box samples to the centred sub-box ``target`` (same spacing)."""
        if not np.isclose(target.h, self.h) or (self.N - target.N) % 2:
            raise ConfigurationError(f"{target} is not an aligned sub-box of {self}")
        o = (self.N - target.N) // 2
        sl = slice(o, o + target.N)
        return f[..., sl, sl, sl]

    def enlarged(self, margin):
        """Aligned box with at least ``margin`` extra half-width, same spacing, even N."""
        extra = int(np.ceil(margin / self.h))
        return BoxGrid(self.L + extra * self.h, self.N + 2 * extra)


_FD4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_FD4_2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def fd4_derivative(f, h, axis, order=1):
    """Fourth-order centred difference along ``axis`` (non-periodic).

    The two outermost nodes on each side fall back to second-order
    one-sided formulas; callers exclude them through interior masks.
    """
    f = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    n = f.shape[0]
    if n < 5:
        raise ConfigurationError("fourth-order stencils need at least 5 nodes")
    out = np.empty_like(f)
    w = _FD4 if order == 1 else _FD4_2
    scale = h if order == 1 else h * h
    out[2:-2] = sum(w[m] * f[m : n - 4 + m] for m in range(5)) / scale
    if order == 1:
        out[:2] = np.gradient(f[:4], h, axis=0, edge_order=2)[:2]
        out[-2:] = np.gradient(f[-4:], h, axis=0, edge_order=2)[-2:]
    else:
        out[0] = (2 * f[0] - 5 * f[1] + 4 * f[2] - f[3]) / scale
        out[1] = (f[0] - 2 * f[1] + f[2]) / scale
        out[-1] = (2 * f[-1] - 5 * f[-2] + 4 * f[-3] - f[-4]) / scale
        out[-2] = (f[-1] - 2 * f[-2] + f[-3]) / scale
    return np.moveaxis(out, 0, axis)


def fd4_periodic(f, h, axis, order=1):
    """Fourth-order centred difference along a periodic axis."""
    w = _FD4 if order == 1 else _FD4_2
    scale = h if order == 1 else h * h
    return sum(w[m] * np.roll(f, 2 - m, axis=axis) for m in range(5)) / scale
