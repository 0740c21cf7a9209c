"""Scaling and rotation symmetries about the x3-axis.

A field ``v`` is mapped by ``(lam, phi)`` to

    v'(x, t) = lam R(-phi) v(lam R(phi) x, lam^2 t)

which is the identity on SS fields for every ``lam`` (with ``phi = 0``),
on RSS fields for every ``lam`` with ``phi = 2 alpha log lam``, and on
(R)DSS fields for their particular factor and phase.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, SymmetryRangeError
from .fields import PhysicalField, grid_points, log_time_axis, sample_eulerian
from .grids import LogSphericalGrid, RegularAxis, interp_multilinear, rotation_about_x3

#: generator of rotations about x3: d/ds R(s) = J R(s) = R(s) J
J = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def rotation_matrix(s):
    """``[[cos s, -sin s, 0], [sin s, cos s, 0], [0, 0, 1]]``."""
    s = float(s)
    if not np.isfinite(s):
        raise ConfigurationError("rotation angle must be finite")
    return rotation_about_x3(s)


class SymmetryKind(str, enum.Enum):
    SS = "SS"
    DSS = "DSS"
    RSS = "RSS"
    RDSS = "RDSS"


@dataclass(frozen=True)
class SymmetrySpec:
    """Declared symmetry class with its parameters.

    ``lam`` is the factor (required and > 1 for DSS/RDSS, optional check
    factor for SS/RSS), ``alpha`` the angular speed in radians per unit of
    ``s = log t`` (RSS) and ``phi`` the phase (RDSS).
    """

    kind: SymmetryKind
    lam: float | None = None
    alpha: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SymmetryKind(self.kind))
        if self.kind in (SymmetryKind.DSS, SymmetryKind.RDSS):
            if self.lam is None or not self.lam > 1:
                raise ConfigurationError(f"{self.kind.value} needs a factor lam > 1")
        if self.lam is not None and not self.lam > 0:
            raise ConfigurationError("lam must be positive")
        if not (np.isfinite(self.alpha) and np.isfinite(self.phi)):
            raise ConfigurationError("alpha and phi must be finite")
        if self.kind in (SymmetryKind.SS, SymmetryKind.DSS) and (self.alpha or self.phi):
            raise ConfigurationError(f"{self.kind.value} takes no rotation parameters")
        if self.kind is SymmetryKind.RSS and self.phi:
            raise ConfigurationError("RSS is parametrised by alpha, not phi")
        if self.kind is SymmetryKind.RDSS and self.alpha:
            raise ConfigurationError("RDSS is parametrised by phi, not alpha")

    @property
    def period(self):
        """``T = 2 log lam`` (``None`` when no factor is attached)."""
        return None if self.lam is None else 2.0 * np.log(self.lam)

    @property
    def angular_speed(self):
        """Rotation rate of the profile frame: ``alpha`` (RSS) or ``phi / T`` (RDSS)."""
        if self.kind is SymmetryKind.RSS:
            return self.alpha
        if self.kind is SymmetryKind.RDSS:
            return self.phi / self.period
        return 0.0

    def phase_for(self, lam):
        """Phase that accompanies factor ``lam`` for this class."""
        if self.kind is SymmetryKind.RSS:
            return 2.0 * self.alpha * np.log(lam)
        if self.kind is SymmetryKind.RDSS:
            if not np.isclose(lam, self.lam):
                raise ConfigurationError("RDSS fields are only invariant for their own factor")
            return self.phi
        return 0.0

    def restricted(self, lam):
        """SS -> DSS and RSS -> RDSS with phase ``2 alpha log lam``."""
        if self.kind is SymmetryKind.SS:
            return SymmetrySpec(SymmetryKind.DSS, lam)
        if self.kind is SymmetryKind.RSS:
            return SymmetrySpec(SymmetryKind.RDSS, lam, phi=2.0 * self.alpha * np.log(lam))
        return self

    def check_factors(self, default=2.0):
        lam = self.lam if self.lam is not None else default
        return [(lam, self.phase_for(lam))]


def _image_indices(axis, shift):
    """Node indices whose coordinate shifted by ``shift`` stays on ``axis``."""
    c = axis.nodes + shift
    ok = (c >= axis.start - 1e-9 * axis.step) & (c <= axis.stop + 1e-9 * axis.step)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return None
    return idx[0], idx[-1] + 1


def apply_similarity_symmetry(v, lam, phi, target=None):
    """Apply ``v -> lam R(-phi) v(lam R(phi) x, lam^2 t)``.

    Parameters
    ----------
    v : PhysicalField
        Eulerian field on a :class:`LogSphericalGrid` (or any grid when
        ``target`` is given).
    lam, phi : float
        Scale factor and rotation phase.
    target : tuple, optional
        ``(grid, times)`` on which to evaluate.  By default the source grid
        is cropped to the nodes whose images remain inside the data.

    Returns
    -------
    PhysicalField
    """
    if not lam > 0:
        raise ConfigurationError("lam must be positive")
    if v.frame_alpha is not None:
        raise ConfigurationError("apply_similarity_symmetry acts on Eulerian fields")
    if target is None:
        if not isinstance(v.grid, LogSphericalGrid):
            raise ConfigurationError("default target needs a log-spherical source grid")
        g = v.grid
        rng = _image_indices(g.axes[0], np.log(lam))
        if rng is None:
            raise DomainError(f"no radial node has its image (factor {lam}) inside the data")
        grid = LogSphericalGrid(g.log_r0 + rng[0] * g.dlogr, g.dlogr, rng[1] - rng[0], g.n_theta, g.n_az)
        times = None
        if not v.is_static:
            ta = log_time_axis(v.times)
            trng = _image_indices(ta, 2 * np.log(lam))
            if trng is None:
                raise DomainError(f"no time level has its image (factor {lam}) inside the data")
            times = v.times[trng[0] : trng[1]]
    else:
        grid, times = target
    pts = grid_points(grid)
    rot = rotation_about_x3(phi)
    images = lam * pts @ rot.T
    if v.is_static:
        vals = sample_eulerian(v, images, 1.0)
        out = lam * vals @ rotation_about_x3(-phi).T
        velocity = np.moveaxis(out, -1, 0)
    else:
        slices = []
        for t in times:
            vals = sample_eulerian(v, images, lam**2 * t)
            slices.append(np.moveaxis(lam * vals @ rotation_about_x3(-phi).T, -1, 0))
        velocity = np.stack(slices)
    return PhysicalField(grid, times, velocity)


def _restrict(v, grid, times):
    """Samples of ``v`` on an aligned sub-grid of its own log-spherical grid."""
    i0 = int(round((grid.log_r0 - v.grid.log_r0) / v.grid.dlogr))
    sl = slice(i0, i0 + grid.n_r)
    if v.is_static:
        return v.velocity[:, sl]
    ta = log_time_axis(v.times)
    j0 = int(round((np.log(times[0]) - ta.start) / ta.step))
    return v.velocity[j0 : j0 + times.size, :, sl]


def _weighted_norm(values, grid, times):
    vol = grid.volumes
    sq = np.sum(values**2, axis=-4)
    if times is None:
        return np.sqrt(np.sum(sq * vol))
    dt = times * (log_time_axis(times).step if times.size > 1 else 1.0)
    return np.sqrt(np.sum(sq * vol * dt[:, None, None, None]))


def symmetry_defect(v, spec, factors=None):
    """Relative L2 mismatch between ``v`` and its symmetry image.

    The mismatch is measured on every node whose image stays inside the
    data, with Lebesgue weights ``dx dt``, and divided by
    ``max(||v||, 1e-30)`` on the same nodes.  For SS/RSS the check factor is
    ``spec.lam`` (default 2); extra ``(lam, phi)`` pairs can be given.
    """
    if not isinstance(spec, SymmetrySpec):
        raise ConfigurationError("spec must be a SymmetrySpec")
    if not isinstance(v.grid, LogSphericalGrid):
        raise ConfigurationError("symmetry_defect needs a log-spherical field")
    pairs = factors if factors is not None else spec.check_factors()
    worst = 0.0
    for lam, phi in pairs:
        if spec.kind in (SymmetryKind.DSS, SymmetryKind.RDSS) and factors is None:
            if not np.isclose(lam, spec.lam):
                raise ConfigurationError("factor does not match the declared DSS factor")
        image = apply_similarity_symmetry(v, lam, phi)
        own = _restrict(v, image.grid, image.times)
        diff = _weighted_norm(image.velocity - own, image.grid, image.times)
        ref = max(_weighted_norm(own, image.grid, image.times), 1e-30)
        worst = max(worst, float(diff / ref))
    return worst


def profile_field(sigma, grid, alpha=0.0):
    """SS (``alpha = 0``) or RSS field generated by a profile on the unit sphere.

    ``sigma`` is a callable taking unit vectors ``(..., 3)`` and returning
    vectors ``(..., 3)``.  The field is
    ``v0(x) = |x|^-1 R(2 alpha log|x|) sigma(R(-2 alpha log|x|) x/|x|)``.
    """
    pts = grid_points(grid)
    r = np.linalg.norm(pts, axis=-1)
    ang = 2.0 * alpha * np.log(r)
    rot_back = rotation_about_x3(-ang)
    omega = np.einsum("...ij,...j->...i", rot_back, pts / r[..., None])
    sig = np.asarray(sigma(omega), dtype=float)
    out = np.einsum("...ij,...j->...i", rotation_about_x3(ang), sig) / r[..., None]
    return np.moveaxis(out, -1, 0)


def extend_from_fundamental_domain(data, spec, target, max_applications=64):
    """Extend fundamental-domain data to ``target`` using the symmetry relation.

    Parameters
    ----------
    data : callable or PhysicalField
        SS/RSS: a sphere profile ``sigma(omega)`` (callable) or a static field
        whose radial axis is a single shell ``|x| = 1``.
        DSS/RDSS: a static field on the annulus ``1 <= |x| < lam`` or a
        time-dependent field on the cell ``1 <= t < lam^2``.
    spec : SymmetrySpec
    target : LogSphericalGrid or (grid, times)
        Where to evaluate; grids may be log-spherical or boxes.
    max_applications : int
        Largest admissible ``|k|`` in ``lam^k``.
    """
    grid, times = target if isinstance(target, tuple) else (target, None)
    pts = grid_points(grid)
    r = np.linalg.norm(pts, axis=-1)
    if spec.kind in (SymmetryKind.SS, SymmetryKind.RSS):
        alpha = spec.alpha if spec.kind is SymmetryKind.RSS else 0.0
        if callable(data):
            sigma = data
        else:
            sigma = _shell_profile(data)
        velocity = profile_field(sigma, grid, alpha)
        if times is not None:
            raise ConfigurationError("SS/RSS extension builds initial data only")
        return PhysicalField(grid, None, velocity)

    lam, phi = spec.lam, spec.phi
    loglam = np.log(lam)
    if data.is_static:
        k = -np.floor(np.log(r) / loglam + 1e-12).astype(int)
        _check_range(k, max_applications)
        images = (lam**k)[..., None] * np.einsum(
            "...ij,...j->...i", rotation_about_x3(k * phi), pts
        )
        vals = _sample_annulus(data, images, lam, phi)
        out = (lam**k)[..., None] * np.einsum(
            "...ij,...j->...i", rotation_about_x3(-k * phi), vals
        )
        return PhysicalField(grid, None, np.moveaxis(out, -1, 0))

    if times is None:
        raise ConfigurationError("spacetime extension needs target times")
    slices = []
    for t in np.asarray(times, dtype=float):
        k = int(-np.floor(np.log(t) / (2 * loglam) + 1e-12))
        _check_range(np.array([k]), max_applications)
        images = lam**k * pts @ rotation_about_x3(k * phi).T
        vals = sample_eulerian(data, images, lam ** (2 * k) * t)
        out = lam**k * vals @ rotation_about_x3(-k * phi).T
        slices.append(np.moveaxis(out, -1, 0))
    return PhysicalField(grid, np.asarray(times, dtype=float), np.stack(slices))


def _check_range(k, limit):
    worst = int(np.max(np.abs(k))) if k.size else 0
    if worst > limit:
        raise SymmetryRangeError(
            f"target needs lam^{worst} (more than {limit} symmetry applications)"
        )


def _shell_profile(data):
    """Callable sphere profile from a static field sampled on one shell."""
    g = data.grid
    if not isinstance(g, LogSphericalGrid) or g.n_r != 1 or abs(g.log_r0) > 1e-12:
        raise ConfigurationError("sphere data must be a single shell at |x| = 1")
    values = np.moveaxis(data.velocity[:, 0], 0, -1)
    axes = g.axes[1:]

    def sigma(omega):
        th = np.arccos(np.clip(omega[..., 2], -1.0, 1.0))
        az = np.mod(np.arctan2(omega[..., 1], omega[..., 0]), 2 * np.pi)
        return interp_multilinear(values, axes, (th, az))

    return sigma


def _sample_annulus(data, x, lam, phi):
    """Sample annulus data at points with ``1 <= |x| < lam``.

    The outer edge between the last node and ``|x| = lam`` is filled with
    the image of the inner shell, so the annulus behaves like one period.
    """
    g = data.grid
    if not isinstance(g, LogSphericalGrid):
        raise ConfigurationError("annulus data must live on a log-spherical grid")
    loglam = np.log(lam)
    if g.log_r0 > 1e-12 or g.log_r0 + g.n_r * g.dlogr < loglam - 1e-9:
        raise ConfigurationError("annulus data must cover 1 <= |x| < lam")
    n_keep = int(round(loglam / g.dlogr)) if np.isclose(loglam / g.dlogr, round(loglam / g.dlogr)) else None
    vals = np.moveaxis(data.velocity, 0, -1)  # (n_r, nth, naz, 3)
    if n_keep is not None and abs(g.log_r0) < 1e-12 and n_keep <= g.n_r:
        vals = vals[:n_keep]
        inner = LogSphericalGrid(0.0, g.dlogr, 1, g.n_theta, g.n_az)
        shell = PhysicalField(inner, None, data.velocity[:, :1])
        # v(x) for |x| = lam is lam^-1 R(phi) v(lam^-1 R(-phi) x)
        outer_pts = lam * inner.points
        back = outer_pts @ rotation_about_x3(-phi).T / lam
        edge = sample_eulerian(shell, back, 1.0) @ rotation_about_x3(phi).T / lam
        vals = np.concatenate([vals, edge], axis=0)
        ext = LogSphericalGrid(0.0, g.dlogr, n_keep + 1, g.n_theta, g.n_az)
    else:
        ext = g
    fld = PhysicalField(ext, None, np.moveaxis(vals, -1, 0))
    return sample_eulerian(fld, x, 1.0)
