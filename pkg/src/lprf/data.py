"""Initial data: named closed forms and tabulated fundamental-domain samples."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .fields import PointCloud, grid_points
from .symmetry import SymmetryKind, SymmetrySpec, extend_from_fundamental_domain


@dataclass
class InitialData:
    """A vector field ``v0`` given pointwise by ``func(x[..., 3]) -> (..., 3)``.

    ``profile_bound`` is ``sup |x| |v0(x)|`` when finite (bounded sphere
    profile) and ``None`` for unbounded profiles.
    """

    name: str
    spec: SymmetrySpec
    func: object
    profile_bound: float | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def sample(self, grid):
        """Samples on ``grid`` with components first."""
        return np.moveaxis(self(grid_points(grid)), -1, 0)

    def rescaled_samples(self, grid, t):
        """Samples of ``sqrt(t) v0(sqrt(t) y)`` on ``grid`` (components first).

        For SS data this equals :meth:`sample` for every ``t``; for
        ``lam``-DSS data it is periodic in ``log t`` with period ``2 log lam``.
        """
        y = grid_points(grid)
        return np.moveaxis(np.sqrt(t) * self(np.sqrt(t) * y), -1, 0)

    def scaled(self, factor, name=None):
        return InitialData(
            name or f"{factor}*{self.name}",
            self.spec,
            lambda x, f=self.func: factor * f(x),
            None if self.profile_bound is None else abs(factor) * self.profile_bound,
            dict(self.params, scale=factor),
        )


def _swirl_dir(x):
    return np.stack([-x[..., 1], x[..., 0], np.zeros_like(x[..., 0])], -1)


def zero(spec=None):
    return InitialData("zero", spec or SymmetrySpec("SS"), lambda x: np.zeros_like(x), 0.0)


def swirl(amplitude=1.0):
    """``amplitude * (-x2, x1, 0) / |x|^2``: SS, divergence free, bounded profile."""

    def f(x):
        r2 = np.sum(x**2, axis=-1)[..., None]
        return amplitude * _swirl_dir(x) / r2

    return InitialData("swirl", SymmetrySpec("SS"), f, abs(amplitude), {"amplitude": amplitude})


def singular_swirl(amplitude=1.0, gamma=0.2):
    """Swirl with profile ``amplitude * sin(theta) |cos(theta)|^-gamma e_phi``.

    The profile lies in ``L^p(S^2)`` for ``p < 1/gamma`` and is unbounded
    near the equator; the field stays divergence free because the factor
    depends on the polar angle only.
    """

    def f(x):
        r = np.sqrt(np.sum(x**2, axis=-1))
        c = np.abs(x[..., 2]) / r
        with np.errstate(divide="ignore"):
            weight = np.where(c > 0, c ** (-gamma), np.inf)
        return amplitude * _swirl_dir(x) * (weight / r**2)[..., None]

    return InitialData(
        "singular_swirl", SymmetrySpec("SS"), f, None, {"amplitude": amplitude, "gamma": gamma}
    )


def dss_swirl(amplitude=1.0, lam=2.0, delta=0.3):
    """``lam``-DSS swirl ``amplitude (1 + delta cos(2 pi log|x| / log lam)) (-x2, x1, 0)/|x|^2``."""

    def f(x):
        r2 = np.sum(x**2, axis=-1)
        mod = 1.0 + delta * np.cos(np.pi * np.log(r2) / np.log(lam))
        return amplitude * _swirl_dir(x) * (mod / r2)[..., None]

    return InitialData(
        "dss_swirl",
        SymmetrySpec("DSS", lam),
        f,
        abs(amplitude) * (1 + abs(delta)),
        {"amplitude": amplitude, "lam": lam, "delta": delta},
    )


def radial(amplitude=1.0):
    """``amplitude * x / |x|^2``: SS but not divergence free (negative control)."""

    def f(x):
        r2 = np.sum(x**2, axis=-1)[..., None]
        return amplitude * x / r2

    return InitialData("radial", SymmetrySpec("SS"), f, abs(amplitude), {"amplitude": amplitude})


CATALOG = {
    "zero": zero,
    "swirl": swirl,
    "singular_swirl": singular_swirl,
    "dss_swirl": dss_swirl,
    "radial": radial,
}


def named(name, **params):
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ConfigurationError(f"unknown data profile {name!r}; known: {sorted(CATALOG)}") from None
    return factory(**params)


def from_fundamental_samples(fld, spec, name="tabulated"):
    """Initial data from samples on the unit sphere (SS/RSS) or annulus (DSS/RDSS).

    The samples are extended by the symmetry relation at evaluation time.
    """
    if spec.kind in (SymmetryKind.SS, SymmetryKind.RSS):
        bound = float(np.max(np.linalg.norm(fld.velocity, axis=0)))
    else:
        r = np.exp(fld.grid.coordinates[0])
        bound = float(np.max(np.linalg.norm(fld.velocity, axis=0) * r))

    def f(x):
        out = extend_from_fundamental_domain(fld, spec, PointCloud(x))
        return np.moveaxis(out.velocity, 0, -1)

    return InitialData(name, spec, f, bound)


def pointwise_divergence(data, x, h=1e-3):
    """Fourth-order central-difference divergence of ``data`` at points ``x``."""
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        total += (
            -data(x + 2 * e)[..., i] + 8 * data(x + e)[..., i] - 8 * data(x - e)[..., i] + data(x - 2 * e)[..., i]
        ) / (12 * h)
    return total
