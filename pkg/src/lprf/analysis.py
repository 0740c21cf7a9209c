"""Critical norms and the splitting of rough initial data.

Norms act on sampled representatives on a periodic box; distributions
modulo polynomials are outside numerical scope.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .data import InitialData, pointwise_divergence
from .errors import ConfigurationError, SplittingError
from .fields import PhysicalField
from .grids import BoxGrid, LogSphericalGrid
from .symmetry import symmetry_defect


def smoothstep(x):
    """Quintic smoothstep: 0 for ``x <= 0``, 1 for ``x >= 1``, C2 in between."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def lp_cutoff(r, lam):
    """Radial bump: 1 on ``|xi| <= 1/lam``, 0 on ``|xi| >= 1``."""
    return 1.0 - smoothstep((np.asarray(r) - 1.0 / lam) / (1.0 - 1.0 / lam))


def lp_multiplier(r, lam, j):
    """``phi_j(xi) = chi(lam^-(j+1) xi) - chi(lam^-j xi)``, supported in ``[lam^(j-1), lam^(j+1)]``."""
    return lp_cutoff(r * lam ** (-j - 1.0), lam) - lp_cutoff(r * lam ** (-float(j)), lam)


@dataclass
class LittlewoodPaleyDecomposition:
    """Blocks ``Delta_j f`` of a box field plus the two unresolved remainders."""

    lam: float
    grid: BoxGrid
    blocks: dict
    low: np.ndarray
    high: np.ndarray
    j_range: tuple

    def reconstruct(self):
        total = self.low + self.high
        for b in self.blocks.values():
            total = total + b
        return total

    def block_norms(self, p):
        return {j: _lp_norm(b, self.grid, p) for j, b in self.blocks.items()}


def _lp_norm(f, grid, p):
    mag = np.sqrt(np.sum(f**2, axis=0)) if f.ndim == 4 else np.abs(f)
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * grid.cell_volume) ** (1.0 / p))


def _block_range(grid, lam):
    kmin = np.pi / grid.L
    kmax = np.sqrt(3.0) * np.pi / grid.h
    j_lo = int(np.floor(np.log(kmin) / np.log(lam) + 1e-12))
    j_hi = int(np.ceil(np.log(kmax) / np.log(lam) - 1e-12))
    return j_lo, j_hi


def lp_decompose(f, grid, lam):
    """lam-adic Littlewood-Paley decomposition of a periodic box field.

    Blocks are kept for ``j_lo <= j <= j_hi`` where ``lam^j_lo`` is below the
    lowest non-zero box frequency and ``lam^j_hi`` above the largest; blocks
    that vanish identically are dropped.  The low remainder holds the mean,
    the high remainder is empty by construction; the sum reconstructs ``f``.
    """
    if not lam > 1:
        raise ConfigurationError("Littlewood-Paley base lam must exceed 1")
    f = np.asarray(f, dtype=float)
    F = grid.fft(f)
    r = np.sqrt(grid.k2)
    j_lo, j_hi = _block_range(grid, lam)
    blocks = {}
    for j in range(j_lo, j_hi + 1):
        m = lp_multiplier(r, lam, j)
        if not np.any(m):
            continue
        bj = grid.ifft(m * F)
        if np.any(bj):
            blocks[j] = bj
    low = grid.ifft(lp_cutoff(r * lam ** (-float(j_lo)), lam) * F)
    high = grid.ifft((1.0 - lp_cutoff(r * lam ** (-j_hi - 1.0), lam)) * F)
    return LittlewoodPaleyDecomposition(lam, grid, blocks, low, high, (j_lo, j_hi))


def besov_block_magnitudes(f, grid, s, p, lam):
    """``{j: lam^(s j) ||Delta_j f||_p}``."""
    dec = lp_decompose(f, grid, lam)
    return {j: lam ** (s * j) * n for j, n in dec.block_norms(p).items()}


def besov_norm(f, grid, s, p, q, lam):
    """Homogeneous Besov norm ``l^q_j(lam^(s j) ||Delta_j f||_(L^p))`` of a box field."""
    for e in (p, q):
        if not (e >= 1):
            raise ConfigurationError("Besov exponents must lie in [1, inf]")
    mags = np.array(list(besov_block_magnitudes(f, grid, s, p, lam).values()))
    if mags.size == 0:
        return 0.0
    if np.isinf(q):
        return float(mags.max())
    return float(np.sum(mags**q) ** (1.0 / q))


def weak_l3_norm(f, volumes, min_cells=4096):
    """``sup_s s * m(f, s)^(1/3)`` for sampled ``|f|`` with cell volumes.

    The sampled distribution function is a step function, so the sup is
    evaluated exactly over the sorted samples.  Levels whose superlevel set
    holds fewer than ``min_cells`` samples are skipped: there the set is a
    handful of cells around a singularity and its measure is not resolved
    (for ``|x|^-1`` the eight cells around the origin overshoot by about
    40% at every resolution).
    """
    f = np.asarray(f, dtype=float)
    # a leading component axis: one more dimension than the volumes, or 4-d with scalar volumes
    vector = f.ndim == 4 if np.ndim(volumes) == 0 else f.ndim == np.ndim(volumes) + 1
    mag = np.sqrt(np.sum(f**2, axis=0)) if vector else np.abs(f)
    vol = np.broadcast_to(volumes, mag.shape).ravel()
    mag = mag.ravel()
    keep = mag > 0
    if not np.any(keep):
        return 0.0
    order = np.argsort(-mag[keep], kind="stable")
    vals = mag[keep][order]
    cum = np.cumsum(vol[keep][order])
    # strict superlevel sets: levels just below vals[i] include all ties of vals[i]
    last_of_tie = np.r_[vals[1:] != vals[:-1], True]
    resolved = np.arange(vals.size) >= min(min_cells, vals.size) - 1
    sel = last_of_tie & resolved
    return float(np.max(vals[sel] * cum[sel] ** (1.0 / 3.0)))


def ball_kernel(h, radius=1.0, sub=4):
    """Cell weights for the ball ``|x| <= radius``, normalised to its exact volume."""
    n = int(np.ceil(radius / h)) + 1
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    c = np.arange(-n, n + 1) * h
    frac = np.zeros((c.size,) * 3)
    for dx in offs:
        for dy in offs:
            for dz in offs:
                X, Y, Z = np.meshgrid(c + dx * h, c + dy * h, c + dz * h, indexing="ij")
                frac += (X**2 + Y**2 + Z**2 <= radius**2)
    frac /= sub**3
    exact = 4.0 / 3.0 * np.pi * radius**3
    return frac * (exact / (frac.sum() * h**3)) * h**3


def l2_uloc_norm(f, grid, radius=1.0):
    """``sup_x0 ||f||_(L^2(B_1(x0)))`` over ball centres at the grid nodes.

    Ball weights come from sub-cell sampling rescaled to the exact ball
    volume, so constants are reproduced exactly.  Centres are the grid nodes,
    i.e. a lattice of spacing ``grid.h``; the field is taken to vanish
    outside the box.
    """
    if grid.h > 0.25 * radius:
        raise ConfigurationError("l2_uloc needs a centre lattice spacing <= 1/4")
    f = np.asarray(f, dtype=float)
    sq = np.sum(f**2, axis=0) if f.ndim == 4 else f**2
    if not np.any(sq):
        return 0.0
    local = fftconvolve(sq, ball_kernel(grid.h, radius), mode="same")
    return float(np.sqrt(max(local.max(), 0.0)))


def window(grid, inner=0.5, outer=0.9):
    """Smooth radial window, 1 inside ``inner*L`` and 0 beyond ``outer*L``."""
    return 1.0 - smoothstep((grid.radius / grid.L - inner) / (outer - inner))


def sampled_besov(data, grid, p, lam, windowed=True):
    """Besov norm ``B^(3/p-1)_(p,inf)`` of windowed box samples of ``data``."""
    f = data.sample(grid)
    if windowed:
        f = f * window(grid)
    f = np.nan_to_num(f, nan=0.0, posinf=0.0, neginf=0.0)
    return besov_norm(f, grid, 3.0 / p - 1.0, p, np.inf, lam)


def truncate(data, level):
    """Level truncation ``v0 * min(1, level / (|x| |v0|))``; keeps the symmetry class."""

    def f(x, g=data.func):
        v = g(x)
        amp = np.sqrt(np.sum(v**2, axis=-1)) * np.sqrt(np.sum(x**2, axis=-1))
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(amp > level, level / amp, 1.0)
        return v * c[..., None]

    return InitialData(f"trunc({data.name},{level:.6g})", data.spec, f, float(level), dict(data.params))


def remainder(data, part):
    return InitialData(
        f"{data.name}-{part.name}",
        data.spec,
        lambda x, g=data.func, a=part.func: g(x) - a(x),
        None,
        dict(data.params),
    )


@dataclass
class SplitResult:
    """``v0 = a0 + b0`` with measured postconditions."""

    a0: InitialData
    b0: InitialData
    level: float | None
    eps: float
    besov_b0: float
    weak_l3_a0: float
    divergence_a0: float
    divergence_b0: float
    defect_a0: float
    defect_b0: float
    history: list = field(default_factory=list)

    @property
    def ok(self):
        return self.besov_b0 < self.eps and np.isfinite(self.weak_l3_a0)


def _annulus_grid(lam):
    return LogSphericalGrid.spanning(1.0, lam * lam, lam, 4, n_theta=12, n_az=12)


def _scaled_divergence(data, lam):
    """``sup |x|^2 |div v|`` over annulus sample points (scale invariant for SS/DSS)."""
    g = _annulus_grid(lam)
    pts = g.points
    r = np.linalg.norm(pts, axis=-1)
    div = pointwise_divergence(data, pts, h=1e-3 * r.min())
    return float(np.max(np.abs(div) * r**2))


def _defect(data, lam):
    spec = data.spec if data.spec.lam is not None else data.spec.restricted(lam)
    g = LogSphericalGrid.spanning(0.5, 4.0 * spec.lam, spec.lam, 4, n_theta=8, n_az=8)
    fld = PhysicalField(g, None, data.sample(g))
    return symmetry_defect(fld, spec)


def split_initial_data(v0, eps, p, lam, grid, max_level=1e6, div_tol=1e-6, iterations=40):
    """Split SS/DSS data into ``a0 + b0`` with ``a0`` in weak-L3 and ``b0`` Besov-small.

    ``a0`` is the level truncation of ``v0`` at ``|x| |v0| = M`` and
    ``b0 = v0 - a0``.  If ``v0`` is already small, ``a0 = 0``; if its
    profile is bounded, ``b0 = 0``; otherwise ``M`` is found by bisection
    against the measured Besov norm of ``b0``.

    Raises
    ------
    ConfigurationError
        For ``p`` outside ``(3, 6)``.
    SplittingError
        If ``b0`` stays above ``eps`` at ``max_level`` or truncation breaks
        solenoidality.
    """
    if not (3 < p < 6):
        raise ConfigurationError("splitting requires 3 < p < 6")
    if eps <= 0:
        raise ConfigurationError("eps must be positive")
    history = []
    full = sampled_besov(v0, grid, p, lam)
    history.append(("v0", None, full))
    if full < eps:
        a0, b0, level = _zero_like(v0), v0, None
    elif v0.profile_bound is not None:
        a0, b0, level = v0, _zero_like(v0), v0.profile_bound
    else:
        def b_norm(m):
            n = sampled_besov(remainder(v0, truncate(v0, m)), grid, p, lam)
            history.append(("level", m, n))
            return n

        hi = 1.0
        while b_norm(hi) >= eps:
            hi *= 4.0
            if hi > max_level:
                raise SplittingError(
                    f"Besov norm of b0 stays >= {eps} up to truncation level {max_level}",
                    achieved=history[-1][2],
                    level=history[-1][1],
                )
        lo = 0.0 if hi == 1.0 else hi / 4.0
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            if b_norm(mid) < eps:
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-3 * hi:
                break
        level = hi
        a0 = truncate(v0, level)
        b0 = remainder(v0, a0)
    result = SplitResult(
        a0=a0,
        b0=b0,
        level=level,
        eps=eps,
        besov_b0=sampled_besov(b0, grid, p, lam),
        weak_l3_a0=weak_l3_norm(np.nan_to_num(a0.sample(grid)), grid.cell_volume),
        divergence_a0=_scaled_divergence(a0, lam),
        divergence_b0=_scaled_divergence(b0, lam),
        defect_a0=_defect(a0, lam),
        defect_b0=_defect(b0, lam),
        history=history,
    )
    if max(result.divergence_a0, result.divergence_b0) > div_tol:
        raise SplittingError(
            "level truncation broke solenoidality "
            f"(scaled divergence {max(result.divergence_a0, result.divergence_b0):.3g})",
            achieved=result.besov_b0,
            level=level,
        )
    if not result.besov_b0 < eps:
        raise SplittingError(
            f"measured Besov norm of b0 is {result.besov_b0:.4g} >= {eps}",
            achieved=result.besov_b0,
            level=level,
        )
    return result


def _zero_like(v0):
    return InitialData("zero", v0.spec, lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0.0)
