"""Heat flow, the background profile ``U0``, the cutoff field ``W`` and small-data mild solutions.

All profile quantities live on a periodic y-box.  Anything nonlocal
(heat flow of rescaled data, Leray projections, Duhamel integrals) is
computed on an enlarged box whose margin keeps the Gaussian tails of
the heat kernel from wrapping around, and then cropped.
"""

from dataclasses import dataclass, field

import numpy as np

from .analysis import smoothstep
from .data import pointwise_divergence
from .errors import ConfigurationError, CutoffError, DivergenceError, PreconditionError
from .fields import ProfileTrajectory
from .grids import BoxGrid, LogSphericalGrid
from .transform import from_profile, leray_residual

DEFAULT_MARGIN = 6.0


def heat_evolve(f, grid, t):
    """``e^(t Lap) f`` on a periodic box (multiplier ``exp(-|xi|^2 t)``)."""
    if t < 0:
        raise ConfigurationError("heat_evolve needs t >= 0")
    if t == 0:
        return np.array(f, dtype=float, copy=True)
    return grid.ifft(np.exp(-grid.k2 * t) * grid.fft(f))


def riesz_pressure(grid, left, right=None):
    """``sum_ij R_i R_j (left_i right_j)``, i.e. ``(-Lap)^-1 d_i d_j (left_i right_j)``, zero mean.

    With ``right=None`` the product is ``left_i left_j``.
    """
    right = left if right is None else right
    k = [grid.wavenumbers[a] * grid._odd_mask[a] for a in range(3)]
    k2 = grid.k2.copy()
    k2[0, 0, 0] = 1.0
    acc = 0.0
    for i in range(3):
        for j in range(3):
            acc = acc - k[i] * k[j] * grid.fft(left[i] * right[j])
    P = acc / k2
    P[..., 0, 0, 0] = 0.0
    return grid.ifft(P)


def _check_solenoidal(data, lam=2.0, tol=1e-6):
    """``sup |x|^2 |div a0|`` on a unit-scale annulus (scale invariant)."""
    g = LogSphericalGrid.spanning(1.0, lam * lam, lam, 4, n_theta=12, n_az=12)
    pts = g.points
    r = np.linalg.norm(pts, axis=-1)
    div = float(np.max(np.abs(pointwise_divergence(data, pts, h=1e-3)) * r**2))
    if not np.isfinite(div) or div > tol:
        raise PreconditionError(f"initial data is not divergence free (scaled divergence {div:.3g})")
    return div


def default_s_nodes(spec, n_s, lam=2.0):
    """``n_s`` nodes ``i T / n_s`` covering one period of the profile."""
    period = spec.period if spec.period is not None else 2.0 * np.log(lam)
    return np.arange(n_s) * period / n_s, period


@dataclass
class BackgroundField:
    """``U0(y, s) = sqrt(t) (e^(t Lap) a0)(sqrt(t) y)`` with its decay table."""

    U0: ProfileTrajectory
    big: BoxGrid
    U0_big: np.ndarray
    q: float
    theta_radii: np.ndarray
    theta_values: np.ndarray

    def theta(self, R):
        """``sup_s ||U0(s)||_(L^q(|y| > R))`` on the y-box."""
        g = self.U0.grid
        return max(g.lp(u, self.q, g.radius > R) for u in self.U0.velocity)


def _heat_profile(data, big, t):
    f = np.nan_to_num(data.rescaled_samples(big, t), nan=0.0, posinf=0.0, neginf=0.0)
    return heat_evolve(big.leray(f), big, 1.0)


def build_U0(a0, ybox, n_s=8, margin=DEFAULT_MARGIN, q=np.inf, lam=2.0, check=True):
    """Sample ``U0`` on ``ybox`` at ``n_s`` nodes of one period.

    ``U0(y, s)`` is the heat flow to time 1 of the rescaled data
    ``sqrt(t) a0(sqrt(t) y)``, ``t = e^s``.  For SS data the rescaled
    samples coincide for every ``s``, so ``U0`` is ``s``-independent up to
    round-off; for ``lam``-DSS data they repeat after one period.
    """
    if check:
        _check_solenoidal(a0)
    s, period = default_s_nodes(a0.spec, n_s, lam)
    big = ybox.enlarged(margin)
    U0_big = np.stack([_heat_profile(a0, big, np.exp(sn)) for sn in s])
    U0 = ProfileTrajectory(ybox, s, big.crop(U0_big, ybox), period=period, alpha=0.0)
    radii = ybox.L * np.array([0.25, 0.5, 0.75])
    bg = BackgroundField(U0, big, U0_big, q, radii, np.zeros(3))
    bg.theta_values = np.array([bg.theta(R) for R in radii])
    return bg


@dataclass
class AssumptionReport:
    residual: float
    residual_relative: float
    divergence_relative: float
    norm_l4: float
    norm_lq: float
    theta_radii: np.ndarray
    theta_values: np.ndarray
    monotone: bool
    s_variation: float
    tolerance: float

    @property
    def divergence_free(self):
        return self.divergence_relative <= self.tolerance

    @property
    def passed(self):
        return self.monotone and self.divergence_free and np.isfinite(self.residual)


def verify_assumption_U0(bg, interior=0.5, tolerance=1e-8):
    """Linear Leray residual, integrability, decay table and divergence of ``U0``.

    The residual uses fourth-order stencils on the y-box interior.  The
    divergence is measured spectrally on the enlarged box where ``U0`` was
    built.
    """
    U0 = bg.U0
    g = U0.grid
    if not np.any(U0.velocity):
        zero = np.zeros_like(bg.theta_values)
        return AssumptionReport(0.0, 0.0, 0.0, 0.0, 0.0, bg.theta_radii, zero, True, 0.0, tolerance)
    rep = leray_residual(U0, linear_only=True, interior=interior)
    div = max(bg.big.l2(bg.big.div(u)) / max(bg.big.l2(bg.big.grad(u[0])), 1e-300) for u in bg.U0_big)
    ref = max(float(np.sqrt(np.sum(U0.velocity[0] ** 2))), 1e-300)
    variation = max(float(np.sqrt(np.sum((u - U0.velocity[0]) ** 2))) / ref for u in U0.velocity)
    return AssumptionReport(
        residual=rep.momentum_norm,
        residual_relative=rep.relative,
        divergence_relative=float(div),
        norm_l4=max(g.lp(u, 4) for u in U0.velocity),
        norm_lq=max(g.lp(u, bg.q) for u in U0.velocity),
        theta_radii=bg.theta_radii,
        theta_values=bg.theta_values,
        monotone=bool(np.all(np.diff(bg.theta_values) <= 1e-14 * max(bg.theta_values[0], 1.0))),
        s_variation=variation,
        tolerance=tolerance,
    )


def cutoff_Z(r):
    """Radial cutoff ``Z``: 0 for ``|x| < 1``, 1 for ``|x| > 2``."""
    return smoothstep(np.asarray(r) - 1.0)


def _newton_gradient(grid, g):
    """``grad Phi`` with ``-Lap Phi = g`` (Newton potential), using the same
    Nyquist-masked symbols as the spectral divergence so that
    ``div grad Phi = -g`` holds to round-off."""
    ks = [grid.wavenumbers[a] * grid._odd_mask[a] for a in range(3)]
    k2 = sum(k**2 for k in ks)
    G = grid.fft(g)
    phi = np.where(k2 > 0, G / np.where(k2 > 0, k2, 1.0), 0.0)
    return np.stack([grid.ifft(1j * ks[a] * phi) for a in range(3)]), grid.ifft(phi)


@dataclass
class CutoffField:
    """``W = xi U0 + w`` with ``w`` the gradient of the Newton potential of ``div(xi U0)``."""

    W: ProfileTrajectory
    D: ProfileTrajectory
    R0: float
    xi: np.ndarray
    w: np.ndarray
    alpha_target: float
    q: float
    norm: float
    divergence: float
    newton_identity: float
    energy_gap: float
    scan: list = field(default_factory=list)
    D_big: np.ndarray | None = None


def _cutoff_for_radius(bg, R0):
    """``xi`` and ``(W, w, Phi)`` per s node on the enlarged box."""
    big = bg.big
    xi = cutoff_Z(big.radius / R0)
    out = []
    for u in bg.U0_big:
        # div(xi U0) = grad xi . U0 for solenoidal U0; the spectral form keeps div W = 0 exact
        src = big.div(xi * u)
        w, phi = _newton_gradient(big, src)
        out.append((xi * u + w, w, phi, src))
    return xi, out


def build_W(bg, alpha, q=None, max_fraction=0.25):
    """Smallest grid-representable ``R0 >= 1`` with ``||W||_(L^inf_s L^q) <= alpha``.

    Raises
    ------
    CutoffError
        If no ``R0 <= max_fraction * L`` meets the bound.
    """
    if not (0 < alpha < 1):
        raise ConfigurationError("alpha must lie in (0, 1)")
    q = bg.q if q is None else q
    g = bg.U0.grid
    big = bg.big
    U0 = bg.U0
    scan = []
    R0 = np.ceil(1.0 / g.h - 1e-9) * g.h
    best = (np.inf, None)
    while R0 <= max_fraction * g.L + 1e-9:
        xi, parts = _cutoff_for_radius(bg, R0)
        W = np.stack([big.crop(p[0], g) for p in parts])
        norm = max(g.lp(wn, q) for wn in W)
        scan.append((float(R0), float(norm)))
        best = min(best, (norm, float(R0)))
        if norm <= alpha:
            break
        R0 += g.h
    else:
        raise CutoffError(
            f"no cutoff radius <= {max_fraction * g.L:g} gives ||W|| <= {alpha} "
            f"(best {best[0]:.4g} at R0={best[1]})",
            best_norm=best[0],
            best_radius=best[1],
        )
    div_scale = max(big.l2(big.grad(u[0])) for u in bg.U0_big) or 1.0
    divergence = max(big.l2(big.div(p[0])) for p in parts) / div_scale
    newton = 0.0
    for _, _, phi, src in parts:
        lap = -big.div(big.grad(phi))
        newton = max(newton, float(np.max(np.abs(lap - src)) / max(np.max(np.abs(src)), 1e-300)))
    D = U0.velocity - W
    return CutoffField(
        W=ProfileTrajectory(g, U0.s, W, period=U0.period),
        D=ProfileTrajectory(g, U0.s, D, period=U0.period),
        R0=float(R0),
        xi=big.crop(xi, g),
        w=np.stack([big.crop(p[1], g) for p in parts]),
        alpha_target=alpha,
        q=q,
        norm=float(scan[-1][1]),
        divergence=float(divergence),
        newton_identity=newton,
        energy_gap=float(max(g.l2(dn) for dn in D)),
        scan=scan,
        D_big=np.stack([u - p[0] for u, p in zip(bg.U0_big, parts)]),
    )


def _phi1(z):
    """``(1 - e^-z) / z``, stable near 0."""
    out = np.empty_like(z)
    small = z < 1e-4
    zs = z[small]
    out[small] = 1.0 - zs / 2.0 + zs**2 / 6.0
    zl = z[~small]
    out[~small] = -np.expm1(-zl) / zl
    return out


def _phi2(z):
    """``(e^-z - 1 + z) / z^2``, stable near 0."""
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small]
    out[small] = 0.5 - zs / 6.0 + zs**2 / 24.0
    zl = z[~small]
    out[~small] = (np.expm1(-zl) + zl) / zl**2
    return out


def mild_time_grid(n_tau=32, tau_min=1e-3):
    return np.concatenate([[0.0], np.geomspace(tau_min, 1.0, n_tau - 1)])


class _Duhamel:
    """Exact heat-kernel integration of a piecewise-linear forcing per Fourier mode."""

    def __init__(self, grid, taus):
        self.grid = grid
        self.taus = taus
        k2 = grid.k2
        self.steps = []
        for a, b in zip(taus[:-1], taus[1:]):
            z = k2 * (b - a)
            e = np.exp(-z)
            p1 = _phi1(z)
            p2 = _phi2(z)
            # int_0^dt e^{-k2 (dt - r)} [N_a (1 - r/dt) + N_b r/dt] dr
            w_b = (b - a) * p2
            w_a = (b - a) * p1 - w_b
            self.steps.append((e, w_a, w_b))
        k = [grid.wavenumbers[i] * grid._odd_mask[i] for i in range(3)]
        k2s = k2.copy()
        k2s[0, 0, 0] = 1.0
        self.k = k
        self.k2s = k2s

    def forcing(self, b):
        """Fourier transform of ``-P div(b (x) b)``."""
        g = self.grid
        k = self.k
        flux = [[g.fft(b[i] * b[j]) for j in range(3)] for i in range(3)]
        div = [sum(1j * k[i] * flux[i][j] for i in range(3)) for j in range(3)]
        kd = sum(k[j] * div[j] for j in range(3)) / self.k2s
        return np.stack([-(div[j] - k[j] * kd) for j in range(3)])

    def heat(self, B0):
        out = [B0]
        for e, _, _ in self.steps:
            out.append(e * out[-1])
        return out

    def integral(self, forcings):
        acc = np.zeros_like(forcings[0])
        out = [acc]
        for (e, w_a, w_b), Na, Nb in zip(self.steps, forcings[:-1], forcings[1:]):
            acc = e * acc + w_a * Na + w_b * Nb
            out.append(acc)
        return out


@dataclass
class PicardResult:
    """Mild solution on ``[0, 1]`` at the nodes of ``taus`` (physical samples)."""

    grid: BoxGrid
    taus: np.ndarray
    b: np.ndarray
    heat: np.ndarray
    increments: list
    duhamel_residual: float

    @property
    def contraction(self):
        inc = self.increments
        return [inc[i + 1] / inc[i] for i in range(len(inc) - 1) if inc[i] > 0]


def picard_mild(samples, grid, taus=None, tol=1e-10, max_iter=60):
    """Picard iteration for ``b = e^(t Lap) b0 - int_0^t e^((t-tau) Lap) P div(b (x) b)``.

    ``samples`` are the data on the periodic ``grid``.  The forcing is
    interpolated linearly in ``tau`` between nodes and integrated against
    the heat kernel exactly per Fourier mode.

    Raises
    ------
    DivergenceError
        When an increment exceeds twice the first one, or after
        ``max_iter`` iterations without reaching ``tol``.
    """
    taus = mild_time_grid() if taus is None else np.asarray(taus, dtype=float)
    duh = _Duhamel(grid, taus)
    B0 = grid.fft(grid.leray(samples))
    heat_hat = duh.heat(B0)
    heat = np.stack([grid.ifft(H) for H in heat_hat])
    b = heat.copy()
    scale = max(float(np.sqrt(np.sum(heat**2))), 1e-300)
    increments = []
    for _ in range(max_iter):
        forc = [duh.forcing(bn) for bn in b]
        integ = duh.integral(forc)
        new = np.stack([grid.ifft(H + I) for H, I in zip(heat_hat, integ)])
        inc = float(np.sqrt(np.sum((new - b) ** 2))) / scale
        increments.append(inc)
        b = new
        if inc < tol:
            break
        if len(increments) > 1 and inc > 2.0 * increments[0]:
            raise DivergenceError(
                f"Picard increments grew from {increments[0]:.3g} to {inc:.3g}", history=increments
            )
    else:
        raise DivergenceError(
            f"Picard iteration did not reach tol={tol} in {max_iter} steps (last {increments[-1]:.3g})",
            history=increments,
        )
    forc = [duh.forcing(bn) for bn in b]
    integ = duh.integral(forc)
    again = np.stack([grid.ifft(H + I) for H, I in zip(heat_hat, integ)])
    resid = float(np.sqrt(np.sum((again - b) ** 2))) / scale
    return PicardResult(grid, taus, b, heat, increments, resid)


@dataclass
class RateReport:
    r: float
    target: float
    times: np.ndarray
    norms: np.ndarray
    exponent: float
    constant: float
    conclusive: bool


def duhamel_rate(result, r, t_min=1e-2, floor=1e-14):
    """Fit ``||b(t) - e^(t Lap) b0||_(L^r) ~ C t^gamma`` over ``[t_min, 1]``."""
    g = result.grid
    sel = result.taus >= t_min
    ts = result.taus[sel]
    norms = np.array([g.lp(bn - hn, r) for bn, hn in zip(result.b[sel], result.heat[sel])])
    target = -0.5 + 1.5 / r
    if np.any(norms < floor):
        return RateReport(r, target, ts, norms, np.nan, np.nan, False)
    slope, icpt = np.polyfit(np.log(ts), np.log(norms), 1)
    return RateReport(r, target, ts, norms, float(slope), float(np.exp(icpt)), True)


@dataclass
class MildSolution:
    """Small-data mild solution ``b`` with profile ``B`` and pressures."""

    B: ProfileTrajectory
    b: object
    picard: list
    history: list
    rates: list
    duhamel_residual: float

    @property
    def contraction(self):
        return max((max(p.contraction, default=0.0) for p in self.picard), default=0.0)


def mild_solve_small(b0, ybox, n_s=8, tol=1e-10, margin=DEFAULT_MARGIN, lam=2.0, taus=None, max_iter=60, rates=(2.0, 4.0)):
    """Mild solution for small SS/DSS data and its similarity profile.

    ``B(y, s)`` is the mild solution at time 1 with data
    ``sqrt(t) b0(sqrt(t) y)``, ``t = e^s``; by scaling this equals
    ``sqrt(t) b(sqrt(t) y, t)``.  Each distinct ``s`` node is one Picard
    solve on the enlarged box.  The pressure is ``sum R_i R_j (B_i B_j)``.
    """
    s, period = default_s_nodes(b0.spec, n_s, lam)
    big = ybox.enlarged(margin)
    profiles, pressures, runs, history = [], [], [], []
    reuse = b0.spec.kind.value in ("SS",)
    for n, sn in enumerate(s):
        if reuse and runs:
            run = runs[0]
        else:
            data = np.nan_to_num(b0.rescaled_samples(big, np.exp(sn)), nan=0.0, posinf=0.0, neginf=0.0)
            run = picard_mild(data, big, taus=taus, tol=tol, max_iter=max_iter)
            runs.append(run)
            history.append(run.increments)
        Bn = run.b[-1]
        profiles.append(big.crop(Bn, ybox))
        pressures.append(big.crop(riesz_pressure(big, Bn), ybox))
    B = ProfileTrajectory(ybox, s, np.stack(profiles), np.stack(pressures), period=period)
    b = from_profile(B)
    rate_reports = [duhamel_rate(runs[0], r) for r in rates]
    return MildSolution(B, b, runs, history, rate_reports, max(r.duhamel_residual for r in runs))
