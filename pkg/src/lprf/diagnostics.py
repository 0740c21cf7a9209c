"""Energy inequalities, the local a priori bound and decay-rate fits.

Local energy inequalities are assembled by quadrature against compactly
supported smoothstep bumps.  Fields given as similarity profiles are
integrated in ``(y, s)`` after the change of variables
``x = e^(s/2) y``, ``t = e^s``, ``dx dt = e^(5s/2) dy ds``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .analysis import ball_kernel, smoothstep
from .errors import ConfigurationError
from .fields import ProfileTrajectory
from .grids import BoxGrid, fd4_derivative
from .linear import heat_evolve

# -- test functions ------------------------------------------------------------


def _profile_1d(rho):
    """1 on ``rho <= 1/2``, 0 on ``rho >= 1``, C2; returns value and two derivatives in ``rho``."""
    x = np.clip(2.0 * rho - 1.0, 0.0, 1.0)
    inside = (rho > 0.5) & (rho < 1.0)
    val = 1.0 - smoothstep(x)
    d1 = np.where(inside, -30.0 * x**2 * (1 - x) ** 2 * 2.0, 0.0)
    d2 = np.where(inside, -60.0 * x * (1 - x) * (1 - 2 * x) * 4.0, 0.0)
    return val, d1, d2


@dataclass(frozen=True)
class Bump:
    """``g(|z - center| / radius) g(|tau - tau_c| / tau_r)`` in its own variables ``(z, tau)``."""

    center: tuple
    radius: float
    tau_center: float
    tau_radius: float

    def __call__(self, points, tau):
        """Value, ``d_tau``, spatial gradient and Laplacian at ``points (3, ...)``."""
        c = np.asarray(self.center, dtype=float).reshape((3,) + (1,) * (points.ndim - 1))
        d = points - c
        dist = np.sqrt(np.sum(d**2, axis=0))
        g, g1, g2 = _profile_1d(dist / self.radius)
        q = abs(tau - self.tau_center) / self.tau_radius
        h, h1, _ = _profile_1d(np.asarray(q))
        sign = np.sign(tau - self.tau_center)
        h = float(h)
        dh = float(h1) * sign / self.tau_radius
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist > 0, d / np.where(dist > 0, dist, 1.0), 0.0)
            radial = np.where(dist > 0, 2.0 * g1 / (self.radius * np.where(dist > 0, dist, 1.0)), 0.0)
        grad = (g1 / self.radius) * unit * h
        lap = (g2 / self.radius**2 + radial) * h
        return g * h, g * dh, grad, lap

    @property
    def tau_support(self):
        return self.tau_center - self.tau_radius, self.tau_center + self.tau_radius


@dataclass(frozen=True)
class PhysicalBump:
    """``phi(x, t)`` from a bump in ``(x, t)``, evaluated at ``x = e^(s/2) y``, ``t = e^s``."""

    bump: Bump

    def physical(self, y, s):
        t = np.exp(s)
        val, dt, grad, lap = self.bump(np.sqrt(t) * y, t)
        return val, dt, grad, lap

    @property
    def s_support(self):
        a, b = self.bump.tau_support
        if a <= 0:
            raise ConfigurationError("physical bumps must vanish near t = 0")
        return np.log(a), np.log(b)


@dataclass(frozen=True)
class ScaledProfileBump:
    """``phi(x, t) = t^(-1/2) psi(y, s)`` for a bump ``psi`` in ``(y, s)``."""

    bump: Bump

    def physical(self, y, s):
        t = np.exp(s)
        psi, ps, gy, ly = self.bump(y, s)
        drift = 0.5 * np.sum(y * gy, axis=0)
        return psi / np.sqrt(t), t**-1.5 * (-0.5 * psi + ps - drift), gy / t, ly * t**-1.5

    def profile(self, y, s):
        return self.bump(y, s)

    @property
    def s_support(self):
        return self.bump.tau_support


# -- field sources ---------------------------------------------------------


@dataclass
class ProfileSource:
    """Similarity profiles: the main field ``u`` (or ``A``) and optional drift field ``B``."""

    main: ProfileTrajectory
    other: ProfileTrajectory | None = None

    @property
    def grid(self):
        return self.main.grid

    def _at(self, traj, s):
        n = traj.s.size
        if n == 1:
            return traj.velocity[0], None if traj.pressure is None else traj.pressure[0]
        period = traj.period if traj.period is not None else n * traj.ds
        x = ((s - traj.s[0]) % period) / traj.ds
        i0 = int(np.floor(x + 1e-12)) % n
        w = x - np.floor(x + 1e-12)
        i1 = (i0 + 1) % n
        v = (1 - w) * traj.velocity[i0] + w * traj.velocity[i1]
        p = None if traj.pressure is None else (1 - w) * traj.pressure[i0] + w * traj.pressure[i1]
        return v, p

    def at(self, s):
        u, p = self._at(self.main, s)
        b = self._at(self.other, s)[0] if self.other is not None else None
        return u, p, b


@dataclass
class EulerianSource:
    """Fields ``v(x, t)``, ``pi`` (and optionally ``b``) on a box at increasing times."""

    grid: BoxGrid
    times: np.ndarray
    velocity: np.ndarray
    pressure: np.ndarray
    other: np.ndarray | None = None

    def at(self, t):
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ConfigurationError(f"time {t} outside the sampled range [{ts[0]}, {ts[-1]}]")
        i = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        lerp = lambda a: (1 - w) * a[i] + w * a[i + 1]  # noqa: E731
        return lerp(self.velocity), lerp(self.pressure), None if self.other is None else lerp(self.other)


@dataclass
class FunctionSource:
    """Eulerian fields given by a callable ``t -> (v, pi, b)`` on ``grid``."""

    grid: BoxGrid
    function: object

    def at(self, t):
        return self.function(t)


# -- local energy --------------------------------------------------------------


@dataclass
class LocalEnergyTestCase:
    form: str
    test: object
    lhs: float
    rhs: float
    tol: float
    terms: dict = field(default_factory=dict)

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def passed(self):
        return self.slack >= -10.0 * self.tol


def _jacobian(u, h):
    return np.stack([fd4_derivative(u, h, u.ndim - 3 + i) for i in range(3)])


def _integrals(form, u, p, b, h, test_vals, y=None, weights=(1.0, 1.0, 1.0, 1.0)):
    """Spatial integrals of one time slice; returns (lhs, rhs, term dict)."""
    if not np.any(u):
        return 0.0, 0.0, {"dissipation": 0.0, "heat": 0.0, "flux": 0.0, "coupling": 0.0}
    val, dtau, grad, lap = test_vals
    cL, c1, c2, c3 = weights
    dv = h**3
    ju = _jacobian(u, h)
    u2 = np.sum(u**2, axis=0)
    lhs = cL * 2.0 * np.sum(np.sum(ju**2, axis=(0, 1)) * val) * dv
    heat = c1 * np.sum(u2 * (dtau + lap)) * dv
    p = np.zeros_like(u2) if p is None else p
    if form == "v":
        flux = c2 * np.sum((u2 + 2.0 * p) * np.sum(u * grad, axis=0)) * dv
        extra = 0.0
    else:
        carrier = u if b is None else u + b
        fl = u2 * carrier + 2.0 * p * u
        if form == "A":
            fl = fl - 0.5 * u2 * y
            lhs += 0.5 * np.sum(u2 * val) * dv
        flux = c2 * np.sum(np.sum(fl * grad, axis=0)) * dv
        extra = 0.0
        if b is not None:
            jb = _jacobian(b, h)
            ugb = np.einsum("i...,ij...->j...", u, jb)
            extra = -c3 * 2.0 * np.sum(np.sum(ugb * u, axis=0) * val) * dv
    return lhs, heat + flux + extra, {"dissipation": lhs, "heat": heat, "flux": flux, "coupling": extra}


def _support_check(val, points, grid_L, h, margin_cells=3):
    inside = np.all(np.abs(points) <= grid_L - margin_cells * h, axis=0)
    if np.any((val != 0) & ~inside):
        raise ConfigurationError("test function support touches the boundary of the domain")


def _assemble(source, test, form, stride=1, n_tau=33):
    g = source.grid
    pts = g.points[:, ::stride, ::stride, ::stride]
    h = g.h * stride
    if isinstance(source, ProfileSource):
        a, b = test.s_support
    else:
        a, b = test.bump.tau_support
    taus = np.linspace(a, b, n_tau)
    wts = np.full(n_tau, (b - a) / (n_tau - 1))
    wts[[0, -1]] *= 0.5
    lhs = rhs = 0.0
    terms = {"dissipation": 0.0, "heat": 0.0, "flux": 0.0, "coupling": 0.0}
    for tau, w in zip(taus, wts):
        u, p, bb = source.at(tau)
        u = u[:, ::stride, ::stride, ::stride]
        p = None if p is None else p[::stride, ::stride, ::stride]
        bb = None if bb is None else bb[:, ::stride, ::stride, ::stride]
        if form == "A":
            tv = test.profile(pts, tau)
            weights = (1.0, 1.0, 1.0, 1.0)
        elif isinstance(source, ProfileSource):
            tv = test.physical(pts, tau)
            weights = (np.exp(tau / 2), np.exp(1.5 * tau), np.exp(tau), np.exp(tau / 2))
        else:
            tv = test.bump(pts, tau)
            weights = (1.0, 1.0, 1.0, 1.0)
        if not np.any(tv[0]) and not np.any(tv[2]):
            continue
        _support_check(tv[0], pts, g.L, h)
        l_, r_, t_ = _integrals(form, u, p, bb if form != "v" else None, h, tv, y=pts, weights=weights)
        lhs += w * l_
        rhs += w * r_
        for key in terms:
            terms[key] += w * t_[key]
    return lhs, rhs, terms


def local_energy_check(source, test, form="v", n_tau=33):
    """Assemble one local energy inequality and its quadrature tolerance.

    ``form`` selects the inequality: ``"v"`` (full field, physical
    variables), ``"a"`` (``b``-perturbed, physical variables) or ``"A"``
    (profile variables, with the ``-y/2`` drift).  The tolerance is the
    change in slack when the spatial spacing and the time step are doubled.

    Raises
    ------
    ConfigurationError
        If the test function's support reaches the outer three cells.
    """
    if form not in ("v", "a", "A"):
        raise ConfigurationError(f"unknown local energy form {form!r}")
    if form == "A" and not isinstance(source, ProfileSource):
        raise ConfigurationError("the A-form is assembled in profile variables")
    if form == "A" and not isinstance(test, ScaledProfileBump):
        raise ConfigurationError("the A-form needs a profile-variable bump")
    lhs, rhs, terms = _assemble(source, test, form, 1, n_tau)
    lhs2, rhs2, _ = _assemble(source, test, form, 2, (n_tau + 1) // 2)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    tol = abs((rhs - lhs) - (rhs2 - lhs2)) + 1e-13 * scale
    return LocalEnergyTestCase(form, test, float(lhs), float(rhs), float(tol), terms)


def bump_battery(L_interior, t_center=1.0, seed=0, scales=(0.5, 0.75, 1.0)):
    """Twelve physical bumps: 3 radii (fractions of ``L_interior / 2``) times 4 centres."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((4, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    offsets = np.array([0.0, 0.25, 0.25, 0.25])
    out = []
    for sc in scales:
        r = sc * 0.5 * L_interior
        for d, o in zip(dirs, offsets):
            c = tuple(float(v) for v in (o * r * d))
            out.append(PhysicalBump(Bump(c, r, t_center, 0.5 * t_center)))
    return out


def profile_bump_battery(L_interior, seed=0, period=2 * np.log(2.0), scales=(0.5, 0.75, 1.0)):
    """The matching battery of ``(y, s)`` bumps for the A-form."""
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((4, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    offsets = np.array([0.0, 0.25, 0.25, 0.25])
    out = []
    for sc in scales:
        r = sc * 0.5 * L_interior
        for d, o in zip(dirs, offsets):
            out.append(ScaledProfileBump(Bump(tuple(float(v) for v in o * r * d), r, 0.0, 0.5 * period)))
    return out


# -- global energy -------------------------------------------------------------


@dataclass
class GlobalEnergyReport:
    times: np.ndarray
    slack: np.ndarray
    initial: float

    @property
    def min_slack(self):
        return float(self.slack.min())

    def passed(self, tol):
        return self.min_slack >= -tol


def global_energy_check(grid, times, velocity, v0):
    """``|v0|^2 - |v(t)|^2 - 2 int_0^t |grad v|^2`` at every sample time.

    Finite-energy fields on a periodic box only; gradients are spectral
    and the time integral is the trapezoid rule from ``t = 0`` (where
    ``v = v0``).
    """
    times = np.asarray(times, dtype=float)
    ts = np.concatenate([[0.0], times])
    vs = np.concatenate([v0[None], velocity])
    e = np.array([grid.integrate(np.sum(v**2, axis=0)) for v in vs])
    d = np.array([grid.integrate(np.sum(grid.jacobian(v) ** 2, axis=(0, 1))) for v in vs])
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(ts))])
    slack = e[0] - e[1:] - 2.0 * cum[1:]
    return GlobalEnergyReport(times, slack, float(e[0]))


# -- a priori local bound --------------------------------------------------------


@dataclass
class AprioriBoundReport:
    r: float
    c0: float
    A_r: float
    sigma: float
    horizon: float
    lhs: float
    box_limited: bool = False
    truncated: bool = False

    @property
    def ratio(self):
        return self.lhs / self.A_r if self.A_r > 0 else 0.0


def _ball_sup(f2, grid, radius):
    """``sup_x0 int_(B_radius(x0)) f2`` over grid-node centres (zero outside the box)."""
    if not np.any(f2):
        return 0.0
    if radius >= grid.L:
        # ball wider than the half-box: centre it at the origin and clip to the box
        return float(grid.integrate(f2, grid.radius <= radius))
    k = ball_kernel(grid.h, radius)
    return float(max(fftconvolve(f2, k, mode="same").max(), 0.0))


def apriori_bound_check(grid, v0, r, c0=1.0 / 128.0, times=None, velocity=None, profile=None, n_time=24):
    """Left side of the local a priori bound against ``A_r``.

    Either Eulerian samples ``(times, velocity)`` on ``grid`` or a
    similarity ``profile`` (then ``v(x, t) = t^(-1/2) u(x / sqrt t, log t)``
    and balls of radius ``r`` become balls of radius ``r / sqrt t`` in
    ``y``).  The gradient term is bounded by the time integral of the
    per-time supremum, which can only overestimate the left side.
    """
    if r <= 0:
        raise ConfigurationError("radius must be positive")
    A_r = 0.5 * _ball_sup(np.sum(v0**2, axis=0), grid, r)
    sigma = c0 * min(r**2 / A_r**2, 1.0) if A_r > 0 else c0
    horizon = sigma * r**2
    if A_r == 0 and (velocity is None or not np.any(velocity)) and (profile is None or not np.any(profile.velocity)):
        return AprioriBoundReport(r, c0, 0.0, sigma, horizon, 0.0)
    if profile is not None:
        src = ProfileSource(profile)
        s_hi = np.log(horizon)
        s = np.linspace(s_hi - 12.0, s_hi, n_time)
        energy, grad = [], []
        limited = False
        for sn in s:
            u, _, _ = src.at(sn)
            rho = r * np.exp(-sn / 2)
            limited |= rho >= grid.L
            energy.append(np.exp(sn / 2) * 0.5 * _ball_sup(np.sum(u**2, axis=0), grid, rho))
            ju = grid.jacobian(u)
            grad.append(np.exp(1.5 * sn) * _ball_sup(np.sum(ju**2, axis=(0, 1)), grid, rho))
        # dt = e^s ds; |grad_x v|^2 dx = e^(-2s) e^(3s/2) |grad_y u|^2 dy
        g = np.array(grad) * np.exp(-s) * 1.0
        integral = float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(s)))
        lhs = max(energy) + integral
        return AprioriBoundReport(r, c0, A_r, sigma, horizon, float(lhs), box_limited=bool(limited))
    times = np.asarray(times, dtype=float)
    keep = times <= horizon * (1 + 1e-12)
    truncated = bool(times[-1] < horizon * (1 - 1e-9))
    ts = np.concatenate([[0.0], times[keep]])
    vs = np.concatenate([v0[None], velocity[keep]])
    energy = [0.5 * _ball_sup(np.sum(v**2, axis=0), grid, r) for v in vs]
    grad = np.array([_ball_sup(np.sum(grid.jacobian(v) ** 2, axis=(0, 1)), grid, r) for v in vs])
    integral = float(np.sum(0.5 * (grad[1:] + grad[:-1]) * np.diff(ts))) if ts.size > 1 else 0.0
    return AprioriBoundReport(r, c0, A_r, sigma, horizon, float(max(energy) + integral), truncated=truncated)


# -- decay rates -----------------------------------------------------------------


@dataclass
class RateFit:
    times: np.ndarray
    norms: np.ndarray
    exponent: float
    constant: float
    target: float
    tolerance: float = 0.05
    conclusive: bool = True

    @property
    def passed(self):
        return self.conclusive and self.exponent >= self.target - self.tolerance


def fit_rate(times, norms, target, tolerance=0.05, floor=1e-14):
    """Least-squares ``log norm = gamma log t + c``; one-sided pass ``gamma >= target - tolerance``."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.size < 6 or times.max() / times.min() < 30.0:
        raise ConfigurationError("rate fits need >= 6 times spanning a factor >= 30")
    if np.any(norms < floor):
        return RateFit(times, norms, np.nan, np.nan, target, tolerance, conclusive=False)
    slope, icpt = np.polyfit(np.log(times), np.log(norms), 1)
    return RateFit(times, norms, float(slope), float(np.exp(icpt)), target, tolerance)


def convergence_rate_fit(grid, times, velocity, data0, r=2.0, tolerance=0.05):
    """Rate of ``||v(t) - e^(t Lap) v0||_(L^r)`` for Eulerian box samples; target ``-1/2 + 3/(2r)``."""
    norms = [grid.lp(v - heat_evolve(data0, grid, t), r) for t, v in zip(times, velocity)]
    return fit_rate(times, norms, -0.5 + 1.5 / r, tolerance)


def profile_rate_fit(component, baseline, times, r=2.0, tolerance=0.05):
    """Rate of ``||a(t) - e^(t Lap) a0||_(L^r)`` from profiles.

    ``a(t) - e^(t Lap) a0 = t^(-1/2) (A - U0)(x / sqrt t, log t)``, whose
    ``L^r`` norm over the scaled box is ``t^(-1/2 + 3/(2r)) ||A - U0||``.
    """
    g = component.grid
    src_a = ProfileSource(component)
    src_0 = ProfileSource(baseline)
    norms = []
    for t in times:
        s = np.log(t)
        d = src_a.at(s)[0] - src_0.at(s)[0]
        norms.append(t ** (-0.5 + 1.5 / r) * g.lp(d, r))
    return fit_rate(times, norms, -0.5 + 1.5 / r, tolerance)


# -- manufactured controls -------------------------------------------------------


def abc_flow(grid, times, growth=-1.0, A=1.0, B=0.7, C=0.4, scale=None):
    """Arnold-Beltrami-Childress field ``e^(growth t) (A sin z + C cos y, ...)`` and ``pi = -|v|^2/2``.

    With ``growth = -k^2`` (``k = pi / L`` times an integer) this is an exact
    Navier-Stokes solution; any other growth rate breaks the equation.
    """
    k = np.pi / grid.L if scale is None else scale
    x, y, z = grid.points
    base = np.stack([
        A * np.sin(k * z) + C * np.cos(k * y),
        B * np.sin(k * x) + A * np.cos(k * z),
        C * np.sin(k * y) + B * np.cos(k * x),
    ])
    rate = growth * k * k
    v = np.stack([np.exp(rate * t) * base for t in times])
    p = -0.5 * np.sum(v**2, axis=1)
    return v, p
