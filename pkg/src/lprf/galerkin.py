"""Mollified Galerkin solver for the time-periodic perturbed Leray system.

The unknown is ``U = u - W - B`` on the periodic y-box, expanded in real
solenoidal Fourier modes.  With ``V = W + B`` the coefficient system is

    d b_j/ds = sum_i A_ij b_i + sum_il B_ilj b_i b_l + C_j

where ``A`` collects diffusion, the drift ``u/2 + (y/2).grad u`` and the
coupling to ``V``; ``B_ilj = -((eta_eps * a_i).grad a_l, a_j)``; and
``C_j = -<R(W), a_j>``.

The drift is not periodic, so it is replaced by the masked skew form

    -m u / 4 + (m y / 2).grad u + div(m y) u / 4,

which coincides with ``u/2 + (y/2).grad u`` wherever the mask ``m`` is 1
and never adds energy where ``m < 1``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from .errors import BlowUpError, ConfigurationError, FixedPointError
from .fields import ProfileTrajectory
from .grids import BoxGrid, fd4_periodic
from .linear import riesz_pressure
from .transform import from_profile, leray_residual


# -- basis -----------------------------------------------------------------


def _polarizations(n):
    n = np.asarray(n, dtype=float)
    nh = n / np.linalg.norm(n)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    e1 = np.cross(nh, axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(nh, e1)
    return e1, e2


def _half_space(n):
    for c in n:
        if c:
            return c > 0
    return False


@dataclass
class Basis:
    """Real solenoidal Fourier modes ``c e cos(k.y - phase)`` on ``[-L, L]^3``.

    Modes are ordered by ``|n|``, then lexicographically by ``n``, then by
    polarisation and by cos/sin.  ``c = sqrt(2 / (2L)^3)`` makes them
    orthonormal in ``L^2``.
    """

    L: float
    n: np.ndarray
    pol: np.ndarray
    phase: np.ndarray

    @property
    def k(self):
        return len(self.phase)

    @property
    def wavevectors(self):
        return self.n * (np.pi / self.L)

    @property
    def k2(self):
        return np.sum(self.wavevectors**2, axis=1)

    @property
    def amplitude(self):
        return np.sqrt(2.0 / (2.0 * self.L) ** 3)

    @property
    def max_index(self):
        return int(np.max(np.abs(self.n))) if self.k else 0

    def _phase_field(self, y):
        # y: (3, P) -> (k, P)
        return self.wavevectors @ y - self.phase[:, None]

    def values(self, y):
        """Samples ``(k, 3, P)`` at points ``y`` of shape ``(3, P)``."""
        c = np.cos(self._phase_field(y))
        return self.amplitude * self.pol[:, :, None] * c[:, None, :]

    def gradients(self, y):
        """``G[i, m, l] = d_m a_(i, l)``, shape ``(k, 3, 3, P)``."""
        s = -np.sin(self._phase_field(y))
        kv = self.wavevectors
        return self.amplitude * kv[:, :, None, None] * self.pol[:, None, :, None] * s[:, None, None, :]

    def synthesize(self, coeffs, grid):
        """``sum_i coeffs[..., i] a_i`` sampled on a box grid, components first."""
        y = grid.points.reshape(3, -1)
        vals = self.values(y)
        out = np.tensordot(np.asarray(coeffs, dtype=float), vals, axes=(-1, 0))
        return out.reshape(np.shape(coeffs)[:-1] + (3,) + grid.shape)

    def project(self, f, grid):
        """``(f, a_i)`` by quadrature on ``grid``."""
        y = grid.points.reshape(3, -1)
        vals = self.values(y)
        flat = f.reshape(f.shape[:-4] + (3 * y.shape[1],))
        return flat @ vals.reshape(self.k, -1).T * grid.cell_volume


def make_basis(L, k, grid=None):
    """The first ``k`` solenoidal modes on ``[-L, L]^3``.

    ``grid`` (optional) is the quadrature grid the basis will be sampled
    on; every mode index must stay below its Nyquist index.
    """
    if k < 1:
        raise ConfigurationError("basis needs k >= 1")
    if L <= 0:
        raise ConfigurationError("box half-width must be positive")
    modes = []
    radius = 1
    while len(modes) < k:
        rng = np.arange(-radius, radius + 1)
        modes = []
        for a in rng:
            for b in rng:
                for c in rng:
                    n = (int(a), int(b), int(c))
                    if _half_space(n) and a * a + b * b + c * c <= radius * radius:
                        modes.append(n)
        modes.sort(key=lambda n: (n[0] ** 2 + n[1] ** 2 + n[2] ** 2, n))
        modes = [(n, p, ph) for n in modes for p in range(2) for ph in (0.0, 0.5 * np.pi)]
        radius += 1
    modes = modes[:k]
    ns = np.array([m[0] for m in modes], dtype=float)
    pols = np.array([_polarizations(m[0])[m[1]] for m in modes])
    phases = np.array([m[2] for m in modes])
    basis = Basis(float(L), ns, pols, phases)
    if grid is not None and basis.max_index >= grid.N // 2:
        raise ConfigurationError(
            f"k={k} needs mode index {basis.max_index}, beyond the Nyquist index {grid.N // 2 - 1} of {grid}"
        )
    return basis


# -- mollifier and mask ------------------------------------------------------


def mollifier_symbol(xi_norm, eps):
    """Fourier symbol of the unit-mass Gaussian ``eta_eps``; in ``(0, 1]``."""
    return np.exp(-0.5 * (eps * np.asarray(xi_norm)) ** 2)


def mollify(f, eps, grid):
    """``eta_eps * f`` on a periodic box (``eps = 0`` is the identity)."""
    if eps < 0:
        raise ConfigurationError("mollification width must be >= 0")
    if eps == 0:
        return np.array(f, dtype=float, copy=True)
    return grid.ifft(mollifier_symbol(np.sqrt(grid.k2), eps) * grid.fft(f))


@dataclass(frozen=True)
class DriftMask:
    """``m(r) = erfc((r - radius) / width) / 2``; ``radius=None`` means ``m = 1``."""

    radius: float | None
    width: float = 1.0

    def values(self, r):
        if self.radius is None:
            return np.ones_like(r)
        return 0.5 * erfc((r - self.radius) / self.width)

    def derivative(self, r):
        if self.radius is None:
            return np.zeros_like(r)
        return -np.exp(-(((r - self.radius) / self.width) ** 2)) / (self.width * np.sqrt(np.pi))

    def divergence_my(self, r):
        """``div(m(|y|) y) = 3 m + r m'``."""
        return 3.0 * self.values(r) + r * self.derivative(r)

    @classmethod
    def default(cls, L):
        return cls(0.6 * L, 0.1 * L)


def masked_drift(u, grid, mask, jac=None):
    """``-m u/4 + (m y/2).grad u + div(m y) u/4`` with spectral derivatives."""
    r = grid.radius
    m = mask.values(r)
    jac = grid.jacobian(u) if jac is None else jac
    y = grid.points
    adv = np.einsum("i...,ij...->j...", 0.5 * m * y, jac)
    return -0.25 * m * u + adv + 0.25 * mask.divergence_my(r) * u


# -- tensors -------------------------------------------------------------------


@dataclass
class GalerkinTensors:
    """Coefficient tensors of the Galerkin system.

    ``lap[i] = -|k_i|^2`` is the diagonal diffusion part handled by the
    integrating factor; ``A[n]`` holds the remaining linear coefficients at
    ``s_nodes[n]`` (convention ``d b_j/ds += A_ij b_i``).
    """

    lap: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    s_nodes: np.ndarray
    period: float
    eps: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.lap.size

    def _weights(self, s):
        n = self.s_nodes.size
        if n == 1:
            return 0, 0, 0.0
        x = ((s - self.s_nodes[0]) % self.period) / (self.period / n)
        i0 = int(np.floor(x + 1e-12)) % n
        w = min(max(x - np.floor(x + 1e-12), 0.0), 1.0)
        return i0, (i0 + 1) % n, w

    def linear_at(self, s):
        i0, i1, w = self._weights(s)
        return (1.0 - w) * self.A[i0] + w * self.A[i1], (1.0 - w) * self.C[i0] + w * self.C[i1]

    def full_A(self, s):
        A, _ = self.linear_at(s)
        return A + np.diag(self.lap)

    def cubic(self, b):
        """``sum_il B_ilj b_i b_l``."""
        return b @ np.tensordot(b, self.B, axes=(0, 0))

    def explicit_rhs(self, b, s):
        A, C = self.linear_at(s)
        return b @ A + self.cubic(b) + C

    def rhs(self, b, s):
        return b * self.lap + self.explicit_rhs(b, s)

    def energy_rate(self, b, s):
        """``d/ds |b|^2 / 2`` split as (linear, cubic, forcing)."""
        A = self.full_A(s)
        _, C = self.linear_at(s)
        return float(b @ A @ b), float(self.cubic(b) @ b), float(C @ b)

    def stability_dt(self):
        """``0.5 / max row sum`` of the explicit part (diffusion excluded)."""
        row = max(float(np.max(np.sum(np.abs(a), axis=1))) for a in self.A)
        return np.inf if row == 0 else 0.5 / row


def _exact_grid(L, max_index):
    """Cell-centred grid on which triple products of the basis integrate exactly."""
    M = 3 * max_index + 2
    M += M % 2
    return BoxGrid(L, max(M, 4))


def assemble_trilinear(basis, eps=0.0):
    """``B_ilj = -((eta_eps * a_i).grad a_l, a_j)`` by exact quadrature."""
    g = _exact_grid(basis.L, basis.max_index)
    y = g.points.reshape(3, -1)
    X = basis.values(y)
    G = basis.gradients(y)
    eta = mollifier_symbol(np.sqrt(basis.k2), eps)
    k = basis.k
    Xf = X.reshape(k, -1)
    B = np.empty((k, k, k))
    for i in range(k):
        F = np.einsum("mp,lmqp->lqp", X[i], G)
        B[i] = -eta[i] * (F.reshape(k, -1) @ Xf.T) * g.cell_volume
    return B


def assemble_linear_static(basis, grid, mask):
    """``(drift(a_i), a_j)`` in the masked skew form (basis only)."""
    y = grid.points.reshape(3, -1)
    r = grid.radius.reshape(-1)
    X = basis.values(y)
    G = basis.gradients(y)
    m = mask.values(r)
    k = basis.k
    Xf = X.reshape(k, -1)
    adv = np.einsum("mp,imlp->ilp", 0.5 * m * y, G).reshape(k, -1)
    skew = adv @ Xf.T * grid.cell_volume
    diss = -0.25 * (Xf * np.tile(m, 3)) @ Xf.T * grid.cell_volume
    return diss + 0.5 * (skew - skew.T)


def assemble_coupling(basis, grid, V):
    """``-(a_i.grad V, a_j) - (V.grad a_i, a_j)`` with derivatives moved onto the basis."""
    y = grid.points.reshape(3, -1)
    X = basis.values(y)
    G = basis.gradients(y)
    k = basis.k
    Vf = V.reshape(3, -1)
    Y = np.einsum("lp,jmlp->jmp", Vf, G).reshape(k, -1)
    Z = np.einsum("mp,imlp->ilp", Vf, G).reshape(k, -1)
    Xf = X.reshape(k, -1)
    return (Xf @ Y.T - Z @ Xf.T) * grid.cell_volume


def _forcing(basis, grid, W, Bf, LD):
    """``C_j = <L_m D, a_j> + int (B W + W B + W W)_(mi) d_m a_(j,i)``."""
    y = grid.points.reshape(3, -1)
    X = basis.values(y)
    G = basis.gradients(y)
    k = basis.k
    Wf = W.reshape(3, -1)
    Bf = Bf.reshape(3, -1)
    Q = Bf[:, None] * Wf[None, :] + Wf[:, None] * Bf[None, :] + Wf[:, None] * Wf[None, :]
    nonlinear = np.einsum("mip,jmip->j", Q, G) * grid.cell_volume
    linear = X.reshape(k, -1) @ LD.reshape(-1) * grid.cell_volume
    return linear + nonlinear


def linear_operator_on_D(cutoff, mask, big=None):
    """``L_m D = d_s D - Lap D - drift_m(D)`` at every s node (y-box samples).

    Derivatives are taken on the enlarged box where ``D`` was built, so the
    y-box boundary introduces no wrap-around error.
    """
    D = cutoff.D
    g = D.grid
    if D.velocity.shape[0] >= 4 and D.period is not None:
        dD = fd4_periodic(D.velocity, D.ds, axis=0)
    else:
        dD = np.zeros_like(D.velocity)
    out = np.empty_like(D.velocity)
    for n in range(D.velocity.shape[0]):
        if big is not None and cutoff.D_big is not None:
            Db = cutoff.D_big[n]
            lap = big.crop(big.laplacian(Db), g)
            jac = big.crop(big.jacobian(Db), g)
        else:
            lap = g.laplacian(D.velocity[n])
            jac = g.jacobian(D.velocity[n])
        out[n] = dD[n] - lap - masked_drift(D.velocity[n], g, mask, jac=jac)
    return out


def assemble_tensors(basis, grid, cutoff=None, Bfield=None, eps=0.0, mask=None, period=None, big=None):
    """Assemble ``A(s)``, ``B`` and ``C(s)`` at the s nodes of ``cutoff``/``Bfield``.

    Either field may be ``None`` (treated as zero).  ``mask`` defaults to
    :meth:`DriftMask.default`.
    """
    mask = DriftMask.default(grid.L) if mask is None else mask
    trajs = [t for t in (cutoff.W if cutoff is not None else None, Bfield) if t is not None]
    for t in trajs:
        if t.grid != grid:
            raise ConfigurationError(f"field grid {t.grid} does not match quadrature grid {grid}")
    if not np.isclose(basis.L, grid.L):
        raise ConfigurationError("basis box and quadrature grid differ")
    if basis.max_index >= grid.N // 2:
        raise ConfigurationError("basis not resolvable on the quadrature grid")
    if len(trajs) == 2 and not np.allclose(trajs[0].s, trajs[1].s):
        raise ConfigurationError("W and B are sampled at different s nodes")
    if trajs:
        s_nodes = trajs[0].s
        period = trajs[0].period if period is None else period
    else:
        s_nodes = np.zeros(1)
    if period is None:
        period = 2.0 * np.log(2.0)
    zero = np.zeros((s_nodes.size, 3) + grid.shape)
    W = cutoff.W.velocity if cutoff is not None else zero
    Bv = Bfield.velocity if Bfield is not None else zero
    LD = linear_operator_on_D(cutoff, mask, big) if cutoff is not None and np.any(W) else zero
    static = assemble_linear_static(basis, grid, mask)
    A = np.empty((s_nodes.size, basis.k, basis.k))
    C = np.empty((s_nodes.size, basis.k))
    for n in range(s_nodes.size):
        V = W[n] + Bv[n]
        A[n] = static + (assemble_coupling(basis, grid, V) if np.any(V) else 0.0)
        C[n] = _forcing(basis, grid, W[n], Bv[n], LD[n]) if np.any(W[n]) else 0.0
    return GalerkinTensors(
        lap=-basis.k2,
        A=A,
        B=assemble_trilinear(basis, eps),
        C=C,
        s_nodes=np.asarray(s_nodes, dtype=float),
        period=float(period),
        eps=eps,
        meta={"mask_radius": mask.radius, "mask_width": mask.width},
    )


# -- time integration ----------------------------------------------------------


@dataclass
class GalerkinState:
    s: np.ndarray
    coefficients: np.ndarray
    eps: float
    k2: np.ndarray

    @property
    def k(self):
        return self.coefficients.shape[1]

    @property
    def energy(self):
        return np.sum(self.coefficients**2, axis=1)

    def uniform_norm(self):
        """``||U||_(L^inf L^2) + ||U||_(L^2 H^1)`` over the stored period."""
        linf = float(np.sqrt(self.energy.max()))
        h1 = np.sum(self.coefficients**2 * (1.0 + self.k2), axis=1)
        ds = np.diff(self.s)
        l2h1 = float(np.sqrt(np.sum(0.5 * (h1[1:] + h1[:-1]) * ds)))
        return linf + l2h1


def step_count(tensors, T, dt=None, multiple=1):
    """Steps per period: a multiple of ``multiple`` meeting the stability bound."""
    if dt is not None:
        n = T / dt
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise ConfigurationError(f"dt={dt} does not divide the period {T}")
        n = int(round(n))
        if n % multiple:
            raise ConfigurationError(f"steps per period ({n}) must be a multiple of {multiple}")
        return n
    dt_max = tensors.stability_dt()
    n = 1 if not np.isfinite(dt_max) else int(np.ceil(T / dt_max - 1e-12))
    return multiple * int(np.ceil(n / multiple))


def integrate_period(tensors, b0, T=None, dt=None, n_steps=None, s0=0.0):
    """Integrating-factor Heun scheme over ``[s0, s0 + T]``.

    The diffusion diagonal is integrated exactly; everything else is
    explicit second-order Runge-Kutta.  Returns the trajectory including
    both endpoints.

    Raises
    ------
    BlowUpError
        On the first non-finite step.
    """
    T = tensors.period if T is None else T
    if n_steps is None:
        n_steps = step_count(tensors, T, dt)
    h = T / n_steps
    E = np.exp(tensors.lap * h)
    b = np.array(b0, dtype=float)
    out = np.empty((n_steps + 1, b.size))
    out[0] = b
    s = s0
    with np.errstate(over="raise", invalid="raise"):
        for n in range(n_steps):
            try:
                f0 = tensors.explicit_rhs(b, s)
                b1 = E * (b + h * f0)
                f1 = tensors.explicit_rhs(b1, s + h)
                b = E * b + 0.5 * h * (E * f0 + f1)
            except FloatingPointError:
                b = np.full_like(b, np.nan)
            if not np.all(np.isfinite(b)):
                raise BlowUpError(f"non-finite coefficients at step {n + 1} (s={s + h:.6g})", step=n + 1, time=s + h)
            s += h
            out[n + 1] = b
    return s0 + h * np.arange(n_steps + 1), out


def energy_identity_defect(tensors, s, traj):
    """Max over steps of ``|Delta |b|^2/2 / ds - mean(linear + forcing)|`` (cubic term excluded)."""
    worst = 0.0
    for n in range(len(s) - 1):
        h = s[n + 1] - s[n]
        lhs = 0.5 * (traj[n + 1] @ traj[n + 1] - traj[n] @ traj[n]) / h
        r0 = tensors.energy_rate(traj[n], s[n])
        r1 = tensors.energy_rate(traj[n + 1], s[n + 1])
        rhs = 0.5 * (r0[0] + r0[2] + r1[0] + r1[2])
        worst = max(worst, abs(lhs - rhs))
    return worst


# -- periodic fixed point ------------------------------------------------------


@dataclass
class AbsorbingBall:
    gamma: float
    c_max: float
    rho: float
    C2: float | None
    probe_max: float
    probes_ok: bool


def absorbing_ball(tensors):
    """Radius ``rho = sup|C| / gamma`` from ``d|b|^2/2 <= -gamma |b|^2 + |C||b|``.

    ``gamma = -max_s lambda_max(sym A(s))``; ``C2 = sup|C|^2 / (2 gamma - 1/4)``
    feeds the ``e^(s/4)`` Gronwall surrogate.
    """
    lam = -np.inf
    for n in range(tensors.A.shape[0]):
        A = tensors.A[n] + np.diag(tensors.lap)
        lam = max(lam, float(np.max(np.linalg.eigvalsh(0.5 * (A + A.T)))))
    gamma = -lam
    c_max = float(np.max(np.linalg.norm(tensors.C, axis=1)))
    rho = c_max / gamma if gamma > 0 else np.inf
    C2 = c_max**2 / (2 * gamma - 0.25) if 2 * gamma > 0.25 else None
    return AbsorbingBall(gamma, c_max, rho, C2, np.nan, False)


@dataclass
class FixedPointResult:
    b_star: np.ndarray
    residual: float
    history: list
    iterations: int
    theta: float
    ball: AbsorbingBall
    s: np.ndarray
    trajectory: np.ndarray


def periodic_fixed_point(period_map, b0, tol=1e-8, max_iter=200, theta=0.5, window=5, ball=None, probes=8, seed=0, probe_scale=1.0):
    """Fixed point of ``period_map`` by damped Picard with Anderson mixing.

    ``period_map(b) -> (s, traj)`` integrates one period.  When ``ball``
    is given, the map is probed at ``probes`` points on the sphere of
    radius ``probe_scale * ball.rho`` (fixed seed) to certify invariance.

    Raises
    ------
    FixedPointError
        No convergence in ``max_iter`` iterations, or a probe leaves the ball.
    """
    x = np.array(b0, dtype=float)
    s, traj = period_map(x)
    g = traj[-1] - x
    res = float(np.linalg.norm(g))
    history = [res]
    X, Gs = [], []
    it = 0
    while res >= tol and it < max_iter:
        it += 1
        X.append(x.copy())
        Gs.append(g.copy())
        X, Gs = X[-(window + 1):], Gs[-(window + 1):]
        step = theta * g
        if len(X) > 1:
            dX = np.array([X[i + 1] - X[i] for i in range(len(X) - 1)]).T
            dG = np.array([Gs[i + 1] - Gs[i] for i in range(len(Gs) - 1)]).T
            coef, *_ = np.linalg.lstsq(dG, g, rcond=None)
            step = theta * g - (dX + theta * dG) @ coef
        x_new = x + step
        s, traj = period_map(x_new)
        g_new = traj[-1] - x_new
        res_new = float(np.linalg.norm(g_new))
        if res_new > res and len(X) > 1:
            # residual grew: drop the mixing history and damp harder
            theta *= 0.5
            X, Gs = [], []
            x_new = x + theta * g
            s, traj = period_map(x_new)
            g_new = traj[-1] - x_new
            res_new = float(np.linalg.norm(g_new))
        x, g, res = x_new, g_new, res_new
        history.append(res)
    if res >= tol:
        raise FixedPointError(f"no periodic fixed point after {it} iterations (residual {res:.3g})", residual=res)
    if ball is not None and np.isfinite(ball.rho):
        rng = np.random.default_rng(seed)
        worst = 0.0
        radius = probe_scale * ball.rho
        for _ in range(probes):
            d = rng.standard_normal(x.size)
            d *= radius / np.linalg.norm(d)
            _, tr = period_map(d)
            worst = max(worst, float(np.linalg.norm(tr[-1])))
        ball.probe_max = worst
        ball.probes_ok = worst <= radius * (1 + 1e-9)
        if not ball.probes_ok:
            raise FixedPointError(
                f"period map leaves the ball of radius {radius:.4g} (reached {worst:.4g})",
                residual=res,
                suggested_radius=worst,
            )
    return FixedPointResult(x, res, history, it, theta, ball, s, traj)


def solve_periodic(tensors, tol=1e-8, max_iter=200, dt=None, n_s=None, theta=0.5, seed=0, certify=True):
    """Periodic Galerkin orbit: steps chosen so the s nodes fall on the step grid."""
    multiple = n_s or tensors.s_nodes.size
    n_steps = step_count(tensors, tensors.period, dt, multiple=multiple)
    s0 = float(tensors.s_nodes[0])

    def period_map(b):
        return integrate_period(tensors, b, n_steps=n_steps, s0=s0)

    ball = absorbing_ball(tensors)
    result = periodic_fixed_point(
        period_map, np.zeros(tensors.k), tol=tol, max_iter=max_iter, theta=theta, ball=ball if certify else None, seed=seed
    )
    result.ball = ball
    state = GalerkinState(result.s, result.trajectory, tensors.eps, -tensors.lap)
    return result, state


def gronwall_surrogate(state, C2, T):
    """``max_s e^(s/4)|U(s)|^2 - |U(0)|^2`` against ``e^(T/4) C2 T``."""
    s = state.s - state.s[0]
    lhs = float(np.max(np.exp(s / 4.0) * state.energy - state.energy[0]))
    rhs = np.inf if C2 is None else float(np.exp(T / 4.0) * C2 * T)
    return lhs, rhs


# -- pressure and composition --------------------------------------------------


def recover_pressure(A, grid, Bfield=None):
    """``p_A = sum R_i R_j (A_i A_j + A_i B_j + B_i A_j)`` per s node (zero mean)."""
    out = []
    for n in range(A.shape[0]):
        p = riesz_pressure(grid, A[n])
        if Bfield is not None:
            p = p + riesz_pressure(grid, A[n], Bfield[n]) + riesz_pressure(grid, Bfield[n], A[n])
        out.append(p)
    return np.stack(out)


@dataclass
class Composition:
    """``u = A + B`` in profile variables and ``v = a + b`` in physical ones."""

    U: ProfileTrajectory
    A: ProfileTrajectory
    B: ProfileTrajectory
    u: ProfileTrajectory
    v: object
    a: object
    b: object
    residual_u: float
    residual_a: float
    residual_b: float
    interior: float


def compose_solution(state, basis, cutoff, mild, grid, interior=0.5, s_nodes=None, period=None):
    """``A = U + W``, ``u = A + B``, ``v = a + b``, ``pi = p_a + p_b``.

    The residual of the ``a`` equation is measured in profile variables as
    the difference of the full Leray residual of ``u`` and the residual of
    ``B`` alone.  ``s_nodes``/``period`` are needed only when both
    ``cutoff`` and ``mild`` are ``None``.
    """
    source = cutoff.W if cutoff is not None else (mild.B if mild is not None else None)
    if source is not None:
        s_nodes, period = source.s, source.period
    elif s_nodes is None:
        raise ConfigurationError("s nodes are required when there is no W or B field")
    s_nodes = np.asarray(s_nodes, dtype=float)
    for t in (cutoff.W if cutoff is not None else None, mild.B if mild is not None else None):
        if t is not None and t.grid != grid:
            raise ConfigurationError("component grids differ")
    idx = np.array([int(np.argmin(np.abs(state.s - sn))) for sn in s_nodes])
    if not np.allclose(state.s[idx], s_nodes, atol=1e-9):
        raise ConfigurationError("Galerkin steps do not hit the profile s nodes")
    Uv = basis.synthesize(state.coefficients[idx], grid)
    Wv = cutoff.W.velocity if cutoff is not None else np.zeros_like(Uv)
    Bv = mild.B.velocity if mild is not None else np.zeros_like(Uv)
    pB = mild.B.pressure if mild is not None and mild.B.pressure is not None else np.zeros((len(s_nodes),) + grid.shape)
    Av = Uv + Wv
    pA = recover_pressure(Av, grid, Bv)
    U = ProfileTrajectory(grid, s_nodes, Uv, period=period)
    A = ProfileTrajectory(grid, s_nodes, Av, pA, period=period)
    B = ProfileTrajectory(grid, s_nodes, Bv, pB, period=period)
    u = ProfileTrajectory(grid, s_nodes, Av + Bv, pA + pB, period=period)
    a = from_profile(A)
    b = from_profile(B)
    v = from_profile(u)
    if len(s_nodes) >= 4:
        ru = leray_residual(u, spectral=False, interior=interior)
        rb = leray_residual(B, spectral=False, interior=interior)
        diff = ru.momentum - rb.momentum
        mask = ru.mask
        ra = float(np.sqrt(u.ds * sum(grid.integrate(np.sum(d**2, axis=0), mask) for d in diff)))
        res_u, res_b = ru.relative, rb.relative
        res_a = ra / max(ru.reference_norm, 1e-30)
    else:
        res_u = res_a = res_b = np.nan
    return Composition(U, A, B, u, v, a, b, res_u, res_a, res_b, interior)
