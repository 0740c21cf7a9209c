import numpy as np
import pytest

from lprf.diagnostics import (
    Bump,
    EulerianSource,
    FunctionSource,
    PhysicalBump,
    ProfileSource,
    ScaledProfileBump,
    abc_flow,
    apriori_bound_check,
    bump_battery,
    convergence_rate_fit,
    fit_rate,
    global_energy_check,
    local_energy_check,
)
from lprf.errors import ConfigurationError
from lprf.fields import ProfileTrajectory
from lprf.grids import BoxGrid
from lprf.linear import heat_evolve


@pytest.fixture(scope="module")
def pi64():
    return BoxGrid(np.pi, 64)


def _abc_source(grid, growth):
    def f(t):
        v, p = abc_flow(grid, [t], growth=growth)
        return v[0], p[0], None

    return FunctionSource(grid, f)


def test_bump_profile_values():
    b = Bump((0.0, 0.0, 0.0), 1.0, 1.0, 0.5)
    pts = np.array([[0.0, 0.4, 0.999, 1.2], [0.0] * 4, [0.0] * 4])
    val, dt, grad, lap = b(pts, 1.0)
    assert val[0] == 1.0 and val[1] == 1.0 and val[3] == 0.0
    assert 0.0 < val[2] < 1e-6
    assert dt[0] == 0.0


def test_bump_gradient_and_laplacian_match_finite_differences():
    b = Bump((0.1, -0.2, 0.05), 1.3, 2.0, 0.7)
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.9, 0.9, (3, 40))
    h = 1e-4
    val, dt, grad, lap = b(x, 2.3)
    fd_lap = -6 * val
    for i in range(3):
        e = np.zeros((3, 1))
        e[i] = h
        up, dn = b(x + e, 2.3)[0], b(x - e, 2.3)[0]
        assert np.allclose((up - dn) / (2 * h), grad[i], atol=1e-6)
        fd_lap = fd_lap + up + dn
    assert np.allclose(fd_lap / h**2, lap, atol=1e-4)
    fd_t = (b(x, 2.3 + h)[0] - b(x, 2.3 - h)[0]) / (2 * h)
    assert np.allclose(fd_t, dt, atol=1e-6)


def test_abc_flow_satisfies_local_energy_equality(pi64):
    src = _abc_source(pi64, -1.0)
    for test in bump_battery(4.0, t_center=0.5)[:4]:
        case = local_energy_check(src, test, "v")
        # an exact solution: equality up to quadrature
        assert abs(case.slack) <= 10 * case.tol
        assert case.passed


def test_growing_abc_fails(pi64):
    src = _abc_source(pi64, +1.0)
    cases = [local_energy_check(src, t, "v") for t in bump_battery(4.0, t_center=0.5)[:4]]
    assert all(not c.passed for c in cases)


def test_support_touching_boundary_rejected(pi64):
    src = _abc_source(pi64, -1.0)
    test = PhysicalBump(Bump((2.9, 0.0, 0.0), 0.5, 0.5, 0.25))
    with pytest.raises(ConfigurationError):
        local_energy_check(src, test, "v")


def test_unknown_form_and_A_form_preconditions(pi64):
    src = _abc_source(pi64, -1.0)
    t = bump_battery(4.0, t_center=0.5)[0]
    with pytest.raises(ConfigurationError):
        local_energy_check(src, t, "w")
    with pytest.raises(ConfigurationError):
        local_energy_check(src, t, "A")


def _smooth_profiles():
    g = BoxGrid(4.0, 32)
    x = g.points
    env = np.exp(-0.5 * np.sum(x**2, axis=0))
    n = 4
    T = 2 * np.log(2.0)
    s = np.arange(n) * T / n
    A = np.stack([env * np.stack([np.sin(x[1] + k), np.cos(x[2]), np.sin(x[0] - k)]) for k in s])
    B = np.stack([0.3 * env * np.stack([np.cos(x[2]), np.sin(x[0] + k), np.cos(x[1])]) for k in s])
    pA = np.stack([0.2 * env * np.cos(x[0] + k) for k in s])
    return (
        ProfileTrajectory(g, s, A, pA, period=T),
        ProfileTrajectory(g, s, B, None, period=T),
        T,
    )


def test_profile_and_physical_forms_agree():
    A, B, T = _smooth_profiles()
    src = ProfileSource(A, B)
    test = ScaledProfileBump(Bump((0.2, 0.0, -0.1), 2.0, 0.0, 0.5 * T))
    a = local_energy_check(src, test, "a")
    Af = local_energy_check(src, test, "A")
    # the two forms move terms across the inequality; the slack is invariant
    scale = max(abs(a.lhs), abs(a.rhs))
    assert abs(a.slack - Af.slack) < 1e-12 * scale
    assert abs(a.tol - Af.tol) < 1e-9 * scale


def test_eulerian_source_interpolates_and_bounds(box16):
    v = np.ones((2, 3) + box16.shape)
    v[1] *= 3.0
    src = EulerianSource(box16, np.array([1.0, 2.0]), v, np.zeros((2,) + box16.shape))
    u, _, _ = src.at(1.25)
    assert np.allclose(u, 1.5)
    with pytest.raises(ConfigurationError):
        src.at(2.5)


def test_global_energy_heat_flow_and_growing_control(box16):
    rng = np.random.default_rng(0)
    v0 = box16.ifft(box16.fft(rng.standard_normal((3,) + box16.shape)) * np.exp(-box16.k2))
    times = np.linspace(0.01, 0.5, 200)
    heat = np.stack([heat_evolve(v0, box16, t) for t in times])
    rep = global_energy_check(box16, times, heat, v0)
    assert rep.passed(1e-3 * rep.initial)
    v, _ = abc_flow(box16, times, growth=+1.0, scale=1.0)
    bad = global_energy_check(box16, times, v, v[0])
    assert bad.min_slack < -0.1 * bad.initial


def test_fit_rate_oracle_and_inconclusive():
    t = np.geomspace(0.01, 1.0, 8)
    fit = fit_rate(t, 3.0 * t**0.25, 0.25)
    assert fit.exponent == pytest.approx(0.25, abs=1e-12)
    assert fit.constant == pytest.approx(3.0)
    assert fit.passed
    assert not fit_rate(t, t**0.1, 0.25).passed
    assert not fit_rate(t, np.zeros(8), 0.25).conclusive
    with pytest.raises(ConfigurationError):
        fit_rate(t[:5], t[:5], 0.25)
    with pytest.raises(ConfigurationError):
        fit_rate(np.linspace(1, 2, 8), np.ones(8), 0.25)


def test_convergence_rate_of_heat_flow_is_inconclusive(box16):
    v0 = np.stack([np.sin(box16.points[1])] * 3)
    t = np.geomspace(0.01, 1.0, 8)
    heat = np.stack([heat_evolve(v0, box16, s) for s in t])
    assert not convergence_rate_fit(box16, t, heat, v0).conclusive


def test_apriori_zero_and_truncated(box16):
    z = np.zeros((3,) + box16.shape)
    rep = apriori_bound_check(box16, z, 1.0, times=[0.1], velocity=z[None])
    assert rep.A_r == 0.0 and rep.lhs == 0.0
    v0 = np.stack([np.sin(box16.points[1])] * 3)
    t = np.array([1e-5, 2e-5])
    vel = np.stack([heat_evolve(v0, box16, s) for s in t])
    rep = apriori_bound_check(box16, v0, 1.0, times=t, velocity=vel)
    assert rep.truncated
    assert rep.lhs >= rep.A_r
    with pytest.raises(ConfigurationError):
        apriori_bound_check(box16, v0, -1.0)
