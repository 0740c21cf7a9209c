import numpy as np
import pytest

from lprf.errors import ConfigurationError
from lprf.fields import PhysicalField, ProfileTrajectory, log_uniform_times
from lprf.grids import BoxGrid
from lprf.diagnostics import abc_flow
from lprf.transform import from_profile, leray_residual, nse_residual, to_profile


def _profile(grid, s, alpha=0.0, period=None):
    y = grid.points
    u = np.stack([np.stack([np.sin(y[1] + sn), np.cos(y[2]) * np.exp(-0.1 * sn), y[0] * 0.1]) for sn in s])
    p = np.stack([np.cos(y[0] - sn) for sn in s])
    return ProfileTrajectory(grid, s, u, p, period=period, alpha=alpha)


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_round_trip_profile(alpha):
    g = BoxGrid(2.0, 8)
    tr = _profile(g, np.linspace(-1, 1, 5), alpha)
    back = to_profile(from_profile(tr, alpha), alpha)
    assert np.abs(back.velocity - tr.velocity).max() < 1e-12
    assert np.abs(back.pressure - tr.pressure).max() < 1e-12


def test_to_profile_needs_frame():
    g = BoxGrid(2.0, 8)
    tr = _profile(g, np.linspace(0, 1, 4))
    fld = from_profile(tr, 0.0)
    with pytest.raises(ConfigurationError):
        to_profile(fld, alpha=0.5)


def test_eulerian_resampling_converges_to_ss_profile():
    # v(x, t) = t^-1/2 f(x / sqrt t) resampled at y = x / sqrt t gives f at every s
    y = BoxGrid(2.0, 8)
    times = log_uniform_times(1.0, 2.0, 3)

    def f(z):
        return np.stack([-z[1], z[0], np.zeros_like(z[0])]) / (1 + np.sum(z**2, axis=0))

    exact = f(y.points)
    errs = []
    for n in (64, 128):
        g = BoxGrid(8.0, n)
        v = PhysicalField(g, times, np.stack([f(g.points / np.sqrt(t)) / np.sqrt(t) for t in times]))
        tr = to_profile(v, grid=y, s=np.log(times))
        errs.append(np.abs(tr.velocity - exact).max())
    assert errs[1] < 0.05 * np.abs(exact).max()
    # multilinear interpolation is second order
    assert errs[0] / errs[1] > 3.0


def test_nse_residual_abc_is_small():
    g = BoxGrid(np.pi, 32)
    times = log_uniform_times(0.5, 1.0, 9)
    v, p = abc_flow(g, times, growth=-1.0, scale=1.0)
    rep = nse_residual(PhysicalField(g, times, v, p), spectral=True)
    assert rep.relative < 1e-2
    wrong = nse_residual(PhysicalField(g, times, v, 0 * p), spectral=True)
    assert wrong.relative > 10 * rep.relative


def test_leray_residual_needs_time_levels():
    g = BoxGrid(2.0, 8)
    with pytest.raises(ConfigurationError):
        leray_residual(_profile(g, np.linspace(0, 1, 3)))
