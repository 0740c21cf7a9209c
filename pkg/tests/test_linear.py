import numpy as np
import pytest

from lprf import data
from lprf.errors import CutoffError, DivergenceError, PreconditionError
from lprf.grids import BoxGrid
from lprf.linear import (
    _phi1,
    _phi2,
    build_U0,
    build_W,
    heat_evolve,
    mild_solve_small,
    mild_time_grid,
    picard_mild,
    riesz_pressure,
    verify_assumption_U0,
)


def test_heat_evolve_fourier_mode(box16):
    x, y, z = box16.points
    f = np.sin(2 * x) * np.cos(y)
    out = heat_evolve(f, box16, 0.3)
    assert np.abs(out - np.exp(-5 * 0.3) * f).max() < 1e-13


def test_riesz_pressure_oracle(box16):
    # v = (cos x, 0, 0): v1 v1 = (1 + cos 2x)/2 and pi = (-Lap)^-1 d1 d1 (v1 v1) = -cos(2x)/2
    x = box16.points[0]
    v = np.stack([np.cos(x), 0 * x, 0 * x])
    p = riesz_pressure(box16, v)
    assert np.abs(p - (-0.5 * np.cos(2 * x))).max() < 1e-13


def test_phi_functions_match_direct_formula():
    z = np.array([1e-6, 1e-4, 1e-2, 0.5, 3.0, 40.0])
    ref1 = np.array([float((1 - np.exp(-np.longdouble(v))) / np.longdouble(v)) for v in z])
    ref2 = np.array([float((np.exp(-np.longdouble(v)) - 1 + np.longdouble(v)) / np.longdouble(v) ** 2) for v in z])
    assert np.allclose(_phi1(z), ref1, rtol=1e-9)
    assert np.allclose(_phi2(z[2:]), ref2[2:], rtol=1e-6)
    assert np.allclose(_phi2(z[:2]), 0.5, rtol=1e-3)


def test_mild_time_grid():
    t = mild_time_grid(32)
    assert t[0] == 0 and t[-1] == 1 and t.size == 32 and np.all(np.diff(t) > 0)


def test_build_U0_rejects_non_solenoidal(box16):
    with pytest.raises(PreconditionError):
        build_U0(data.radial(1.0), BoxGrid(8.0, 16), n_s=4)


def test_U0_ss_is_s_independent_and_solves_linear_system():
    g = BoxGrid(8.0, 32)
    bg = build_U0(data.swirl(1.0), g, n_s=8)
    rep = verify_assumption_U0(bg)
    assert rep.s_variation < 1e-8
    assert rep.divergence_relative < 1e-10
    assert rep.monotone
    assert rep.residual_relative < 1e-2


def test_U0_dss_is_periodic_not_constant():
    g = BoxGrid(8.0, 32)
    bg = build_U0(data.dss_swirl(1.0, 2.0, 0.4), g, n_s=8)
    rep = verify_assumption_U0(bg)
    assert rep.s_variation > 1e-3


@pytest.fixture(scope="module")
def background():
    return build_U0(data.swirl(1.8), BoxGrid(16.0, 64), n_s=4)


@pytest.mark.parametrize("alpha", [0.5, 0.25])
def test_W_small_and_solenoidal(background, alpha):
    cf = build_W(background, alpha)
    assert cf.norm <= alpha
    assert cf.divergence < 1e-8
    assert cf.newton_identity < 1e-10


def test_W_radius_grows_as_alpha_shrinks(background):
    assert build_W(background, 0.25).R0 > build_W(background, 0.5).R0


def test_W_cutoff_error(background):
    with pytest.raises(CutoffError) as exc:
        build_W(background, 1e-3)
    assert exc.value.best_norm is not None


def test_picard_zero_data(box16):
    res = picard_mild(np.zeros((3,) + box16.shape), box16)
    assert not np.any(res.b)


def test_picard_diverges_for_large_data():
    g = BoxGrid(4.0, 16)
    with pytest.raises(DivergenceError):
        picard_mild(np.nan_to_num(data.swirl(60.0).sample(g)), g, max_iter=30)


def test_mild_small_ss_contracts():
    g = BoxGrid(8.0, 32)
    ms = mild_solve_small(data.swirl(0.05), g, n_s=4)
    assert ms.contraction < 0.5
    assert np.abs(ms.B.velocity - ms.B.velocity[0]).max() == 0.0
    for rate in ms.rates:
        assert rate.conclusive
