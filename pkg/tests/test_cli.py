import math
import shutil

import numpy as np
import pytest

from lprf.cli import main
from lprf.io import read_field, read_kv_report, write_field

SMALL = "grid.N = 32\ngalerkin.k = 8\ngalerkin.n_s = 4\n"


def _cfg(tmp, text, name="run.cfg"):
    p = tmp / name
    p.write_text(text)
    return str(p)


@pytest.fixture(scope="module")
def swirl_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("swirl")
    out = tmp / "run"
    cfg = _cfg(tmp, SMALL + "diagnostics.plots = false\n")
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    return out


def _analyze(tmp, profile, capsys):
    cfg = _cfg(tmp, f"data.profile = {profile}\ngrid.N = 64\n")
    assert main(["analyze", "--config", cfg, "--out", str(tmp / profile)]) == 0
    capsys.readouterr()
    return read_kv_report(tmp / profile / "analyze.kv")


def test_analyze_zero_is_all_zero(tmp_path, capsys):
    kv = _analyze(tmp_path, "zero", capsys)
    for key in ("norms.weak_l3", "norms.besov", "norms.l2_interior", "symmetry.defect", "divergence.relative"):
        assert float(kv[key]) == 0.0
    assert kv["divergence.flagged"] == "false"
    assert all(float(v) == 0.0 for k, v in kv.items() if k.startswith("lp_blocks."))


def test_analyze_flags_radial_data(tmp_path, capsys):
    kv = _analyze(tmp_path, "radial", capsys)
    assert kv["divergence.flagged"] == "true"
    # |x|^-1 has weak-L3 norm (4 pi / 3)^(1/3)
    assert float(kv["norms.weak_l3"]) == pytest.approx((4 * math.pi / 3) ** (1 / 3), rel=0.02)


def test_analyze_swirl(tmp_path, capsys):
    kv = _analyze(tmp_path, "swirl", capsys)
    # |v| = sin(theta) / r: level sets of measure pi^2 / (4 s^3)
    assert float(kv["norms.weak_l3"]) == pytest.approx((math.pi**2 / 4) ** (1 / 3), rel=0.02)
    assert float(kv["symmetry.defect"]) < 1e-12
    assert kv["divergence.flagged"] == "false"


def test_solve_zero_data_with_figures(tmp_path, capsys):
    out = tmp_path / "zero"
    cfg = _cfg(tmp_path, SMALL + "data.profile = zero\n")
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    kv = read_kv_report(out / "report.kv")
    assert float(kv["checks.norms.u_l2_interior"]) == 0.0
    for name in ("energy.png", "slices.png", "local_energy.png", "energy.csv", "local_energy.csv"):
        assert (out / name).stat().st_size > 0
    timing = read_kv_report(out / "timing.kv")
    assert timing and not set(timing) & set(kv)


def test_verify_reproduces_report(swirl_run, capsys):
    assert main(["verify", str(swirl_run)]) == 0
    assert "identical to" in capsys.readouterr().out
    assert (swirl_run / "verify_report.kv").read_bytes() == (swirl_run / "report.kv").read_bytes()


def test_truncated_field_is_integrity_error(swirl_run, tmp_path, capsys):
    bad = tmp_path / "bad"
    shutil.copytree(swirl_run, bad)
    raw = (bad / "A.lprf").read_bytes()
    (bad / "A.lprf").write_bytes(raw[: len(raw) // 2])
    assert main(["verify", str(bad)]) == 4
    assert "A.lprf" in capsys.readouterr().err
    assert main(["verify", str(tmp_path / "nowhere")]) == 4


def test_noise_is_detected(swirl_run, tmp_path, capsys):
    noisy = tmp_path / "noisy"
    shutil.copytree(swirl_run, noisy)
    A, meta = read_field(noisy / "A.lprf")
    rng = np.random.default_rng(0)
    write_field(noisy / "A.lprf", A + 0.01 * np.abs(A).max() * rng.standard_normal(A.shape), **meta)
    assert main(["verify", str(noisy)]) == 0
    assert "differs from" in capsys.readouterr().out
    clean = read_kv_report(swirl_run / "report.kv")
    dirty = read_kv_report(noisy / "verify_report.kv")
    assert float(clean["checks.symmetry.dss_defect"]) < 1e-10
    assert float(dirty["checks.symmetry.dss_defect"]) > 1e-4
    slacks = [k for k in clean if k.startswith("checks.local_energy.A") and k.endswith(".slack")]
    assert slacks and any(float(clean[k]) != float(dirty[k]) for k in slacks)


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = _cfg(tmp_path, "grid.N = 32\ngrid.N 64\n")
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_short_sweep_is_precondition_error(tmp_path, capsys):
    cfg = _cfg(tmp_path, SMALL + "sweep.k = 8, 16\n")
    assert main(["sweep", "--config", cfg, "--axis", "k", "--out", str(tmp_path / "s")]) == 2
    assert "at least 3" in capsys.readouterr().err


def test_symmetry_mismatch_is_configuration_error(tmp_path, capsys):
    cfg = _cfg(tmp_path, "data.profile = dss_swirl\ndata.symmetry = SS\n")
    assert main(["analyze", "--config", cfg, "--out", str(tmp_path / "m")]) == 2
