import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lprf.errors import ConfigParseError, IntegrityError
from lprf.io import (
    RunConfig,
    parse_config_text,
    read_field,
    read_kv_report,
    render_text_report,
    write_csv,
    write_field,
    write_kv_report,
)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 4), st.integers(1, 5))))
def test_field_roundtrip_is_bit_exact(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("f") / "a.lprf"
    write_field(path, arr, L=8.0, s=0.5)
    back, meta = read_field(path)
    assert back.tobytes() == np.ascontiguousarray(arr).tobytes() or np.array_equal(back, arr, equal_nan=True)
    assert meta == {"L": 8.0, "s": 0.5}


def test_field_layout_is_x_fastest(tmp_path):
    arr = np.arange(6.0).reshape(2, 3)
    write_field(tmp_path / "a.lprf", arr)
    raw = (tmp_path / "a.lprf").read_bytes()
    body = np.frombuffer(raw[-48:], dtype="<f8")
    assert list(body) == [0.0, 3.0, 1.0, 4.0, 2.0, 5.0]


def test_corrupt_field_files(tmp_path):
    p = tmp_path / "a.lprf"
    write_field(p, np.ones((4, 4)))
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(IntegrityError, match="data bytes"):
        read_field(p)
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(IntegrityError, match="magic"):
        read_field(p)
    with pytest.raises(IntegrityError):
        read_field(tmp_path / "missing.lprf")


@pytest.mark.parametrize(
    "text, line, key",
    [
        ("grid.N = 32\ngrid.L 8\n", 2, "grid.L"),
        ("grid.N = 32\n\n# c\ngrid.N = 64\n", 4, "grid.N"),
        ("data.p =\n", 1, "data.p"),
        ("bogus.key = 1\n", 1, "bogus.key"),
        ("grid.N = 48\n", 1, "grid.N"),
        ("grid.N = 32\ndata.p = 7\n", 2, "data.p"),
        ("solver.tol = fast\n", 1, "solver.tol"),
    ],
)
def test_config_errors_name_line_and_key(text, line, key):
    with pytest.raises(ConfigParseError) as exc:
        RunConfig.from_text(text)
    assert exc.value.line == line and exc.value.key == key
    assert f"line {line}" in str(exc.value)


def test_config_values_and_echo_roundtrip():
    cfg = RunConfig.from_text(
        "data.profile = singular_swirl  # comment\ngrid.N = 64\nbackground.q = inf\nsweep.k = 8, 16\ndata.eps = auto\n"
    )
    assert cfg.data_profile == "singular_swirl" and cfg.grid_N == 64
    assert math.isinf(cfg.background_q) and cfg.sweep_k == [8, 16] and cfg.data_eps == "auto"
    from lprf.io import _fmt

    text = "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.echo().items())
    assert RunConfig.from_text(text) == cfg


def test_parse_config_text_types():
    e = parse_config_text("a.b = true\na.c = 1e-3\na.d = none\na.e = 3\n")
    assert e == {"a.b": (True, 1), "a.c": (1e-3, 2), "a.d": (None, 3), "a.e": (3, 4)}


def test_kv_report_and_text(tmp_path):
    tree = {"a": {"x": 1.0 / 3.0, "ok": True}, "b": [1, 2], "c": None}
    p = write_kv_report(tmp_path / "r.kv", tree)
    kv = read_kv_report(p)
    assert kv == {"a.x": repr(1.0 / 3.0), "a.ok": "true", "b": "1,2", "c": "none"}
    assert float(kv["a.x"]) == 1.0 / 3.0
    txt = render_text_report(tree, title="t")
    assert "  x: 0.3333333333333333" in txt
    with pytest.raises(IntegrityError):
        read_kv_report(tmp_path / "nope.kv")


def test_csv(tmp_path):
    p = write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 0.5], [2, float("nan")]])
    assert p.read_text() == "a,b\n1,0.5\n2,nan\n"
