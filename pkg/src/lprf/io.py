"""Run configuration, field files, reports and CSV tables.

Field files (``.lprf``) start with the magic line ``LPRF1``, then
``key=value`` header lines up to a line reading ``end``, then the raw
little-endian float64 array with the first spatial index varying fastest.
"""

import csv
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigParseError, ConfigurationError, IntegrityError

MAGIC = b"LPRF1"

# -- field files -----------------------------------------------------------------


def write_field(path, array, **meta):
    """Write ``array`` with a key=value header; returns the path."""
    arr = np.asarray(array, dtype="<f8")
    lines = [MAGIC.decode(), "dims=" + ",".join(str(n) for n in arr.shape), "dtype=<f8", "order=x-fastest"]
    for key, val in meta.items():
        if "\n" in str(val) or "=" in str(key):
            raise ConfigurationError(f"unusable header entry {key!r}")
        lines.append(f"{key}={_fmt(val)}")
    lines.append("end")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode())
        fh.write(np.asfortranarray(arr).tobytes(order="F"))
    return path


def read_field(path):
    """Return ``(array, meta)``; any inconsistency raises IntegrityError naming the file."""
    if not os.path.exists(path):
        raise IntegrityError(f"missing field file {path}", path=path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC + b"\n"):
        raise IntegrityError(f"{path}: bad magic", path=path)
    end = raw.find(b"\nend\n")
    if end < 0:
        raise IntegrityError(f"{path}: header not terminated", path=path)
    meta = {}
    for line in raw[len(MAGIC) + 1 : end].decode().splitlines():
        key, sep, val = line.partition("=")
        if not sep:
            raise IntegrityError(f"{path}: malformed header line {line!r}", path=path)
        meta[key] = val
    try:
        dims = tuple(int(n) for n in meta.pop("dims").split(",") if n)
    except (KeyError, ValueError):
        raise IntegrityError(f"{path}: bad dims entry", path=path) from None
    if meta.pop("dtype", None) != "<f8" or meta.pop("order", None) != "x-fastest":
        raise IntegrityError(f"{path}: unsupported dtype or order", path=path)
    body = raw[end + 5 :]
    count = math.prod(dims)
    if len(body) != 8 * count:
        raise IntegrityError(f"{path}: expected {8 * count} data bytes, found {len(body)}", path=path)
    arr = np.frombuffer(body, dtype="<f8").reshape(dims, order="F").copy(order="C")
    return arr, {k: _parse_value(v) for k, v in meta.items()}


# -- configuration ---------------------------------------------------------------


def _parse_value(text):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "auto"):
        return None if low == "none" else "auto"
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    if "," in t:
        return [_parse_value(p) for p in t.split(",") if p.strip()]
    return t.strip("\"'")


def parse_config_text(text):
    """Flat ``dotted.key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, val = body.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigParseError("expected 'key = value'", line=n, key=key.split()[0])
        if not key or any(c.isspace() for c in key) or key.startswith(".") or key.endswith(".") or ".." in key:
            raise ConfigParseError("malformed key", line=n, key=key)
        if not val.strip():
            raise ConfigParseError("missing value", line=n, key=key)
        if key in out:
            raise ConfigParseError("duplicate key", line=n, key=key)
        out[key] = (_parse_value(val), n)
    return out


@dataclass
class RunConfig:
    """Every knob of a run, with dotted names matching the config file."""

    data_profile: str = "swirl"
    data_amplitude: float = 1.0
    data_gamma: float = 0.2
    data_delta: float = 0.3
    data_symmetry: str = "SS"
    data_lam: float = 2.0
    data_p: float = 4.0
    data_eps: object = "auto"
    data_split: bool = True
    grid_L: float = 8.0
    grid_N: int = 32
    galerkin_k: int = 32
    galerkin_n_s: int = 8
    galerkin_dt: object = None
    galerkin_eps_moll: float = 0.1
    galerkin_mask_radius: object = "auto"
    background_alpha: float = 0.25
    background_q: float = math.inf
    solver_tol: float = 1e-8
    solver_max_iter: int = 200
    solver_damping: float = 0.5
    mild_tol: float = 1e-10
    mild_max_iter: int = 60
    diagnostics_energy: bool = True
    diagnostics_rates: bool = True
    diagnostics_apriori: bool = True
    diagnostics_plots: bool = True
    sweep_k: list = field(default_factory=lambda: [16, 32, 64])
    sweep_eps_moll: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    sweep_grid: list = field(default_factory=lambda: [32, 64])
    output_dir: str = "run"
    seed: int = 0

    @classmethod
    def keys(cls):
        return {f.name.replace("_", ".", 1): f for f in fields(cls)}

    @classmethod
    def from_entries(cls, entries):
        known = cls.keys()
        kwargs = {}
        for key, (val, line) in entries.items():
            if key not in known:
                raise ConfigParseError("unknown key", line=line, key=key)
            f = known[key]
            try:
                kwargs[f.name] = _coerce(val, f.type, f.default)
            except (TypeError, ValueError) as exc:
                raise ConfigParseError(str(exc), line=line, key=key) from None
        cfg = cls(**kwargs)
        cfg.validate(lines={known[k].name: ln for k, (_, ln) in entries.items()})
        return cfg

    @classmethod
    def from_text(cls, text):
        return cls.from_entries(parse_config_text(text))

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    def validate(self, lines=None):
        lines = lines or {}

        def bad(name, msg):
            raise ConfigParseError(msg, line=lines.get(name), key=name.replace("_", ".", 1))

        for name in ("solver_tol", "mild_tol", "galerkin_eps_moll", "grid_L", "data_p"):
            if not getattr(self, name) > 0:
                bad(name, "must be positive")
        if self.galerkin_eps_moll < 0:
            bad("galerkin_eps_moll", "must be non-negative")
        if self.grid_N < 4 or self.grid_N & (self.grid_N - 1):
            bad("grid_N", "must be a power of two >= 4")
        if self.galerkin_k < 0:
            bad("galerkin_k", "must be non-negative")
        if self.data_symmetry not in ("SS", "DSS"):
            bad("data_symmetry", "pipeline runs support SS and DSS")
        if not self.data_lam > 1:
            bad("data_lam", "lam must exceed 1")
        if not 0 < self.solver_damping <= 1:
            bad("solver_damping", "must lie in (0, 1]")
        if not (3 < self.data_p < 6):
            bad("data_p", "must lie in (3, 6)")
        if self.data_eps != "auto" and not (isinstance(self.data_eps, (int, float)) and self.data_eps > 0):
            bad("data_eps", "must be positive or 'auto'")
        if self.galerkin_dt is not None and not self.galerkin_dt > 0:
            bad("galerkin_dt", "must be positive")
        if not 0 < self.background_alpha:
            bad("background_alpha", "must be positive")

    def echo(self):
        """Key/value pairs in declaration order, using config-file names."""
        return {f.name.replace("_", ".", 1): getattr(self, f.name) for f in fields(self)}


def _coerce(val, typ, default):
    name = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    if name == "float":
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            if isinstance(val, str) and val.lower() in ("inf", "infinity"):
                return math.inf
            raise ValueError(f"expected a number, got {val!r}")
        return float(val)
    if name == "int":
        if isinstance(val, bool) or not isinstance(val, int):
            raise ValueError(f"expected an integer, got {val!r}")
        return val
    if name == "bool":
        if not isinstance(val, bool):
            raise ValueError(f"expected true/false, got {val!r}")
        return val
    if name == "str":
        return str(val)
    if name == "list":
        return val if isinstance(val, list) else [val]
    return val


# -- reports ---------------------------------------------------------------------


def _fmt(val):
    if isinstance(val, (bool, np.bool_)):
        return "true" if val else "false"
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    if val is None:
        return "none"
    if isinstance(val, (list, tuple, np.ndarray)):
        return ",".join(_fmt(v) for v in val)
    return str(val)


def flatten(tree, prefix=""):
    """Nested dicts to ``[(dotted.path, value)]`` in insertion order."""
    out = []
    for key, val in tree.items():
        path = f"{prefix}{key}"
        if isinstance(val, dict):
            out.extend(flatten(val, path + "."))
        else:
            out.append((path, val))
    return out


def write_kv_report(path, tree):
    with open(path, "w") as fh:
        for key, val in flatten(tree):
            fh.write(f"{key} = {_fmt(val)}\n")
    return path


def read_kv_report(path):
    if not os.path.exists(path):
        raise IntegrityError(f"missing report {path}", path=path)
    with open(path) as fh:
        return {k.strip(): v.strip() for k, _, v in (ln.partition("=") for ln in fh if ln.strip())}


def render_text_report(tree, title="lprf report"):
    lines = [title, "=" * len(title)]

    def walk(node, depth):
        for key, val in node.items():
            pad = "  " * depth
            if isinstance(val, dict):
                lines.append(f"{pad}{key}:")
                walk(val, depth + 1)
            else:
                lines.append(f"{pad}{key}: {_fmt(val)}")

    walk(tree, 0)
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path
