"""End-to-end runs: analyze, split, mild solve, background, Galerkin, compose, verify.

A run directory holds the stored fields (``*.lprf``), ``stages.kv`` (what
each construction stage measured), ``report.kv``/``report.txt`` (stages
plus the check battery) and ``timing.kv`` (wall clock, kept out of the
report so reports stay byte-identical across runs).
"""

import os
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import data as datalib
from .analysis import (
    besov_block_magnitudes,
    sampled_besov,
    split_initial_data,
    weak_l3_norm,
    window,
)
from .diagnostics import (
    ProfileSource,
    apriori_bound_check,
    bump_battery,
    local_energy_check,
    profile_bump_battery,
    profile_rate_fit,
)
from .errors import ConfigurationError, IntegrityError, LPRFError
from .fields import PhysicalField, ProfileTrajectory, log_uniform_times
from .galerkin import (
    DriftMask,
    assemble_tensors,
    compose_solution,
    energy_identity_defect,
    gronwall_surrogate,
    make_basis,
    solve_periodic,
)
from .grids import BoxGrid, LogSphericalGrid
from .io import flatten, read_field, read_kv_report, render_text_report, write_csv, write_field, write_kv_report, _fmt
from .linear import build_U0, build_W, default_s_nodes, mild_solve_small, verify_assumption_U0
from .symmetry import SymmetrySpec, symmetry_defect
from .transform import from_profile, leray_residual


class StageFailure(LPRFError):
    """A construction stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


# -- data --------------------------------------------------------------------------


def make_data(cfg):
    params = {"amplitude": cfg.data_amplitude}
    if cfg.data_profile == "singular_swirl":
        params["gamma"] = cfg.data_gamma
    elif cfg.data_profile == "dss_swirl":
        params.update(lam=cfg.data_lam, delta=cfg.data_delta)
    elif cfg.data_profile == "zero":
        params = {}
    data = datalib.named(cfg.data_profile, **params)
    if cfg.data_profile == "zero" and cfg.data_symmetry == "DSS":
        data = datalib.zero(SymmetrySpec("DSS", cfg.data_lam))
    if data.spec.kind.value != cfg.data_symmetry:
        raise ConfigurationError(
            f"profile {cfg.data_profile!r} is {data.spec.kind.value}, config declares {cfg.data_symmetry}"
        )
    return data


def _symmetry_for(data, lam):
    return data.spec if data.spec.lam is not None else data.spec.restricted(lam)


def _static_defect(data, lam):
    g = LogSphericalGrid.spanning(0.5, 4.0, lam, 4)
    v = np.moveaxis(data(g.points), -1, 0)
    fld = PhysicalField(g, None, v)
    return symmetry_defect(fld, _symmetry_for(data, lam))


def _divergence_flag(data, lam, tol=1e-6):
    g = LogSphericalGrid.spanning(0.5, 2.0, lam, 4)
    pts = g.points
    div = datalib.pointwise_divergence(data, pts)
    scale = np.maximum(np.linalg.norm(data(pts), axis=-1) / np.linalg.norm(pts, axis=-1), 1e-30)
    rel = float(np.max(np.abs(div) / scale)) if np.any(data(pts)) else 0.0
    return rel, rel > tol


def analyze(cfg):
    """Norms, defects and the LP block table of the configured data."""
    data = make_data(cfg)
    grid = BoxGrid(cfg.grid_L, cfg.grid_N)
    samples = np.nan_to_num(data.sample(grid), nan=0.0, posinf=0.0, neginf=0.0)
    s_idx = 3.0 / cfg.data_p - 1.0
    blocks = besov_block_magnitudes(samples * window(grid), grid, s_idx, cfg.data_p, cfg.data_lam)
    rel, flagged = _divergence_flag(data, cfg.data_lam)
    return {
        "data": {"profile": data.name, "symmetry": data.spec.kind.value, "lam": cfg.data_lam},
        "grid": {"L": grid.L, "N": grid.N, "h": grid.h},
        "norms": {
            "weak_l3": weak_l3_norm(samples, grid.cell_volume),
            "besov": sampled_besov(data, grid, cfg.data_p, cfg.data_lam),
            "besov_p": cfg.data_p,
            "profile_bound": data.profile_bound,
            "l2_interior": grid.l2(samples, grid.ball_mask(0.5 * grid.L)),
        },
        "symmetry": {"defect": _static_defect(data, cfg.data_lam), "tolerance": 1e-8},
        "divergence": {"relative": rel, "tolerance": 1e-6, "flagged": flagged},
        "lp_blocks": {f"j{j:+d}": m for j, m in sorted(blocks.items())},
    }


# -- solve ---------------------------------------------------------------------------


@dataclass
class Bundle:
    """Stored fields of a run, enough to recompute every check."""

    grid: BoxGrid
    period: float
    s: np.ndarray
    a0: np.ndarray
    b0: np.ndarray
    U0: np.ndarray
    W: np.ndarray
    B: np.ndarray
    pB: np.ndarray
    A: np.ndarray
    pA: np.ndarray
    coefficients: np.ndarray
    galerkin_s: np.ndarray
    lam: float

    def profiles(self):
        g, s, T = self.grid, self.s, self.period
        A = ProfileTrajectory(g, s, self.A, self.pA, period=T)
        B = ProfileTrajectory(g, s, self.B, self.pB, period=T)
        u = ProfileTrajectory(g, s, self.A + self.B, self.pA + self.pB, period=T)
        U0 = ProfileTrajectory(g, s, self.U0, period=T)
        return A, B, u, U0


FIELD_FILES = ("a0", "b0", "U0", "W", "B", "pB", "A", "pA", "coefficients")


def save_bundle(bundle, out):
    g = bundle.grid
    meta = dict(L=g.L, N=g.N, period=bundle.period, lam=bundle.lam, s0=float(bundle.s[0]), n_s=bundle.s.size)
    for name in FIELD_FILES:
        extra = {}
        if name == "coefficients":
            extra = dict(galerkin_s0=float(bundle.galerkin_s[0]), galerkin_ds=float(bundle.galerkin_s[1] - bundle.galerkin_s[0]) if bundle.galerkin_s.size > 1 else 0.0)
        write_field(os.path.join(out, f"{name}.lprf"), getattr(bundle, name), **meta, **extra)


def load_bundle(out):
    arrays, metas = {}, {}
    for name in FIELD_FILES:
        arrays[name], metas[name] = read_field(os.path.join(out, f"{name}.lprf"))
    m = metas["a0"]
    for name, mm in metas.items():
        for key in ("L", "N", "period", "lam", "n_s"):
            if mm.get(key) != m.get(key):
                raise IntegrityError(f"{name}.lprf disagrees with a0.lprf on {key}", path=os.path.join(out, f"{name}.lprf"))
    grid = BoxGrid(float(m["L"]), int(m["N"]))
    T = float(m["period"])
    n_s = int(m["n_s"])
    s = float(m["s0"]) + T * np.arange(n_s) / n_s
    cm = metas["coefficients"]
    nsteps = arrays["coefficients"].shape[0]
    gs = float(cm["galerkin_s0"]) + float(cm["galerkin_ds"]) * np.arange(nsteps)
    try:
        return Bundle(grid, T, s, galerkin_s=gs, lam=float(m["lam"]), **arrays)
    except (TypeError, ValueError) as exc:
        raise IntegrityError(f"inconsistent field files in {out}: {exc}", path=out) from None


def _zero_traj(grid, s, period):
    return ProfileTrajectory(grid, s, np.zeros((s.size, 3) + grid.shape), np.zeros((s.size,) + grid.shape), period=period)


def _is_zero(data, grid):
    return not np.any(np.nan_to_num(data.sample(grid)))


def _clock(timing, name, t0):
    timing[name] = time.perf_counter() - t0
    return time.perf_counter()


def run_stages(cfg, timing=None):
    """Every construction stage; returns ``(bundle, stages report)``.

    Raises
    ------
    StageFailure
        Naming the failed stage; ``.partial`` holds what was finished.
    """
    timing = {} if timing is None else timing
    stages = {}
    t0 = time.perf_counter()
    data = make_data(cfg)
    grid = BoxGrid(cfg.grid_L, cfg.grid_N)
    lam = data.spec.lam or cfg.data_lam
    s_nodes, period = default_s_nodes(data.spec, cfg.galerkin_n_s, lam)
    partial = {"grid": grid}

    def fail(stage, exc):
        err = StageFailure(stage, exc)
        err.partial = partial
        err.stages = stages
        raise err from exc

    # split
    try:
        if not cfg.data_split:
            a0, b0 = datalib.zero(data.spec), data
            stages["split"] = {"route": "a0=0", "eps": None}
        else:
            eps = 0.1 if cfg.data_eps == "auto" else cfg.data_eps
            sp = split_initial_data(data, eps, cfg.data_p, lam, grid)
            a0, b0 = sp.a0, sp.b0
            route = "a0=0" if _is_zero(a0, grid) else ("b0=0" if _is_zero(b0, grid) else "level")
            stages["split"] = {
                "route": route,
                "eps": eps,
                "level": sp.level,
                "besov_b0": sp.besov_b0,
                "weak_l3_a0": sp.weak_l3_a0,
                "divergence_a0": sp.divergence_a0,
                "divergence_b0": sp.divergence_b0,
            }
    except LPRFError as exc:
        fail("split", exc)
    a0s = np.nan_to_num(a0.sample(grid))
    b0s = np.nan_to_num(b0.sample(grid))
    partial.update(a0=a0s, b0=b0s)
    t0 = _clock(timing, "split", t0)

    # mild solve for b
    mild = None
    if _is_zero(b0, grid):
        Btraj = _zero_traj(grid, s_nodes, period)
        stages["mild"] = {"skipped": True}
    else:
        try:
            mild = mild_solve_small(b0, grid, n_s=cfg.galerkin_n_s, tol=cfg.mild_tol, lam=lam, max_iter=cfg.mild_max_iter)
        except LPRFError as exc:
            fail("mild", exc)
        Btraj = mild.B
        stages["mild"] = {
            "skipped": False,
            "contraction": mild.contraction,
            "duhamel_residual": mild.duhamel_residual,
            "tolerance": cfg.mild_tol,
            "rates": {
                f"r{r.r:g}": {"exponent": r.exponent, "target": r.target, "conclusive": r.conclusive}
                for r in mild.rates
            },
        }
    partial["B"] = Btraj
    t0 = _clock(timing, "mild", t0)

    # background U0 and cutoff W
    cutoff = None
    bg = None
    if _is_zero(a0, grid):
        U0 = np.zeros((s_nodes.size, 3) + grid.shape)
        stages["background"] = {"skipped": True}
    else:
        try:
            bg = build_U0(a0, grid, n_s=cfg.galerkin_n_s, lam=lam, q=cfg.background_q)
            rep = verify_assumption_U0(bg)
            cutoff = build_W(bg, cfg.background_alpha)
        except LPRFError as exc:
            fail("background", exc)
        U0 = bg.U0.velocity
        stages["background"] = {
            "skipped": False,
            "U0": {
                "residual_relative": rep.residual_relative,
                "divergence_relative": rep.divergence_relative,
                "norm_l4": rep.norm_l4,
                "norm_lq": rep.norm_lq,
                "s_variation": rep.s_variation,
                "monotone": rep.monotone,
                "theta": {f"R{r:g}": v for r, v in zip(rep.theta_radii, rep.theta_values)},
            },
            "W": {
                "R0": cutoff.R0,
                "norm": cutoff.norm,
                "alpha": cfg.background_alpha,
                "q": cutoff.q,
                "divergence": cutoff.divergence,
                "newton_identity": cutoff.newton_identity,
            },
        }
    partial["U0"] = U0
    t0 = _clock(timing, "background", t0)

    # Galerkin
    try:
        basis = make_basis(grid.L, cfg.galerkin_k, grid)
        radius = cfg.galerkin_mask_radius
        if radius == "auto":
            mask = DriftMask.default(grid.L)
        else:
            mask = DriftMask(None if radius is None else float(radius), 0.1 * grid.L)
        tensors = assemble_tensors(
            basis,
            grid,
            cutoff=cutoff,
            Bfield=None if mild is None else Btraj,
            eps=cfg.galerkin_eps_moll,
            mask=mask,
            period=period,
            big=None if bg is None else bg.big,
        )
        if tensors.s_nodes.size == 1 and s_nodes.size > 1:
            tensors = _broadcast_nodes(tensors, s_nodes, period)
        result, state = solve_periodic(
            tensors, tol=cfg.solver_tol, max_iter=cfg.solver_max_iter, dt=cfg.galerkin_dt, theta=cfg.solver_damping, seed=cfg.seed
        )
    except LPRFError as exc:
        fail("galerkin", exc)
    ball = result.ball
    glhs, grhs = gronwall_surrogate(state, ball.C2, tensors.period)
    stages["galerkin"] = {
        "k": basis.k,
        "eps_moll": cfg.galerkin_eps_moll,
        "mask_radius": mask.radius,
        "steps_per_period": state.s.size - 1,
        "iterations": result.iterations,
        "residual": result.residual,
        "tolerance": cfg.solver_tol,
        "gamma": ball.gamma,
        "rho": ball.rho,
        "C2": ball.C2,
        "probe_max": ball.probe_max,
        "probes_ok": ball.probes_ok,
        "energy_identity_defect": energy_identity_defect(tensors, state.s, state.coefficients),
        "gronwall": {"lhs": glhs, "rhs": grhs},
        "energy_norm": energy_norm(state),
    }
    t0 = _clock(timing, "galerkin", t0)

    # compose
    try:
        comp = compose_solution(state, basis, cutoff, mild, grid, s_nodes=s_nodes, period=period)
    except LPRFError as exc:
        fail("compose", exc)
    stages["compose"] = {
        "residual_u": comp.residual_u,
        "residual_a": comp.residual_a,
        "residual_b": comp.residual_b,
        "interior": comp.interior,
    }
    W = cutoff.W.velocity if cutoff is not None else np.zeros_like(U0)
    bundle = Bundle(
        grid=grid,
        period=period,
        s=np.asarray(comp.A.s),
        a0=a0s,
        b0=b0s,
        U0=U0,
        W=W,
        B=comp.B.velocity,
        pB=comp.B.pressure,
        A=comp.A.velocity,
        pA=comp.A.pressure,
        coefficients=state.coefficients,
        galerkin_s=state.s,
        lam=lam,
    )
    _clock(timing, "compose", t0)
    return bundle, stages, {"state": state, "basis": basis, "tensors": tensors, "mild": mild, "cutoff": cutoff, "bg": bg}


def _broadcast_nodes(tensors, s_nodes, period):
    from dataclasses import replace

    n = s_nodes.size
    return replace(
        tensors,
        A=np.repeat(tensors.A, n, axis=0),
        C=np.repeat(tensors.C, n, axis=0),
        s_nodes=np.asarray(s_nodes, dtype=float),
        period=period,
    )


def energy_norm(state):
    """``max_s |U|^2 + int |grad U|^2 ds`` over one period (trapezoid)."""
    e = state.energy
    d = np.sum(state.coefficients**2 * state.k2[None, :], axis=1)
    return float(e.max() + np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(state.s)))


# -- checks ------------------------------------------------------------------------


def _dss_defect(u, lam, period):
    n_s = u.s.size
    g = LogSphericalGrid.spanning(0.5, 2.0, lam, 4, n_theta=6, n_az=8)
    times = np.exp(u.s[0] + period * np.arange(2 * n_s + 1) / n_s)
    v = from_profile(u, grid=g, times=times)
    return symmetry_defect(v, SymmetrySpec("DSS", lam))


def _endpoint_defect(bundle, mask):
    """``u(s0)`` as stored against ``u(s0 + T)`` rebuilt from the final Galerkin state.

    ``W`` and ``B`` are T-periodic by construction, so the rebuilt field is
    ``U(s0 + T) + W(s0) + B(s0)``; the relative interior L2 mismatch is
    the DSS defect ``lam u(lam y, s + T) = ...`` of the stored profile.
    """
    g = bundle.grid
    c = bundle.coefficients
    u0 = bundle.A[0] + bundle.B[0]
    ref = g.l2(u0, mask)
    if c.shape[1] == 0:
        return 0.0
    basis = make_basis(g.L, c.shape[1], g)
    end = basis.synthesize(c[-1:], g)[0] + bundle.W[0] + bundle.B[0]
    diff = g.l2(u0 - end, mask)
    return float(diff / ref) if ref > 0 else float(diff)


def checks(bundle, cfg):
    """The verification battery on stored fields (deterministic)."""
    A, B, u, U0 = bundle.profiles()
    g = bundle.grid
    out = {}
    interior = g.ball_mask(0.5 * g.L)
    c = bundle.coefficients
    n0 = float(np.linalg.norm(c[0]))
    out["symmetry"] = {
        "dss_defect": _endpoint_defect(bundle, interior),
        "dss_defect_sampled": _dss_defect(u, bundle.lam, bundle.period),
        "periodicity": float(np.linalg.norm(c[-1] - c[0]) / max(n0, 1e-30)) if n0 > 0 else float(np.linalg.norm(c[-1])),
        "tolerance": 1e-8,
    }
    out["norms"] = {
        "u_l2_interior": max(g.l2(x, interior) for x in u.velocity),
        "u_linf_interior": max(g.lp(x, np.inf, interior) for x in u.velocity),
        "U_energy_max": float(np.max(np.sum(c**2, axis=1))),
        "W_linf": float(np.max(np.linalg.norm(bundle.W, axis=1))) if np.any(bundle.W) else 0.0,
    }
    if u.s.size >= 4:
        ru = leray_residual(u, interior=0.5)
        out["residuals"] = {"leray_u_relative": ru.relative, "divergence_u": ru.divergence_norm}
    if cfg.diagnostics_energy:
        out["local_energy"] = local_energy_battery(u, A, B, g, bundle.period)
    if cfg.diagnostics_rates:
        times = log_uniform_times(1.0, 100.0, 12)
        fit = profile_rate_fit(A, U0, times, r=2.0)
        out["rates"] = {
            "a_minus_heat_r2": {
                "exponent": fit.exponent,
                "target": fit.target,
                "threshold": 0.20,
                "conclusive": fit.conclusive,
                "passed": bool(fit.conclusive and fit.exponent >= 0.20),
            }
        }
    if cfg.diagnostics_apriori:
        v0 = bundle.a0 + bundle.b0
        rows = {}
        for r in (0.5, 1.0, 2.0):
            rep = apriori_bound_check(g, v0, r, profile=u)
            rows[f"r{r:g}"] = {"A_r": rep.A_r, "sigma": rep.sigma, "lhs": rep.lhs, "ratio": rep.ratio, "box_limited": rep.box_limited}
        out["apriori"] = rows
    return out


def local_energy_battery(u, A, B, grid, period, seed=0):
    """Twelve physical bumps on ``v`` and twelve profile bumps on ``(A, B)``."""
    reach = 0.8 * grid.L
    res = {}
    worst = np.inf
    ok = True
    src_v = ProfileSource(u)
    for i, bump in enumerate(bump_battery(reach, seed=seed)):
        c = local_energy_check(src_v, bump, "v")
        res[f"v{i:02d}"] = {"lhs": c.lhs, "rhs": c.rhs, "slack": c.slack, "tol": c.tol, "passed": c.passed}
        ok &= c.passed
        worst = min(worst, c.slack / max(c.tol, 1e-300))
    src_A = ProfileSource(A, B if np.any(B.velocity) else None)
    for i, bump in enumerate(profile_bump_battery(reach, seed=seed, period=period)):
        c = local_energy_check(src_A, bump, "A")
        res[f"A{i:02d}"] = {"lhs": c.lhs, "rhs": c.rhs, "slack": c.slack, "tol": c.tol, "passed": c.passed}
        ok &= c.passed
        worst = min(worst, c.slack / max(c.tol, 1e-300))
    res["all_passed"] = bool(ok)
    res["worst_slack_over_tol"] = float(worst)
    return res


# -- run directories -------------------------------------------------------------


def assemble_report(cfg, stages, chk):
    # where the run was written is not part of its result; config.txt keeps it
    echo = {k: v for k, v in cfg.echo().items() if k != "output.dir"}
    return {"artifact": {"name": "lprf", "version": __version__}, "config": echo, "stages": stages, "checks": chk}


def write_reports(out, report, name="report"):
    write_kv_report(os.path.join(out, f"{name}.kv"), report)
    with open(os.path.join(out, f"{name}.txt"), "w") as fh:
        fh.write(render_text_report(report, title=f"lprf {name}"))


def solve(cfg, out, plots=None):
    """Run every stage into ``out``; returns the report tree."""
    os.makedirs(out, exist_ok=True)
    timing = {}
    try:
        bundle, stages, extras = run_stages(cfg, timing)
    except StageFailure as exc:
        _write_partial(out, exc)
        write_kv_report(os.path.join(out, "timing.kv"), {"wall_clock": timing})
        raise
    save_bundle(bundle, out)
    write_kv_report(os.path.join(out, "stages.kv"), {"stages": stages})
    t0 = time.perf_counter()
    chk = checks(bundle, cfg)
    timing["checks"] = time.perf_counter() - t0
    report = assemble_report(cfg, stages, chk)
    write_reports(out, report)
    write_kv_report(os.path.join(out, "timing.kv"), {"wall_clock": timing})
    write_plot_data(out, bundle, chk, extras)
    if plots if plots is not None else cfg.diagnostics_plots:
        from .plotting import solve_figures

        solve_figures(out, bundle, chk, extras)
    return report


def write_plot_data(out, bundle, chk, extras):
    """Plot-ready CSV tables next to the report."""
    state = extras["state"]
    write_csv(os.path.join(out, "energy.csv"), ["s", "energy"], zip(state.s, state.energy))
    le = chk.get("local_energy")
    if le:
        rows = [[k, v["lhs"], v["rhs"], v["slack"], v["tol"], v["passed"]] for k, v in le.items() if isinstance(v, dict)]
        write_csv(os.path.join(out, "local_energy.csv"), ["test", "lhs", "rhs", "slack", "tol", "passed"], rows)


def _write_partial(out, exc):
    partial = getattr(exc, "partial", {})
    for key in ("a0", "b0", "U0"):
        if key in partial:
            write_field(os.path.join(out, f"{key}.lprf"), partial[key], partial="true")
    with open(os.path.join(out, "FAILED"), "w") as fh:
        fh.write(f"stage = {exc.stage}\nerror = {exc.cause}\n")
    if getattr(exc, "stages", None):
        write_kv_report(os.path.join(out, "stages.kv"), {"stages": exc.stages})


def verify(cfg, out):
    """Recompute the check battery from a run directory and rewrite the report next to it."""
    bundle = load_bundle(out)
    stage_lines = read_kv_report(os.path.join(out, "stages.kv"))
    chk = checks(bundle, cfg)
    report = assemble_report(cfg, {}, chk)
    # stages come back verbatim as text
    lines = [(k, v) for k, v in flatten(report)]
    stage_items = [(k, v) for k, v in stage_lines.items()]
    head = [kv for kv in lines if kv[0].startswith(("artifact.", "config."))]
    tail = [kv for kv in lines if kv[0].startswith("checks.")]
    path = os.path.join(out, "verify_report.kv")
    with open(path, "w") as fh:
        for k, v in head:
            fh.write(f"{k} = {_fmt(v)}\n")
        for k, v in stage_items:
            fh.write(f"{k} = {v}\n")
        for k, v in tail:
            fh.write(f"{k} = {_fmt(v)}\n")
    return chk, path


# -- sweeps ------------------------------------------------------------------------


def sweep(cfg, axis, out):
    """Refinement sweep along ``k``, ``eps_moll`` or ``grid``; writes ``sweep_<axis>.csv``."""
    values = {"k": cfg.sweep_k, "eps_moll": cfg.sweep_eps_moll, "grid": cfg.sweep_grid}.get(axis)
    if values is None:
        raise ConfigurationError(f"unknown sweep axis {axis!r}; use k, eps_moll or grid")
    if len(values) < 3:
        from .errors import PreconditionError

        raise PreconditionError(f"a sweep needs at least 3 levels, got {len(values)}")
    rows = []
    prev = None
    os.makedirs(out, exist_ok=True)
    for val in values:
        from dataclasses import replace

        if axis == "k":
            c = replace(cfg, galerkin_k=int(val))
        elif axis == "eps_moll":
            c = replace(cfg, galerkin_eps_moll=float(val))
        else:
            c = replace(cfg, grid_N=int(val))
        try:
            bundle, stages, _ = run_stages(c)
        except StageFailure as exc:
            rows.append([axis, val, f"failed:{exc.stage}", np.nan, np.nan, np.nan, np.nan, np.nan])
            prev = None
            continue
        g = stages["galerkin"]
        Uv = bundle.A - bundle.W
        mask = bundle.grid.ball_mask(0.5 * bundle.grid.L)
        cauchy = np.nan
        if prev is not None and prev[0] == bundle.grid:
            num = np.sqrt(sum(bundle.grid.l2(a - b, mask) ** 2 for a, b in zip(Uv, prev[1])))
            den = np.sqrt(sum(bundle.grid.l2(b, mask) ** 2 for b in prev[1]))
            cauchy = float(num / den) if den > 0 else float(num)
        prev = (bundle.grid, Uv)
        rows.append([axis, val, "ok", g["energy_norm"], g["residual"], g["iterations"], stages["compose"]["residual_u"], cauchy])
    header = ["axis", "value", "status", "energy_norm", "fixed_point_residual", "iterations", "leray_residual_u", "cauchy_difference"]
    path = write_csv(os.path.join(out, f"sweep_{axis}.csv"), header, rows)
    return header, rows, path


def uniformity_band(values):
    """``max / min - 1`` of a set of energy norms (0 when all vanish)."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0 or vals.max() == 0:
        return 0.0
    if vals.min() <= 0:
        return np.inf
    return float(vals.max() / vals.min() - 1.0)
