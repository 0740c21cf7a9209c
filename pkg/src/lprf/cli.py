"""Command line entry point: ``lprf analyze | solve | verify | sweep``.

Exit codes: 0 success, 2 configuration error, 3 stage failure,
4 integrity error.
"""

import argparse
import os
import sys

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_INTEGRITY = 0, 2, 3, 4

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _set_threads(n):
    if n is None:
        n = os.environ.get("LPRF_THREADS")
    if n is None:
        return
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be positive")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def build_parser():
    p = argparse.ArgumentParser(prog="lprf", description="Construct and verify forward SS/DSS Navier-Stokes solutions.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
        sp.add_argument("--out", metavar="DIR", help="output or run directory")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--threads", type=int, help="BLAS/OpenMP threads (falls back to LPRF_THREADS)")
        return sp

    common(sub.add_parser("analyze", help="norms, defects and LP blocks of the initial data"))
    common(sub.add_parser("solve", help="run the full construction into a run directory"))
    v = common(sub.add_parser("verify", help="re-run the checks on a stored run directory"), config=False)
    v.add_argument("run_dir", nargs="?", help="run directory (same as --out)")
    s = common(sub.add_parser("sweep", help="refinement sweep along one axis"))
    s.add_argument("--axis", required=True, choices=["k", "eps_moll", "grid"])
    return p


def _load_config(args):
    from .io import RunConfig

    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    if changes:
        from dataclasses import replace

        cfg = replace(cfg, **changes)
    return cfg


def _config_text(cfg):
    from .io import _fmt

    return "".join(f"{k} = {_fmt(v)}\n" for k, v in cfg.echo().items())


def _stored_config(run_dir):
    from .errors import IntegrityError
    from .io import RunConfig

    path = os.path.join(run_dir, "config.txt")
    if not os.path.exists(path):
        raise IntegrityError(f"missing {path}", path=path)
    return RunConfig.from_file(path)


def cmd_analyze(args):
    from .io import render_text_report, write_kv_report
    from .pipeline import analyze

    cfg = _load_config(args)
    rep = analyze(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_kv_report(os.path.join(cfg.output_dir, "analyze.kv"), rep)
    text = render_text_report(rep, title="lprf analyze")
    with open(os.path.join(cfg.output_dir, "analyze.txt"), "w") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_solve(args):
    from .pipeline import solve

    cfg = _load_config(args)
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.txt"), "w") as fh:
        fh.write(_config_text(cfg))
    rep = solve(cfg, cfg.output_dir)
    le = rep["checks"].get("local_energy", {})
    print(f"run directory: {cfg.output_dir}")
    print(f"fixed point residual: {rep['stages']['galerkin']['residual']:.3e}")
    if le:
        print(f"local energy battery: {'pass' if le['all_passed'] else 'FAIL'}")
    return EXIT_OK


def cmd_verify(args):
    from .io import read_kv_report
    from .pipeline import verify

    run_dir = args.run_dir or args.out
    if not run_dir:
        raise SystemExit("verify needs a run directory")
    from .errors import IntegrityError

    if not os.path.isdir(run_dir):
        raise IntegrityError(f"no run directory {run_dir}", path=run_dir)
    cfg = _stored_config(run_dir)
    _, path = verify(cfg, run_dir)
    stored = os.path.join(run_dir, "report.kv")
    if os.path.exists(stored):
        same = read_kv_report(stored) == read_kv_report(path)
        with open(stored, "rb") as a, open(path, "rb") as b:
            same = same and a.read() == b.read()
        print(f"verify report: {path} ({'identical to' if same else 'differs from'} report.kv)")
    else:
        print(f"verify report: {path}")
    return EXIT_OK


def cmd_sweep(args):
    from .pipeline import sweep, uniformity_band

    cfg = _load_config(args)
    header, rows, path = sweep(cfg, args.axis, cfg.output_dir)
    print(",".join(header))
    for r in rows:
        print(",".join(str(x) for x in r))
    ok = [r[3] for r in rows if r[2] == "ok"]
    print(f"energy-norm band (max/min - 1): {uniformity_band(ok):.4f}")
    if cfg.diagnostics_plots and ok:
        from .plotting import sweep_figure

        sweep_figure(
            os.path.join(cfg.output_dir, f"sweep_{args.axis}.png"),
            args.axis,
            [r[1] for r in rows],
            [r[3] for r in rows],
            [r[7] for r in rows],
        )
    print(f"table: {path}")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .errors import ConfigurationError, IntegrityError, LPRFError, PreconditionError

    try:
        return COMMANDS[args.command](args)
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ConfigurationError, PreconditionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LPRFError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
