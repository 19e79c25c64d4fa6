"""Command-line interface.

One subcommand per pipeline stage: sample drivers, lift them, measure
p-variation and block counts, solve driven systems, differentiate
solutions, estimate densities, and run convergence studies.  A JSON
config file can supply any long-tail options (model parameters, mesh
schedules); explicit flags win over config values.

Exit codes: 0 success, 2 configuration problems, 3 numerical failures,
4 inconclusive studies.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys

from .errors import (ConfigurationError, InconclusiveStudyError,
                     NumericalError, RoughWZError)

__all__ = ["main", "build_parser"]


def _set_thread_env(threads: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(threads)
    except ImportError:
        pass  # env vars above cover fresh pools; running pools keep their size


@contextlib.contextmanager
def _open_out(path: str | None, mode: str = "w"):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, mode, newline="") as f:
            yield f


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ConfigurationError("config file must hold a JSON object")
    return cfg


def _pick(args, cfg: dict, name: str, default=None, required: bool = False):
    """Flag value if given, else config value, else default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is None:
        value = cfg.get(name, default)
    if value is None and required:
        raise ConfigurationError(f"missing required option --{name}")
    return value


def _model_from(args, cfg: dict):
    from .vectorfields import model_preset
    name = _pick(args, cfg, "model", required=True)
    params = cfg.get("model_params", {})
    inline = getattr(args, "model_params", None)
    if inline:
        params = {**params, **json.loads(inline)}
    return model_preset(name, **params)


def _read_path_csv(path: str):
    """First path from a CSV written by the sample-fbm subcommand."""
    import numpy as np
    from .fbm import SamplePath, TimeGrid
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][:2] != ["path_id", "t"]:
        raise ConfigurationError(f"{path} is not a sampled-path CSV")
    first = rows[1][0]
    times, values = [], []
    for row in rows[1:]:
        if row[0] != first:
            break
        times.append(float(row[1]))
        values.append([float(x) for x in row[2:]])
    return SamplePath(TimeGrid(times), np.asarray(values))


def _driver_from(args, cfg: dict):
    """A driver path: from --in CSV when given, else freshly sampled."""
    from .fbm import sample_fbm
    if getattr(args, "infile", None):
        return _read_path_csv(args.infile)
    h = float(_pick(args, cfg, "h", required=True))
    m = int(_pick(args, cfg, "m", required=True))
    dim = int(_pick(args, cfg, "dim", 1))
    seed = int(_pick(args, cfg, "seed", 0))
    return sample_fbm(h, m, 1, seed, dim=dim)[0]


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_sample_fbm(args, cfg):
    from .fbm import paths_to_csv, sample_fbm
    ens = sample_fbm(float(_pick(args, cfg, "h", required=True)),
                     int(_pick(args, cfg, "m", required=True)),
                     int(_pick(args, cfg, "count", 1)),
                     int(_pick(args, cfg, "seed", 0)),
                     dim=int(_pick(args, cfg, "dim", 1)),
                     method=_pick(args, cfg, "method", "auto"))
    with _open_out(args.out) as f:
        paths_to_csv(ens, f)
    return 0


def _cmd_lift(args, cfg):
    from .roughpath import lift_piecewise_linear, lift_to_csv
    path = _driver_from(args, cfg)
    levels = lift_piecewise_linear(path, int(_pick(args, cfg, "level", 3)))
    with _open_out(args.out) as f:
        lift_to_csv(levels, f)
    return 0


def _cmd_pvar(args, cfg):
    from .roughpath import (homogeneous_pvar_norm, intrinsic_control,
                            lift_piecewise_linear, pvar_seminorm)
    path = _driver_from(args, cfg)
    p = float(_pick(args, cfg, "p", required=True))
    level = int(_pick(args, cfg, "level", 3))
    window = None
    if args.window:
        window = (float(args.window[0]), float(args.window[1]))
    levels = lift_piecewise_linear(path, level)
    used = min(level, max(1, int(p)), 3)
    out = {
        "p": p,
        "level": level,
        "window": list(window) if window else [0.0, 1.0],
        "seminorms": {str(k): pvar_seminorm(levels, k, p, window)
                      for k in range(1, used + 1)},
        "control": intrinsic_control(levels, p, window),
        "homogeneous_norm": homogeneous_pvar_norm(levels, p, window),
    }
    with _open_out(args.out) as f:
        json.dump(out, f, indent=2)
        f.write("\n")
    return 0


def _cmd_nfunc(args, cfg):
    from .roughpath import lift_piecewise_linear, n_functional
    path = _driver_from(args, cfg)
    p = float(_pick(args, cfg, "p", required=True))
    beta = float(_pick(args, cfg, "beta", required=True))
    levels = lift_piecewise_linear(path, min(3, max(1, int(p))))
    count, breaks = n_functional(levels, p, beta)
    with _open_out(args.out) as f:
        json.dump({"p": p, "beta": beta, "count": int(count),
                   "breaks": [float(t) for t in breaks]}, f, indent=2)
        f.write("\n")
    return 0


def _cmd_solve(args, cfg):
    from .ode import solve_driven, trajectory_to_csv
    model = _model_from(args, cfg)
    driver = _driver_from(args, cfg)
    solved = solve_driven(model, driver, with_jacobian=args.with_jacobian,
                          tol=float(_pick(args, cfg, "tol", 1e-10)))
    with _open_out(args.out) as f:
        trajectory_to_csv(solved, f)
    return 0


def _cmd_deriv(args, cfg):
    import numpy as np
    from .malliavin import directional_derivative
    model = _model_from(args, cfg)
    driver = _driver_from(args, cfg)
    order = int(_pick(args, cfg, "order", 1))
    axis = int(_pick(args, cfg, "direction-axis", 0))
    if not 0 <= axis < driver.dim:
        raise ConfigurationError("direction axis outside driver dimensions")
    direction = np.zeros_like(driver.values)
    direction[:, axis] = driver.grid.times  # unit-slope ramp direction
    deriv = directional_derivative(model, driver, direction, order)
    with _open_out(args.out) as f:
        w = csv.writer(f)
        e = model.state_dim
        w.writerow(["t"] + [f"xi{k}_{i + 1}" for k in range(1, order + 1)
                            for i in range(e)])
        for n, t in enumerate(driver.grid.times):
            row = [f"{t:.17g}"]
            for k in range(order):
                row += [f"{v:.17g}" for v in deriv.values[k, n]]
            w.writerow(row)
    return 0


def _cmd_density(args, cfg):
    from .density import density_to_csv, estimate_density
    model = _model_from(args, cfg)
    delta = _pick(args, cfg, "delta")
    est = estimate_density(
        model,
        float(_pick(args, cfg, "h", required=True)),
        int(_pick(args, cfg, "m", required=True)),
        int(_pick(args, cfg, "count", required=True)),
        int(_pick(args, cfg, "seed", 0)),
        t=float(_pick(args, cfg, "t", 1.0)),
        delta=None if delta is None else float(delta),
        axis_points=int(_pick(args, cfg, "axis-points", 201)),
    )
    meta_path = args.out + ".json" if args.out and args.out != "-" else None
    with _open_out(args.out) as f:
        if meta_path:
            with open(meta_path, "w") as mf:
                density_to_csv(est, f, mf)
        else:
            density_to_csv(est, f)
            json.dump(est.meta(), sys.stderr, indent=2)
            sys.stderr.write("\n")
    return 0


def _cmd_study(args, cfg):
    from .experiments import StudyConfig, run_study
    fields = {}
    for key in ("kind", "h", "m_schedule", "count", "seed", "m_ref", "model",
                "model_params", "dim", "t", "p", "beta", "eta", "delta",
                "max_count", "tol", "axis_points"):
        if key in cfg:
            fields[key] = cfg[key]
    if args.kind:
        fields["kind"] = args.kind
    for name in ("h", "count", "seed", "m_ref", "p", "beta", "model"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if args.m_schedule:
        try:  # accept both "--m-schedule 8 16 32" and "--m-schedule 8,16,32"
            fields["m_schedule"] = [int(m) for part in args.m_schedule
                                    for m in str(part).split(",") if m]
        except ValueError as exc:
            raise ConfigurationError(f"bad --m-schedule: {exc}") from exc
    if args.model_params:
        fields["model_params"] = {**fields.get("model_params", {}),
                                  **json.loads(args.model_params)}
    config = StudyConfig(**fields)

    out_dir = args.out if args.out and args.out != "-" else "."
    try:
        report = run_study(config)
    except InconclusiveStudyError as exc:
        if exc.report is not None:
            _write_report(exc.report, out_dir)
        raise
    _write_report(report, out_dir)
    return 0


def _write_report(report, out_dir: str) -> None:
    """report.json plus one <kind>.csv in the output directory."""
    import platform

    from . import BACKEND, __version__

    os.makedirs(out_dir, exist_ok=True)
    doc = report.as_dict()
    doc["versions"] = {
        "roughwz": __version__,
        "python": platform.python_version(),
        "numpy": __import__("numpy").__version__,
    }
    doc["provenance"] = {
        "kernel_backend": BACKEND,
        "argv": sys.argv[1:],
    }
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(os.path.join(out_dir, f"{report.kind}.csv"), "w", newline="") as f:
        report.to_csv(f)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default options")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP thread pools")
    common.add_argument("--out", default=None,
                        help="output file ('-' or omitted: stdout); "
                             "for study: output directory")

    driver_src = argparse.ArgumentParser(add_help=False)
    driver_src.add_argument("--in", dest="infile",
                            help="driver CSV (as written by sample-fbm)")
    driver_src.add_argument("--h", type=float, default=None, help="Hurst parameter")
    driver_src.add_argument("--m", type=int, default=None, help="grid segments")
    driver_src.add_argument("--dim", type=int, default=None, help="driver dimension")

    model_src = argparse.ArgumentParser(add_help=False)
    model_src.add_argument("--model", default=None, help="model preset name")
    model_src.add_argument("--model-params", default=None,
                           help="inline JSON overriding config model_params")

    p = argparse.ArgumentParser(
        prog="roughwz",
        description="Piecewise-linear approximation toolkit for fractional-"
                    "noise-driven systems")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("sample-fbm", parents=[common],
                        help="sample fractional Brownian drivers to CSV")
    sp.add_argument("--h", type=float, default=None)
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--count", type=int, default=None)
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--method", choices=["auto", "circulant", "cholesky"],
                    default=None)
    sp.set_defaults(handler=_cmd_sample_fbm)

    sp = sub.add_parser("lift", parents=[common, driver_src],
                        help="iterated-integral lift of a driver")
    sp.add_argument("--level", type=int, default=None)
    sp.set_defaults(handler=_cmd_lift)

    sp = sub.add_parser("pvar", parents=[common, driver_src],
                        help="p-variation seminorms and control")
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--level", type=int, default=None)
    sp.add_argument("--window", nargs=2, metavar=("S", "T"), default=None)
    sp.set_defaults(handler=_cmd_pvar)

    sp = sub.add_parser("nfunc", parents=[common, driver_src],
                        help="greedy block count of the control")
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.set_defaults(handler=_cmd_nfunc)

    sp = sub.add_parser("solve", parents=[common, driver_src, model_src],
                        help="solve a driven system along one driver")
    sp.add_argument("--with-jacobian", action="store_true")
    sp.add_argument("--tol", type=float, default=None)
    sp.set_defaults(handler=_cmd_solve)

    sp = sub.add_parser("deriv", parents=[common, driver_src, model_src],
                        help="directional derivatives along a ramp direction")
    sp.add_argument("--order", type=int, default=None)
    sp.add_argument("--direction-axis", type=int, default=None)
    sp.set_defaults(handler=_cmd_deriv)

    sp = sub.add_parser("density", parents=[common, model_src],
                        help="mollified density of the terminal state")
    sp.add_argument("--h", type=float, default=None)
    sp.add_argument("--m", type=int, default=None)
    sp.add_argument("--count", type=int, default=None)
    sp.add_argument("--t", type=float, default=None)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--axis-points", type=int, default=None)
    sp.set_defaults(handler=_cmd_density)

    sp = sub.add_parser("study", parents=[common, model_src],
                        help="run a convergence study, write report + CSV")
    sp.add_argument("--kind", choices=["pathwise", "lift", "density", "nfunc"],
                    default=None)
    sp.add_argument("--h", type=float, default=None)
    sp.add_argument("--m-schedule", nargs="+", default=None)
    sp.add_argument("--m-ref", dest="m_ref", type=int, default=None)
    sp.add_argument("--count", type=int, default=None)
    sp.add_argument("--p", type=float, default=None)
    sp.add_argument("--beta", type=float, default=None)
    sp.set_defaults(handler=_cmd_study)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        _set_thread_env(args.threads)
    try:
        cfg = _load_config(args.config)
        return args.handler(args, cfg)
    except InconclusiveStudyError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (RoughWZError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
