"""Command-line front end.

Subcommands ``run``, ``convergence`` and ``cavity``.  Settings come from an
optional ``key = value`` config file and are overridden by long flags.

Exit codes: 0 ok, 2 configuration error, 3 Picard non-convergence, 4 internal.
"""

import argparse
import csv
import logging
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .analysis import (QUANTITIES, StudyError, convergence_study, error_report, streamfunction,
                       streamfunction_extremum)
from .cases import CaseConfig, MeshSpec, SolverConfig
from .mesh import MeshError
from .solver import SolverError, picard_solve
from .vtk import write_vtk

log = logging.getLogger("sdgflow")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INTERNAL = 0, 2, 3, 4

ERROR_COLUMNS = ["h", "k", "nu", "dofs", "dofs_H", "dofs_V", "dofs_Q", *QUANTITIES,
                 "max_div", "max_normal_jump", "u_norm_h", "iterations", "converged"]
RATE_COLUMNS = ["kind", "h", "dofs", *QUANTITIES, *(f"{q}_rate" for q in QUANTITIES)]

# config-file key -> argparse dest
CONFIG_KEYS = {"case": "case", "nu": "nu", "re": "re", "lambda": "lam", "lam": "lam", "k": "k",
               "mesh": "mesh", "tol": "tol", "tolerance": "tol", "max_iters": "max_iters",
               "max_iterations": "max_iters", "theta": "theta", "out": "out", "stokes": "stokes",
               "levels": "levels"}


class ConfigError(ValueError):
    pass


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if math.isnan(x) else f"{float(x):.17g}"
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])
    return path


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().lower().replace("-", "_")
            if not sep or key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{n}: expected 'key = value' with key in "
                                  f"{sorted(set(CONFIG_KEYS))}, got {raw.strip()!r}")
            out[CONFIG_KEYS[key]] = value.strip()
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="sdgflow", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"sdgflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file (flags override it)")
    common.add_argument("--case", choices=["taylor", "taylor-stokes", "noflow", "cavity", "file"])
    common.add_argument("--nu", type=float, help="viscosity")
    common.add_argument("--re", type=float, help="Reynolds number, sets nu = 1/re")
    common.add_argument("--lambda", dest="lam", type=float, help="no-flow pressure scale")
    common.add_argument("--k", type=int, help="polynomial degree (>= 1)")
    common.add_argument("--mesh", help="rect:NxM | voronoi:N:SEED | file:PATH")
    common.add_argument("--tol", type=float, help="Picard tolerance on velocity DOFs")
    common.add_argument("--max-iters", dest="max_iters", type=int)
    common.add_argument("--theta", type=float, help="damping in (0, 1]")
    common.add_argument("--out", help="output directory")
    common.add_argument("--stokes", action="store_true", default=None, help="drop the convective term")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("run", parents=[common], help="one solve: errors.csv, solution.vtk")
    conv = sub.add_parser("convergence", parents=[common], help="mesh refinement study: rates.csv")
    conv.add_argument("--levels", type=int, help="number of meshes (starting from --mesh)")
    sub.add_parser("cavity", parents=[common], help="cavity solve: solution.vtk, streamfunction.csv")
    return p


DEFAULTS = {"run": dict(case="taylor", mesh="rect:8x8"),
            "convergence": dict(case="taylor", mesh="rect:4x4", levels="4"),
            "cavity": dict(case="cavity", mesh="rect:16x16", nu=str(1 / 400), k="2")}


def resolve(args):
    """Merge defaults, config file and flags into ``(CaseConfig, extras)``."""
    settings = dict(DEFAULTS[args.command])
    if args.config:
        settings.update(read_config(args.config))
    for key in set(CONFIG_KEYS.values()):
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    try:
        nu = float(settings.get("nu", 0.1))
        if "re" in settings:
            nu = 1.0 / float(settings["re"])
        stokes = settings.get("stokes", False)
        if isinstance(stokes, str):
            stokes = stokes.lower() in ("1", "true", "yes", "on")
        solver = SolverConfig(tolerance=float(settings.get("tol", 1e-7)),
                              max_iterations=int(settings.get("max_iters", 100)),
                              theta=float(settings.get("theta", 1.0)))
        mesh = MeshSpec.parse(str(settings["mesh"]))
        case = CaseConfig(case=settings["case"], nu=nu, lam=float(settings.get("lam", 1e7)),
                          mesh=mesh, k=int(settings.get("k", 1)), solver=solver,
                          stokes=bool(stokes), out=str(settings.get("out", ".")))
        levels = int(settings.get("levels", 1))
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    if case.case == "file" and mesh.kind != "file":
        raise ConfigError("case 'file' needs --mesh file:PATH")
    if mesh.kind == "file" and not os.path.isfile(mesh.path):
        raise ConfigError(f"mesh file not found: {mesh.path}")
    if levels < 1:
        raise ConfigError("levels must be >= 1")
    return case, {"levels": levels}


class Manifest:
    def __init__(self, case, command):
        self.case, self.command = case, command
        self.timings, self.files = {}, []

    def add(self, path):
        if path not in self.files:
            self.files.append(path)
        return path

    def write(self, out, status):
        path = os.path.join(out, "manifest.txt")
        lines = [f"sdgflow {__version__}", f"command = {self.command}", f"status = {status}"]
        c = asdict(self.case)
        c["mesh"] = str(self.case.mesh)
        for key, val in c.items():
            if isinstance(val, dict):
                lines += [f"{key}.{k} = {v}" for k, v in val.items()]
            else:
                lines.append(f"{key} = {val}")
        lines += [f"time.{k} = {v:.3f}" for k, v in self.timings.items()]
        self.add(path)
        lines += [f"file = {f}" for f in self.files]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _solve_and_report(case, man):
    result = picard_solve(case)
    t0 = time.perf_counter()
    report = error_report(result, case.problem())
    for k, v in result.timings.items():
        man.timings[k] = man.timings.get(k, 0.0) + v
    man.timings["analysis"] = man.timings.get("analysis", 0.0) + time.perf_counter() - t0
    return result, report


def cmd_run(case, extras, man):
    result, report = _solve_and_report(case, man)
    man.add(write_csv(os.path.join(case.out, "errors.csv"), ERROR_COLUMNS, [report.row()]))
    man.add(write_vtk(os.path.join(case.out, "solution.vtk"), result.maps,
                      {"velocity": result.u, "pressure": result.p, "gradient": result.G}))
    log.info("u_L2 = %.3e after %d iterations", report.errors["u_L2"], result.iterations)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def cmd_convergence(case, extras, man):
    specs = [case.mesh]
    for _ in range(extras["levels"] - 1):
        specs.append(specs[-1].refined())
    status = EXIT_OK
    t0 = time.perf_counter()
    try:
        table = convergence_study(case, specs)
    except StudyError as exc:
        log.error("%s", exc)
        table = exc.table
        status = EXIT_NONCONVERGED if "converge" in str(exc) else EXIT_INTERNAL
    man.timings["study"] = time.perf_counter() - t0
    rows = []
    qs = table.quantities()
    pair = {q: table.pairwise(q) for q in qs}
    for i, r in enumerate(table.reports):
        row = {"kind": "mesh", "h": r.h, "dofs": sum(r.ndofs.values())}
        row.update({q: r.errors.get(q, math.nan) for q in qs})
        row.update({f"{q}_rate": pair[q][i - 1] for q in qs if i > 0})
        rows.append(row)
    if len(table.reports) >= 2:
        rows.append({"kind": "slope_lsq", **{q: table.least_squares(q) for q in qs}})
    else:
        log.warning("single mesh: no convergence slopes")
        rows.append({"kind": "slope_lsq"})
    man.add(write_csv(os.path.join(case.out, "rates.csv"), RATE_COLUMNS, rows))
    if len(table.reports) >= 2:
        log.info("least-squares slopes: %s",
                 {q: round(table.least_squares(q), 3) for q in qs})
    return status


def cmd_cavity(case, extras, man):
    if case.case not in ("cavity", "file"):
        raise ConfigError("cavity command runs the cavity or file case")
    result, report = _solve_and_report(case, man)
    man.add(write_csv(os.path.join(case.out, "errors.csv"), ERROR_COLUMNS, [report.row()]))
    man.add(write_vtk(os.path.join(case.out, "solution.vtk"), result.maps,
                      {"velocity": result.u, "pressure": result.p, "gradient": result.G}))
    if result.converged:
        sf = streamfunction(result.u)
        rows = [{"x": x, "y": y, "psi": v} for (x, y), v in zip(sf.points, sf.values)]
        man.add(write_csv(os.path.join(case.out, "streamfunction.csv"), ["x", "y", "psi"], rows))
        (px, py), val = streamfunction_extremum(result.u, sf, "min")
        log.info("psi min %.6f at (%.4f, %.4f); closure residual %.2e", val, px, py,
                 sf.closure_residual)
    hist = [{"iteration": i + 1, "max_dof_change": d} for i, d in enumerate(result.history)]
    man.add(write_csv(os.path.join(case.out, "history.csv"), ["iteration", "max_dof_change"], hist))
    if not result.converged:
        log.error("Picard iteration did not converge in %d steps; try a smaller --theta",
                  result.iterations)
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


COMMANDS = {"run": cmd_run, "convergence": cmd_convergence, "cavity": cmd_cavity}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        case, extras = resolve(args)
        os.makedirs(case.out, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"sdgflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    man = Manifest(case, args.command)
    try:
        status = COMMANDS[args.command](case, extras, man)
    except (ConfigError, MeshError, FileNotFoundError) as exc:
        print(f"sdgflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"sdgflow: solver failure: {exc}", file=sys.stderr)
        status = EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - reported as internal failure
        log.exception("internal error")
        print(f"sdgflow: internal error: {exc}", file=sys.stderr)
        status = EXIT_INTERNAL
    man.write(case.out, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
