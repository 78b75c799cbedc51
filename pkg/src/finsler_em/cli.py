"""Command-line frontend.

    finsler-em check      --scenario PATH   identity suite, one record per check per sample
    finsler-em field      --scenario PATH   F, J and Q-terms on the scenario lattice
    finsler-em energy     --scenario PATH   T blocks, conservation residual, Lorentz density
    finsler-em trajectory --scenario PATH   RK4 trajectory with per-step diagnostics

Exit status: 0 all pass, 1 check failures or a failed computation, 2 usage or
validation errors.  The first output line is a schema header.
"""
from __future__ import annotations

import argparse
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import checks, dynamics, maxwell, stress_energy
from .connection import Frame
from .scenario import Lattice, Scenario, ScenarioError, load_scenario

SCHEMA_VERSION = 1
THREADS_ENV = "FINSLER_EM_THREADS"

log = logging.getLogger("finsler_em")

XY = [f"x{i}" for i in range(4)] + [f"y{i}" for i in range(4)]
CHECK_COLUMNS = ["check_id", "sample", *XY, "residual", "tolerance", "status", "reason"]
FIELD_COLUMNS = [*XY,
                 *[f"F_{i}{j}" for i in range(4) for j in range(i + 1, 4)],
                 *[f"F_{i}{j}b" for i in range(4) for j in range(4)],
                 *[f"J_h{i}" for i in range(4)], *[f"J_v{i}" for i in range(4)],
                 *[f"Q_h{i}" for i in range(4)], *[f"Q_v{i}" for i in range(4)]]
ENERGY_COLUMNS = [*XY,
                  *[f"T_{i}{j}" for i in range(4) for j in range(4)],
                  *[f"T_{i}{j}b" for i in range(4) for j in range(4)],
                  "T^0_0", "classical_T00", "FF",
                  *[f"residual_{i}" for i in range(4)], *[f"lorentz_{i}" for i in range(4)], "route"]
TRAJ_COLUMNS = ["s", *XY, "F_drift", "ortho_1", "ortho_2"]


# formatting -------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _json_val(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


class Writer:
    def __init__(self, out, fmt: str, command: str, columns: list):
        self.out, self.fmt, self.columns = out, fmt, columns
        header = {"schema": f"finsler-em/{SCHEMA_VERSION}", "command": command}
        if fmt == "csv":
            out.write(f"# schema=finsler-em/{SCHEMA_VERSION} command={command}\n")
            out.write(",".join(columns) + "\n")
        else:
            out.write(json.dumps({**header, "columns": columns}) + "\n")

    def row(self, values):
        if self.fmt == "csv":
            self.out.write(",".join(_fmt(v) for v in values) + "\n")
        else:
            self.out.write(json.dumps(dict(zip(self.columns, (_json_val(v) for v in values)))) + "\n")

    def summary(self, items: dict):
        if self.fmt == "csv":
            self.out.write("# summary " + " ".join(f"{k}={_fmt(v)}" for k, v in items.items()) + "\n")
        else:
            self.out.write(json.dumps({"summary": {k: _json_val(v) for k, v in items.items()}}) + "\n")


def _ordered_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# commands -----------------------------------------------------------------

def cmd_check(sc: Scenario, args, w: Writer) -> int:
    samples = sc.sample_points(args.seed)
    recs = checks.run_checks(sc, samples, args.threads, args.tolerance_scale)
    for r in recs:
        w.row([r.check_id, r.sample_index, *r.sample.x, *r.sample.y, r.residual, r.tolerance, r.status, r.reason])
    counts = {s: sum(r.status == s for r in recs) for s in ("pass", "fail", "skipped")}
    w.summary(counts)
    return 1 if counts["fail"] else 0


def _lattice(sc: Scenario, args) -> list:
    lat = sc.samples.lattice
    if args.shape is not None:
        base = lat or Lattice((0.0,) * 4, (0.0,) * 4, (0,) * 4, (1.0, 0.0, 0.0, 0.0))
        lat = Lattice(tuple(args.lo or base.lo), tuple(args.hi or base.hi), tuple(args.shape),
                      tuple(args.y or base.y))
    return lat.points() if lat else []


def field_row(sc: Scenario, p) -> list:
    fr = Frame(sc.metric, sc.vertical, sc.connection, p)
    F = maxwell.faraday(sc.potential, fr)
    J = maxwell.current_from_field(F, fr, sc.particle.c)
    Q = maxwell.q_terms(F, fr)
    hh, hv = F.values()
    return [*p.x, *p.y, *[hh[i, j] for i in range(4) for j in range(i + 1, 4)], *hv.ravel(),
            *J.J_h.value, *J.J_v.value, *Q.Q_h, *Q.Q_v]


def cmd_field(sc: Scenario, args, w: Writer) -> int:
    for row in _ordered_map(lambda p: field_row(sc, p), _lattice(sc, args), args.threads):
        w.row(row)
    return 0


def classical_T00(F_hh: np.ndarray) -> float:
    """(E^2 + B^2) / 8 pi read off F_ij in Minkowski coordinates."""
    E2 = float(np.sum(F_hh[0, 1:] ** 2))
    B2 = float(F_hh[1, 2] ** 2 + F_hh[1, 3] ** 2 + F_hh[2, 3] ** 2)
    return (E2 + B2) / (8 * math.pi)


def energy_row(sc: Scenario, p) -> list:
    fr = Frame(sc.metric, sc.vertical, sc.connection, p)
    F = maxwell.faraday(sc.potential, fr)
    T = stress_energy.energy_momentum(F, fr)
    kind = sc.connection.kind
    route, res, fl = "none", [math.nan] * 4, [math.nan] * 4
    try:
        if kind == "trivial":
            r = stress_energy.conservation_flat(F, fr, sc.particle.c)
            route = "flat"
        elif kind == "canonical":
            r = stress_energy.conservation_curved(F, fr, sc.particle.c)
            route = "curved"
        else:
            r = None
        if r is not None:
            res, fl = list(r.residual), list(r.lorentz_density)
    except stress_energy.FlatnessError:
        r = None
    return [*p.x, *p.y, *T.T_hh.value.ravel(), *T.T_hv.value.ravel(), T.T_mixed.value[0, 0],
            classical_T00(F.F_hh.value), float(T.invariant_FF.value), *res, *fl, route]


def cmd_energy(sc: Scenario, args, w: Writer) -> int:
    for row in _ordered_map(lambda p: energy_row(sc, p), _lattice(sc, args), args.threads):
        w.row(row)
    return 0


def cmd_trajectory(sc: Scenario, args, w: Writer) -> int:
    t = sc.trajectory
    x0 = args.x0 or t.x0
    y0 = args.y0 or t.y0
    step = args.step if args.step is not None else t.step
    n = args.n if args.n is not None else t.n_steps
    try:
        traj = dynamics.integrate_trajectory(x0, y0, sc.potential, sc.metric, sc.connection, sc.particle, step, n)
    except (dynamics.SingularSystemError, dynamics.GaugeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows = traj.array()
    for r in rows:
        w.row(list(r))
    w.summary({"steps": n, "max_abs_F_drift": float(np.abs(rows[:, 9]).max()),
               "max_abs_ortho": float(np.abs(rows[:, 10:12]).max())})
    return 0


COMMANDS = {
    "check": (cmd_check, CHECK_COLUMNS),
    "field": (cmd_field, FIELD_COLUMNS),
    "energy": (cmd_energy, ENERGY_COLUMNS),
    "trajectory": (cmd_trajectory, TRAJ_COLUMNS),
}


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario document (YAML or JSON)")
    common.add_argument("--seed", type=int, default=None, help="overrides samples.seed")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker threads (default ${THREADS_ENV} or 1)")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    common.add_argument("--tolerance-scale", type=float, default=1.0, help="multiplies every tolerance")
    common.add_argument("--output", "-o", default="-", help="output file (default stdout)")

    lattice = argparse.ArgumentParser(add_help=False)
    lattice.add_argument("--shape", type=int, nargs=4, default=None, help="lattice points per axis")
    lattice.add_argument("--lo", type=float, nargs=4, default=None)
    lattice.add_argument("--hi", type=float, nargs=4, default=None)
    lattice.add_argument("--y", type=float, nargs=4, default=None, help="fiber point used at every node")

    p = argparse.ArgumentParser(prog="finsler-em", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="run the identity suite")
    sub.add_parser("field", parents=[common, lattice], help="field and current table")
    sub.add_parser("energy", parents=[common, lattice], help="energy-momentum table")
    tp = sub.add_parser("trajectory", parents=[common], help="integrate a trajectory")
    tp.add_argument("--x0", type=float, nargs=4, default=None)
    tp.add_argument("--y0", type=float, nargs=4, default=None)
    tp.add_argument("--step", type=float, default=None)
    tp.add_argument("--n", type=int, default=None, help="number of steps")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads < 1 or args.tolerance_scale <= 0:
        print("error: --threads must be >= 1 and --tolerance-scale > 0", file=sys.stderr)
        return 2
    try:
        sc = load_scenario(args.scenario if os.path.exists(args.scenario) else _missing(args.scenario))
        if args.seed is not None:
            sc = sc.with_seed(args.seed)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    fn, columns = COMMANDS[args.command]
    buf = io.StringIO()
    code = fn(sc, args, Writer(buf, args.format, args.command, columns))
    if args.output == "-":
        sys.stdout.write(buf.getvalue())
    else:
        try:
            with open(args.output, "w", newline="") as f:
                f.write(buf.getvalue())
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    return code


def _missing(path: str):
    raise ScenarioError("scenario", f"no such file: {path}")


if __name__ == "__main__":
    sys.exit(main())
