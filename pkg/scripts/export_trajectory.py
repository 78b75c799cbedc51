"""Integrate a scenario's trajectory and write (s, x, y, diagnostics) as CSV for plotting elsewhere.

    python3 scripts/export_trajectory.py scenarios/constant_field.yaml out.csv [--n 2000]

Also prints the largest deviation from the closed-form hyperbolic motion when
the scenario is the constant-field Minkowski case.
"""
import argparse
import sys

import numpy as np

from finsler_em.dynamics import hyperbolic_motion, integrate_trajectory
from finsler_em.scenario import load_scenario


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("scenario")
    ap.add_argument("output")
    ap.add_argument("--n", type=int, default=None)
    args = ap.parse_args()
    sc = load_scenario(args.scenario)
    t = sc.trajectory
    n = t.n_steps if args.n is None else args.n
    tr = integrate_trajectory(t.x0, t.y0, sc.potential, sc.metric, sc.connection, sc.particle, t.step, n)
    rows = tr.array()
    header = "s,x0,x1,x2,x3,y0,y1,y2,y3,F_drift,ortho_1,ortho_2"
    np.savetxt(args.output, rows, delimiter=",", header=header, comments="", fmt="%.17g")
    print(f"{len(rows)} rows -> {args.output}; max |F - 1| = {np.abs(rows[:, 9]).max():.3e}")
    if sc.potential.params.get("kind") == "constant_field" and sc.metric.kind == "minkowski" \
            and tuple(t.y0) == (1.0, 0.0, 0.0, 0.0):
        E = sc.potential.params["E"]
        err = max(np.abs(np.concatenate(hyperbolic_motion(st.s, t.x0, E, sc.particle)) -
                         np.concatenate([st.x, st.y])).max() for st in tr.states)
        print(f"max deviation from hyperbolic motion: {err:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
