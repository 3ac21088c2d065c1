"""Command-line front end: verify, simulate, bounds, roa-plot.

Exit codes: 0 feasible-certified (or successful non-verification command),
1 infeasible, 2 inaccurate / solver error, 3 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import closed_loop, lmi, roa, sdp, sectors
from .errors import NNLoopError, NonPositiveD
from .network import io_maps, load_nn, steady_forward
from .plant import Plant, augment, build_pendulum, load_plant, steady_state, steady_state_map

EXIT_FEASIBLE = 0
EXIT_INFEASIBLE = 1
EXIT_INACCURATE = 2
EXIT_INPUT = 3

_STATUS_EXIT = {
    sdp.FEASIBLE: EXIT_FEASIBLE,
    sdp.INFEASIBLE: EXIT_INFEASIBLE,
    sdp.INACCURATE: EXIT_INACCURATE,
    sdp.SOLVER_ERROR: EXIT_INACCURATE,
}


class CliError(Exception):
    pass


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise CliError(f"cannot parse vector {text!r}") from exc


def _parse_matrix(text: str) -> np.ndarray:
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";")]
        return np.array(rows, dtype=float)
    except ValueError as exc:
        raise CliError(f"cannot parse matrix {text!r}") from exc


def _parse_pendulum(text: str) -> Plant:
    kwargs = {}
    for item in text.split(","):
        if not item:
            continue
        try:
            key, val = item.split("=")
        except ValueError as exc:
            raise CliError(f"bad pendulum parameter {item!r}") from exc
        key = key.strip()
        val = val.strip()
        if key in ("m", "L", "mu", "g", "Ts"):
            kwargs["T_s" if key == "Ts" else key] = float(val)
        elif key == "disc":
            kwargs["method"] = val
        elif key == "out":
            kwargs["output"] = val
        else:
            raise CliError(f"unknown pendulum parameter {key!r}")
    try:
        return build_pendulum(**kwargs)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _load_inputs(args):
    if bool(args.plant) == bool(args.pendulum):
        raise CliError("exactly one of --plant / --pendulum is required")
    if args.plant:
        if not os.path.exists(args.plant):
            raise CliError(f"plant file not found: {args.plant}")
        plant = load_plant(args.plant)
    else:
        plant = _parse_pendulum(args.pendulum)
    if not args.nn:
        raise CliError("--nn is required")
    if not os.path.exists(args.nn):
        raise CliError(f"nn file not found: {args.nn}")
    nn = load_nn(args.nn)
    k_xi = _parse_matrix(args.kxi)
    if k_xi.shape == (1, 1) and plant.n_r > 1:
        k_xi = float(k_xi[0, 0]) * np.eye(plant.n_r)
    return plant, nn, k_xi


def _listify(x):
    if x is None:
        return None
    return np.asarray(x, dtype=float).tolist()


def _local_sector_pipeline(plant, nn, k_xi, r_anchor, d):
    ss = steady_state(plant, nn, k_xi, r_anchor)
    trace = steady_forward(nn, ss.x_star, r_anchor)
    box = sectors.propagate_box(nn, trace.v[0], d)
    secs = sectors.local_sectors(nn, box, trace)
    return ss, trace, box, secs


def run_verify(plant, nn, k_xi, theorem: str, r=None, r_nom=None, d=None,
               gamma: float = 1.0, options: sdp.SolveOptions | None = None,
               minimize_trace: bool = True) -> dict:
    """Full verification pipeline; returns a JSON-ready report dict."""
    t_start = time.perf_counter()
    options = options or sdp.SolveOptions()
    aug = augment(plant, k_xi)
    sel = lmi.build_selectors(nn, aug.n_xtil)
    report = {
        "theorem": theorem,
        "k_xi": np.atleast_2d(k_xi).tolist(),
        "plant": {"A": plant.A.tolist(), "B": plant.B.tolist(),
                  "C": plant.C.tolist()},
        "activation": nn.activation.kind,
        "solver": {"backend": options.backend, "tol": options.tol},
        "d": _listify(d),
        "gamma": gamma if theorem == "local-range" else None,
    }

    if theorem == "global":
        system = lmi.build_global(aug, sel, nn.activation.alpha, nn.activation.beta)
        anchor = np.zeros(plant.n_r)
        report["r"] = None
    elif theorem == "local-fixed":
        if d is None:
            raise NonPositiveD("local theorems require a box half-width d")
        anchor = np.zeros(plant.n_r) if r is None else np.atleast_1d(r).astype(float)
        _, _, _, secs = _local_sector_pipeline(plant, nn, k_xi, anchor, d)
        system = lmi.build_local_fixed(aug, sel, secs, d, minimize_trace=minimize_trace)
        report["r"] = anchor.tolist()
    elif theorem == "local-range":
        if d is None:
            raise NonPositiveD("local theorems require a box half-width d")
        anchor = np.zeros(plant.n_r) if r_nom is None else np.atleast_1d(r_nom).astype(float)
        _, _, _, secs = _local_sector_pipeline(plant, nn, k_xi, anchor, d)
        refsens = lmi.ref_sensitivity(nn, steady_state_map(plant))
        system = lmi.build_local_range(aug, sel, secs, d, refsens, gamma=gamma)
        report["r_nom"] = anchor.tolist()
    else:
        raise CliError(f"unknown theorem {theorem!r}")

    sol = sdp.solve_certified(system, options)
    report["status"] = sol.status
    report["objective"] = sol.objective_value
    report["iterations"] = sol.iterations
    report["margins"] = {k: float(v) for k, v in sorted(sol.margins.items())}
    report["P"] = _listify(sol.P)
    report["Lambda"] = None if sol.Lambda is None else np.diag(sol.Lambda).tolist()
    report["Q"] = _listify(sol.Q)

    report["steady_state"] = None
    report["admissible_references"] = None
    if sol.status == sdp.FEASIBLE:
        ss = steady_state(plant, nn, k_xi, anchor)
        report["steady_state"] = {
            "r": anchor.tolist(),
            "xtil_star": ss.xtil_star.tolist(),
            "u_star": ss.u_star.tolist(),
        }
        if theorem == "local-range":
            J = roa.joint_ellipsoid_for(plant, nn, k_xi, sol.P, sol.Q, anchor)
            refs = roa.admissible_references(J)
            entry = {
                "r_nom": anchor.tolist(),
                "axes": refs.axes.tolist(),
                "semi_lengths": refs.semi_lengths.tolist(),
            }
            if plant.n_r == 1:
                lo, hi = refs.interval
                entry["interval"] = [lo, hi]
            report["admissible_references"] = entry
    report["meta"] = {"elapsed_s": time.perf_counter() - t_start}
    return report


def _write_report(report: dict, out_dir: str, name: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_verify(args) -> int:
    plant, nn, k_xi = _load_inputs(args)
    d = None
    if args.d is not None:
        d = _parse_vector(args.d)
        d = float(d[0]) if d.size == 1 else d
    options = sdp.SolveOptions(tol=args.tol, backend=args.solver)
    report = run_verify(
        plant, nn, k_xi, args.theorem,
        r=None if args.r is None else _parse_vector(args.r),
        r_nom=None if args.rnom is None else _parse_vector(args.rnom),
        d=d, gamma=args.gamma, options=options,
    )
    path = _write_report(report, args.out, "verify_report.json")
    print(f"status: {report['status']}  report: {path}")
    return _STATUS_EXIT[report["status"]]


def _joint_from_report(report: dict, plant, nn, k_xi):
    if report.get("Q") is None or report.get("P") is None:
        raise CliError("report does not contain a local-range (P, Q) pair")
    r_nom = np.array(report["r_nom"], dtype=float)
    return roa.joint_ellipsoid_for(
        plant, nn, k_xi,
        np.array(report["P"], dtype=float),
        np.array(report["Q"], dtype=float),
        r_nom,
    )


def cmd_simulate(args) -> int:
    plant, nn, k_xi = _load_inputs(args)
    aug = augment(plant, k_xi)
    if args.ref_schedule:
        with open(args.ref_schedule) as fh:
            schedule = json.load(fh)
    elif args.r is not None:
        schedule = _parse_vector(args.r)
    else:
        raise CliError("--r or --ref-schedule is required")
    x0 = (np.zeros(aug.n_xtil) if args.x0 is None else _parse_vector(args.x0))
    if x0.shape != (aug.n_xtil,):
        raise CliError(f"--x0 must have {aug.n_xtil} entries")

    if args.governed:
        if not args.report:
            raise CliError("--governed requires --report from a local-range run")
        with open(args.report) as fh:
            report = json.load(fh)
        J = _joint_from_report(report, plant, nn, k_xi)
        traj = closed_loop.simulate_with_governor(
            aug, nn, J, x0, schedule, args.steps)
    else:
        J = None
        traj = closed_loop.simulate(aug, nn, x0, schedule, args.steps)

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "trajectory.csv")
    closed_loop.write_trajectory_csv(csv_path, traj)
    print(f"steps: {traj.steps}  converged: {traj.converged}  "
          f"diverged: {traj.diverged}  csv: {csv_path}")
    if args.svg:
        svg_path = os.path.join(args.out, "trajectory.svg")
        curves = []
        if J is not None:
            refs = roa.admissible_references(J)
            half = float(refs.semi_lengths[0])
            r_nom = float(J.r_nom[0])
            for frac in (-0.99, -0.5, 0.0, 0.5, 0.99):
                E = roa.slice_at(J, np.array([r_nom + frac * half]))
                if E is not None and E.level > 0.0:
                    curves.append((roa.boundary_polyline(E, (0, 1)), "#c62828"))
        curves.append((traj.states[:, :2], "#1565c0"))
        roa.polylines_to_svg(svg_path, curves)
        print(f"svg: {svg_path}")
    return EXIT_FEASIBLE


def cmd_bounds(args) -> int:
    plant, nn, k_xi = _load_inputs(args)
    if args.d is None:
        raise CliError("--d is required")
    d = _parse_vector(args.d)
    d = float(d[0]) if d.size == 1 else d
    r = np.zeros(plant.n_r) if args.r is None else _parse_vector(args.r)
    _, trace, box, secs = _local_sector_pipeline(plant, nn, k_xi, r, d)
    neurons = []
    idx = 0
    for layer in range(len(box.v_lo)):
        for j in range(box.v_lo[layer].shape[0]):
            neurons.append({
                "layer": layer + 1,
                "neuron": j,
                "v_star": float(trace.v[layer][j]),
                "v_lo": float(box.v_lo[layer][j]),
                "v_hi": float(box.v_hi[layer][j]),
                "w_lo": float(box.w_lo[layer][j]),
                "w_hi": float(box.w_hi[layer][j]),
                "alpha_phi": float(secs.alpha_phi[idx]),
                "beta_phi": float(secs.beta_phi[idx]),
            })
            idx += 1
    report = {
        "r": r.tolist(),
        "d": np.broadcast_to(np.asarray(d, dtype=float),
                             (nn.hidden_widths[0],)).tolist(),
        "activation": nn.activation.kind,
        "io": io_maps(nn, plant.C)._asdict(),
        "neurons": neurons,
    }
    path = _write_report(report, args.out, "bounds_report.json")
    print(f"bounds report: {path}")
    return EXIT_FEASIBLE


def cmd_roa_plot(args) -> int:
    plant, nn, k_xi = _load_inputs(args)
    with open(args.report) as fh:
        report = json.load(fh)
    if report.get("P") is None:
        raise CliError("report has no P matrix (was the run feasible?)")
    P = np.array(report["P"], dtype=float)
    dims = tuple(int(v) for v in args.dims.split(","))
    curves = []
    if report.get("Q") is not None:
        J = _joint_from_report(report, plant, nn, k_xi)
        refs = roa.admissible_references(J)
        half = float(refs.semi_lengths[0])
        r_nom = float(J.r_nom[0])
        for frac in (-0.99, -0.6, -0.3, 0.0, 0.3, 0.6, 0.99):
            E = roa.slice_at(J, np.array([r_nom + frac * half]))
            if E is not None and E.level > 0.0:
                curves.append((roa.boundary_polyline(E, dims), "#c62828"))
    else:
        anchor = np.array(report.get("r") or [0.0] * plant.n_r, dtype=float)
        ss = steady_state(plant, nn, k_xi, anchor)
        E = roa.Ellipsoid(center=ss.xtil_star, shape=P)
        curves.append((roa.boundary_polyline(E, dims), "#1565c0"))
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "roa.svg")
    roa.polylines_to_svg(path, curves)
    print(f"svg: {path}")
    return EXIT_FEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnloop",
        description="LMI certification of NN-controlled setpoint tracking loops",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--plant", help="plant JSON file")
    common.add_argument("--pendulum",
                        help='pendulum parameters "m=..,L=..,mu=..,g=..,Ts=..,disc=.."')
    common.add_argument("--nn", help="network JSON file")
    common.add_argument("--kxi", default="1.0", help="integrator gain (matrix syntax a,b;c,d)")
    common.add_argument("--out", default=".", help="output directory")

    p_ver = sub.add_parser("verify", parents=[common], help="run an LMI verification")
    p_ver.add_argument("--theorem", required=True,
                       choices=["global", "local-fixed", "local-range"])
    p_ver.add_argument("--r", help="fixed reference (CSV)")
    p_ver.add_argument("--rnom", help="nominal reference (CSV)")
    p_ver.add_argument("--d", help="layer-1 box half-width (scalar or CSV)")
    p_ver.add_argument("--gamma", type=float, default=1.0,
                       help="weight of trace(Q) in the local-range objective")
    p_ver.add_argument("--solver", default="dense-ipm")
    p_ver.add_argument("--tol", type=float, default=1e-8)
    p_ver.set_defaults(func=cmd_verify)

    p_sim = sub.add_parser("simulate", parents=[common], help="simulate the loop")
    p_sim.add_argument("--r", help="constant desired reference (CSV)")
    p_sim.add_argument("--ref-schedule", help="JSON file with [k_start, r] pairs")
    p_sim.add_argument("--x0", help="initial augmented state (CSV)")
    p_sim.add_argument("--steps", type=int, default=2000)
    p_sim.add_argument("--governed", action="store_true")
    p_sim.add_argument("--report", help="verification report for governed mode")
    p_sim.add_argument("--svg", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_bnd = sub.add_parser("bounds", parents=[common], help="sector-bound report")
    p_bnd.add_argument("--r", help="anchor reference (CSV)")
    p_bnd.add_argument("--d", help="layer-1 box half-width (scalar or CSV)")
    p_bnd.set_defaults(func=cmd_bounds)

    p_plot = sub.add_parser("roa-plot", parents=[common], help="SVG of RoA ellipses")
    p_plot.add_argument("--report", required=True)
    p_plot.add_argument("--dims", default="0,1")
    p_plot.set_defaults(func=cmd_roa_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, NNLoopError, FileNotFoundError, json.JSONDecodeError,
            KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
