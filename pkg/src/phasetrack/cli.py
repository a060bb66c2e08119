"""Command-line entry points: synth, track, analyze, gradcheck.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 failed
gradient check.  Outputs are plain CSV (header row, comma separator, LF) and
PHF1 field files; two runs with identical configuration produce bit-identical
files.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

import numpy as np

from .analysis import (
    centroid_speed,
    control_extrema,
    enclosed_area,
    extract_zero_levelset,
    mass_area,
)
from .config import ConfigError, assemble_problem, parse_config
from .datasets import make_initial_control
from .fieldio import read_field, write_field
from .forward import SolveError
from .kernels import solver_backend
from .linsolve import ConvergenceError
from .model import mass_target
from .optimize import TrackingAborted, run_tracking
from .oracles import fd_gradient_oracle, gradcheck_problem


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}\n{self.format_usage()}".rstrip())


def build_parser() -> _Parser:
    parser = _Parser(prog="phasetrack", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def add_problem_flags(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--dataset", help="built-in dataset name")
        p.add_argument("--nx", type=int)
        p.add_argument("--ny", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--T", type=float, dest="T")
        p.add_argument("--theta", type=float)
        p.add_argument("--constraint", choices=["on", "off"])
        p.add_argument("--smoothing-steps", type=int)
        p.add_argument("--out", help="output directory")

    p_synth = sub.add_parser("synth", help="write dataset fields to disk")
    add_problem_flags(p_synth)

    p_track = sub.add_parser("track", help="run the tracking optimization")
    add_problem_flags(p_track)
    p_track.add_argument("--alpha", type=float)
    p_track.add_argument("--tol-J", type=float, dest="tol_J")
    p_track.add_argument("--tol-eta", type=float, dest="tol_eta")
    p_track.add_argument("--K-max", type=int, dest="K_max")
    p_track.add_argument("--lambda-tol", type=float, dest="lambda_tol")
    p_track.add_argument("--initial-control", help="zero | constant:<v> | feedback:<cx>,<cy>")
    p_track.add_argument("--snapshot-stride", type=int)
    p_track.add_argument("--dump-trajectory", action="store_true", default=None)
    p_track.add_argument(
        "--progress-every", type=int, default=25, help="stderr progress interval"
    )

    p_an = sub.add_parser("analyze", help="recompute analysis CSVs from stored fields")
    p_an.add_argument("--run-dir", required=True)
    p_an.add_argument("--out", help="defaults to <run-dir>/analysis")

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p_gc.add_argument("--nx", type=int, default=8)
    p_gc.add_argument("--ny", type=int, default=8)
    p_gc.add_argument("--steps", type=int, default=5)
    p_gc.add_argument("--directions", type=int, default=5)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--tol", type=float, default=1e-5)
    return parser


def _overrides_from_args(args) -> dict:
    keys = (
        "dataset", "nx", "ny", "epsilon", "tau", "T", "theta", "alpha",
        "tol_J", "tol_eta", "K_max", "lambda_tol", "initial_control",
        "smoothing_steps", "snapshot_stride",
    )
    out = {}
    for key in keys:
        attr = getattr(args, key, None)
        if attr is not None:
            out[key] = attr
    if getattr(args, "constraint", None) is not None:
        out["constraint"] = args.constraint == "on"
    if getattr(args, "dump_trajectory", None) is not None:
        out["dump_trajectory"] = True
    if getattr(args, "out", None) is not None:
        out["output_dir"] = args.out
    return out


def _csv(path, header, rows):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".12g")
    return str(v)


def _cmd_synth(args) -> int:
    cfg = parse_config(args.config, _overrides_from_args(args))
    if cfg.dataset is None and args.config is None:
        raise ConfigError("synth needs --dataset or --config")
    problem = assemble_problem(cfg)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    eps = problem.params.epsilon
    write_field(os.path.join(out, "initial.phf"), problem.phi0, eps, 0.0)
    manifest = [
        f"initial_field={os.path.join(out, 'initial.phf')}",
        f"T={problem.params.T!r}",
        f"epsilon={eps!r}",
        f"tau={problem.params.tau!r}",
        f"theta={problem.params.theta!r}",
        f"constraint={'on' if problem.constrained else 'off'}",
    ]
    if len(problem.observations) == 1:
        path = os.path.join(out, "target.phf")
        write_field(path, problem.observations[0].field, eps, problem.observations[0].time)
        manifest.append(f"target_field={path}")
    else:
        paths, times = [], []
        for i, obs in enumerate(problem.observations):
            path = os.path.join(out, f"target_{i:03d}.phf")
            write_field(path, obs.field, eps, obs.time)
            paths.append(path)
            times.append(repr(obs.time))
        manifest.append(f"target_fields={' '.join(paths)}")
        manifest.append(f"observation_times={' '.join(times)}")
    with open(os.path.join(out, "problem.cfg"), "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(
        f"wrote {problem.name} ({problem.mesh.n_vertices} vertices) to {out}"
    )
    return 0


def _write_report_csv(path, report):
    # wall times stay in the in-memory report only, keeping the CSV bit-identical
    # across reruns of the same configuration
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("iteration,J,fidelity,regularization,update_norm\n")
        for r in report.records:
            fh.write(
                f"{r.iteration},{_cell(r.J)},{_cell(r.fidelity)},"
                f"{_cell(r.regularization)},{_cell(r.update_norm)}\n"
            )
        fh.write(f"# termination_cause={report.termination_cause}\n")


def _write_run_outputs(out, problem, control, trajectory, report, stride, dump_all):
    os.makedirs(out, exist_ok=True)
    params = problem.params
    eps = params.epsilon
    times = trajectory.times()
    target = problem.build_mass_target()

    _write_report_csv(os.path.join(out, "cost_history.csv"), report)

    contours = [extract_zero_levelset(s, t) for s, t in zip(trajectory.states, times)]
    _csv(
        os.path.join(out, "area.csv"),
        "t,mass_area,target_mass,polygon_area",
        [
            (t, mass_area(s), mass_target(target, t), enclosed_area(c))
            for t, s, c in zip(times, trajectory.states, contours)
        ],
    )
    _csv(
        os.path.join(out, "loops.csv"),
        "t,loop_count",
        [(t, c.loop_count) for t, c in zip(times, contours)],
    )

    positions = []
    for state in trajectory.states:
        weights = state.mesh.lumped_mass * np.maximum(state.values, 0.0)
        total = weights.sum()
        if total > 0:
            positions.append(
                (
                    weights @ state.mesh.vertices[:, 0] / total,
                    weights @ state.mesh.vertices[:, 1] / total,
                )
            )
        else:
            positions.append((np.nan, np.nan))
    speeds = centroid_speed(times, positions)
    _csv(
        os.path.join(out, "centroid.csv"),
        "t,x,y,speed",
        [(t, p[0], p[1], s) for t, p, s in zip(times, positions, speeds)],
    )

    mins, maxs = control_extrema(control)
    _csv(
        os.path.join(out, "control_extrema.csv"),
        "t,eta_min,eta_max",
        [(n * params.tau, mins[n], maxs[n]) for n in range(control.n_slices)],
    )
    _csv(
        os.path.join(out, "lambda.csv"),
        "t,lambda,secant_iters",
        [
            ((n + 1) * params.tau, trajectory.multipliers[n], trajectory.secant_iters[n])
            for n in range(trajectory.n_steps)
        ],
    )

    snap_dir = os.path.join(out, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    n_steps = trajectory.n_steps
    levels = sorted(set(range(0, n_steps + 1, stride)) | {n_steps})
    for n in levels:
        write_field(
            os.path.join(snap_dir, f"state_{n:05d}.phf"),
            trajectory.states[n],
            eps,
            times[n],
        )
        if n < n_steps:
            write_field(
                os.path.join(snap_dir, f"control_{n:05d}.phf"),
                control.slices[n],
                eps,
                times[n],
            )
    if dump_all:
        traj_dir = os.path.join(out, "trajectory")
        os.makedirs(traj_dir, exist_ok=True)
        for n in range(n_steps + 1):
            write_field(
                os.path.join(traj_dir, f"state_{n:05d}.phf"),
                trajectory.states[n],
                eps,
                times[n],
            )


def _cmd_track(args) -> int:
    cfg = parse_config(args.config, _overrides_from_args(args))
    if cfg.dataset is None and args.config is None:
        raise ConfigError("track needs --dataset or --config")
    problem = assemble_problem(cfg)
    control0 = make_initial_control(
        cfg.control_mode(), problem, lambda_tol=cfg.lambda_tol
    )

    every = max(1, args.progress_every)

    def progress(rec):
        if rec.iteration % every == 0:
            print(
                f"iter {rec.iteration}: J={rec.J:.6g} fidelity={rec.fidelity:.6g} "
                f"update_norm={rec.update_norm:.3g}",
                file=sys.stderr,
            )

    out = cfg.output_dir
    try:
        control, trajectory, report = run_tracking(
            problem,
            cfg.optimization_config(),
            control0,
            lambda_tol=cfg.lambda_tol,
            progress=progress,
        )
    except TrackingAborted as exc:
        os.makedirs(out, exist_ok=True)
        _write_report_csv(os.path.join(out, "cost_history.csv"), exc.report)
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2

    _write_run_outputs(
        out, problem, control, trajectory, report, cfg.snapshot_stride, cfg.dump_trajectory
    )
    last = report.records[-1]
    print(
        f"{problem.name}: {report.termination_cause} after {report.n_iterations} "
        f"iterations, J={last.J:.6g}, fidelity={last.fidelity:.6g}, "
        f"dofs={problem.mesh.n_vertices}, backend={solver_backend()}, outputs in {out}"
    )
    return 0


def _cmd_analyze(args) -> int:
    run_dir = args.run_dir
    field_dir = None
    for candidate in ("trajectory", "snapshots"):
        if glob.glob(os.path.join(run_dir, candidate, "state_*.phf")):
            field_dir = os.path.join(run_dir, candidate)
            break
    if field_dir is None:
        raise ConfigError(f"no state_*.phf files under {run_dir}")
    paths = sorted(glob.glob(os.path.join(field_dir, "state_*.phf")))

    out = args.out or os.path.join(run_dir, "analysis")
    os.makedirs(out, exist_ok=True)

    mesh = None
    times, fields = [], []
    for path in paths:
        f, meta = read_field(path, mesh=mesh)
        mesh = f.mesh
        times.append(meta.time)
        fields.append(f)

    contours = [extract_zero_levelset(f, t) for f, t in zip(fields, times)]
    _csv(
        os.path.join(out, "area.csv"),
        "t,mass_area,polygon_area",
        [(t, mass_area(f), enclosed_area(c)) for t, f, c in zip(times, fields, contours)],
    )
    _csv(
        os.path.join(out, "loops.csv"),
        "t,loop_count",
        [(t, c.loop_count) for t, c in zip(times, contours)],
    )
    positions = []
    for f in fields:
        weights = f.mesh.lumped_mass * np.maximum(f.values, 0.0)
        total = weights.sum()
        positions.append(
            (weights @ f.mesh.vertices[:, 0] / total, weights @ f.mesh.vertices[:, 1] / total)
            if total > 0
            else (np.nan, np.nan)
        )
    speeds = (
        centroid_speed(times, positions) if len(times) >= 2 else [0.0] * len(times)
    )
    _csv(
        os.path.join(out, "centroid.csv"),
        "t,x,y,speed",
        [(t, p[0], p[1], s) for t, p, s in zip(times, positions, speeds)],
    )
    rows = []
    for t, contour in zip(times, contours):
        for li, loop in enumerate(contour.loops):
            rows.extend((t, li, pt[0], pt[1]) for pt in loop)
    _csv(os.path.join(out, "contours.csv"), "t,loop,x,y", rows)
    print(f"analyzed {len(paths)} snapshots into {out}")
    return 0


def _cmd_gradcheck(args) -> int:
    problem = gradcheck_problem(nx=args.nx, ny=args.ny, n_steps=args.steps)
    report, per_step = fd_gradient_oracle(
        problem,
        n_directions=args.directions,
        seed=args.seed,
        tolerance=args.tol,
    )
    for h in sorted(per_step, reverse=True):
        print(f"h={h:g}: worst relative error {per_step[h]:.3e}")
    print(f"max relative error = {report.max_rel_error:.3e} (tolerance {args.tol:g})")
    if report.passed:
        print("gradient check passed")
        return 0
    print("gradient check FAILED", file=sys.stderr)
    return 3


def cli_main(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    if args.command is None:
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return 1
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "track":
            return _cmd_track(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_gradcheck(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (SolveError, ConvergenceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
