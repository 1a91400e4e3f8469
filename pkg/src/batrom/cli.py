"""Command line interface: ``batrom <command> [options]``."""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .degradation import TARGETS, DegradationSchedule, relative_l2l2_error, run_cycle_study
from .experiments import (DEFAULT_SEED, RunSpec, parse_parameter_set, run_experiment_1,
                          run_experiment_2, run_experiment_3)
from .fom import Discretization, SimulationError, simulate
from .io import (load_artifact, load_config, save_artifact, write_csv, write_cycle_csv,
                 write_timing_csv, write_trajectory_csv)
from .mesh import build_mesh
from .model import CellConfig, ParameterPoint
from .rom import ReducedModel, offline_build
from .verification import verify


def _mesh_arg(text: str):
    try:
        a, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"mesh must read MACROxMICRO, got {text!r}") from None
    if a < 2 or b < 2:
        raise argparse.ArgumentTypeError("mesh needs at least 2 nodes per direction")
    return a, b


def _sizes_arg(text: str):
    vals = tuple(int(v) for v in text.split(","))
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("sizes need four comma-separated integers")
    return vals


def _positive(text: str):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _timing_path(out: Path) -> Path:
    return out.with_name(out.stem + "_timing.csv")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI parameter file (reference cell if omitted)")
    common.add_argument("--mesh", type=_mesh_arg, default=(20, 10), help="MACROxMICRO, e.g. 20x10")
    common.add_argument("--dt", type=_positive, default=1e-2, help="time step")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for random test sets")
    point = argparse.ArgumentParser(add_help=False)
    point.add_argument("--c-rate", type=float, default=1.0)
    point.add_argument("--d-scale", type=_positive, default=0.5)
    point.add_argument("--l-scale", type=_positive, default=0.5)

    p = argparse.ArgumentParser(prog="batrom", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, point], help="full-order discharge")
    s.add_argument("--out", type=Path, default=Path("trajectory.csv"))
    s.add_argument("--e-min", type=float)

    s = sub.add_parser("offline", parents=[common], help="build a reduced model")
    s.add_argument("--train", default="0.01:4:5", help='training set, e.g. "0.01:4:5"')
    s.add_argument("--eps", type=float, default=4e-8)
    s.add_argument("--artifact", type=Path, default=Path("rom.bin"))

    s = sub.add_parser("rom-run", parents=[common, point], help="reduced discharge")
    s.add_argument("--artifact", type=Path, required=True)
    s.add_argument("--sizes", type=_sizes_arg)
    s.add_argument("--out", type=Path, default=Path("rom_trajectory.csv"))

    s = sub.add_parser("cycle-study", parents=[common, point], help="capacity over cycles")
    s.add_argument("--artifact", type=Path, help="use this reduced model instead of the full one")
    s.add_argument("--sizes", type=_sizes_arg)
    s.add_argument("--beta", type=float, default=0.5)
    s.add_argument("--cycles", type=int, default=50)
    s.add_argument("--every", type=int, default=1, help="simulate every k-th cycle")
    s.add_argument("--target", choices=TARGETS, default="both")
    s.add_argument("--couple", action="store_true", help="rate-coupled schedule")
    s.add_argument("--out", type=Path, default=Path("cycles.csv"))

    s = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    s.add_argument("--scale", type=_positive, default=1.0, help="multiply every tolerance")
    s.add_argument("--out", type=Path, default=Path("verify.csv"))

    s = sub.add_parser("compare", parents=[common], help="reduced vs full model on a test set")
    s.add_argument("--artifact", type=Path, required=True)
    s.add_argument("--sizes", type=_sizes_arg)
    s.add_argument("--test", default="0.01:4:5", help='random test ranges, e.g. "0.01:4:10"')
    s.add_argument("--out", type=Path, default=Path("compare.csv"))

    s = sub.add_parser("experiment", parents=[common], help="run a full experiment driver")
    s.add_argument("number", type=int, choices=(1, 2, 3))
    s.add_argument("--train", default="0.01:4:5",
                   help="training C-rates (experiment 1; the others train on a D/L grid)")
    s.add_argument("--test", default="0.01:4:5", help="random test C-rates (experiment 1)")
    s.add_argument("--cycles", type=int, default=50)
    s.add_argument("--every", type=int, default=1)
    s.add_argument("--out", type=Path, default=Path("results"))
    return p


def _config(args) -> CellConfig:
    return load_config(args.config) if args.config else CellConfig()


def _point(args) -> ParameterPoint:
    return ParameterPoint(args.c_rate, args.d_scale, args.l_scale)


def _rom(args, config):
    art = load_artifact(args.artifact, config=config if args.config else None)
    if tuple(args.mesh) != (art.mesh.n_macro, art.mesh.n_micro):
        print(f"note: using the artifact mesh {art.mesh.n_macro}x{art.mesh.n_micro}", file=sys.stderr)
    rom = ReducedModel(art, sizes=getattr(args, "sizes", None))
    return art, rom


def cmd_simulate(args):
    config = _config(args)
    mesh = build_mesh(*args.mesh, config)
    traj = simulate(_point(args), config, mesh, dt=args.dt, e_min=args.e_min)
    write_trajectory_csv(args.out, traj, config)
    print(f"{len(traj) - 1} steps, terminal SOC {traj.soc_at_emin:.6f}, "
          f"{traj.wall_seconds:.3f} s -> {args.out}")


def cmd_offline(args):
    config = _config(args)
    mesh = build_mesh(*args.mesh, config)
    train = parse_parameter_set(args.train)
    art = offline_build(train, config, mesh, dt=args.dt, eps=args.eps)
    save_artifact(art, args.artifact)
    md = art.metadata
    print(f"sizes {art.sizes}, points {art.collateral_sizes}, offline {md['offline_seconds']:.2f} s "
          f"-> {args.artifact}")


def cmd_rom_run(args):
    art, rom = _rom(args, _config(args))
    rt = rom.simulate(_point(args), dt=args.dt)
    write_trajectory_csv(args.out, rt.lift(), art.config)
    print(f"{len(rt) - 1} steps, terminal SOC {rt.soc_at_emin:.6f}, "
          f"{rt.wall_seconds:.3f} s -> {args.out}")


def cmd_cycle_study(args):
    config = _config(args)
    schedule = DegradationSchedule(args.d_scale if args.target == "diffusion" else args.l_scale,
                                   args.beta, args.cycles, args.couple, args.target)
    if args.artifact:
        _, rom = _rom(args, config)
        rom.simulate(_point(args), dt=args.dt)
        runner, kind = (lambda mu: rom.simulate(mu, dt=args.dt)), "rom"
    else:
        mesh = build_mesh(*args.mesh, config)
        disc = Discretization(config, mesh)
        runner, kind = (lambda mu: simulate(mu, config, mesh, dt=args.dt, disc=disc)), "fom"
    res = run_cycle_study(schedule, runner, _point(args),
                          range(0, args.cycles + 1, args.every), kind=kind)
    write_cycle_csv(args.out, res)
    write_timing_csv(_timing_path(args.out), [[f"{kind}_total", res.total_seconds]])
    failed = sum(r.failed for r in res.records)
    print(f"{len(res.records)} cycles ({failed} failed), final capacity {res.capacity[-1]:.6f}, "
          f"{res.total_seconds:.2f} s -> {args.out}")


def cmd_verify(args):
    checks = verify(_config(args), *args.mesh, dt=args.dt, scale=args.scale)
    write_csv(args.out, ["check", "status", "measured", "tolerance"], [c.row() for c in checks])
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured:.3e} < {c.tolerance:.1e}")
    return 0 if all(c.passed for c in checks) else 1


def cmd_compare(args):
    config = _config(args)
    art, rom = _rom(args, config)
    test = parse_parameter_set(args.test, random=True, seed=args.seed)
    disc = rom.disc
    rom.simulate(test[0], dt=args.dt)
    rows, timing = [], []
    for mu in test:
        try:
            f = simulate(mu, art.config, art.mesh, dt=args.dt, disc=disc)
            r = rom.simulate(mu, dt=args.dt)
        except SimulationError as exc:
            print(f"skipped {mu.as_tuple()}: {exc}", file=sys.stderr)
            continue
        rows.append([*mu.as_tuple(), relative_l2l2_error(f, r), f.soc_at_emin, r.soc_at_emin])
        timing.append([f"fom_{mu.c_rate!r}", f.wall_seconds])
        timing.append([f"rom_{mu.c_rate!r}", r.wall_seconds])
    write_csv(args.out, ["c_rate", "d_scale", "l_scale", "rel_error", "soc_fom", "soc_rom"], rows)
    write_timing_csv(_timing_path(args.out), timing)
    if rows:
        print(f"mean relative error {np.mean([r[3] for r in rows]):.3e} over {len(rows)} points "
              f"-> {args.out}")


def cmd_experiment(args):
    spec = RunSpec(out=args.out, config=_config(args), n_macro=args.mesh[0], n_micro=args.mesh[1],
                   dt=args.dt, train=args.train, test=args.test, seed=args.seed,
                   n_cycles=args.cycles, fom_every=args.every)
    t0 = time.perf_counter()
    driver = {1: run_experiment_1, 2: run_experiment_2, 3: run_experiment_3}[args.number]
    report = driver(spec)
    for k, v in report.checks.items():
        print(f"{k}: {v}")
    print(f"{len(report.files)} files in {args.out} ({time.perf_counter() - t0:.1f} s)")


COMMANDS = {"simulate": cmd_simulate, "offline": cmd_offline, "rom-run": cmd_rom_run,
            "cycle-study": cmd_cycle_study, "verify": cmd_verify, "compare": cmd_compare,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args) or 0
    except (SimulationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
