"""Experiment drivers: charge-rate sweeps, degradation and rate-coupled degradation.

Every driver writes deterministic CSV tables to ``spec.out`` and keeps all
wall-clock measurements in a separate ``*_timing.csv``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degradation import (DegradationSchedule, relative_l2l2_error, run_cycle_study)
from .fom import Discretization, SimulationError, simulate
from .io import write_csv, write_cycle_csv, write_timing_csv, write_trajectory_csv
from .mesh import build_mesh
from .model import CellConfig, ParameterPoint
from .rom import ReducedModel, offline_build

PARAMETERS = ("c_rate", "d_scale", "l_scale")
DEFAULT_SEED = 20240607


# ---------------------------------------------------------------------------
# parameter sets
# ---------------------------------------------------------------------------

def _parse_values(text: str, random: bool, rng):
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range {text!r} must read lo:hi:count")
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1 or hi < lo:
            raise ValueError(f"empty range {text!r}")
        if random:
            return rng.uniform(lo, hi, n)
        return np.linspace(lo, hi, n)
    vals = [float(v) for v in text.split(",") if v.strip()]
    if not vals:
        raise ValueError("empty value list")
    return np.array(vals)


def parse_parameter_set(text: str, random: bool = False, seed: int = DEFAULT_SEED,
                        base: ParameterPoint | None = None) -> list:
    """Parameter points from a compact description.

    ``"0.01:4:5"`` gives five equidistant C-rates, ``"0.5,1,2"`` an explicit
    list, and ``"d_scale=0.25:0.5:3 l_scale=0.25:0.5:3"`` a tensor grid.
    Unnamed values are C-rates; unlisted parameters keep the ``base`` values.
    With ``random`` every ``lo:hi:count`` range draws ``count`` uniform
    samples instead, and the named parameters are sampled jointly (all
    ranges must then share the same count).
    """
    base = ParameterPoint(1.0) if base is None else base
    rng = np.random.default_rng(seed)
    axes = {}
    for tok in text.split():
        name, _, val = tok.rpartition("=")
        name = name or "c_rate"
        if name not in PARAMETERS:
            raise ValueError(f"unknown parameter {name!r}")
        axes[name] = _parse_values(val, random, rng)
    if not axes:
        raise ValueError("empty parameter set")
    names = list(axes)
    if random:
        counts = {len(v) for v in axes.values()}
        if len(counts) != 1:
            raise ValueError("random ranges must share one count")
        combos = zip(*(axes[k] for k in names))
    else:
        combos = itertools.product(*(axes[k] for k in names))
    out = []
    for combo in combos:
        kw = dict(zip(PARAMETERS, base.as_tuple()))
        kw.update({k: float(v) for k, v in zip(names, combo)})
        out.append(ParameterPoint(**kw))
    return out


def nested_sizes(full, count: int = 4) -> list:
    """``count`` nested size tuples growing linearly up to ``full``."""
    full = np.asarray(full)
    return [tuple(int(v) for v in np.maximum(1, np.ceil(full * k / count))) for k in range(1, count + 1)]


# ---------------------------------------------------------------------------
# run specification and report
# ---------------------------------------------------------------------------

@dataclass
class RunSpec:
    """Settings shared by the drivers."""

    out: Path = Path("results")
    config: CellConfig = field(default_factory=CellConfig)
    n_macro: int = 20
    n_micro: int = 10
    dt: float = 1e-2
    train: str = "0.01:4:5"
    test: str = "0.01:4:5"
    seed: int = DEFAULT_SEED
    eps: float = 4e-8
    n_sizes: int = 4
    betas: tuple = (0.1, 0.4, 0.7)
    coupled_betas: tuple = (0.6,)
    n_cycles: int = 50
    fom_every: int = 1
    cycle_rates: tuple = (0.5, 1.0, 2.0)
    curve_rates: tuple = (0.01, 1.0, 4.0)
    f0: float = 0.5
    n_grid: int = 3
    n_test: int = 5
    size_tol: float = 1e-4  # mean state error the online sizes of the cycle studies must meet

    def __post_init__(self):
        self.out = Path(self.out)
        if min(self.n_cycles, self.fom_every, self.n_sizes, self.n_test) < 1 or self.n_grid < 2:
            raise ValueError("cycle counts and size counts must be positive")

    def mesh(self):
        return build_mesh(self.n_macro, self.n_micro, self.config)


@dataclass
class ExperimentReport:
    name: str
    tables: dict = field(default_factory=dict)
    timings: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def table(self, key, header, rows, out: Path):
        rows = [list(r) for r in rows]
        self.tables[key] = (header, rows)
        path = out / f"{self.name}_{key}.csv"
        write_csv(path, header, rows)
        self.files.append(path)

    def finish(self, out: Path):
        path = out / f"{self.name}_timing.csv"
        write_timing_csv(path, self.timings)
        self.files.append(path)
        return self


def _error_table(report, art, disc, test, spec, out):
    """FOM oracle runs on ``test`` against nested reduced models."""
    fom = [simulate(mu, spec.config, disc.mesh, dt=spec.dt, disc=disc) for mu in test]
    fom_time = float(np.mean([f.wall_seconds for f in fom]))
    rows = []
    for sizes in nested_sizes(art.sizes, spec.n_sizes):
        rom = ReducedModel(art, sizes=sizes, disc=disc)
        errs, times = [], []
        for i, (f, mu) in enumerate(zip(fom, test)):
            try:
                if i == 0:
                    rom.simulate(mu)  # warm-up: kernel compilation stays out of the timings
                r = rom.simulate(mu)
            except SimulationError:
                errs.append(np.nan)
                continue
            errs.append(relative_l2l2_error(f, r))
            times.append(r.wall_seconds)
        failed = int(np.isnan(errs).sum())
        err = float(np.nanmean(errs)) if failed < len(errs) else float("nan")
        rows.append([sum(sizes), *sizes, failed, err])
        if times:
            rom_time = float(np.mean(times))
            tag = "-".join(map(str, sizes))
            report.timings += [[f"rom_{tag}", rom_time], [f"speedup_{tag}", fom_time / rom_time]]
    report.timings.append(["fom_mean", fom_time])
    report.table("errors", ["n_basis", "n_u1", "n_u2", "n_u3", "n_u4", "failed", "mean_error"], rows, out)
    errs = np.array([r[-1] for r in rows])
    report.checks["rom_failures"] = int(sum(r[-2] for r in rows))
    report.checks["error_monotone"] = bool(np.all(np.diff(errs[np.isfinite(errs)]) <= 0))
    report.checks["final_error"] = float(errs[-1])
    return rows


def select_sizes(rows, tol: float):
    """Smallest size tuple of an error table whose runs all succeed with mean error <= tol.

    Falls back to the largest size when none qualifies.
    """
    for row in rows:
        if row[-2] == 0 and row[-1] <= tol:
            return tuple(row[1:5])
    return tuple(rows[-1][1:5])


def _offline(report, spec, train, disc):
    art = offline_build(train, spec.config, disc.mesh, dt=spec.dt, eps=spec.eps, disc=disc)
    md = art.metadata
    report.timings += [["offline_total", md["offline_seconds"]],
                       ["offline_fom", md["fom_seconds"]],
                       ["offline_compression", md["compression_seconds"]]]
    report.table("artifact", ["component", "basis_size", "collateral_size", "condition"],
                 [[c, len(art.bases[c]), len(art.collateral[c]), art.points[c].condition]
                  for c in art.bases], spec.out)
    return art


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def run_experiment_1(spec: RunSpec) -> ExperimentReport:
    """Charge-rate variation of an unaged cell: ROM errors, voltage curves, OCP check."""
    out = spec.out
    out.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport("exp1")
    mesh = spec.mesh()
    disc = Discretization(spec.config, mesh)
    base = ParameterPoint(1.0, spec.f0, spec.f0)
    train = parse_parameter_set(spec.train, base=base)
    test = parse_parameter_set(spec.test, random=True, seed=spec.seed, base=base)
    art = _offline(report, spec, train, disc)
    _error_table(report, art, disc, test, spec, out)
    cfg = spec.config
    for rate in spec.curve_rates:
        traj = simulate(ParameterPoint(rate, spec.f0, spec.f0), cfg, mesh, dt=spec.dt, disc=disc)
        path = out / f"exp1_curve_c{rate:g}.csv"
        write_trajectory_csv(path, traj, cfg)
        report.files.append(path)
        if rate <= 0.01:
            e, ocv = traj.voltage(cfg), traj.ocv(cfg)
            report.table("ocp", ["ybar_cat", "E_ocv"], zip(traj.soc("cathode"), ocv), out)
            scale = np.abs(ocv).max()
            mask = np.abs(ocv) >= 1.0
            report.checks["ocp_max_rel_dev"] = float(np.max(np.abs(e - ocv)[mask] / np.abs(ocv)[mask]))
            report.checks["ocp_max_scaled_dev"] = float(np.max(np.abs(e - ocv)) / scale)
    return report.finish(out)


def _lowest_value(spec: RunSpec, betas, rates, couple: bool) -> float:
    """Smallest parameter value any schedule of the study reaches."""
    c = max(max(rates), 1.0) if couple else 1.0
    return spec.f0 * min(betas) ** c


def _degradation_train(spec: RunSpec, rates, lo: float):
    grid = np.linspace(lo, spec.f0, spec.n_grid)
    return [ParameterPoint(c, d, l) for c in rates for d in grid for l in grid]


def _cycle_studies(report, spec, rom, rates, betas, couple, out, tag):
    """ROM cycle studies for every beta, rate and degradation target."""
    curves = {}
    for rate, beta, target in itertools.product(rates, betas, ("reaction_rate", "diffusion")):
        s = DegradationSchedule(spec.f0, beta, spec.n_cycles, couple, target)
        res = run_cycle_study(s, rom.simulate, ParameterPoint(rate, spec.f0, spec.f0), kind="rom")
        path = out / f"{tag}_capacity_{target}_c{rate:g}_beta{beta:g}.csv"
        write_cycle_csv(path, res)
        report.files.append(path)
        report.timings.append([f"rom_study_{target}_c{rate:g}_beta{beta:g}", res.total_seconds])
        curves[(rate, beta, target)] = res
    for rate, target in itertools.product(rates, ("reaction_rate", "diffusion")):
        final = [curves[(rate, b, target)].capacity[-1] for b in sorted(betas)]
        report.checks[f"beta_ordering_{target}_c{rate:g}"] = bool(np.all(np.diff(final) >= 0))
    return curves


def _fom_comparison(report, spec, rom, disc, rate, beta, couple, out):
    """FOM against ROM on one cycle study with both parameters degrading."""
    s = DegradationSchedule(spec.f0, beta, spec.n_cycles, couple, "both")
    base = ParameterPoint(rate, spec.f0, spec.f0)
    cycles = range(0, spec.n_cycles + 1, spec.fom_every)
    fom = run_cycle_study(s, lambda mu: simulate(mu, spec.config, disc.mesh, dt=spec.dt, disc=disc),
                          base, cycles, kind="fom")
    red = run_cycle_study(s, rom.simulate, base, cycles, kind="rom")
    rel = np.abs(fom.capacity - red.capacity) / np.abs(fom.capacity)
    rows = [[n, f, r, e] for n, f, r, e in zip(fom.cycles, fom.capacity, red.capacity, rel)]
    report.table(f"compare_c{rate:g}", ["n", "soc_fom", "soc_rom", "rel_error"], rows, out)
    report.timings += [[f"fom_cycles_c{rate:g}", fom.total_seconds],
                       [f"rom_cycles_c{rate:g}", red.total_seconds],
                       [f"speedup_cycles_c{rate:g}", fom.total_seconds / red.total_seconds]]
    report.checks[f"capacity_rel_error_c{rate:g}"] = float(np.nanmax(rel))
    report.checks[f"speedup_c{rate:g}"] = fom.total_seconds / red.total_seconds
    return fom, red


def _degradation_experiment(spec: RunSpec, name: str, rates, betas, couple: bool) -> ExperimentReport:
    out = spec.out
    out.mkdir(parents=True, exist_ok=True)
    report = ExperimentReport(name)
    disc = Discretization(spec.config, spec.mesh())
    lo = _lowest_value(spec, betas, rates, couple)
    art = _offline(report, spec, _degradation_train(spec, rates, lo), disc)
    n_test = spec.n_test
    axes = [f"d_scale={lo}:{spec.f0}:{n_test}", f"l_scale={lo}:{spec.f0}:{n_test}"]
    if len(rates) > 1:
        axes.insert(0, f"c_rate={min(rates)}:{max(rates)}:{n_test}")
    test = parse_parameter_set(" ".join(axes), random=True, seed=spec.seed,
                               base=ParameterPoint(rates[0], spec.f0, spec.f0))
    rows = _error_table(report, art, disc, test, spec, out)
    sizes = select_sizes(rows, spec.size_tol)
    report.checks["online_sizes"] = sizes
    rom = ReducedModel(art, sizes=sizes, disc=disc)
    rom.simulate(ParameterPoint(rates[0], spec.f0, spec.f0))
    _cycle_studies(report, spec, rom, rates, betas, couple, out, name)
    _fom_comparison(report, spec, rom, disc, 1.0 if 1.0 in rates else rates[0], min(betas), couple, out)
    return report.finish(out)


def run_experiment_2(spec: RunSpec) -> ExperimentReport:
    """Degradation of diffusion and reaction rate at C_h = 1."""
    return _degradation_experiment(spec, "exp2", (1.0,), spec.betas, couple=False)


def run_experiment_3(spec: RunSpec) -> ExperimentReport:
    """Rate-coupled degradation over several C-rates."""
    rates = tuple(sorted(set(spec.cycle_rates)))
    return _degradation_experiment(spec, "exp3", rates, spec.coupled_betas, couple=True)
