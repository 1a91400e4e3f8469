"""Cycle-indexed parameter degradation, cycle studies and the reduction error metric."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .fom import SimulationError, Trajectory
from .model import ParameterPoint

TARGETS = ("reaction_rate", "diffusion", "both")


@dataclass(frozen=True)
class DegradationSchedule:
    """Exponential decay F(n) = f0 * exp(c * ln(beta) * n / N).

    ``c`` is 1, or the C-rate when ``couple_c_rate`` is set. The value at
    ``n = N`` is ``beta * f0`` (for ``c = 1``).
    """

    f0: float = 0.5
    beta: float = 0.5
    n_total: int = 1000
    couple_c_rate: bool = False
    target: str = "both"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.n_total < 1:
            raise ValueError("n_total must be at least 1")
        if self.f0 <= 0:
            raise ValueError("f0 must be positive")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")

    def rate(self, c_rate: float = 1.0) -> float:
        """Growth rate a_F of dF/dn = a_F F (times C_h when coupled)."""
        c = c_rate if self.couple_c_rate else 1.0
        return c * math.log(self.beta) / self.n_total


def schedule_eval(n, s: DegradationSchedule, c_rate: float = 1.0):
    """Parameter value after ``n`` cycles.

    The endpoints are returned exactly: F(0) = f0 and, for the uncoupled
    schedule or C_h = 1, F(N) = beta * f0.
    """
    scalar = np.ndim(n) == 0
    n_arr = np.atleast_1d(np.asarray(n))
    if np.any(n_arr < 0):
        raise ValueError("cycle index must be nonnegative")
    if np.any(n_arr > s.n_total):
        warnings.warn("cycle index beyond n_total: extrapolating the schedule", stacklevel=2)
    c = c_rate if s.couple_c_rate else 1.0
    out = s.f0 * np.exp(c * math.log(s.beta) * n_arr / s.n_total)
    out = np.where(n_arr == 0, s.f0, out)
    if c == 1.0:
        out = np.where(n_arr == s.n_total, s.beta * s.f0, out)
    return float(out[0]) if scalar else out


def cycle_parameter(n: int, s: DegradationSchedule, base: ParameterPoint) -> ParameterPoint:
    """ParameterPoint of cycle ``n``: the schedule overwrites D, L or both."""
    v = schedule_eval(n, s, base.c_rate)
    d = v if s.target in ("diffusion", "both") else base.d_scale
    l = v if s.target in ("reaction_rate", "both") else base.l_scale
    return ParameterPoint(base.c_rate, d, l)


@dataclass
class CycleRecord:
    n: int
    parameter: ParameterPoint
    soc_at_emin: float
    wall_seconds: float
    failed: bool = False
    voltage_curve: np.ndarray | None = None


@dataclass
class CycleStudyResult:
    schedule: DegradationSchedule
    kind: str
    records: list = field(default_factory=list)

    @property
    def cycles(self) -> np.ndarray:
        return np.array([r.n for r in self.records])

    @property
    def capacity(self) -> np.ndarray:
        return np.array([r.soc_at_emin for r in self.records])

    @property
    def total_seconds(self) -> float:
        return float(sum(r.wall_seconds for r in self.records))

    def monotone_nonincreasing(self, tol: float = 1e-9) -> bool:
        c = self.capacity
        c = c[np.isfinite(c)]
        return bool(np.all(np.diff(c) <= tol))

    def rows(self, with_timing: bool = False):
        for r in self.records:
            row = [r.n, r.parameter.d_scale, r.parameter.l_scale, r.parameter.c_rate, r.soc_at_emin]
            if with_timing:
                row.append(r.wall_seconds)
            yield row


def run_cycle_study(schedule: DegradationSchedule, runner: Callable, base: ParameterPoint,
                    sample_cycles: Iterable[int] | None = None, kind: str = "fom",
                    keep_curves: bool = False, thin: int = 1) -> CycleStudyResult:
    """Repeated discharges from the fixed initial state with degrading parameters.

    ``runner(point)`` must return an object with ``soc_at_emin`` and
    ``wall_seconds`` (a :class:`Trajectory` or a reduced trajectory). A
    failing cycle is recorded with NaN capacity and the study continues.
    """
    cycles = range(schedule.n_total + 1) if sample_cycles is None else sorted(set(sample_cycles))
    result = CycleStudyResult(schedule, kind)
    for n in cycles:
        if not 0 <= n <= schedule.n_total:
            raise ValueError(f"cycle {n} outside 0..{schedule.n_total}")
        mu = cycle_parameter(n, schedule, base)
        t0 = time.perf_counter()
        try:
            out = runner(mu)
        except SimulationError:
            result.records.append(CycleRecord(n, mu, float("nan"), time.perf_counter() - t0, True))
            continue
        curve = None
        if keep_curves and hasattr(out, "voltage_curve"):
            curve = out.voltage_curve()[::thin]
        result.records.append(CycleRecord(n, mu, float(out.soc_at_emin), out.wall_seconds,
                                          False, curve))
    return result


def _states(t):
    if isinstance(t, Trajectory):
        return t.states
    if hasattr(t, "lift"):
        return t.lift().states
    return np.asarray(t, dtype=float)


def relative_l2l2_error(fom, rom) -> float:
    """||u_h - u_rom|| / ||u_rom|| over the space-time concatenation.

    Trajectories of different length are compared on their common prefix.
    """
    a, b = _states(fom), _states(rom)
    n = min(a.shape[0], b.shape[0])
    a, b = a[:n], b[:n]
    den = np.linalg.norm(b)
    if den == 0:
        raise ZeroDivisionError("reduced trajectory has zero norm")
    return float(np.linalg.norm(a - b) / den)


def mean_relative_error(pairs) -> float:
    """Average of :func:`relative_l2l2_error` over (fom, rom) pairs."""
    pairs = list(pairs)
    return float(np.mean([relative_l2l2_error(f, r) for f, r in pairs]))
