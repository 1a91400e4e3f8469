"""Invariant suite behind ``batrom verify``.

Every check returns a :class:`CheckResult` holding the measured quantity and
the tolerance it is held to, so margins can be compared across runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .degradation import relative_l2l2_error
from .fom import Discretization, simulate
from .mesh import build_mesh, initial_state
from .model import (CellConfig, ParameterPoint, f_active, f_electrolyte, gamma_active,
                    gamma_electrolyte)
from .pod import hapod_incremental, pod
from .rom import ReducedModel, greedy_points, interpolate, offline_build, operator_images


@dataclass
class CheckResult:
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and self.measured < self.tolerance)

    @property
    def margin(self) -> float:
        """tolerance / measured; above 1 means the check passes."""
        return self.tolerance / self.measured if self.measured > 0 else np.inf

    def row(self):
        return [self.name, "PASS" if self.passed else "FAIL", self.measured, self.tolerance]


def check_material_identities(n: int = 50, seed: int = 0, tol: float = 1e-6) -> CheckResult:
    """y f'(y) equals the thermodynamic factor, by central differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for y in rng.uniform(0.05, 0.45, n):
        h = 1e-6 * y
        for f, g, arg in ((f_active, gamma_active, 1.5), (f_electrolyte, gamma_electrolyte, 4.0)):
            d = y * (f(y + h, arg) - f(y - h, arg)) / (2 * h)
            worst = max(worst, abs(d - g(y, arg)) / abs(g(y, arg)))
    return CheckResult("material_identities", worst, tol)


def check_equilibrium(disc: Discretization, tol: float = 1e-10) -> CheckResult:
    """Residual of the initial state without current."""
    u0 = initial_state(disc.config, disc.mesh).u
    r = disc.residual(u0, u0, ParameterPoint(0.0), 1e-2)
    return CheckResult("equilibrium_residual", float(np.linalg.norm(r)), tol)


def check_jacobian(disc: Discretization, traj, n_states: int = 5, n_dirs: int = 20,
                   seed: int = 0, tol: float = 1e-6, jacobian: Callable | None = None) -> CheckResult:
    """Directional central differences of the residual against J v.

    ``jacobian(u, u_prev, point, dt)`` replaces the assembled Jacobian, which
    lets a test feed in a deliberately wrong one.
    """
    jacobian = disc.jacobian if jacobian is None else jacobian
    rng = np.random.default_rng(seed)
    mu, dt = traj.parameter, traj.dt
    idx = np.linspace(1, len(traj) - 1, n_states).astype(int)
    worst = 0.0
    for i in idx:
        u, up = traj.states[i], traj.states[i - 1]
        J = jacobian(u, up, mu, dt)
        for _ in range(n_dirs):
            v = rng.standard_normal(u.size)
            v *= 1e-3 * np.linalg.norm(u) / np.linalg.norm(v)
            h = 1e-3
            fd = (disc.residual(u + h * v, up, mu, dt) - disc.residual(u - h * v, up, mu, dt)) / (2 * h)
            jv = J @ v
            worst = max(worst, np.linalg.norm(fd - jv) / np.linalg.norm(jv))
    return CheckResult("jacobian_fd", worst, tol)


def check_capacity_balance(traj, tol: float = 5e-3) -> CheckResult:
    """|ybar_cat(tau) - ybar_cat(0) - C_h tau| over all accepted steps."""
    soc = traj.soc("cathode")
    dev = np.abs(soc - soc[0] - traj.parameter.c_rate * traj.times)
    return CheckResult("capacity_balance", float(dev.max()), tol)


def check_pod(seed: int = 0, tol: float = 1e-9) -> CheckResult:
    """Projection error of POD against the discarded singular values."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for m, n in ((500, 100), (120, 40), (60, 60)):
        S = rng.standard_normal((m, 8)) @ rng.standard_normal((8, n)) + 1e-3 * rng.standard_normal((m, n))
        sv = np.linalg.svd(S, compute_uv=False)
        for r in (1, 5, 8, 20):
            B = pod(S, rank=r)
            pred = np.sqrt(np.sum(sv[r:] ** 2))
            worst = max(worst, abs(B.projection_error(S) - pred) / np.linalg.norm(S))
    return CheckResult("pod_oracle", worst, tol)


def check_hapod(snapshots, eps: float = 1e-4, omega: float = 0.9) -> CheckResult:
    """HAPOD relative error over the bound eps; also needs at least as many modes as POD."""
    chunks = list(snapshots)
    S = np.hstack(chunks)
    B = hapod_incremental(chunks, eps, omega)
    ratio = B.projection_error(S) / (eps * np.linalg.norm(S))
    if len(B) < len(pod(S, eps=eps)):
        ratio = np.inf
    return CheckResult("hapod_bound", float(ratio), 1.0)


def check_interpolation(U, tol: float = 1e-10) -> CheckResult:
    """Greedy points reproduce every collateral mode."""
    P = greedy_points(U)
    M = U.modes if hasattr(U, "modes") else U
    worst = 0.0
    for j in range(M.shape[1]):
        _, approx = interpolate(M, P, M[P.indices, j])
        worst = max(worst, float(np.abs(approx - M[:, j]).max()))
    return CheckResult("interpolation_exact", worst, tol)


def check_rom_reproduction(config, mesh, disc, point, dt, tol: float = 1e-6) -> CheckResult:
    """Untruncated reduced model on its own training parameter."""
    art = offline_build([point], config, mesh, dt=dt, eps=0.0, disc=disc, rtol=1e-10)
    fom = simulate(point, config, mesh, dt=dt, disc=disc, rtol=1e-10)
    red = ReducedModel(art, disc=disc).simulate(point, dt=dt)
    return CheckResult("rom_reproduction", relative_l2l2_error(fom, red), tol)


def verify(config: CellConfig | None = None, n_macro: int = 20, n_micro: int = 10,
           dt: float = 1e-2, scale: float = 1.0, jacobian: Callable | None = None) -> list:
    """Run the invariant suite; ``scale`` multiplies every tolerance."""
    config = CellConfig() if config is None else config
    mesh = build_mesh(n_macro, n_micro, config)
    disc = Discretization(config, mesh)
    mu = ParameterPoint(1.0)
    traj = simulate(mu, config, mesh, dt=dt, disc=disc, record_iterates=True)
    states = [simulate(ParameterPoint(c), config, mesh, dt=dt, disc=disc).states.T
              for c in (0.5, 2.0)] + [traj.states.T]
    images = operator_images(disc, traj).T
    coll = pod(images, eps=1e-8)
    checks = [
        check_material_identities(tol=1e-6 * scale),
        check_equilibrium(disc, tol=1e-10 * scale),
        check_jacobian(disc, traj, tol=1e-6 * scale, jacobian=jacobian),
        check_capacity_balance(traj, tol=5e-3 * scale),
        check_pod(tol=1e-9 * scale),
        check_hapod(states),
        check_interpolation(coll, tol=1e-10 * scale),
        check_rom_reproduction(config, mesh, disc, mu, dt, tol=1e-6 * scale),
    ]
    return checks
