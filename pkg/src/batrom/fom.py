"""Full-order model: Galerkin assembly, Newton solver and time marching.

The discrete system of one implicit Euler step is written as

    F(u) = G(u; u_prev, mu, dt) - b(mu) = 0,

where ``b`` carries the applied current at the cathode collector and ``G``
collects everything else. Empirical interpolation works on ``G``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _accel
from . import kernels_numpy
from .mesh import PseudoMesh, State, build_mesh, initial_state, micro_element_mass, micro_gauss
from .model import REGIONS, THERMAL_VOLTAGE, CellConfig, ParameterPoint, open_circuit_voltage

if _accel.USE_NUMBA:
    from . import kernels_numba as _kernels
else:
    _kernels = kernels_numpy

STENCIL = 8


class EvaluabilityError(ArithmeticError):
    """The residual is undefined at the requested state."""


class NewtonError(RuntimeError):
    """Newton's method did not converge."""

    def __init__(self, message, iterations=0, residual_norm=np.nan):
        super().__init__(message)
        self.iterations = iterations
        self.residual_norm = residual_norm


class SimulationError(RuntimeError):
    """A time step failed; ``trajectory`` holds the accepted part."""

    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory


def kernel_backend() -> str:
    return "numba" if _kernels is not kernels_numpy else "numpy"


class Discretization:
    """Precomputed element data and the residual/Jacobian evaluators.

    Parameters
    ----------
    config : CellConfig
    mesh : PseudoMesh
    backend : {"numba", "numpy", None}
        Kernel implementation; ``None`` follows the ``BATROM_NUMBA`` switch.
    """

    def __init__(self, config: CellConfig, mesh: PseudoMesh, backend: str | None = None):
        self.config = config
        self.mesh = mesh
        if backend is None:
            self.kernels = _kernels
        elif backend == "numpy":
            self.kernels = kernels_numpy
        elif backend == "numba":
            from . import kernels_numba
            self.kernels = kernels_numba
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.touched = 0  # rows evaluated so far, for cost accounting
        self._build_arrays()
        self._build_pattern()

    # setup ------------------------------------------------------------------
    def _build_arrays(self):
        cfg, mesh = self.config, self.mesh
        n, nm = mesh.n_macro, mesh.n_micro
        ne, mt = mesh.n_electrode, mesh.n_macro_total
        o = mesh.offsets
        self.ints = np.array([n, nm, ne, mt, o[1], o[2], o[3], o[4]], dtype=np.int64)

        x = mesh.macro_nodes
        h = np.diff(x)
        ereg = mesh.element_region()
        pe = np.array([cfg.geometry[REGIONS[g]].psi_E * cfg.geometry[REGIONS[g]].pi_E for g in ereg])
        psi_e = np.array([cfg.geometry[REGIONS[g]].psi_E for g in ereg])
        self.elt = np.ascontiguousarray(np.stack([h, pe], axis=1))

        mint = np.full((mt, 5), -1, dtype=np.int64)
        mint[1:, 0] = np.arange(mt - 1)
        mint[:-1, 1] = np.arange(1, mt)
        mint[1:, 2] = np.arange(mt - 1)
        mint[:-1, 3] = np.arange(mt - 1)
        emac = mesh.electrode_macro_index()
        mint[emac, 4] = np.arange(ne)
        lump = np.zeros(mt)
        lump[:-1] += psi_e * h / 2
        lump[1:] += psi_e * h / 2
        self.mint = mint
        self.mflt = np.ascontiguousarray(lump[:, None])

        eid = mesh.electrode_of_node()
        eint = np.zeros((ne, 5), dtype=np.int64)
        eflt = np.zeros((ne, 5))
        eint[:, 0] = emac
        eint[:, 1] = eid
        sig = [cfg.sigma_hat_s(e) for e in ("anode", "cathode")]
        theta = [cfg.geometry[e].theta for e in ("anode", "cathode")]
        for p in range(ne):
            e = eid[p]
            first = p % n == 0
            last = p % n == n - 1
            m = emac[p]
            eint[p, 2] = -1 if first else p - 1
            eint[p, 3] = -1 if last else p + 1
            eflt[p, 0] = 0.0 if first else h[m - 1]
            eflt[p, 1] = 0.0 if last else h[m]
            eflt[p, 2] = 0.0 if first else sig[e]
            eflt[p, 3] = 0.0 if last else sig[e]
            eflt[p, 4] = theta[e] * (eflt[p, 0] + eflt[p, 1]) / 2
        eint[0, 4] = 1  # grounded anode collector
        self.eint = eint
        self.eflt = eflt

        self.mg = np.ascontiguousarray(micro_gauss(nm))
        self.mmass = np.ascontiguousarray(micro_element_mass(nm))
        self.collector_row = o[1] + ne - 1
        self.collector_flux = cfg.eta_W_cat

    def _build_pattern(self):
        n = self.mesh.n_dofs
        rows = np.arange(n, dtype=np.int64)
        u0 = initial_state(self.config, self.mesh).u
        sc = self.scalars(ParameterPoint(1.0, 0.5, 0.5), 1e-2)
        res, cols, vals, ok = self._eval(u0, u0, rows, sc, True)
        if not ok:
            raise EvaluabilityError("initial state is not evaluable")
        self._valid = cols >= 0
        counts = self._valid.sum(axis=1)
        self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self._indices = cols[self._valid].astype(np.int64)
        self.rows_all = rows

    def scalars(self, point: ParameterPoint, dt: float) -> np.ndarray:
        cfg = self.config
        el = cfg.electrolyte
        return np.array([
            point.c_rate, dt, point.l_scale, point.d_scale, cfg.bv_symmetry,
            el.solvation_number, el.n_ratio, el.transference, el.diff_coeff,
            el.molar_conductivity, el.s_coeff, 1.0 / (self.mesh.n_micro - 1),
            cfg.anode.enthalpy_gamma, cfg.cathode.enthalpy_gamma,
            cfg.anode.particle_radius, cfg.cathode.particle_radius,
            cfg.eta_n("anode"), cfg.eta_n("cathode"),
        ])

    # evaluation -------------------------------------------------------------
    def _eval(self, u, up, rows, sc, want_jac, res=None, cols=None, vals=None):
        k = rows.shape[0]
        if res is None:
            res = np.empty(k)
        if want_jac and cols is None:
            cols = np.empty((k, STENCIL), dtype=np.int64)
            vals = np.empty((k, STENCIL))
        elif not want_jac:
            cols = np.empty((1, STENCIL), dtype=np.int64)
            vals = np.empty((1, STENCIL))
        ok = self.kernels.eval_rows(u, up, rows, want_jac, self.ints, sc, self.eint, self.eflt,
                                    self.mint, self.mflt, self.elt, self.mg, self.mmass,
                                    res, cols, vals)
        self.touched += k
        return res, cols, vals, bool(ok)

    def rhs(self, point: ParameterPoint) -> np.ndarray:
        """Right-hand side b: the applied current at the cathode collector."""
        b = np.zeros(self.mesh.n_dofs)
        b[self.collector_row] = -point.c_rate * self.collector_flux
        return b

    def operator(self, u, u_prev, point, dt, rows=None):
        """G(u) on all rows or on ``rows``."""
        rows = self.rows_all if rows is None else np.asarray(rows, dtype=np.int64)
        res, _, _, ok = self._eval(np.asarray(u, float), np.asarray(u_prev, float), rows,
                                   self.scalars(point, dt), False)
        if not ok:
            raise EvaluabilityError("state outside the admissible domain")
        return res

    def residual(self, u, u_prev, point, dt):
        """Full residual F = G - b."""
        return self.operator(u, u_prev, point, dt) - self.rhs(point)

    def restricted_residual(self, u, u_prev, point, dt, rows):
        """Entries ``rows`` of F, evaluated from their stencils only."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return np.empty(0)
        g = self.operator(u, u_prev, point, dt, rows)
        return g + point.c_rate * self.collector_flux * (rows == self.collector_row)

    def jacobian(self, u, u_prev, point, dt, with_residual=False):
        """Sparse Jacobian dF/du in CSR format."""
        res, cols, vals, ok = self._eval(np.asarray(u, float), np.asarray(u_prev, float),
                                         self.rows_all, self.scalars(point, dt), True)
        if not ok:
            raise EvaluabilityError("state outside the admissible domain")
        n = self.mesh.n_dofs
        J = sp.csr_matrix((vals[self._valid], self._indices, self._indptr), shape=(n, n))
        if with_residual:
            return J, res - self.rhs(point)
        return J

    def jacobian_rows(self, u, u_prev, point, dt, rows):
        """Residual entries plus stencil columns/values of the Jacobian rows."""
        rows = np.asarray(rows, dtype=np.int64)
        res, cols, vals, ok = self._eval(np.asarray(u, float), np.asarray(u_prev, float), rows,
                                         self.scalars(point, dt), True)
        if not ok:
            raise EvaluabilityError("state outside the admissible domain")
        return res, cols, vals

    def stencil_closure(self, rows) -> np.ndarray:
        """Sorted DOFs that the given rows read."""
        rows = np.asarray(rows, dtype=np.int64)
        idx = [self._indices[self._indptr[r]:self._indptr[r + 1]] for r in rows]
        if not idx:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(idx))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def state_of_charge(state, electrode: str, mesh: PseudoMesh | None = None) -> float:
    """Volume-averaged filling ybar of one electrode's active phase."""
    if isinstance(state, State):
        mesh, u = state.mesh, state.u
    else:
        u = np.asarray(state)
    n, nm = mesh.n_macro, mesh.n_micro
    y = 1.0 / (1.0 + np.exp(-u[: mesh.offsets[1]].reshape(mesh.n_electrode, nm)))
    sel = slice(0, n) if electrode == "anode" else slice(n, 2 * n)
    w = mesh.electrode_weights()[sel]
    local = 3.0 * (y[sel] @ mesh.micro_mass_weights())
    return float(w @ local / w.sum())


def cell_voltage(state, config: CellConfig, mesh: PseudoMesh | None = None):
    """Cell voltage (dimensionless, volts) between the two current collectors."""
    if isinstance(state, State):
        mesh, u = state.mesh, state.u
    else:
        u = np.asarray(state)
    u2 = u[mesh.component_slice("u2")]
    e = float(u2[-1] - u2[0])
    volts = THERMAL_VOLTAGE * e + config.cathode.half_cell_energy - config.anode.half_cell_energy
    return e, volts


def min_cathode_potential(u, mesh: PseudoMesh) -> float:
    u2 = u[mesh.component_slice("u2")]
    return float(u2[mesh.n_macro:].min())


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------

@dataclass
class NewtonResult:
    u: np.ndarray
    iterations: int
    iterates: list
    residual_norm: float


def newton_solve(disc: Discretization, u_prev, point: ParameterPoint, dt: float,
                 u_init=None, rtol: float = 1e-5, max_iter: int = 30, criterion: str = "update",
                 res_atol: float = 1e-11, max_bisections: int = 4, record: bool = False):
    """Undamped Newton for one implicit Euler step.

    Convergence is declared when ``||du|| <= rtol ||u||`` (``criterion="update"``)
    or ``||F|| <= rtol ||F(u_init)||`` (``criterion="residual"``); a residual
    below ``res_atol`` is accepted immediately. A step that leaves the
    admissible domain is halved up to ``max_bisections`` times.
    """
    if criterion not in ("update", "residual"):
        raise ValueError("criterion must be 'update' or 'residual'")
    u_prev = np.asarray(u_prev, float)
    u = (u_prev if u_init is None else np.asarray(u_init, float)).copy()
    iterates = [u.copy()] if record else []
    try:
        J, F = disc.jacobian(u, u_prev, point, dt, with_residual=True)
    except EvaluabilityError as exc:
        raise NewtonError(f"initial guess not evaluable: {exc}") from exc
    r0 = np.linalg.norm(F)
    rnorm = r0
    for it in range(max_iter + 1):
        if rnorm <= res_atol:
            return NewtonResult(u, it, iterates, rnorm)
        if it == max_iter:
            break
        try:
            du = spla.splu(J.tocsc()).solve(-F)
        except RuntimeError as exc:
            raise NewtonError(f"singular Jacobian at iteration {it}", it, rnorm) from exc
        step = 1.0
        for _ in range(max_bisections + 1):
            trial = u + step * du
            try:
                J, F = disc.jacobian(trial, u_prev, point, dt, with_residual=True)
                break
            except EvaluabilityError:
                step *= 0.5
        else:
            raise NewtonError(f"step not evaluable after {max_bisections} bisections", it, rnorm)
        u = trial
        if record:
            iterates.append(u.copy())
        rnorm = np.linalg.norm(F)
        if not np.isfinite(rnorm):
            raise NewtonError("non-finite residual", it + 1, rnorm)
        if criterion == "update":
            if step == 1.0 and np.linalg.norm(du) <= rtol * np.linalg.norm(u):
                return NewtonResult(u, it + 1, iterates, rnorm)
        elif rnorm <= rtol * r0:
            return NewtonResult(u, it + 1, iterates, rnorm)
    raise NewtonError(f"no convergence in {max_iter} iterations", max_iter, rnorm)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Time-ordered states of one run.

    ``states`` has one row per time level (the initial state first).
    ``iterates[i]`` holds the Newton iterates of the step that produced
    ``states[i + 1]`` when recording was requested.
    """

    mesh: PseudoMesh
    parameter: ParameterPoint
    dt: float
    times: np.ndarray
    states: np.ndarray
    reached_e_min: bool = False
    soc_at_emin: float = float("nan")
    newton_iterations: list = field(default_factory=list)
    iterates: list | None = None
    wall_seconds: float = 0.0

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def termination(self) -> dict:
        return {"reached_e_min": self.reached_e_min, "final_time": self.final_time,
                "soc_at_emin": self.soc_at_emin}

    def state(self, i: int) -> State:
        return State(self.mesh, self.states[i].copy(), float(self.times[i]))

    def __len__(self):
        return self.states.shape[0]

    def soc(self, electrode: str = "cathode") -> np.ndarray:
        return np.array([state_of_charge(u, electrode, self.mesh) for u in self.states])

    def voltage(self, config: CellConfig) -> np.ndarray:
        return np.array([cell_voltage(u, config, self.mesh)[0] for u in self.states])

    def ocv(self, config: CellConfig) -> np.ndarray:
        return open_circuit_voltage(self.soc("anode"), self.soc("cathode"), config)


def _crossing_soc(mesh, u_a, u_b, e_min):
    """Cathode SOC where min phi_S crosses e_min, linear in between two states."""
    va, vb = min_cathode_potential(u_a, mesh), min_cathode_potential(u_b, mesh)
    sa, sb = state_of_charge(u_a, "cathode", mesh), state_of_charge(u_b, "cathode", mesh)
    if va == vb:
        return sb
    w = min(max((va - e_min) / (va - vb), 0.0), 1.0)
    return sa + w * (sb - sa)


def simulate(point: ParameterPoint, config: CellConfig, mesh: PseudoMesh, dt: float = 1e-2,
             e_min: float | None = None, t_end: float = 1.0, record_iterates: bool = False,
             disc: Discretization | None = None, **newton_kw) -> Trajectory:
    """Discharge from the initial state until ``t_end`` or until the minimum
    cathode solid potential drops to ``e_min``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    e_min = config.e_min if e_min is None else e_min
    disc = Discretization(config, mesh) if disc is None else disc
    n_steps = int(round(t_end / dt))
    u = initial_state(config, mesh).u
    states = [u]
    times = [0.0]
    its = []
    iterates = [] if record_iterates else None
    t0 = time.perf_counter()
    reached = False
    soc_emin = float("nan")
    for step in range(1, n_steps + 1):
        try:
            out = newton_solve(disc, u, point, dt, record=record_iterates, **newton_kw)
        except NewtonError as exc:
            traj = Trajectory(mesh, point, dt, np.array(times), np.array(states),
                              newton_iterations=its, iterates=iterates,
                              wall_seconds=time.perf_counter() - t0)
            raise SimulationError(f"step {step} (tau={step * dt:.4g}) failed: {exc}", traj) from exc
        u = out.u
        states.append(u)
        times.append(step * dt)
        its.append(out.iterations)
        if record_iterates:
            iterates.append(np.array(out.iterates))
        if min_cathode_potential(u, mesh) <= e_min:
            reached = True
            soc_emin = _crossing_soc(mesh, states[-2], u, e_min)
            break
    return Trajectory(mesh, point, dt, np.array(times), np.array(states), reached, soc_emin,
                      its, iterates, time.perf_counter() - t0)


__all__ = [
    "Discretization", "EvaluabilityError", "NewtonError", "SimulationError", "Trajectory",
    "build_mesh", "cell_voltage", "initial_state", "newton_solve", "simulate", "state_of_charge",
    "kernel_backend",
]
