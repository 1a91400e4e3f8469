"""Empirical operator interpolation and the reduced Newton solver.

Offline, full-order trajectories give component-wise state bases ``V_i`` and,
from the operator images ``G(u)`` at every Newton iterate, component-wise
collateral bases ``U_i`` with greedy interpolation points ``P_i``. Online, the
reduced residual of component ``i`` is

    r_i(a) = W_i G[P_i](V a) - V_i^T b,     W_i = V_i^T U_i (P_i^T U_i)^{-1},

which needs ``G`` only at the interpolation points and therefore the lifted
state only on the stencil closure of those points.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fom import (Discretization, EvaluabilityError, NewtonError, SimulationError, Trajectory,
                  simulate, state_of_charge)
from .mesh import COMPONENTS, PseudoMesh, build_mesh, initial_state
from .model import CellConfig, ParameterPoint
from .pod import BasisMatrix, SnapshotSet, hapod_incremental, pod, split_states


class SingularInterpolationError(np.linalg.LinAlgError):
    """The greedy point selection met a mode that the previous points cannot separate."""

    def __init__(self, mode_index):
        super().__init__(f"interpolation system singular at mode {mode_index}")
        self.mode_index = mode_index


# ---------------------------------------------------------------------------
# operator snapshots and greedy points
# ---------------------------------------------------------------------------

def operator_images(disc: Discretization, traj: Trajectory) -> np.ndarray:
    """G at every recorded Newton iterate of ``traj``, one row per iterate."""
    if traj.iterates is None:
        raise ValueError("trajectory carries no Newton iterates; simulate with record_iterates=True")
    out = []
    for i, its in enumerate(traj.iterates):
        up = traj.states[i]
        for u in its:
            out.append(disc.operator(u, up, traj.parameter, traj.dt))
    return np.array(out).reshape(-1, disc.mesh.n_dofs)


def _unit_columns(X, rtol: float = 1e-6):
    """Columns scaled to unit norm.

    Columns below ``rtol`` times the largest column norm are dropped: they are
    converged residuals, pure solver noise that scaling would blow up.
    """
    n = np.linalg.norm(X, axis=0)
    keep = n > rtol * max(n.max(initial=0.0), 1e-300)
    return X[:, keep] / n[keep]


def collect_operator_snapshots(disc: Discretization, trajectories) -> dict:
    """Operator images at all Newton stages, split into component SnapshotSets."""
    cols = {c: [] for c in COMPONENTS}
    prov = {c: [] for c in COMPONENTS}
    for traj in trajectories:
        X = operator_images(disc, traj)
        tags = [(traj.parameter.as_tuple(), i + 1, k)
                for i, its in enumerate(traj.iterates) for k in range(len(its))]
        for c, block in split_states(X, disc.mesh).items():
            cols[c].append(block)
            prov[c].extend(tags)
    return {c: SnapshotSet(c, np.hstack(cols[c]), prov[c]) for c in COMPONENTS}


@dataclass
class InterpolationPoints:
    """Greedy point indices (local to a component) and the point matrix P^T U."""

    indices: np.ndarray
    matrix: np.ndarray

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.matrix)) if self.matrix.size else 1.0


def greedy_points(U, rtol: float = 1e-13) -> InterpolationPoints:
    """DEIM-style greedy selection for the columns of ``U``.

    The first point maximises ``|U[:, 0]|``; each further point maximises the
    interpolation residual of the next mode given the points chosen so far.
    """
    U = U.modes if isinstance(U, BasisMatrix) else np.asarray(U, dtype=float)
    n, m = U.shape
    idx = []
    for j in range(m):
        if j == 0:
            r = U[:, 0].copy()
        else:
            Pm = U[idx, :j]
            c = np.linalg.solve(Pm, U[idx, j])
            r = U[:, j] - U[:, :j] @ c
        k = int(np.argmax(np.abs(r)))
        if not np.abs(r[k]) > rtol * max(np.abs(U[:, j]).max(), 1e-300):
            raise SingularInterpolationError(j)
        idx.append(k)
    idx = np.array(idx, dtype=np.int64)
    return InterpolationPoints(idx, U[idx, :].copy())


def interpolate(U, points: InterpolationPoints, values_at_points):
    """Collateral coefficients theta and the interpolant U theta."""
    U = U.modes if isinstance(U, BasisMatrix) else U
    theta = np.linalg.solve(points.matrix, values_at_points)
    return theta, U @ theta


# ---------------------------------------------------------------------------
# artifact
# ---------------------------------------------------------------------------

@dataclass
class RomArtifact:
    """Everything the online phase needs besides the discretization itself."""

    config: CellConfig
    mesh: PseudoMesh
    bases: dict
    collateral: dict
    points: dict
    metadata: dict = field(default_factory=dict)

    @property
    def sizes(self) -> tuple:
        return tuple(len(self.bases[c]) for c in COMPONENTS)

    @property
    def collateral_sizes(self) -> tuple:
        return tuple(len(self.collateral[c]) for c in COMPONENTS)

    @property
    def mesh_signature(self) -> str:
        return self.mesh.signature

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def check_consistency(self):
        for c in COMPONENTS:
            V, U, P = self.bases[c], self.collateral[c], self.points[c]
            n = self.mesh.component_sizes()[COMPONENTS.index(c)]
            if V.dim != n or U.dim != n:
                raise ValueError(f"component {c}: basis dimension does not match the mesh")
            if len(P.indices) != len(U):
                raise ValueError(f"component {c}: {len(P.indices)} points for {len(U)} collateral modes")

    def projected(self, sizes=None, n_points=None) -> dict:
        """Precomputed W_i = V_i^T U_i (P_i^T U_i)^{-1} for the requested sizes."""
        sizes = self.sizes if sizes is None else sizes
        n_points = self.collateral_sizes if n_points is None else n_points
        out = {}
        for c, r, m in zip(COMPONENTS, sizes, n_points):
            V = self.bases[c].modes[:, :r]
            U = self.collateral[c].modes[:, :m]
            Pm = self.points[c].matrix[:m, :m]
            out[c] = np.linalg.solve(Pm.T, (V.T @ U).T).T
        return out


def offline_build(train, config: CellConfig, mesh: PseudoMesh, dt: float = 1e-2,
                  eps: float = 4e-8, omega: float = 0.9, eps_collateral: float | None = None,
                  newton_stages: bool = True, use_hapod: bool = True, normalize_images: bool = True,
                  image_cutoff: float = 1e-6, disc=None,
                  verbose: bool = False, **newton_kw) -> RomArtifact:
    """Run the training simulations and build the reduced model.

    Parameters
    ----------
    train : sequence of ParameterPoint
    eps, omega : float
        HAPOD tolerance and balance for the state bases.
    eps_collateral : float, optional
        Tolerance of the collateral bases; defaults to ``eps``.
    newton_stages : bool
        Use every Newton iterate for the operator snapshots; otherwise only
        the converged states.
    use_hapod : bool
        Incremental HAPOD over trajectories, or one global POD.
    normalize_images : bool
        Scale every operator image to unit norm before compression. Only the
        span of the images matters for interpolation, and without scaling the
        large residuals of early Newton stages would drown out the rest.
    image_cutoff : float
        With ``normalize_images``, images smaller than this fraction of the
        largest one in their trajectory are dropped. These are residuals of
        (nearly) converged iterates and carry only solver noise.
    """
    train = list(train)
    if not train:
        raise ValueError("empty training set")
    eps_collateral = eps if eps_collateral is None else eps_collateral
    disc = Discretization(config, mesh) if disc is None else disc
    t0 = time.perf_counter()
    state_chunks = {c: [] for c in COMPONENTS}
    op_chunks = {c: [] for c in COMPONENTS}
    fom_seconds = 0.0
    for mu in train:
        try:
            traj = simulate(mu, config, mesh, dt=dt, record_iterates=True, disc=disc, **newton_kw)
        except SimulationError as exc:
            raise SimulationError(f"training run at {mu} failed: {exc}", exc.trajectory) from exc
        fom_seconds += traj.wall_seconds
        for c, cols in split_states(traj.states, mesh).items():
            state_chunks[c].append(cols)
        if newton_stages:
            X = operator_images(disc, traj)
        else:
            X = np.array([disc.operator(traj.states[i + 1], traj.states[i], mu, dt)
                          for i in range(len(traj) - 1)])
        for c, cols in split_states(X, mesh).items():
            op_chunks[c].append(_unit_columns(cols, image_cutoff) if normalize_images else cols)
        if verbose:
            print(f"trained {mu}: {len(traj) - 1} steps")
    t_snap = time.perf_counter()

    def compress(chunks, tol):
        if use_hapod:
            return hapod_incremental(chunks, tol, omega)
        return pod(np.hstack(chunks), eps=tol)

    bases = {c: compress(state_chunks[c], eps) for c in COMPONENTS}
    collateral = {c: compress(op_chunks[c], eps_collateral) for c in COMPONENTS}
    points = {c: greedy_points(collateral[c]) for c in COMPONENTS}
    t_end = time.perf_counter()
    meta = {
        "train": [mu.as_tuple() for mu in train], "dt": dt, "eps": eps, "omega": omega,
        "eps_collateral": eps_collateral, "newton_stages": newton_stages, "use_hapod": use_hapod,
        "normalize_images": normalize_images, "image_cutoff": image_cutoff,
        "fom_seconds": fom_seconds, "compression_seconds": t_end - t_snap,
        "offline_seconds": t_end - t0,
    }
    art = RomArtifact(config, mesh, bases, collateral, points, meta)
    art.check_consistency()
    return art


# ---------------------------------------------------------------------------
# online phase
# ---------------------------------------------------------------------------

@dataclass
class RomTrajectory:
    """Reduced coefficients per time level plus termination data."""

    coefficients: np.ndarray
    times: np.ndarray
    parameter: ParameterPoint
    dt: float
    reached_e_min: bool
    soc_at_emin: float
    newton_iterations: list
    wall_seconds: float
    model: "ReducedModel" = field(repr=False)

    def lift(self) -> Trajectory:
        """Reconstructed full-order trajectory."""
        states = self.model.lift(self.coefficients)
        return Trajectory(self.model.mesh, self.parameter, self.dt, self.times.copy(), states,
                          self.reached_e_min, self.soc_at_emin, list(self.newton_iterations),
                          None, self.wall_seconds)

    def __len__(self):
        return self.coefficients.shape[0]


class ReducedModel:
    """Online solver built from a :class:`RomArtifact`.

    Parameters
    ----------
    artifact : RomArtifact
    sizes : tuple of 4 ints, optional
        Leading basis modes to use per component.
    n_points : tuple of 4 ints, optional
        Leading collateral modes (and points) per component.
    hyper_reduction : bool
        With ``False`` the full operator is evaluated and Galerkin-projected.
    """

    def __init__(self, artifact: RomArtifact, sizes=None, n_points=None,
                 hyper_reduction: bool = True, disc: Discretization | None = None):
        self.artifact = artifact
        self.config = artifact.config
        self.mesh = artifact.mesh
        self.sizes = tuple(artifact.sizes if sizes is None else sizes)
        self.n_points = tuple(artifact.collateral_sizes if n_points is None else n_points)
        for c, r, m in zip(COMPONENTS, self.sizes, self.n_points):
            if not 1 <= r <= len(artifact.bases[c]):
                raise ValueError(f"basis size {r} for {c} outside [1, {len(artifact.bases[c])}]")
            if not 1 <= m <= len(artifact.collateral[c]):
                raise ValueError(f"point count {m} for {c} outside [1, {len(artifact.collateral[c])}]")
        self.hyper_reduction = hyper_reduction
        self.disc = Discretization(self.config, self.mesh) if disc is None else disc
        if self.disc.mesh.signature != artifact.mesh_signature:
            raise ValueError("mesh signature mismatch")
        if self.disc.config.config_hash() != artifact.config_hash:
            raise ValueError("configuration hash mismatch")
        self._setup()

    def _setup(self):
        mesh, art = self.mesh, self.artifact
        n = mesh.n_dofs
        offs = mesh.offsets
        self.r_tot = sum(self.sizes)
        cstart = np.concatenate([[0], np.cumsum(self.sizes)])
        self._cstart = cstart
        V = np.zeros((n, self.r_tot))
        for i, (c, r) in enumerate(zip(COMPONENTS, self.sizes)):
            V[offs[i]:offs[i + 1], cstart[i]:cstart[i + 1]] = art.bases[c].modes[:, :r]
        self.V = V
        # reduced right-hand side direction: V^T e_collector
        self.rhs_dir = V[self.disc.collector_row].copy() * self.disc.collector_flux
        # termination and voltage read-outs only need u2 rows
        u2 = mesh.component_slice("u2")
        self._v_cat = V[u2][mesh.n_macro:]
        self._v_volt = V[u2][-1] - V[u2][0]

        W = art.projected(self.sizes, self.n_points)
        rows = []
        Wfull = np.zeros((self.r_tot, sum(self.n_points)))
        col = 0
        for i, (c, m) in enumerate(zip(COMPONENTS, self.n_points)):
            rows.append(art.points[c].indices[:m] + offs[i])
            Wfull[cstart[i]:cstart[i + 1], col:col + m] = W[c]
            col += m
        self.rows = np.concatenate(rows).astype(np.int64)
        self.W = Wfull
        self.closure = self.disc.stencil_closure(self.rows)
        self.V_closure = np.ascontiguousarray(V[self.closure])
        # stencil columns of the point rows, as positions in the closure (+ one zero row)
        pos = np.full(n, len(self.closure), dtype=np.int64)
        pos[self.closure] = np.arange(len(self.closure))
        ip, ix = self.disc._indptr, self.disc._indices
        slot = np.full((len(self.rows), 8), len(self.closure), dtype=np.int64)
        valid = self.disc._valid[self.rows]
        for j, r in enumerate(self.rows):
            slot[j, valid[j]] = pos[ix[ip[r]:ip[r + 1]]]
        Vz = np.vstack([self.V_closure, np.zeros((1, self.r_tot))])
        self._VS = Vz[slot]  # (points, 8, r)
        # block structure: coefficient range of every closure entry and stencil slot
        comp = np.searchsorted(offs, np.append(self.closure, n), side="right") - 1
        crange = np.stack([cstart[:-1], cstart[1:]], axis=1).astype(np.int64)
        crange = np.vstack([crange, [[0, 0]]])
        self._clr = np.ascontiguousarray(crange[comp[:-1]])
        self._vsr = np.ascontiguousarray(crange[comp[slot]])
        pstart = np.concatenate([[0], np.cumsum(self.n_points)])
        self._blocks = np.array([[cstart[i], cstart[i + 1], pstart[i], pstart[i + 1]]
                                 for i in range(4)], dtype=np.int64)
        self._u = np.zeros(n)
        self._up = np.zeros(n)
        self._res = np.empty(len(self.rows))
        self._cols = np.empty((len(self.rows), 8), dtype=np.int64)
        self._vals = np.empty((len(self.rows), 8))
        self._JV = np.empty((len(self.rows), self.r_tot))
        self._r = np.empty(self.r_tot)
        self._J = np.empty((self.r_tot, self.r_tot))
        self._sc_key = None

    # lifting -----------------------------------------------------------------
    def project(self, u):
        return self.V.T @ u

    def lift(self, a):
        return np.asarray(a) @ self.V.T

    def initial_coefficients(self):
        return self.project(initial_state(self.config, self.mesh).u)

    @property
    def dof_touch_count(self) -> int:
        """Full-order DOFs written per online residual evaluation."""
        return len(self.closure)

    # reduced residual and Jacobian --------------------------------------------
    def _set_prev(self, a_prev):
        self._up[self.closure] = self.V_closure @ a_prev

    def residual_and_jacobian(self, a, point: ParameterPoint, dt: float, want_jac: bool = True):
        """Reduced residual (and its Jacobian); the step must have been started."""
        if not self.hyper_reduction:
            return self._galerkin(a, point, dt, want_jac)
        if self._sc_key != (point, dt):
            self._sc = self.disc.scalars(point, dt)
            self._sc_key = (point, dt)
        d = self.disc
        ok = d.kernels.reduced_system(a, self.V_closure, self._clr, self.closure, self._u, self._up,
                                      self.rows, want_jac, d.ints, self._sc, d.eint, d.eflt, d.mint,
                                      d.mflt, d.elt, d.mg, d.mmass, self.W, self._blocks, self._VS,
                                      self._vsr, self.rhs_dir, self._res, self._cols, self._vals,
                                      self._JV, self._r, self._J)
        d.touched += len(self.rows)
        if not ok:
            raise EvaluabilityError("lifted state outside the admissible domain")
        return self._r.copy(), (self._J.copy() if want_jac else None)

    def _galerkin(self, a, point, dt, want_jac):
        u = self.V @ a
        up = self._up_full
        if want_jac:
            J, F = self.disc.jacobian(u, up, point, dt, with_residual=True)
            return self.V.T @ F, self.V.T @ (J @ self.V)
        return self.V.T @ self.disc.residual(u, up, point, dt), None

    def interpolated_operator_apply(self, a, point, dt, a_prev):
        """Reduced residual at ``a`` for the step starting from ``a_prev``."""
        self._begin_step(a_prev)
        return self.residual_and_jacobian(a, point, dt, want_jac=False)[0]

    def reduced_jacobian(self, a, point, dt, a_prev):
        self._begin_step(a_prev)
        return self.residual_and_jacobian(a, point, dt, want_jac=True)[1]

    def _begin_step(self, a_prev):
        if self.hyper_reduction:
            self._set_prev(a_prev)
        else:
            self._up_full = self.V @ a_prev

    # solver ----------------------------------------------------------------------
    _NEWTON_STATUS = {0: "initial guess not evaluable", -1: "singular reduced Jacobian",
                      -2: "no convergence", -3: "step not evaluable after bisections",
                      -4: "non-finite reduced residual"}

    def newton(self, a_prev, point, dt, rtol=1e-5, max_iter=30, max_bisections=4, res_atol=1e-11):
        """Reduced Newton solve of one step; returns (coefficients, iterations)."""
        a_prev = np.ascontiguousarray(a_prev, dtype=float)
        if not self.hyper_reduction:
            return self._newton_galerkin(a_prev, point, dt, rtol, max_iter, max_bisections, res_atol)
        if self._sc_key != (point, dt):
            self._sc = self.disc.scalars(point, dt)
            self._sc_key = (point, dt)
        d = self.disc
        a_out = np.empty(self.r_tot)
        status, its, touched = d.kernels.reduced_newton(
            a_prev, self.V_closure, self._clr, self.closure, self._u, self._up, self.rows, d.ints,
            self._sc, d.eint, d.eflt, d.mint, d.mflt, d.elt, d.mg, d.mmass, self.W, self._blocks,
            self._VS, self._vsr, self.rhs_dir, self._res, self._cols, self._vals, self._JV, self._r,
            self._J, a_out, rtol, max_iter, max_bisections, res_atol)
        d.touched += touched
        if status != 1:
            raise NewtonError(f"reduced Newton: {self._NEWTON_STATUS[status]}", its)
        return a_out, its

    def _newton_galerkin(self, a_prev, point, dt, rtol, max_iter, max_bisections, res_atol):
        self._begin_step(a_prev)
        a = a_prev.copy()
        try:
            r, J = self.residual_and_jacobian(a, point, dt)
        except EvaluabilityError as exc:
            raise NewtonError(f"initial guess not evaluable: {exc}") from exc
        for it in range(max_iter + 1):
            if np.linalg.norm(r) <= res_atol:
                return a, it
            if it == max_iter:
                break
            try:
                da = np.linalg.solve(J, -r)
            except np.linalg.LinAlgError as exc:
                raise NewtonError(f"singular reduced Jacobian at iteration {it}", it) from exc
            step = 1.0
            for _ in range(max_bisections + 1):
                trial = a + step * da
                try:
                    r, J = self.residual_and_jacobian(trial, point, dt)
                    break
                except EvaluabilityError:
                    step *= 0.5
            else:
                raise NewtonError(f"reduced step not evaluable after {max_bisections} bisections", it)
            a = trial
            if step == 1.0 and np.linalg.norm(da) <= rtol * np.linalg.norm(a):
                return a, it + 1
        raise NewtonError(f"reduced Newton: no convergence in {max_iter} iterations", max_iter)

    def simulate(self, point: ParameterPoint, dt: float | None = None, e_min: float | None = None,
                 t_end: float = 1.0, **newton_kw) -> RomTrajectory:
        """Reduced time march mirroring the full-order :func:`simulate`."""
        dt = self.artifact.metadata.get("dt", 1e-2) if dt is None else dt
        e_min = self.config.e_min if e_min is None else e_min
        n_steps = int(round(t_end / dt))
        t0 = time.perf_counter()
        a = self.initial_coefficients()
        coeffs = [a]
        its = []
        reached = False
        soc = float("nan")
        for step in range(1, n_steps + 1):
            a_prev = a
            try:
                a, k = self.newton(a_prev, point, dt, **newton_kw)
            except NewtonError as exc:
                raise SimulationError(f"reduced step {step} failed: {exc}",
                                      self._partial(coeffs, dt, point, its, t0)) from exc
            coeffs.append(a)
            its.append(k)
            if float((self._v_cat @ a).min()) <= e_min:
                reached = True
                soc = self._crossing(a_prev, a, e_min)
                break
        wall = time.perf_counter() - t0
        return RomTrajectory(np.array(coeffs), dt * np.arange(len(coeffs)), point, dt, reached, soc,
                             its, wall, self)

    def _crossing(self, a_prev, a, e_min):
        va = float((self._v_cat @ a_prev).min())
        vb = float((self._v_cat @ a).min())
        sa = state_of_charge(self.V @ a_prev, "cathode", self.mesh)
        sb = state_of_charge(self.V @ a, "cathode", self.mesh)
        if va == vb:
            return sb
        w = min(max((va - e_min) / (va - vb), 0.0), 1.0)
        return sa + w * (sb - sa)

    def _partial(self, coeffs, dt, point, its, t0):
        rt = RomTrajectory(np.array(coeffs), dt * np.arange(len(coeffs)), point, dt, False,
                           float("nan"), its, time.perf_counter() - t0, self)
        return rt.lift()


def rom_simulate(point: ParameterPoint, artifact: RomArtifact, dt: float | None = None,
                 e_min: float | None = None, model: ReducedModel | None = None, **kw):
    """Convenience wrapper: reduced run returning (lifted Trajectory, RomTrajectory)."""
    model = ReducedModel(artifact) if model is None else model
    rt = model.simulate(point, dt=dt, e_min=e_min, **kw)
    return rt.lift(), rt
