"""Pseudo-2D grid, degree-of-freedom layout and the discrete state container."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _formulas as F
from .model import CellConfig, REGIONS, initial_values

COMPONENTS = ("u1", "u2", "u3", "u4")

_GAUSS3_X = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GAUSS3_W = np.array([5.0, 8.0, 5.0]) / 9.0


@dataclass(frozen=True)
class PseudoMesh:
    """Uniform 1D+1D grid.

    The macro line holds three regions (anode, separator, cathode) with
    ``n_macro`` nodes each; neighbouring regions share their interface node,
    so there are ``3 n_macro - 2`` distinct macro nodes. Every electrode node
    carries a radial grid of ``n_micro`` nodes in the flipped coordinate
    ``nu_tilde = 1 - nu``; index 0 is the particle surface.

    The unknown vector is ordered ``[u1 | u2 | u3 | u4]`` with ``u1`` stored
    electrode-node major, i.e. entry ``p * n_micro + k``.
    """

    n_macro: int
    n_micro: int
    widths: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    macro_nodes: np.ndarray = field(init=False, repr=False, compare=False)
    micro_nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_macro < 2 or self.n_micro < 2:
            raise ValueError("n_macro and n_micro must both be at least 2")
        if not np.isclose(sum(self.widths), 1.0):
            raise ValueError("region widths must sum to 1")
        n = self.n_macro
        edges = np.concatenate([[0.0], np.cumsum(self.widths)])
        edges[-1] = 1.0
        parts = [np.linspace(edges[i], edges[i + 1], n) for i in range(3)]
        x = np.concatenate([parts[0], parts[1][1:], parts[2][1:]])
        object.__setattr__(self, "macro_nodes", x)
        object.__setattr__(self, "micro_nodes", np.linspace(0.0, 1.0, self.n_micro))

    # sizes ------------------------------------------------------------------
    @property
    def n_macro_total(self) -> int:
        return 3 * self.n_macro - 2

    @property
    def n_electrode(self) -> int:
        return 2 * self.n_macro

    @property
    def offsets(self) -> tuple:
        o2 = self.n_electrode * self.n_micro
        o3 = o2 + self.n_electrode
        o4 = o3 + self.n_macro_total
        return (0, o2, o3, o4, o4 + self.n_macro_total)

    @property
    def n_dofs(self) -> int:
        """Number of unknowns actually solved for."""
        return self.offsets[-1]

    @property
    def grid_dofs(self) -> int:
        """Grid-point count 3 n_macro (n_micro + 3).

        This counts a radial grid and the three macro fields at every one of
        the ``3 n_macro`` region nodes, duplicated interface nodes and the
        inactive separator entries included.
        """
        return 3 * self.n_macro * (self.n_micro + 3)

    @property
    def signature(self) -> str:
        w = ",".join(f"{v:.12g}" for v in self.widths)
        return f"pseudo2d:{self.n_macro}x{self.n_micro}:{w}"

    def component_slice(self, name: str) -> slice:
        i = COMPONENTS.index(name)
        o = self.offsets
        return slice(o[i], o[i + 1])

    def component_sizes(self) -> tuple:
        o = self.offsets
        return tuple(o[i + 1] - o[i] for i in range(4))

    # topology ---------------------------------------------------------------
    def electrode_macro_index(self) -> np.ndarray:
        n = self.n_macro
        return np.concatenate([np.arange(n), np.arange(2 * n - 2, 3 * n - 2)])

    def electrode_of_node(self) -> np.ndarray:
        """0 for anode electrode nodes, 1 for cathode ones."""
        return np.repeat([0, 1], self.n_macro)

    def element_region(self) -> np.ndarray:
        return np.repeat([0, 1, 2], self.n_macro - 1)

    def region_nodes(self, region: str) -> np.ndarray:
        n = self.n_macro
        i = REGIONS.index(region)
        return np.arange(i * (n - 1), i * (n - 1) + n)

    def micro_mass_weights(self) -> np.ndarray:
        """Vector w with w @ y = integral of nu^2 y_h over the particle."""
        M = micro_element_mass(self.n_micro)
        w = np.zeros(self.n_micro)
        w[:-1] += M[:, 0] + M[:, 1]
        w[1:] += M[:, 1] + M[:, 2]
        return w

    def electrode_weights(self) -> np.ndarray:
        """Lumped macro quadrature weights of the electrode nodes."""
        x = self.macro_nodes
        h = np.diff(x)
        n = self.n_macro
        w = np.zeros(self.n_electrode)
        ha, hc = h[: n - 1], h[2 * (n - 1):]
        w[:n][:-1] += ha / 2
        w[:n][1:] += ha / 2
        w[n:][:-1] += hc / 2
        w[n:][1:] += hc / 2
        return w


def build_mesh(n_macro: int, n_micro: int, config: CellConfig | None = None) -> PseudoMesh:
    """Uniform mesh with ``n_macro`` nodes per region and ``n_micro`` radial nodes."""
    if config is None:
        widths = (1.0 / 3.0,) * 3
    else:
        widths = tuple(config.width_fraction(r) for r in REGIONS)
    return PseudoMesh(int(n_macro), int(n_micro), widths)


def micro_gauss(n_micro: int):
    """Per micro element: 3-point Gauss data (weight * nu^2, N0, N1)."""
    hm = 1.0 / (n_micro - 1)
    left = np.arange(n_micro - 1) * hm
    nt = left[:, None] + hm * (1.0 + _GAUSS3_X[None, :]) / 2.0
    nu2 = (1.0 - nt) ** 2
    wq = (_GAUSS3_W * hm / 2.0)[None, :] * nu2
    n0 = np.broadcast_to((1.0 - _GAUSS3_X) / 2.0, wq.shape)
    n1 = np.broadcast_to((1.0 + _GAUSS3_X) / 2.0, wq.shape)
    return np.stack([wq, n0, n1], axis=2)


def micro_element_mass(n_micro: int) -> np.ndarray:
    """nu^2-weighted element mass entries (M00, M01, M11), exact."""
    g = micro_gauss(n_micro)
    wq, n0, n1 = g[..., 0], g[..., 1], g[..., 2]
    return np.stack([(wq * n0 * n0).sum(1), (wq * n0 * n1).sum(1), (wq * n1 * n1).sum(1)], axis=1)


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------

@dataclass
class State:
    """One time slice of the discrete solution.

    ``u`` is the flat unknown vector in mesh ordering. Component views are
    returned as copies-free slices.
    """

    mesh: PseudoMesh
    u: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != (self.mesh.n_dofs,):
            raise ValueError(f"state vector has shape {self.u.shape}, mesh needs ({self.mesh.n_dofs},)")

    def component(self, name: str) -> np.ndarray:
        return self.u[self.mesh.component_slice(name)]

    @property
    def u1(self):
        return self.component("u1").reshape(self.mesh.n_electrode, self.mesh.n_micro)

    @property
    def u2(self):
        return self.component("u2")

    @property
    def u3(self):
        return self.component("u3")

    @property
    def u4(self):
        return self.component("u4")

    @property
    def y_a(self):
        """Decoded active-phase mole fraction, shape (electrode nodes, micro nodes)."""
        return F.sigmoid(self.u1)

    def copy(self) -> "State":
        return State(self.mesh, self.u.copy(), self.time)

    def is_evaluable(self) -> bool:
        u3 = self.u3
        return bool(np.all(np.isfinite(self.u)) and np.all(u3 > 0.0) and np.all(u3 < 0.5))


def encode(y_a):
    """Logistic transform y -> ln(y / (1 - y))."""
    return F.logit(np.asarray(y_a, dtype=float))


def decode(u1):
    return F.sigmoid(np.asarray(u1, dtype=float))


def initial_state(config: CellConfig, mesh: PseudoMesh) -> State:
    """Uniform zero-affinity initial state."""
    iv = initial_values(config)
    n = mesh.n_macro
    u = np.empty(mesh.n_dofs)
    u1 = np.empty((mesh.n_electrode, mesh.n_micro))
    u1[:n] = encode(iv["y_a"]["anode"])
    u1[n:] = encode(iv["y_a"]["cathode"])
    u[mesh.component_slice("u1")] = u1.ravel()
    u2 = np.empty(mesh.n_electrode)
    u2[:n] = iv["phi_s"]["anode"]
    u2[n:] = iv["phi_s"]["cathode"]
    u[mesh.component_slice("u2")] = u2
    u[mesh.component_slice("u3")] = iv["y_e"]
    u[mesh.component_slice("u4")] = iv["phi_e"]
    return State(mesh, u, 0.0)
