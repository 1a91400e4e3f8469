"""Continuum model of the homogenized intercalation cell.

Material functions, parameter containers and the zero-affinity initial state.
All potentials are nondimensional (scaled by k_B T / e0) and measured in the
hat convention, i.e. relative to metallic lithium with the half-cell energies
kept out of the affinity.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

#: Thermal voltage k_B T / e0 at 298.15 K, in volts.
THERMAL_VOLTAGE = 8.617333262e-5 * 298.15

REGIONS = ("anode", "separator", "cathode")
ELECTRODES = ("anode", "cathode")


class DomainError(ValueError):
    """A material function was evaluated outside its domain."""


# ---------------------------------------------------------------------------
# material functions
# ---------------------------------------------------------------------------

def _check_open(y, lo, hi, name):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > lo)) or np.any(~(y < hi)):
        raise DomainError(f"{name} requires {lo} < y < {hi}")
    return y


def gamma_electrolyte(y_e, kappa):
    """Thermodynamic factor of the electrolyte, 1 + 2 kappa y / (1 - 2 y)."""
    y = np.asarray(y_e, dtype=float)
    if np.any(~(y >= 0.0)) or np.any(~(y < 0.5)):
        raise DomainError("gamma_electrolyte requires 0 <= y_E < 0.5")
    return 1.0 + 2.0 * kappa * y / (1.0 - 2.0 * y)


def gamma_active(y_a, gamma):
    """Thermodynamic factor of the lattice-mixture active phase."""
    y = _check_open(y_a, 0.0, 1.0, "gamma_active")
    return 1.0 + y / (1.0 - y) + 2.0 * gamma * y


def f_active(y_a, gamma):
    """Chemical-potential function ln(y/(1-y)) + gamma (2y - 1).

    This is the antiderivative of ``gamma_active / y``; see the README for the
    sign of the logarithm argument.
    """
    y = _check_open(y_a, 0.0, 1.0, "f_active")
    return np.log(y / (1.0 - y)) + gamma * (2.0 * y - 1.0)


def f_electrolyte(y_e, kappa):
    """Chemical-potential function ln(y) - kappa ln(1 - 2y) of the salt."""
    y = _check_open(y_e, 0.0, 0.5, "f_electrolyte")
    return np.log(y) - kappa * np.log(1.0 - 2.0 * y)


def butler_volmer_g(z, alpha=0.5):
    """Rate factor exp(alpha z) - exp(-(1 - alpha) z)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    z = np.asarray(z, dtype=float)
    return np.expm1(alpha * z) - np.expm1(-(1.0 - alpha) * z)


def surface_affinity(phi_s, phi_e, y_a_surf, y_e, gamma, kappa):
    """Dimensionless surface affinity of the intercalation reaction.

    Positive values drive de-intercalation (lithium leaves the particle).
    """
    return phi_s - phi_e + f_active(y_a_surf, gamma) - f_electrolyte(y_e, kappa)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ElectrolyteParams:
    n_solvent_ref: float = 11.9103
    n_salt_ref: float = 1.0
    solvation_number: float = 4.0
    transference: float = 0.5
    diff_coeff: float = 5.0
    molar_conductivity: float = 10.0

    def __post_init__(self):
        if self.solvation_number < 1:
            raise ValueError("solvation_number must be >= 1")
        if not 0.0 < self.transference < 1.0:
            raise ValueError("transference must lie in (0, 1)")
        if self.diff_coeff <= 0 or self.molar_conductivity <= 0:
            raise ValueError("transport coefficients must be positive")

    @property
    def s_coeff(self) -> float:
        """Cross coefficient (2 t - 1) * Lambda."""
        return (2.0 * self.transference - 1.0) * self.molar_conductivity

    @property
    def n_ratio(self) -> float:
        """n_ES,ref / n_E,ref, the reference electrolyte density ratio."""
        return self.n_solvent_ref / self.n_salt_ref


@dataclass(frozen=True)
class ElectrodeParams:
    lattice_density: float = 37.3114
    y_initial: float = 0.5
    enthalpy_gamma: float = 1.0
    solid_conductivity: float = 10.0
    diff_ref: float = 1.0
    exchange_rate: float = 1.0
    half_cell_energy: float = 0.0
    particle_radius: float = 0.4
    unit_cell_width: float = 10.0

    def __post_init__(self):
        if not self.enthalpy_gamma > -2.5:
            raise ValueError("enthalpy_gamma <= -2.5 leads to phase separation")
        if not 0.0 < self.y_initial < 1.0:
            raise ValueError("y_initial must lie in (0, 1)")
        if self.diff_ref <= 0 or self.exchange_rate <= 0:
            raise ValueError("diff_ref and exchange_rate must be positive")
        if self.particle_radius <= 0:
            raise ValueError("particle_radius must be positive")


@dataclass(frozen=True)
class PorousGeometry:
    """Porous-media data of one region; solid quantities are zero in the separator."""

    psi_E: float = 0.72713951
    psi_S: float = 0.27286022
    pi_E: float = 0.86842790
    pi_S: float = 0.09819225
    theta: float = 1.96328590
    width: float = 100.0
    # active-material volume fraction; spheres give theta = 3 psi_A / r
    psi_A: float = 0.4 * 1.96328590 / 3.0

    def __post_init__(self):
        if not 0.0 < self.psi_E < 1.0:
            raise ValueError("psi_E must lie in (0, 1)")
        if not 0.0 < self.pi_E <= 1.0:
            raise ValueError("pi_E must lie in (0, 1]")
        if self.theta < 0:
            raise ValueError("theta must be nonnegative")
        if self.width <= 0:
            raise ValueError("width must be positive")


SEPARATOR_GEOMETRY = PorousGeometry(psi_S=0.0, pi_S=0.0, theta=0.0, psi_A=0.0)


def _default_anode():
    return ElectrodeParams(y_initial=0.99, half_cell_energy=0.2)


def _default_cathode():
    return ElectrodeParams(y_initial=0.01, half_cell_energy=3.95)


@dataclass(frozen=True)
class CellConfig:
    """Full parameter set of the cell; defaults are the reference cell values."""

    electrolyte: ElectrolyteParams = field(default_factory=ElectrolyteParams)
    anode: ElectrodeParams = field(default_factory=_default_anode)
    cathode: ElectrodeParams = field(default_factory=_default_cathode)
    geometry: dict = field(default_factory=lambda: {
        "anode": PorousGeometry(),
        "separator": SEPARATOR_GEOMETRY,
        "cathode": PorousGeometry(),
    })
    bv_symmetry: float = 0.5
    e_min: float = -0.2

    def __post_init__(self):
        if not 0.0 <= self.bv_symmetry <= 1.0:
            raise ValueError("bv_symmetry must lie in [0, 1]")
        if set(self.geometry) != set(REGIONS):
            raise ValueError(f"geometry needs exactly the regions {REGIONS}")
        y0 = self.y_e_initial
        if not 0.0 < y0 < 0.5:
            raise ValueError(f"initial electrolyte mole fraction {y0} outside (0, 0.5)")

    # derived scalings -----------------------------------------------------
    @property
    def total_width(self) -> float:
        return sum(self.geometry[r].width for r in REGIONS)

    def width_fraction(self, region: str) -> float:
        return self.geometry[region].width / self.total_width

    def electrode(self, name: str) -> ElectrodeParams:
        return {"anode": self.anode, "cathode": self.cathode}[name]

    def eta_n(self, electrode: str) -> float:
        return self.electrode(electrode).lattice_density / self.electrolyte.n_salt_ref

    @property
    def eta_W_cat(self) -> float:
        g = self.geometry["cathode"]
        return g.psi_A * g.width / self.total_width

    def sigma_hat_s(self, electrode: str) -> float:
        g = self.geometry[electrode]
        return g.psi_S * g.pi_S * self.electrode(electrode).solid_conductivity

    @property
    def y_e_initial(self) -> float:
        el = self.electrolyte
        return el.n_salt_ref / (el.n_solvent_ref - 2.0 * el.solvation_number * el.n_salt_ref)

    def capacity_slope(self) -> float:
        """d(ybar_cat)/dtau implied by the parameters; 1 for a consistent cell."""
        g = self.geometry["cathode"]
        return 3.0 * self.eta_W_cat / (
            self.width_fraction("cathode") * self.cathode.particle_radius * g.theta)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "CellConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "CellConfig":
        geometry = {r: PorousGeometry(**g) for r, g in d["geometry"].items()}
        return cls(
            electrolyte=ElectrolyteParams(**d["electrolyte"]),
            anode=ElectrodeParams(**d["anode"]),
            cathode=ElectrodeParams(**d["cathode"]),
            geometry=geometry,
            bv_symmetry=d.get("bv_symmetry", 0.5),
            e_min=d.get("e_min", -0.2),
        )


@dataclass(frozen=True)
class ParameterPoint:
    """Online parameter: C-rate plus the diffusion and reaction-rate values
    applied to both electrodes."""

    c_rate: float = 1.0
    d_scale: float = 0.5
    l_scale: float = 0.5

    def __post_init__(self):
        if self.c_rate < 0:
            raise ValueError("c_rate must be nonnegative")
        if self.d_scale <= 0 or self.l_scale <= 0:
            raise ValueError("d_scale and l_scale must be positive")

    def as_tuple(self):
        return (self.c_rate, self.d_scale, self.l_scale)


# ---------------------------------------------------------------------------
# coefficient functions
# ---------------------------------------------------------------------------

def n_tot(y_e, electrolyte: ElectrolyteParams):
    """Scaled total electrolyte density."""
    return electrolyte.n_ratio / (1.0 + 2.0 * (electrolyte.solvation_number - 1.0) * y_e)


def n_salt(y_e, electrolyte: ElectrolyteParams):
    """Scaled cation density n_EC / n_E,ref."""
    return n_tot(y_e, electrolyte) * y_e


def c_e(y_e, electrolyte: ElectrolyteParams):
    """Capacity factor d(n_salt)/dy."""
    return electrolyte.n_ratio / (1.0 + 2.0 * (electrolyte.solvation_number - 1.0) * y_e) ** 2


def coefficients(y, region: str, config: CellConfig, nu=None, point: ParameterPoint | None = None):
    """Region-wise hatted coefficients evaluated at ``y``.

    ``y`` is the electrolyte mole fraction, except for ``D_A`` which uses it
    as the active-phase mole fraction together with the radial coordinate
    ``nu``. Coefficients that do not exist in a region are omitted; asking for
    them through :func:`coefficient` raises.
    """
    el = config.electrolyte
    g = config.geometry[region]
    y = np.asarray(y, dtype=float)
    out = {}
    ge = gamma_electrolyte(np.clip(y, 0.0, 0.4999999), el.solvation_number) if np.all(y < 0.5) else None
    if ge is not None:
        nt = n_tot(y, el)
        out["D_E"] = g.psi_E * g.pi_E * el.diff_coeff * nt * ge
        out["S_E"] = g.psi_E * g.pi_E * el.s_coeff * nt * ge
        out["sigma_E"] = g.psi_E * g.pi_E * el.molar_conductivity * nt * y
        out["c_E"] = c_e(y, el)
        out["n_tot"] = nt
    if region != "separator":
        elec = config.electrode(region)
        d_ref = elec.diff_ref if point is None else point.d_scale
        nu = 1.0 if nu is None else np.asarray(nu, dtype=float)
        # (1 - y) Gamma_A written in its regular form 1 + 2 gamma y (1 - y)
        out["D_A"] = d_ref * (1.0 + 2.0 * elec.enthalpy_gamma * y * (1.0 - y)) * nu ** 2
        out["sigma_S"] = config.sigma_hat_s(region)
    return out


def coefficient(name: str, y, region: str, config: CellConfig, **kw):
    """Single coefficient lookup with a clear error for absent ones."""
    if region == "separator" and name in ("D_A", "sigma_S"):
        raise KeyError(f"coefficient {name!r} does not exist in the separator")
    out = coefficients(y, region, config, **kw)
    if name not in out:
        raise DomainError(f"coefficient {name!r} not defined at the given y")
    return out[name]


def initial_values(config: CellConfig) -> dict:
    """Scalar initial values per electrode: y_A, phi_S, and the uniform y_E, phi_E."""
    el = config.electrolyte
    y_e0 = config.y_e_initial
    fa_an = float(f_active(config.anode.y_initial, config.anode.enthalpy_gamma))
    fa_cat = float(f_active(config.cathode.y_initial, config.cathode.enthalpy_gamma))
    return {
        "y_a": {"anode": config.anode.y_initial, "cathode": config.cathode.y_initial},
        "phi_s": {"anode": 0.0, "cathode": fa_an - fa_cat},
        "y_e": y_e0,
        "phi_e": fa_an - float(f_electrolyte(y_e0, el.solvation_number)),
    }


def open_circuit_voltage(ybar_an, ybar_cat, config: CellConfig):
    """Zero-current cell voltage f_A^An(ybar_an) - f_A^Cat(ybar_cat)."""
    return (f_active(ybar_an, config.anode.enthalpy_gamma)
            - f_active(ybar_cat, config.cathode.enthalpy_gamma))
