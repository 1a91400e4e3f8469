"""Pseudo-2D intercalation cell simulation with reduced-basis acceleration."""
from .model import (CellConfig, ElectrodeParams, ElectrolyteParams, ParameterPoint, PorousGeometry,
                    butler_volmer_g, coefficients, f_active, f_electrolyte, gamma_active,
                    gamma_electrolyte, surface_affinity)
from .mesh import PseudoMesh, State, build_mesh, initial_state
from .fom import Discretization, Trajectory, cell_voltage, newton_solve, simulate, state_of_charge

__version__ = "0.1.0"
