"""Coordinated SSB beam sweeping with multistatic sensing for drone surveillance."""
from .channel import RcsModel, StochasticParams, build_channels
from .errors import (ConfigError, ContractError, DegenerateSolution, DegenerateVoxel, GeometryError,
                     Infeasible, IsacError, NotApplicable)
from .precoder import (PrecoderSolution, UeScenario, coordinated_precoder, noncoordinated_precoder,
                       solve_power_allocation)
from .scene import ArrayGeometry, build_scene, hex_layout, voxel_grid

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "ConfigError", "ContractError", "DegenerateSolution", "DegenerateVoxel",
    "GeometryError", "Infeasible", "IsacError", "NotApplicable", "PrecoderSolution", "RcsModel",
    "StochasticParams", "UeScenario", "build_channels", "build_scene", "coordinated_precoder",
    "hex_layout", "noncoordinated_precoder", "solve_power_allocation", "voxel_grid",
]
