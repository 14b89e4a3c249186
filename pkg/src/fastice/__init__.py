"""Subgrid iceberg drag in a viscous-plastic sea-ice model.

Sea ice is a viscous-plastic continuum discretized with bilinear finite
elements; icebergs are Lagrangian particles whose drag enters the ice
momentum as point forces.
"""

from .advection import face_normal_velocity, upwind_step
from .diagnostics import (
    DiagnosticsRecord,
    cross_section,
    phi_increment,
    region_integral,
    stability_bound_increment,
    write_outputs,
)
from .driver import ScenarioConfig, builtin_scenario, load_config, run_scenario
from .errors import (
    CFLError,
    ConfigurationError,
    ConsistencyError,
    OutOfDomainError,
    PoisonedStateError,
    SolverError,
)
from .icebergs import GroundingRegion, IcebergParticle, iceberg_forces, iceberg_mass, step_icebergs
from .mesh import Mesh, basis_eval, build_uniform_mesh, locate_point
from .momentum import (
    SolverConfig,
    assemble_jacobian,
    assemble_residual,
    point_drag,
    solve_momentum,
)
from .params import DragParams, Params, RheologyParams
from .rheology import delta, ice_strength, strain_rate, stress, viscosity
from .state import BoundaryData, Forcing, SeaIceState, init_state, interp_node_field

__version__ = "0.1.0"
