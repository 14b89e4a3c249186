"""Discrete sea-ice fields, forcing and inflow data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .mesh import basis_eval, locate_point

__all__ = [
    "SeaIceState",
    "Forcing",
    "BoundaryData",
    "init_state",
    "interp_node_field",
    "cell_value_at",
]


@dataclass
class SeaIceState:
    """Velocity at nodes (n_nodes, 2); concentration and thickness per cell."""

    mesh: object = field(repr=False)
    v: np.ndarray
    a: np.ndarray
    h: np.ndarray
    t: float = 0.0

    def copy(self):
        return SeaIceState(self.mesh, self.v.copy(), self.a.copy(), self.h.copy(), self.t)


@dataclass(frozen=True)
class Forcing:
    """Spatially uniform ocean and wind velocities plus Coriolis settings."""

    v_o: tuple = (0.0, 0.0)
    v_a: tuple = (0.0, 0.0)
    coriolis: bool = False
    f: float = 1.46e-4

    def __post_init__(self):
        vals = (*self.v_o, *self.v_a, self.f)
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("forcing values must be finite")

    @property
    def f_eff(self):
        return self.f if self.coriolis else 0.0

    @property
    def ocean(self):
        return np.asarray(self.v_o, dtype=float)

    @property
    def wind(self):
        return np.asarray(self.v_a, dtype=float)


@dataclass(frozen=True)
class BoundaryData:
    a_in: float = 0.5
    h_in: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.a_in <= 1.0 or self.h_in < 0:
            raise ConfigurationError("inflow values need a_in in [0, 1] and h_in >= 0")


def init_state(mesh, a0, h0):
    """Uniform tracers, ice at rest."""
    if not 0.0 <= a0 <= 1.0:
        raise ConfigurationError(f"initial concentration {a0} outside [0, 1]")
    if h0 < 0:
        raise ConfigurationError(f"initial thickness {h0} is negative")
    return SeaIceState(
        mesh=mesh,
        v=np.zeros((mesh.n_nodes, 2)),
        a=np.full(mesh.n_cells, float(a0)),
        h=np.full(mesh.n_cells, float(h0)),
    )


def interp_node_field(mesh, v, p):
    """Bilinear interpolation of a nodal field at point ``p``."""
    (i, j), local = locate_point(mesh, p)
    phi, _ = basis_eval(local)
    nodes = mesh.cells[mesh.cell_index(i, j)]
    return phi @ np.asarray(v)[nodes]


def cell_value_at(mesh, field_, p):
    """Value of a per-cell field in the cell containing ``p``."""
    (i, j), _ = locate_point(mesh, p)
    return np.asarray(field_)[mesh.cell_index(i, j)]
