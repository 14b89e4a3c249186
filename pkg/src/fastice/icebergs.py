"""Lagrangian iceberg particles.

Icebergs are upright cylinders of radius ``r`` and height ``h``. Free
bergs are pushed by ocean and wind drag and by the surrounding sea ice,
and are advanced with explicit Euler. A berg whose center enters the
grounding rectangle stops and stays grounded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

logger = logging.getLogger(__name__)

__all__ = [
    "IcebergParticle",
    "GroundingRegion",
    "iceberg_mass",
    "iceberg_forces",
    "step_icebergs",
]


@dataclass
class IcebergParticle:
    x: np.ndarray  # position (m)
    r: float
    h: float = 200.0
    v_b: np.ndarray = None
    grounded: bool = False
    exited: bool = False
    id: int = 0

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float)
        self.v_b = np.zeros(2) if self.v_b is None else np.array(self.v_b, dtype=float)
        if self.r <= 0 or self.h <= 0:
            raise ConfigurationError(f"iceberg {self.id}: radius and height must be positive")
        if self.grounded:
            self.v_b[:] = 0.0

    @property
    def active(self):
        return not self.exited

    def copy(self):
        return IcebergParticle(self.x.copy(), self.r, self.h, self.v_b.copy(),
                               self.grounded, self.exited, self.id)


@dataclass(frozen=True)
class GroundingRegion:
    """Axis-aligned rectangle of shallow seafloor, closed on all sides."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        if not (self.lower[0] < self.upper[0] and self.lower[1] < self.upper[1]):
            raise ConfigurationError("grounding region corners must be ordered lower < upper")

    def contains(self, p):
        return (self.lower[0] <= p[0] <= self.upper[0]
                and self.lower[1] <= p[1] <= self.upper[1])


def iceberg_mass(berg, params):
    return params.drag.rho_b * berg.h * np.pi * berg.r**2


def _quad(u):
    return np.hypot(u[0], u[1]) * u


def iceberg_forces(berg, v_ice, a, forcing, params):
    """Total force (N) on a free iceberg.

    Parameters
    ----------
    v_ice : array_like
        Sea-ice velocity interpolated at the berg center.
    a : float
        Sea-ice concentration of the cell holding the berg.
    """
    d = params.drag
    v_b = np.asarray(berg.v_b, dtype=float)
    v_o = forcing.ocean
    v_a = forcing.wind
    v_ice = np.asarray(v_ice, dtype=float)
    area = np.pi * berg.r**2
    aspect = berg.h / berg.r
    M = iceberg_mass(berg, params)
    f = forcing.f_eff

    # k x u = (-u_y, u_x)
    F_c = M * f * np.array([-v_b[1], v_b[0]])
    F_sh = M * f * np.array([-v_o[1], v_o[0]])
    F_o = area * d.rho_o * (d.C_o + aspect * d.C_vo) * _quad(v_o - v_b)
    F_a = area * d.rho_a * (d.C_a + aspect * d.C_va) * _quad(v_a)
    F_si = a * d.rho * d.C_i * berg.r * berg.h * _quad(v_ice - v_b)
    return F_c + F_sh + F_o + F_a + F_si


def step_icebergs(bergs, dt, sea_ice_sampler, forcing, region, params, mesh=None):
    """Advance all free bergs by one explicit Euler step, in place.

    ``sea_ice_sampler(x)`` returns ``(v_ice, a)`` at position ``x``.
    Bergs that leave the mesh (if given) are flagged as exited and ignored
    from then on. Returns the list of bergs.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    for berg in bergs:
        if berg.exited or berg.grounded:
            continue
        v_ice, a = sea_ice_sampler(berg.x)
        F = iceberg_forces(berg, v_ice, a, forcing, params)
        berg.v_b = berg.v_b + dt / iceberg_mass(berg, params) * F
        berg.x = berg.x + dt * berg.v_b
        if mesh is not None and not mesh.contains(berg.x):
            berg.exited = True
            logger.info("iceberg %d left the domain at (%.1f, %.1f) m", berg.id, *berg.x)
    if region is not None:
        ground_bergs(bergs, region)
    return bergs


def ground_bergs(bergs, region):
    """Ground every active berg whose center lies in ``region``."""
    for berg in bergs:
        if berg.exited or berg.grounded:
            continue
        if region.contains(berg.x):
            berg.grounded = True
            berg.v_b = np.zeros(2)
            logger.info("iceberg %d grounded at (%.1f, %.1f) m", berg.id, *berg.x)
    return bergs
