"""Uniform quadrilateral mesh with bilinear (Q1) elements.

Nodes are numbered row by row, ``node = j * (nx + 1) + i``, and cells
likewise, ``cell = j * nx + i``. Each cell lists its four nodes
counterclockwise starting from the lower-left corner, matching the
ordering of the shape functions returned by :func:`basis_eval`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, OutOfDomainError

__all__ = [
    "Mesh",
    "QuadratureRule",
    "build_uniform_mesh",
    "gauss_rule",
    "basis_eval",
    "locate_point",
    "reference_map",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product rule on the reference cell [0, 1]^2.

    Weights sum to one, so physical integrals are ``area * sum(w * f)``.
    """

    points: np.ndarray  # (nq, 2)
    weights: np.ndarray  # (nq,)

    def __len__(self):
        return len(self.weights)


def gauss_rule(order=2):
    """Gauss-Legendre rule with ``order`` points per direction."""
    if order < 1:
        raise ConfigurationError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    xi, eta = np.meshgrid(x, x, indexing="xy")
    wx, wy = np.meshgrid(w, w, indexing="xy")
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    return QuadratureRule(points=pts, weights=(wx * wy).ravel())


def basis_eval(local):
    """Bilinear shape functions and their local gradients.

    Parameters
    ----------
    local : array_like, shape (2,) or (n, 2)
        Reference coordinates (xi, eta) in [0, 1]^2.

    Returns
    -------
    values : ndarray, shape (4,) or (n, 4)
    grads : ndarray, shape (4, 2) or (n, 4, 2)
        Derivatives with respect to (xi, eta).
    """
    local = np.asarray(local, dtype=float)
    single = local.ndim == 1
    pts = np.atleast_2d(local)
    xi, eta = pts[:, 0], pts[:, 1]
    values = np.column_stack([
        (1.0 - xi) * (1.0 - eta),
        xi * (1.0 - eta),
        xi * eta,
        (1.0 - xi) * eta,
    ])
    grads = np.empty((len(pts), 4, 2))
    grads[:, 0, 0] = -(1.0 - eta)
    grads[:, 0, 1] = -(1.0 - xi)
    grads[:, 1, 0] = 1.0 - eta
    grads[:, 1, 1] = -xi
    grads[:, 2, 0] = eta
    grads[:, 2, 1] = xi
    grads[:, 3, 0] = -eta
    grads[:, 3, 1] = 1.0 - xi
    if single:
        return values[0], grads[0]
    return values, grads


@dataclass(frozen=True, eq=False)
class Mesh:
    """Structured grid of square cells covering [0, extent_x] x [0, extent_y]."""

    extent_x: float
    extent_y: float
    resolution: float
    n_cells_x: int
    n_cells_y: int
    nodes: np.ndarray = field(repr=False)
    cells: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    quadrature: QuadratureRule = field(repr=False)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def nodes_x(self):
        return self.n_cells_x + 1

    @property
    def nodes_y(self):
        return self.n_cells_y + 1

    @property
    def cell_area(self):
        return self.resolution * self.resolution

    @property
    def area(self):
        return self.extent_x * self.extent_y

    def node_index(self, i, j):
        return j * self.nodes_x + i

    def cell_index(self, i, j):
        return j * self.n_cells_x + i

    def cell_ij(self, cell):
        return cell % self.n_cells_x, cell // self.n_cells_x

    @property
    def cell_centers(self):
        i = np.arange(self.n_cells) % self.n_cells_x
        j = np.arange(self.n_cells) // self.n_cells_x
        return np.column_stack([(i + 0.5) * self.resolution, (j + 0.5) * self.resolution])

    @property
    def cell_dofs(self):
        """Interleaved velocity dofs per cell, shape (n_cells, 8)."""
        d = np.empty((self.n_cells, 8), dtype=np.int64)
        d[:, 0::2] = 2 * self.cells
        d[:, 1::2] = 2 * self.cells + 1
        return d

    def as_grid(self, cell_field):
        """Reshape a per-cell array to (n_cells_y, n_cells_x)."""
        return np.asarray(cell_field).reshape(self.n_cells_y, self.n_cells_x)

    def contains(self, p):
        x, y = p
        return 0.0 <= x <= self.extent_x and 0.0 <= y <= self.extent_y


def _cells_along(extent, resolution, axis):
    n = extent / resolution
    n_int = round(n)
    if n_int < 1 or not math.isclose(n, n_int, rel_tol=0.0, abs_tol=1e-9):
        raise ConfigurationError(
            f"resolution {resolution} m does not divide the {axis}-extent {extent} m"
        )
    return n_int


def build_uniform_mesh(extent, resolution, quadrature_order=2):
    """Build the uniform mesh of a rectangle anchored at the origin.

    Raises
    ------
    ConfigurationError
        If an extent or the resolution is not positive, or the resolution
        does not divide an extent into a whole number of cells.
    """
    ex, ey = (float(e) for e in extent)
    res = float(resolution)
    if ex <= 0 or ey <= 0 or res <= 0:
        raise ConfigurationError("extent and resolution must be positive")
    nx = _cells_along(ex, res, "x")
    ny = _cells_along(ey, res, "y")

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), indexing="xy")
    nodes = np.column_stack([ii.ravel() * res, jj.ravel() * res])

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ci, cj = ci.ravel(), cj.ravel()
    ll = cj * (nx + 1) + ci
    cells = np.column_stack([ll, ll + 1, ll + nx + 2, ll + nx + 1])

    ib, jb = ii.ravel(), jj.ravel()
    boundary = (ib == 0) | (ib == nx) | (jb == 0) | (jb == ny)

    for arr in (nodes, cells, boundary):
        arr.setflags(write=False)
    return Mesh(ex, ey, res, nx, ny, nodes, cells, boundary, gauss_rule(quadrature_order))


def _axis_cell(coord, resolution, n):
    # shared edges go to the lower-index cell
    k = math.ceil(coord / resolution) - 1
    k = min(max(k, 0), n - 1)
    return k, coord / resolution - k


def locate_point(mesh, p):
    """Find the cell containing ``p`` and the local coordinates within it.

    Returns
    -------
    (i, j), (xi, eta)
        Zero-based cell indices along x and y, and reference coordinates.
    """
    x, y = float(p[0]), float(p[1])
    if not (np.isfinite(x) and np.isfinite(y)) or not mesh.contains((x, y)):
        raise OutOfDomainError((x, y))
    i, xi = _axis_cell(x, mesh.resolution, mesh.n_cells_x)
    j, eta = _axis_cell(y, mesh.resolution, mesh.n_cells_y)
    return (i, j), (xi, eta)


def reference_map(mesh, cell_ij, local):
    """Map reference coordinates of cell ``(i, j)`` to physical coordinates."""
    i, j = cell_ij
    xi, eta = local
    return ((i + xi) * mesh.resolution, (j + eta) * mesh.resolution)
