"""Donor-cell transport of concentration and thickness.

Tracers live at cell centers. The normal velocity of a cell face is the
mean of the normal velocity components at its two end nodes. Vertical
faces are indexed ``U[j, i]`` (x = i * res, row j), horizontal faces
``V[j, i]`` (y = j * res, column i); normals point along +x and +y.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CFLError, ConsistencyError

__all__ = [
    "FaceFlux",
    "face_velocities",
    "face_normal_velocity",
    "face_fluxes",
    "upwind_step",
]


def _node_grid(mesh, v):
    return np.asarray(v, dtype=float).reshape(mesh.nodes_y, mesh.nodes_x, 2)


def face_velocities(mesh, v):
    """Normal velocities on all vertical (U) and horizontal (V) faces."""
    g = _node_grid(mesh, v)
    U = 0.5 * (g[:-1, :, 0] + g[1:, :, 0])  # (ny, nx + 1)
    V = 0.5 * (g[:, :-1, 1] + g[:, 1:, 1])  # (ny + 1, nx)
    return U, V


def face_normal_velocity(mesh, v, face):
    """Normal velocity of one face.

    ``face`` is ``("x", i, j)`` for the vertical face at x = i * res in
    cell row j, or ``("y", i, j)`` for the horizontal face at y = j * res
    in cell column i.
    """
    kind, i, j = face
    v = np.asarray(v, dtype=float)
    if kind == "x":
        n0, n1 = mesh.node_index(i, j), mesh.node_index(i, j + 1)
        return 0.5 * (v[n0, 0] + v[n1, 0])
    if kind == "y":
        n0, n1 = mesh.node_index(i, j), mesh.node_index(i + 1, j)
        return 0.5 * (v[n0, 1] + v[n1, 1])
    raise ValueError(f"face kind must be 'x' or 'y', got {kind!r}")


@dataclass(frozen=True)
class FaceFlux:
    """Normal velocities and tracer fluxes (tracer m^2/s) on all faces."""

    U: np.ndarray
    V: np.ndarray
    Fx: np.ndarray
    Fy: np.ndarray

    def net_boundary_inflow(self):
        """Tracer entering the domain per second through the boundary."""
        return (self.Fx[:, 0].sum() - self.Fx[:, -1].sum()
                + self.Fy[0, :].sum() - self.Fy[-1, :].sum())


def face_fluxes(mesh, v, q, q_in):
    """Donor-cell fluxes of the per-cell tracer ``q`` with inflow value ``q_in``."""
    U, V = face_velocities(mesh, v)
    g = mesh.as_grid(q)
    ny, nx = g.shape
    res = mesh.resolution

    # upwind values on vertical faces: left cell when U > 0, else right cell
    left = np.empty((ny, nx + 1))
    right = np.empty((ny, nx + 1))
    left[:, 1:] = g
    right[:, :-1] = g
    left[:, 0] = q_in
    right[:, -1] = q_in
    qx = np.where(U > 0, left, right)
    # outflow boundary faces carry the interior value
    qx[:, 0] = np.where(U[:, 0] > 0, q_in, g[:, 0])
    qx[:, -1] = np.where(U[:, -1] < 0, q_in, g[:, -1])

    below = np.empty((ny + 1, nx))
    above = np.empty((ny + 1, nx))
    below[1:, :] = g
    above[:-1, :] = g
    below[0, :] = q_in
    above[-1, :] = q_in
    qy = np.where(V > 0, below, above)
    qy[0, :] = np.where(V[0, :] > 0, q_in, g[0, :])
    qy[-1, :] = np.where(V[-1, :] < 0, q_in, g[-1, :])

    return FaceFlux(U=U, V=V, Fx=U * qx * res, Fy=V * qy * res)


def _check_cfl(mesh, U, V, dt):
    res = mesh.resolution
    for name, F in (("x", U), ("y", V)):
        if F.size == 0:
            continue
        k = np.argmax(np.abs(F))
        cfl = abs(F.flat[k]) * dt / res
        if cfl > 1.0:
            j, i = np.unravel_index(k, F.shape)
            raise CFLError(
                f"CFL number {cfl:.3g} > 1 on {name}-face (i={i}, j={j}); "
                f"use dt <= {res / abs(F.flat[k]):.4g} s"
            )


def _update(mesh, q, flux, dt):
    div = (flux.Fx[:, 1:] - flux.Fx[:, :-1]) + (flux.Fy[1:, :] - flux.Fy[:-1, :])
    return (mesh.as_grid(q) - dt / mesh.cell_area * div).ravel()


def upwind_step(state, v, dt, boundary):
    """One donor-cell step for ``a`` and ``h`` with nodal velocity ``v``.

    Returns new ``(a, h)`` arrays; ``state`` is not modified. The result
    is clamped to a in [0, 1] and h >= 0.

    Raises
    ------
    CFLError
        If a face CFL number exceeds one.
    ConsistencyError
        If the update produces a tracer below -1e-12 before clamping.
    """
    mesh = state.mesh
    U, V = face_velocities(mesh, v)
    _check_cfl(mesh, U, V, dt)
    out = []
    for name, q, q_in in (("a", state.a, boundary.a_in), ("h", state.h, boundary.h_in)):
        new = _update(mesh, q, face_fluxes(mesh, v, q, q_in), dt)
        if new.min() < -1e-12:
            k = int(np.argmin(new))
            raise ConsistencyError(f"tracer {name} became {new[k]:.3e} in cell {mesh.cell_ij(k)}")
        out.append(new)
    a, h = out
    return np.clip(a, 0.0, 1.0), np.maximum(h, 0.0)
