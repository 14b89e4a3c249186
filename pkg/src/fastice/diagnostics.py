"""Stability functional, its data bound, and run output.

The functional accumulates the iceberg drag dissipation
``a C_i rho_b |v|^3`` over grounded bergs. Its time integral is bounded
by ``int ||R||^2 / (2 rho_o C_o_bar) dt + ||rho h v(0)||^2`` with
``R = f_sh + f_a + rho_o C_o_bar v_o`` when the ocean drag is linear in
velocity and the tracers are frozen.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, OutOfDomainError
from .mesh import basis_eval, locate_point
from .state import cell_value_at, interp_node_field

logger = logging.getLogger(__name__)

__all__ = [
    "DiagnosticsRecord",
    "phi_increment",
    "stability_bound_increment",
    "initial_energy",
    "cross_section",
    "region_integral",
    "OutputWriter",
    "write_outputs",
]

PHI_MODES = ("discrete_point", "continuous_norm")


@dataclass
class DiagnosticsRecord:
    t: float
    phi_increment: float = 0.0
    phi_cumulative: float = 0.0
    bound_rhs: float = 0.0
    phi_increment_alt: float = 0.0  # the other phi mode, for comparison
    newton_iters: int = 0
    region_integrals: dict = field(default_factory=dict)


def _disk_stencil(r):
    """16 equal-area points in a disk of radius r (4 rings x 4 angles)."""
    k = np.arange(4)
    radii = r * np.sqrt((k + 0.5) / 4.0)
    angles = 2.0 * np.pi * (k + 0.5) / 4.0
    R, T = np.meshgrid(radii, angles, indexing="ij")
    offsets = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    weights = np.full(16, np.pi * r**2 / 16.0)
    return offsets, weights


def _disk_norm_sq(mesh, v, center, r):
    offsets, weights = _disk_stencil(r)
    total = 0.0
    for off, w in zip(offsets, weights):
        vp = interp_node_field(mesh, v, center + off)
        total += w * float(vp @ vp)
    return total


def phi_increment(state, bergs, params, mode="discrete_point"):
    """Integrand of the stability functional at the current time.

    ``discrete_point`` sums ``a C_i rho_b pi r^2 |v_h(x_p)|^3`` over
    grounded bergs, consistent with the point drag. ``continuous_norm``
    sums ``a C_i rho_b ||v||^3`` with the L2 norm over the berg disk,
    sampled on a 16-point stencil.
    """
    if mode not in PHI_MODES:
        raise ConfigurationError(f"phi mode must be one of {PHI_MODES}, got {mode!r}")
    d = params.drag
    total = 0.0
    for berg in bergs:
        if not berg.grounded or berg.exited:
            continue
        a = float(cell_value_at(state.mesh, state.a, berg.x))
        if mode == "discrete_point":
            vp = interp_node_field(state.mesh, state.v, berg.x)
            speed = float(np.hypot(*vp))
            total += a * d.C_i * d.rho_b * np.pi * berg.r**2 * speed**3
        else:
            nsq = _disk_norm_sq(state.mesh, state.v, np.asarray(berg.x), berg.r)
            total += a * d.C_i * d.rho_b * nsq**1.5
    return total


def stability_bound_increment(forcing, params, domain_area, h=1.0):
    """Rate of growth of the bound, ``||R||^2 / (2 rho_o C_o_bar)``.

    ``h`` is the ice thickness entering the sea-surface tilt force; a
    per-cell array is taken to tile the domain in equal cells.
    """
    d = params.drag
    c_bar = d.linear_drag_coefficient(forcing.ocean)
    if c_bar <= 0:
        raise ConfigurationError("C_o_bar must be positive")
    v_o = forcing.ocean
    v_a = forcing.wind
    h = np.atleast_1d(np.asarray(h, dtype=float))
    cell_area = domain_area / h.size
    tilt = d.rho * h[:, None] * forcing.f_eff * np.array([-v_o[1], v_o[0]])[None, :]
    R = tilt + d.C_a * d.rho_a * np.hypot(*v_a) * v_a + d.rho_o * c_bar * v_o
    norm_sq = float(np.sum(R * R) * cell_area)
    return norm_sq / (2.0 * d.rho_o * c_bar)


def initial_energy(state, params):
    """``||rho h v||^2`` over the domain, by quadrature."""
    mesh = state.mesh
    q = mesh.quadrature
    phi, _ = basis_eval(q.points)
    vq = np.matmul(phi, state.v[mesh.cells])  # (nc, nq, 2)
    rho_h = params.drag.rho * state.h
    integrand = (rho_h[:, None] ** 2) * np.sum(vq * vq, axis=-1)
    return float(np.sum(integrand @ q.weights) * mesh.cell_area)


def cross_section(mesh, field_, y):
    """Values of a cell or node field along the horizontal line at ``y``.

    Returns an array of ``(x, value)`` rows at the field's native x
    positions: cell centers for per-cell fields (row chosen like
    :func:`~fastice.mesh.locate_point`), node columns for nodal fields
    (nearest node row, ties going to the lower row).
    """
    if not 0.0 <= y <= mesh.extent_y:
        raise OutOfDomainError((0.0, y), f"y = {y} m lies outside the domain")
    arr = np.asarray(field_)
    res = mesh.resolution
    if arr.shape[0] == mesh.n_cells:
        (_, j), _ = locate_point(mesh, (0.0, y))
        xs = (np.arange(mesh.n_cells_x) + 0.5) * res
        vals = mesh.as_grid(arr)[j]
    elif arr.shape[0] == mesh.n_nodes:
        j = int(np.ceil(y / res - 0.5))
        j = min(max(j, 0), mesh.n_cells_y)
        xs = np.arange(mesh.nodes_x) * res
        vals = arr.reshape(mesh.nodes_y, mesh.nodes_x, *arr.shape[1:])[j]
    else:
        raise ValueError("field length matches neither cells nor nodes")
    if vals.ndim == 1:
        return np.column_stack([xs, vals])
    return np.column_stack([xs, vals.reshape(len(xs), -1)])


def region_integral(mesh, field_, rect):
    """Integral of a per-cell field over the axis-aligned ``rect``.

    ``rect = ((x0, y0), (x1, y1))``; partially covered cells contribute
    in proportion to the covered area.
    """
    (x0, y0), (x1, y1) = rect
    if not (x1 > x0 and y1 > y0):
        raise ConfigurationError(f"empty integration rectangle {rect}")
    if not (mesh.contains((x0, y0)) and mesh.contains((x1, y1))):
        raise OutOfDomainError((x1, y1), f"rectangle {rect} leaves the domain")
    res = mesh.resolution
    edges_x = np.arange(mesh.n_cells_x + 1) * res
    edges_y = np.arange(mesh.n_cells_y + 1) * res
    ox = np.clip(np.minimum(edges_x[1:], x1) - np.maximum(edges_x[:-1], x0), 0.0, None)
    oy = np.clip(np.minimum(edges_y[1:], y1) - np.maximum(edges_y[:-1], y0), 0.0, None)
    return float(oy @ mesh.as_grid(field_) @ ox)


class OutputWriter:
    """Writes snapshots and time series of one run into ``out_dir``.

    Files: ``fields_<step>.csv`` (nodal velocity), ``tracers_<step>.csv``
    (cell a, h), ``particles.csv`` and ``diagnostics.csv`` (appended).
    """

    DIAG_HEADER = ["t_s", "phi_inc", "phi_cum", "bound_rhs", "newton_iters"]
    PART_HEADER = ["t_s", "id", "x_m", "y_m", "vbx_ms", "vby_ms", "grounded"]

    def __init__(self, out_dir, cadence=1):
        self.out_dir = Path(out_dir)
        self.cadence = max(int(cadence), 1)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            for name, header in (("diagnostics.csv", self.DIAG_HEADER),
                                 ("particles.csv", self.PART_HEADER)):
                with open(self.out_dir / name, "w", newline="", encoding="utf-8") as fh:
                    csv.writer(fh, lineterminator="\n").writerow(header)
        except OSError as exc:
            raise OSError(f"cannot write outputs to {self.out_dir}: {exc}") from exc

    def _open(self, name, mode="w"):
        path = self.out_dir / name
        try:
            return open(path, mode, newline="", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc

    def write(self, state, bergs, record, step, force_snapshot=False):
        with self._open("diagnostics.csv", "a") as fh:
            csv.writer(fh, lineterminator="\n").writerow([
                _fmt(record.t), _fmt(record.phi_increment), _fmt(record.phi_cumulative),
                _fmt(record.bound_rhs), record.newton_iters,
            ])
        with self._open("particles.csv", "a") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for b in bergs:
                if b.exited:
                    continue
                w.writerow([_fmt(record.t), b.id, _fmt(b.x[0]), _fmt(b.x[1]),
                            _fmt(b.v_b[0]), _fmt(b.v_b[1]), int(b.grounded)])
        if step % self.cadence == 0 or force_snapshot:
            self._snapshot(state, step)

    def _snapshot(self, state, step):
        mesh = state.mesh
        with self._open(f"fields_{step:06d}.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_m", "y_m", "vx_ms", "vy_ms"])
            for (x, y), (vx, vy) in zip(mesh.nodes, state.v):
                w.writerow([_fmt(x), _fmt(y), _fmt(vx), _fmt(vy)])
        with self._open(f"tracers_{step:06d}.csv") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_m", "y_m", "a", "h"])
            for (x, y), a, h in zip(mesh.cell_centers, state.a, state.h):
                w.writerow([_fmt(x), _fmt(y), _fmt(a), _fmt(h)])


def _fmt(x):
    return repr(float(x))


def write_outputs(state, bergs, record, step, out_dir, cadence=1):
    """Write one step to ``out_dir``, creating the time-series files if needed."""
    out = Path(out_dir)
    if not (out / "diagnostics.csv").exists():
        writer = OutputWriter(out, cadence)
    else:
        writer = OutputWriter.__new__(OutputWriter)
        writer.out_dir, writer.cadence = out, max(int(cadence), 1)
    writer.write(state, bergs, record, step)
    return sorted(os.listdir(out))
