"""End-to-end acceptance checks on the reference experiments.

Every check appends one PASS/FAIL line to ``RESULTS``; conftest prints them
in the terminal summary. Scenario runs are cached for the whole session, so
the first test touching a run pays for it (about 25 minutes in total).
"""

import functools
import logging
import time
import warnings

import numpy as np
import pytest

from fastice.advection import face_fluxes, upwind_step
from fastice.diagnostics import cross_section
from fastice.driver import DAY, DYNAMIC_GROUNDED, KM, builtin_scenario, dump_config, run_scenario
from fastice.icebergs import IcebergParticle
from fastice.mesh import build_uniform_mesh
from fastice.momentum import SubgridWarning, assemble_jacobian, assemble_residual, point_drag
from fastice.params import Params
from fastice.state import BoundaryData, Forcing, init_state, interp_node_field

from test_momentum import _random_state, oracle_residual

logger = logging.getLogger(__name__)

RESULTS = []
RESOLUTIONS = (16 * KM, 8 * KM, 4 * KM)
A0 = 0.5
MARGIN = 0.01
BERG_X = 158 * KM
# the global extremes sit at the no-slip walls, so the dipole is read near the bergs
WINDOW = (128 * KM, 192 * KM)

pytestmark = pytest.mark.acceptance


def record(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    logger.info(line)
    return ok


def check(criterion, ok, detail):
    assert record(criterion, ok, detail), detail


@functools.lru_cache(maxsize=None)
def run(name, resolution=8 * KM, radius=None, duration=3 * DAY):
    cfg = builtin_scenario(name, resolution=resolution, radius=radius, duration=duration)
    t0 = time.perf_counter()
    res = run_scenario(cfg)
    logger.info("%s at %g m: %.0f s", name, resolution, time.perf_counter() - t0)
    return res


@functools.lru_cache(maxsize=None)
def dynamic_run():
    cfg = builtin_scenario("dynamic")
    fixed = {}
    moved = []

    def watch(step, state, bergs, rec):
        for b in bergs:
            if not b.grounded:
                continue
            if b.id not in fixed:
                fixed[b.id] = b.x.copy()
            elif np.any(b.x != fixed[b.id]) or np.any(b.v_b != 0.0):
                moved.append((step, b.id))

    return run_scenario(cfg, on_step=watch), moved


def km(x):
    return f"{x / KM:.0f} km"


def window_section(res, y=BERG_X):
    cs = cross_section(res.state.mesh, res.state.a, y)
    keep = (cs[:, 0] >= WINDOW[0]) & (cs[:, 0] <= WINDOW[1])
    return cs[keep]


def polynya(cs, resolution):
    """Width and minimum of the contiguous a < a0 - margin run around the minimum."""
    k = int(np.argmin(cs[:, 1]))
    low = cs[:, 1] < A0 - MARGIN
    if not low[k]:
        return 0.0, cs[k, 1]
    lo = hi = k
    while lo > 0 and low[lo - 1]:
        lo -= 1
    while hi < len(cs) - 1 and low[hi + 1]:
        hi += 1
    return (hi - lo + 1) * resolution, cs[k, 1]


# ---------------------------------------------------------------------------
# 1 stability functional


@pytest.mark.parametrize("resolution", RESOLUTIONS, ids=["16km", "8km", "4km"])
def test_c1a_functional_bounded(resolution):
    recs = run("stability", resolution).records
    margin = min(r.bound_rhs - r.phi_cumulative for r in recs)
    final = recs[-1]
    check(f"1a [{km(resolution)}]", margin >= 0.0,
          f"phi_cum {final.phi_cumulative:.4e} <= bound {final.bound_rhs:.4e} at day 3, "
          f"smallest gap {margin:.3e}")


@pytest.mark.parametrize("resolution", RESOLUTIONS, ids=["16km", "8km", "4km"])
def test_c1b_increment_stationary(resolution):
    recs = run("stability", resolution).records
    inc = np.array([r.phi_increment for r in recs])
    ratio = inc[-1] / inc.max()
    steps_per_day = int(round(DAY / (recs[1].t - recs[0].t)))
    drift = abs(inc[-1] - inc[-1 - steps_per_day]) / inc[-1]
    record(f"1b-info [{km(resolution)}]", drift < 1e-2,
           f"increment changed by {drift:.2e} relative over the last day")
    check(f"1b [{km(resolution)}]", ratio < 1e-6,
          f"final increment / peak = {ratio:.4e} (needs < 1e-6)")


def test_c1c_functional_converges():
    phi = [run("stability", r).records[-1].phi_cumulative for r in RESOLUTIONS]
    d1, d2 = abs(phi[0] - phi[1]), abs(phi[1] - phi[2])
    check("1c", d2 < d1, f"Phi 16/8/4 km = {phi[0]:.5e} / {phi[1]:.5e} / {phi[2]:.5e}; "
          f"|8-4| = {d2:.3e} < |16-8| = {d1:.3e}")


# ---------------------------------------------------------------------------
# 2 and 3 polynya dipole and region integrals


@pytest.mark.parametrize("resolution", RESOLUTIONS, ids=["16km", "8km", "4km"])
def test_c2_dipole(resolution):
    cs = window_section(run("refinement", resolution))
    x_min, a_min = cs[np.argmin(cs[:, 1])]
    x_max, a_max = cs[np.argmax(cs[:, 1])]
    ok = x_min > BERG_X and x_max < BERG_X and a_max > A0 + MARGIN and a_min < A0 - MARGIN
    check(f"2 [{km(resolution)}]", ok,
          f"min a = {a_min:.4f} at x = {x_min / KM:.0f} km, max a = {a_max:.4f} at x = {x_max / KM:.0f} km")


def test_c2_polynya_sharpens():
    w16, m16 = polynya(window_section(run("refinement", 16 * KM)), 16 * KM)
    w4, m4 = polynya(window_section(run("refinement", 4 * KM)), 4 * KM)
    check("2 [16 vs 4 km]", w4 < w16 and m4 < m16,
          f"polynya width {w16 / KM:.0f} -> {w4 / KM:.0f} km, minimum {m16:.4f} -> {m4:.4f}")


@pytest.mark.parametrize("region", ["before", "after"])
def test_c3_region_integrals(region):
    vals = [run("refinement", r).records[-1].region_integrals[region] for r in RESOLUTIONS]
    d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    check(f"3 [{region}]", d2 < d1,
          f"I 16/8/4 km = {vals[0]:.5e} / {vals[1]:.5e} / {vals[2]:.5e} m^2; "
          f"|8-4| = {d2:.3e} < |16-8| = {d1:.3e}")


# ---------------------------------------------------------------------------
# 4 radius


RADII = (500.0, 1000.0, 2000.0)


def radius_run(r):
    if r == 1000.0:
        # identical to the 3-day refinement run on the 8 km mesh
        a = builtin_scenario("radius", radius=r, duration=3 * DAY)
        b = builtin_scenario("refinement", resolution=8 * KM, duration=3 * DAY).replace(name="radius")
        assert dump_config(a) == dump_config(b)
        return run("refinement", 8 * KM)
    return run("radius", 8 * KM, r)


def test_c4_radius_monotone():
    node = None
    dep, depth = [], []
    for r in RADII:
        res = radius_run(r)
        mesh = res.state.mesh
        node = mesh.node_index(20, 20)  # (160, 160) km, next to the berg at (158, 158) km
        dep.append(abs(0.05 - res.state.v[node, 0]))
        depth.append(A0 - window_section(res)[:, 1].min())
    ok = dep[0] < dep[1] < dep[2] and depth[0] < depth[1] < depth[2]
    check("4 [monotone]", ok,
          "r = 0.5/1/2 km: depression " + " / ".join(f"{d:.4e}" for d in dep)
          + " m/s, polynya depth " + " / ".join(f"{d:.4f}" for d in depth))


def test_c4_point_force_scales_with_area():
    mesh = build_uniform_mesh((64 * KM, 64 * KM), 8 * KM)
    v = np.random.default_rng(4).normal(scale=0.05, size=(mesh.n_nodes, 2))
    mags = []
    for r in RADII:
        _, F = point_drag(IcebergParticle((21.3 * KM, 30.7 * KM), r, grounded=True), v, mesh, Params())
        mags.append(np.linalg.norm(F.sum(axis=0)))
    err = max(abs(mags[k] / mags[0] / (RADII[k] / RADII[0]) ** 2 - 1.0) for k in range(3))
    check("4 [r^2 force]", err <= 1e-10, f"worst relative deviation from r^2 scaling {err:.2e}")


# ---------------------------------------------------------------------------
# 5 dynamic grounding


def test_c5_grounded_set():
    res, _ = dynamic_run()
    start = {b.id: (round(b.x[0] / KM), round(b.x[1] / KM)) for b in res.config.bergs}
    got = sorted(start[b.id] for b in res.bergs if b.grounded)
    want = sorted(DYNAMIC_GROUNDED)
    check("5 [grounded set]", got == want, f"grounded at day 3: {got}")


def test_c5_grounded_bergs_stay_put():
    res, moved = dynamic_run()
    n = sum(b.grounded for b in res.bergs)
    check("5 [fixed]", not moved, f"{n} grounded bergs, {len(moved)} moves after grounding")


def tracked_berg(res):
    start = {b.id: tuple(b.x) for b in res.config.bergs}
    return next(b for b in res.bergs if start[b.id] == (310 * KM, 345 * KM))


def test_c5_berg_dipole():
    res, _ = dynamic_run()
    b = tracked_berg(res)
    mesh = res.state.mesh
    cs = cross_section(mesh, res.state.a, 345 * KM)
    i = int(b.x[0] // mesh.resolution)
    up, down = cs[i - 1, 1], cs[i + 1, 1]
    check("5 [dipole]", up > A0 and down < A0,
          f"berg at x = {b.x[0] / KM:.1f} km: a upstream {up:.4f}, downstream {down:.4f}")


def test_c5_berg_slower_than_ice():
    res, _ = dynamic_run()
    b = tracked_berg(res)
    ice = np.linalg.norm(interp_node_field(res.state.mesh, res.state.v, b.x))
    berg = np.linalg.norm(b.v_b)
    check("5 [speed]", berg < ice, f"berg {berg:.5f} m/s, ice {ice:.5f} m/s")


# ---------------------------------------------------------------------------
# 6 solver


def test_c6a_jacobian_matches_finite_differences():
    rng = np.random.default_rng(6)
    mesh = build_uniform_mesh((8 * 8 * KM, 8 * 8 * KM), 8 * KM)
    forcing = Forcing(v_o=(0.05, 0.0))
    params = Params()
    worst = 0.0
    for _ in range(100):
        s, v = _random_state(mesh, rng)
        J = assemble_jacobian(s, v, v, 600.0, forcing, [], params, mode="newton")
        dv = rng.normal(scale=0.01, size=v.shape)
        dv[mesh.boundary] = 0.0
        eps = 1e-6
        rp = assemble_residual(s, v + eps * dv, v, 600.0, forcing, [], params)
        rm = assemble_residual(s, v - eps * dv, v, 600.0, forcing, [], params)
        fd = ((rp - rm) / (2 * eps)).ravel()
        jd = J @ dv.ravel()
        worst = max(worst, np.linalg.norm(jd - fd) / np.linalg.norm(fd))
    check("6a", worst < 1e-5, f"worst relative J.dv error over 100 states {worst:.2e}")


def test_c6b_every_solve_reaches_tolerance():
    runs = [run("stability", r) for r in RESOLUTIONS] + [run("refinement", r) for r in RESOLUTIONS]
    runs += [radius_run(r) for r in RADII] + [dynamic_run()[0]]
    reports = [rep for res in runs for rep in res.reports]
    bad = [rep for rep in reports if not (rep.converged and rep.residual_norm <= rep.tolerance)]
    its = np.mean([rep.iterations for rep in reports])
    check("6b", not bad, f"{len(reports)} solves, {len(bad)} above tolerance, mean {its:.2f} iterations")


def test_c6c_residual_matches_oracle():
    rng = np.random.default_rng(7)
    mesh = build_uniform_mesh((4 * 8 * KM, 4 * 8 * KM), 8 * KM)
    bergs = [IcebergParticle((13 * KM, 17 * KM), 1000.0, grounded=True)]
    forcing = Forcing(v_o=(0.05, -0.02), v_a=(3.0, 1.0), coriolis=True)
    worst = 0.0
    for _ in range(5):
        s, v = _random_state(mesh, rng)
        _, v_old = _random_state(mesh, rng)
        R = assemble_residual(s, v, v_old, 600.0, forcing, bergs, Params())
        ref = oracle_residual(s, v, v_old, 600.0, forcing, bergs, Params())
        worst = max(worst, np.abs(R - ref).max() / np.abs(ref).max())
    check("6c", worst <= 1e-10, f"worst relative deviation from the dense oracle {worst:.2e}")


# ---------------------------------------------------------------------------
# 7 advection


def test_c7_advection():
    rng = np.random.default_rng(8)
    mesh = build_uniform_mesh((8 * 8 * KM, 6 * 8 * KM), 8 * KM)
    dt = 0.25 * 8 * KM / 0.05
    bd = BoundaryData(0.5, 1.3)
    worst = 0.0
    for _ in range(100):
        s = init_state(mesh, 0.5, 1.0)
        s.h = rng.uniform(1.0, 3.0, mesh.n_cells)
        v = rng.uniform(-0.05, 0.05, (mesh.n_nodes, 2))
        inflow = face_fluxes(mesh, v, s.h, bd.h_in).net_boundary_inflow()
        _, h = upwind_step(s, v, dt, bd)
        before = s.h.sum() * mesh.cell_area
        worst = max(worst, abs(h.sum() * mesh.cell_area - before - dt * inflow) / before)
    s = init_state(mesh, 0.5, 1.0)
    a, h = upwind_step(s, np.tile((0.05, 0.02), (mesh.n_nodes, 1)), dt, BoundaryData(0.5, 1.0))
    constant = np.abs(a - 0.5).max() + np.abs(h - 1.0).max()
    s = init_state(mesh, 0.0, 0.0)
    c = mesh.cell_index(3, 2)
    s.h[c] = 1.0
    _, h = upwind_step(s, np.tile((0.05, 0.0), (mesh.n_nodes, 1)), 0.5 * 8 * KM / 0.05, BoundaryData(0.0, 0.0))
    pulse = np.zeros(mesh.n_cells)
    pulse[[c, mesh.cell_index(4, 2)]] = 0.5
    exact = bool(np.array_equal(h, pulse))
    check("7", worst <= 1e-10 and constant <= 1e-15 and exact,
          f"mass error {worst:.1e}, constant-state drift {constant:.1e}, pulse exact {exact}")


# ---------------------------------------------------------------------------
# 8 coupling


def test_c8_partition_and_dissipation():
    rng = np.random.default_rng(9)
    mesh = build_uniform_mesh((64 * KM, 64 * KM), 8 * KM)
    worst_sum, worst_work = 0.0, -np.inf
    for _ in range(200):
        x = rng.uniform(1 * KM, 63 * KM, 2)
        r = rng.uniform(100.0, 3000.0)
        v = rng.normal(scale=0.05, size=(mesh.n_nodes, 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SubgridWarning)
            nodes, F = point_drag(IcebergParticle(x, r, grounded=True), v, mesh, Params())
        vp = interp_node_field(mesh, v, x)
        point = -900.0 * np.pi * r**2 * np.linalg.norm(vp) * vp
        worst_sum = max(worst_sum, np.abs(F.sum(axis=0) - point).max() / np.abs(point).max())
        worst_work = max(worst_work, np.sum(F * v[nodes]))
    check("8 [partition]", worst_sum <= 1e-12, f"worst relative partition error {worst_sum:.1e}")
    check("8 [dissipative]", worst_work <= 0.0, f"largest drag power {worst_work:.3e} W")


def test_c8_mirror_symmetry():
    cfg = builtin_scenario("refinement", resolution=16 * KM, duration=DAY)
    bergs = [IcebergParticle((BERG_X, y), 1000.0, grounded=True, id=k + 1)
             for k, y in enumerate((158 * KM, 354 * KM))]
    res = run_scenario(cfg.replace(bergs=bergs, regions={}))
    m = res.state.mesh
    v = res.state.v.reshape(m.nodes_y, m.nodes_x, 2)
    flipped = v[::-1] * np.array([1.0, -1.0])
    err = np.abs(v - flipped).max()
    a = m.as_grid(res.state.a)
    err_a = np.abs(a - a[::-1]).max()
    check("8 [mirror]", err <= 1e-9, f"max |v - mirrored v| = {err:.2e} m/s (a: {err_a:.1e})")
