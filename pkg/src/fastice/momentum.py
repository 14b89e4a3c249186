"""Implicit-Euler finite-element momentum solve with iceberg point drag.

Unknowns are nodal velocities stored as an ``(n_nodes, 2)`` array; the
flat dof vector interleaves components, ``dof = 2 * node + component``.
The residual of node ``i`` and component ``c`` is

    int rho h (v - v_old)/dt phi_i + int sigma(v) : grad(phi_i e_c)
      - int (f_c + f_sh + f_o + f_a) phi_i - sum_p F_p phi_i(x_p),

and boundary rows are replaced by ``v = 0``. Tracers are constant per
cell, so ``P`` and ``h`` are evaluated cell-wise.
"""

from __future__ import annotations

import logging
import time
import warnings
import weakref
from dataclasses import dataclass, field

import cvxopt
import numpy as np
import scipy.sparse as sp
from cvxopt import cholmod
import scipy.sparse.linalg as spla

from .errors import PoisonedStateError
from .mesh import basis_eval, locate_point
from .params import DragParams, Params
from .rheology import ice_strength

logger = logging.getLogger(__name__)

__all__ = [
    "DragParams",
    "SolverConfig",
    "NonlinearSolveReport",
    "SubgridWarning",
    "assemble_residual",
    "assemble_jacobian",
    "point_drag",
    "solve_momentum",
]

# engineering-strain form of S = eps'/2 + tr(eps) I:  S_v = A e, e = (exx, eyy, 2exy)
_A = np.array([[1.25, 0.75, 0.0], [0.75, 1.25, 0.0], [0.0, 0.0, 0.25]])
_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])  # k x v


class SubgridWarning(UserWarning):
    """An iceberg is wider than a grid cell."""


@dataclass(frozen=True)
class SolverConfig:
    tol_rel: float = 1e-8
    tol_abs_density: float = 1e-10  # N/m^2; tol_abs = this * resolution^2
    max_iters: int = 100
    n_picard: int = 5
    picard_switch: float = 1e-2  # leave Picard early once the residual fell by this factor; 0 disables
    max_halvings: int = 8
    linear_solver: str = "direct"  # or "krylov"
    linear_rtol: float = 1e-10


@dataclass
class NonlinearSolveReport:
    iterations: int = 0
    residual_norm: float = np.inf
    initial_residual_norm: float = np.inf
    tolerance: float = 0.0
    converged: bool = False
    linear_iterations: list = field(default_factory=list)
    history: list = field(default_factory=list)
    seconds: float = 0.0


class _ElementData:
    """Per-mesh constants for vectorized assembly on the uniform grid."""

    def __init__(self, mesh):
        q = mesh.quadrature
        self.phi, dphi = basis_eval(q.points)  # (nq, 4), (nq, 4, 2)
        self.grad = dphi / mesh.resolution
        self.wq = q.weights * mesh.cell_area  # (nq,)
        nq = len(q)
        B = np.zeros((nq, 3, 8))
        B[:, 0, 0::2] = self.grad[:, :, 0]
        B[:, 1, 1::2] = self.grad[:, :, 1]
        B[:, 2, 0::2] = self.grad[:, :, 1]
        B[:, 2, 1::2] = self.grad[:, :, 0]
        self.B = B
        # flattened operators so that cell kernels become matrix products
        self.strain_op = B.reshape(nq * 3, 8)  # v_cell (8,) -> e at all q
        self.stress_op = (self.wq[:, None, None] * B).reshape(nq * 3, 8)
        tangent = np.einsum("q,qia,qjb->qijab", self.wq, B, B)
        self.tangent_op = tangent.reshape(nq * 9, 64)
        self.mass = np.einsum("q,qa,qb->ab", self.wq, self.phi, self.phi)
        self.mass_q = np.einsum("q,qa,qb->qab", self.wq, self.phi, self.phi).reshape(nq, 16)
        self.load_op = (self.wq[:, None] * self.phi)  # (nq, 4)
        dofs = mesh.cell_dofs
        self.dofs = dofs
        self.rows = np.repeat(dofs, 8, axis=1).ravel()
        self.cols = np.tile(dofs, (1, 8)).ravel()
        self.n_dofs = 2 * mesh.n_nodes
        self.bdofs = np.flatnonzero(np.repeat(mesh.boundary, 2))
        self.idofs = np.flatnonzero(~np.repeat(mesh.boundary, 2))
        self.is_interior = np.zeros(self.n_dofs, dtype=bool)
        self.is_interior[self.idofs] = True
        # fill-reducing order of the interior dofs for the direct solver
        # (interior nodes are enumerated row by row, as idofs is)
        order = _nested_dissection(mesh.nodes_x - 2, mesh.nodes_y - 2)
        perm = np.column_stack([2 * order, 2 * order + 1]).ravel()
        self.pos = np.full(self.n_dofs, -1, dtype=np.int64)
        self.pos[self.idofs[perm]] = np.arange(len(perm))
        self.idofs_perm = self.idofs[perm]  # reduced index -> global dof
        self.n_red = len(perm)
        # fixed CSR pattern of the permuted interior block
        r, c = self.pos[self.rows], self.pos[self.cols]
        self.red_mask = (r >= 0) & (c >= 0)
        keys = r[self.red_mask] * self.n_red + c[self.red_mask]
        uniq, self.red_slot = np.unique(keys, return_inverse=True)
        self.red_indices = (uniq % self.n_red).astype(np.int32)
        counts = np.bincount(uniq // self.n_red, minlength=self.n_red)
        self.red_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)

    def reduced_matrix(self, K):
        """CSR matrix of the interior dofs (nested-dissection order) from cell blocks."""
        data = np.bincount(self.red_slot, weights=K.ravel()[self.red_mask],
                           minlength=len(self.red_indices))
        return sp.csr_matrix((data, self.red_indices, self.red_indptr),
                             shape=(self.n_red, self.n_red))


def _nested_dissection(ni, nj, leaf=6):
    """Geometric nested-dissection order of an ``ni`` x ``nj`` node grid."""
    out = []

    def split(i0, i1, j0, j1):
        if i1 <= i0 or j1 <= j0:
            return
        if (i1 - i0) * (j1 - j0) <= leaf * leaf:
            for j in range(j0, j1):
                out.extend(range(j * ni + i0, j * ni + i1))
            return
        if i1 - i0 >= j1 - j0:
            m = (i0 + i1) // 2
            split(i0, m, j0, j1)
            split(m + 1, i1, j0, j1)
            out.extend(j * ni + m for j in range(j0, j1))
        else:
            m = (j0 + j1) // 2
            split(i0, i1, j0, m)
            split(i0, i1, m + 1, j1)
            out.extend(range(m * ni + i0, m * ni + i1))

    split(0, ni, 0, nj)
    return np.asarray(out, dtype=np.int64)


_CACHE = weakref.WeakKeyDictionary()


def _element_data(mesh):
    data = _CACHE.get(mesh)
    if data is None:
        data = _ElementData(mesh)
        _CACHE[mesh] = data
    return data


def _check_finite(**fields_):
    for name, arr in fields_.items():
        if not np.all(np.isfinite(arr)):
            raise PoisonedStateError(name)


def _blocks_to_dofs(blocks):
    """(n, 4, 4, 2, 2) node/component blocks -> (n, 8, 8) interleaved dofs."""
    return blocks.transpose(0, 1, 3, 2, 4).reshape(len(blocks), 8, 8)


def _cell_fields(state, params):
    h = np.maximum(state.h, params.h_floor)
    P = ice_strength(state.h, state.a, params.rheology)
    return h, P


def _kinematics(ed, mesh, v):
    """Velocity and engineering strain (exx, eyy, 2 exy) at quadrature points."""
    vc = v[mesh.cells]  # (nc, 4, 2)
    vq = np.matmul(ed.phi, vc)  # (nc, nq, 2)
    e = (vc.reshape(len(vc), 8) @ ed.strain_op.T).reshape(len(vc), -1, 3)
    return vq, e


def _ocean_drag(params, forcing, vq):
    """Ocean drag force on the ice at quadrature points."""
    d = params.drag
    w = forcing.ocean - vq
    if d.ocean_drag_mode == "linearized":
        return d.rho_o * d.linear_drag_coefficient(forcing.ocean) * w
    return d.C_o * d.rho_o * np.linalg.norm(w, axis=-1)[..., None] * w


def _drag_velocity(params, v_trial, v_old, v_drag):
    if v_drag is not None:
        return v_drag
    return v_old if params.drag.berg_drag == "explicit" else v_trial


def berg_drag_coefficient(berg, params, a_cell=1.0):
    """C_i rho_b pi r^2, optionally weighted by the local concentration."""
    d = params.drag
    k = d.C_i * d.rho_b * np.pi * berg.r**2
    if d.drag_includes_concentration:
        k = k * a_cell
    return k


def point_drag(berg, v_eval, mesh, params, a=None):
    """Force exerted by one iceberg on the ice, spread to the nodes of its cell.

    The point force ``k |v_b - v_h(x_p)| (v_b - v_h(x_p))`` with
    ``k = C_i rho_b pi r^2`` is distributed with the bilinear weights
    ``phi_j(x_p)``, so the nodal forces add up to the point force.

    Returns
    -------
    nodes : ndarray, shape (4,)
    forces : ndarray, shape (4, 2)
        Force on each node (N). The momentum residual subtracts these.
    """
    if 2.0 * berg.r >= mesh.resolution:
        warnings.warn(
            f"iceberg {berg.id} diameter {2 * berg.r:g} m is not smaller than the "
            f"cell size {mesh.resolution:g} m",
            SubgridWarning,
            stacklevel=2,
        )
    (i, j), local = locate_point(mesh, berg.x)
    cell = mesh.cell_index(i, j)
    nodes = mesh.cells[cell]
    phi, _ = basis_eval(local)
    v_h = phi @ np.asarray(v_eval)[nodes]
    u = np.asarray(berg.v_b, dtype=float) - v_h
    a_cell = 1.0 if a is None else a[cell]
    F = berg_drag_coefficient(berg, params, a_cell) * np.hypot(u[0], u[1]) * u
    return nodes, phi[:, None] * F[None, :]


def assemble_residual(state, v_trial, v_old, dt, forcing, bergs, params: Params, v_drag=None):
    """Nonlinear residual as an ``(n_nodes, 2)`` array (N).

    ``v_drag`` is the field used to evaluate iceberg drag; by default it is
    ``v_old`` (explicit) or ``v_trial`` (semi-implicit), per
    ``params.drag.berg_drag``.
    """
    mesh = state.mesh
    v_trial = np.asarray(v_trial, dtype=float)
    v_old = np.asarray(v_old, dtype=float)
    _check_finite(v_trial=v_trial, v_old=v_old, a=state.a, h=state.h)
    ed = _element_data(mesh)
    h, P = _cell_fields(state, params)
    d = params.drag
    nc = mesh.n_cells

    vq, e = _kinematics(ed, mesh, v_trial)
    vq_old = np.matmul(ed.phi, v_old[mesh.cells])

    S = e @ _A  # _A is symmetric
    Delta = np.sqrt(np.einsum("eqi,eqi->eq", S, e) + params.rheology.delta_min**2)
    sig = (P[:, None] / (2.0 * Delta))[..., None] * S
    sig[..., 0:2] -= 0.5 * P[:, None, None]
    r_loc = sig.reshape(nc, -1) @ ed.stress_op

    rho_h = (d.rho * h)[:, None, None]
    fq = rho_h * (vq - vq_old) / dt - _ocean_drag(params, forcing, vq)
    if forcing.f_eff != 0.0:
        fq = fq + forcing.f_eff * rho_h * (vq - forcing.ocean) @ _ROT.T
    v_a = forcing.wind
    fq = fq - d.C_a * d.rho_a * np.hypot(*v_a) * v_a
    r_loc += np.matmul(ed.load_op.T, fq).reshape(nc, 8)

    R = np.bincount(ed.dofs.ravel(), weights=r_loc.ravel(), minlength=ed.n_dofs)
    R = R.reshape(-1, 2)

    v_eval = _drag_velocity(params, v_trial, v_old, v_drag)
    for berg in bergs:
        if berg.exited:
            continue
        nodes, forces = point_drag(berg, v_eval, mesh, params, a=state.a)
        np.add.at(R, nodes, -forces)

    R[mesh.boundary] = v_trial[mesh.boundary]
    return R


def _tangent_blocks(state, v_trial, dt, forcing, params, newton):
    """Per-cell (8, 8) blocks of the residual derivative (without berg drag)."""
    mesh = state.mesh
    ed = _element_data(mesh)
    h, P = _cell_fields(state, params)
    d = params.drag
    nc = mesh.n_cells
    nq = len(ed.wq)

    vq, e = _kinematics(ed, mesh, v_trial)
    S = e @ _A
    Delta2 = np.einsum("eqi,eqi->eq", S, e) + params.rheology.delta_min**2
    zeta = P[:, None] / (2.0 * np.sqrt(Delta2))
    D = zeta[..., None, None] * _A
    if newton:
        D = D - (zeta / Delta2)[..., None, None] * S[..., :, None] * S[..., None, :]
    K = (D.reshape(nc, nq * 9) @ ed.tangent_op).reshape(nc, 8, 8)

    # 2x2 coefficient of every phi_a phi_b product, per quadrature point
    coef = np.zeros((nc, nq, 2, 2))
    rho_h = d.rho * h
    coef += (rho_h / dt)[:, None, None, None] * np.eye(2)
    if forcing.f_eff != 0.0:
        coef += (forcing.f_eff * rho_h)[:, None, None, None] * _ROT
    if d.ocean_drag_mode == "linearized":
        coef += d.rho_o * d.linear_drag_coefficient(forcing.ocean) * np.eye(2)
    else:
        w = forcing.ocean - vq
        nw = np.linalg.norm(w, axis=-1)
        Mq = nw[..., None, None] * np.eye(2)
        if newton:
            safe = np.where(nw > 0, nw, 1.0)[..., None, None]
            Mq = Mq + (nw > 0)[..., None, None] * w[..., :, None] * w[..., None, :] / safe
        coef += d.C_o * d.rho_o * Mq
    blocks = np.matmul(ed.mass_q.T, coef.reshape(nc, nq, 4)).reshape(nc, 4, 4, 2, 2)
    return K + _blocks_to_dofs(blocks)


def assemble_jacobian(state, v_trial, v_old, dt, forcing, bergs, params: Params,
                      mode="newton", v_drag=None):
    """Sparse linearization of :func:`assemble_residual` around ``v_trial``.

    ``mode="picard"`` freezes the viscosity and drag magnitudes;
    ``mode="newton"`` is the exact derivative. Boundary rows are identity.
    """
    if mode not in ("picard", "newton"):
        raise ValueError(f"unknown linearization mode {mode!r}")
    mesh = state.mesh
    v_trial = np.asarray(v_trial, dtype=float)
    _check_finite(v_trial=v_trial, v_old=np.asarray(v_old, dtype=float), a=state.a, h=state.h)
    ed = _element_data(mesh)
    K = _tangent_blocks(state, v_trial, dt, forcing, params, mode == "newton")
    J = sp.csr_matrix((K.ravel(), (ed.rows, ed.cols)), shape=(ed.n_dofs, ed.n_dofs))
    if v_drag is None and params.drag.berg_drag == "semi-implicit":
        J = J + _berg_drag_jacobian(state, v_trial, bergs, params, mode == "newton")
    keep = ed.is_interior.astype(float)
    J = sp.diags(keep) @ J + sp.diags(1.0 - keep)
    return J.tocsr()


def _berg_drag_jacobian(state, v_eval, bergs, params, newton, index=None):
    """Derivative of the (semi-implicit) berg drag term; ``index`` remaps dofs."""
    mesh = state.mesh
    rows, cols, vals = [], [], []
    for berg in bergs:
        if berg.exited:
            continue
        (i, j), local = locate_point(mesh, berg.x)
        cell = mesh.cell_index(i, j)
        nodes = mesh.cells[cell]
        phi, _ = basis_eval(local)
        u = berg.v_b - phi @ v_eval[nodes]
        nu = np.hypot(*u)
        blk = nu * np.eye(2)
        if newton and nu > 0:
            blk = blk + np.outer(u, u) / nu
        blk = berg_drag_coefficient(berg, params, state.a[cell]) * blk
        full = phi[:, None, None, None] * phi[None, None, :, None] * blk[None, :, None, :]
        dofs = (2 * nodes[:, None] + np.arange(2)).ravel()
        rows.append(np.repeat(dofs, 8))
        cols.append(np.tile(dofs, 8))
        vals.append(full.reshape(8, 8).ravel())
    n = 2 * mesh.n_nodes
    if not vals:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    else:
        rows, cols, vals = (np.concatenate(x) for x in (rows, cols, vals))
    if index is not None:
        r, c = index[rows], index[cols]
        ok = (r >= 0) & (c >= 0)
        n = int(index.max()) + 1
        rows, cols, vals = r[ok], c[ok], vals[ok]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _is_symmetric(A):
    diff = A - A.T
    return diff.nnz == 0 or abs(diff).max() <= 1e-12 * abs(A).max()


class _CholeskySolve:
    def __init__(self, factor):
        self.factor = factor

    def solve(self, b):
        x = cvxopt.matrix(np.ascontiguousarray(b, dtype=float))
        cholmod.solve(self.factor, x)
        return np.array(x).ravel()


class _LinearSolver:
    """Solves the interior system, reusing a factorization (or AMG hierarchy)
    as a preconditioner for as long as it keeps Krylov iterations low."""

    def __init__(self, cfg, refactor_after=12):
        self.cfg = cfg
        self.refactor_after = refactor_after
        self.precond = None
        self.symmetric = None
        self.factorizations = 0
        self._pattern_key = None
        self._symbolic = None
        self._M = None

    def _build(self, A, symmetric):
        self.factorizations += 1
        self.symmetric = symmetric
        if self.cfg.linear_solver == "direct":
            if symmetric:
                chol = self._cholesky(A)
                if chol is not None:
                    return chol
            opts = {"SymmetricMode": True} if symmetric else {}
            lu = spla.splu(A.tocsc(), permc_spec="NATURAL" if symmetric else "COLAMD",
                           options=opts)
            return lu
        if self.cfg.linear_solver != "krylov":
            raise ValueError(f"unknown linear solver {self.cfg.linear_solver!r}")
        import pyamg

        nodes = A.shape[0] // 2
        ml = pyamg.smoothed_aggregation_solver(
            A, B=np.kron(np.ones((nodes, 1)), np.eye(2)),
            symmetry="symmetric" if symmetric else "nonsymmetric")
        self.precond = ml.aspreconditioner()
        return None

    def _cholesky(self, A):
        """CHOLMOD factor of an SPD matrix, or None if it is not definite."""
        A = A.tocsr()
        key = (A.shape, A.nnz)
        same = (self._pattern_key == key and np.array_equal(self._indices, A.indices)
                and np.array_equal(self._indptr, A.indptr))
        if not same:
            self._indices, self._indptr = A.indices.copy(), A.indptr.copy()
            rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
            self._lower = np.flatnonzero(A.indices <= rows)
            k = len(self._lower)
            # tag entries with their position to learn cvxopt's storage order
            tags = cvxopt.matrix(np.arange(1.0, k + 1.0))
            self._M = cvxopt.spmatrix(tags, cvxopt.matrix(rows[self._lower].astype(int)),
                                      cvxopt.matrix(A.indices[self._lower].astype(int)),
                                      size=A.shape)
            self._lower = self._lower[np.array(self._M.V, dtype=np.int64).ravel() - 1]
            self._symbolic = None
            self._pattern_key = key
        M = self._M
        M.V = cvxopt.matrix(A.data[self._lower])
        if self._symbolic is None:
            # rows already follow the nested-dissection order, keep it
            self._symbolic = cholmod.symbolic(M, p=cvxopt.matrix(np.arange(A.shape[0])))
        try:
            cholmod.numeric(M, self._symbolic)
        except ArithmeticError:
            logger.debug("matrix not positive definite, falling back to LU")
            self._symbolic = None
            self._pattern_key = None
            return None
        return _CholeskySolve(self._symbolic)

    def _krylov(self, A, b):
        count = [0]

        def tick(_):
            count[0] += 1

        method = spla.cg if self.symmetric else spla.gmres
        kw = {} if self.symmetric else {"restart": 50}
        x, info = method(A, b, rtol=self.cfg.linear_rtol, atol=0.0, M=self.precond,
                         maxiter=200, callback=tick, **kw)
        return x, count[0], info

    def solve(self, A, b, symmetric=None):
        if symmetric is None:
            symmetric = _is_symmetric(A)
        if self.cfg.linear_solver == "direct":
            # a stale factorization needs ~12 CG steps here: refactoring is as cheap
            return self._build(A, symmetric).solve(b), 1
        if self.precond is None or symmetric != self.symmetric:
            lu = self._build(A, symmetric)
            if lu is not None:
                return lu.solve(b), 1
        x, its, info = self._krylov(A, b)
        if info != 0 or its > self.refactor_after:
            lu = self._build(A, symmetric)
            if lu is not None:
                return lu.solve(b), its + 1
            x2, its2, info = self._krylov(A, b)
            if info != 0:
                logger.warning("linear solve did not reach rtol=%g", self.cfg.linear_rtol)
            return x2, its + its2
        return x, its


def solve_momentum(state, v_old, dt, forcing, bergs, params: Params, solver_cfg=None,
                   linear_solver=None):
    """Advance the ice velocity by one implicit Euler step.

    Picard steps come first, then Newton steps safeguarded by a
    step-halving line search on the residual norm. Iceberg drag is
    evaluated at ``v_old`` unless ``params.drag.berg_drag`` is
    ``"semi-implicit"``. Pass the same ``linear_solver`` object (from
    :func:`make_linear_solver`) on consecutive steps to reuse its
    factorization.

    Returns
    -------
    v : ndarray, shape (n_nodes, 2)
        Best iterate found; boundary values are exactly zero.
    report : NonlinearSolveReport
    """
    cfg = solver_cfg or SolverConfig()
    lin = linear_solver or make_linear_solver(cfg)
    t0 = time.perf_counter()
    mesh = state.mesh
    ed = _element_data(mesh)
    v_old = np.asarray(v_old, dtype=float)
    _check_finite(v_old=v_old, a=state.a, h=state.h)
    explicit = params.drag.berg_drag == "explicit"
    v_drag = v_old if explicit else None

    def residual(v):
        return assemble_residual(state, v, v_old, dt, forcing, bergs, params, v_drag=v_drag).ravel()

    v = v_old.copy()
    v[mesh.boundary] = 0.0
    r = residual(v)
    rnorm = np.linalg.norm(r)
    report = NonlinearSolveReport(initial_residual_norm=rnorm)
    report.tolerance = cfg.tol_abs_density * mesh.cell_area + cfg.tol_rel * rnorm
    report.history.append(rnorm)

    for it in range(cfg.max_iters):
        if rnorm <= report.tolerance:
            break
        newton = it >= cfg.n_picard or rnorm <= cfg.picard_switch * report.initial_residual_norm
        K = _tangent_blocks(state, v, dt, forcing, params, newton)
        A = ed.reduced_matrix(K)
        if not explicit:
            A = A + _berg_drag_jacobian(state, v, bergs, params, newton, index=ed.pos)
        # boundary values stay zero, so only interior dofs change
        # only the Coriolis term breaks symmetry of the interior operator
        x, lin_its = lin.solve(A, -r[ed.idofs_perm], symmetric=forcing.f_eff == 0.0)
        dv = np.zeros(ed.n_dofs)
        dv[ed.idofs_perm] = x
        report.linear_iterations.append(lin_its)
        dv = dv.reshape(-1, 2)

        step = 1.0
        for _ in range((cfg.max_halvings if newton else 0) + 1):
            v_try = v + step * dv
            r_try = residual(v_try)
            n_try = np.linalg.norm(r_try)
            if n_try < rnorm:
                break
            step *= 0.5
        v, r, rnorm = v_try, r_try, n_try
        report.iterations = it + 1
        report.history.append(rnorm)

    report.converged = bool(rnorm <= report.tolerance)
    v[mesh.boundary] = 0.0
    report.residual_norm = rnorm
    report.seconds = time.perf_counter() - t0
    return v, report


def make_linear_solver(cfg=None):
    """Linear solver object that may be shared by consecutive momentum solves."""
    return _LinearSolver(cfg or SolverConfig())
