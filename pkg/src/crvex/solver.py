"""Assembly and damped Newton solution of the discrete p_h(x)-Dirichlet problem."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .errors import ConvergenceError, DomainError
from .mesh import DIRICHLET, Triangulation
from .nfunction import ElementExponents, eval_A, eval_DA, eval_phi

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    max_newton_iters: int = 50
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_halvings: int = 30
    linear_solver: str = "direct"  # or "cg"
    linear_forcing: float = 1e-2

    def __post_init__(self):
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")
        if not (0 < self.armijo < 1 and 0 < self.backtrack < 1):
            raise ValueError("line-search ratios must lie in (0, 1)")
        if self.max_newton_iters < 1 or self.max_halvings < 0:
            raise ValueError("iteration limits must be positive")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError("linear_solver must be 'direct' or 'cg'")


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    initial_residual: float = 0.0
    residual: float = 0.0
    relative_residual: float = 0.0
    residual_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    linear_solves: int = 0
    linear_iterations: int = 0
    message: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class NonlinearSystem:
    """Element-wise affine discretisation with three local DOFs per element.

    ``dof_map`` (T, 3) maps local to global DOFs, ``grads`` (T, 3, 2) holds
    the basis gradients and ``load`` the assembled right-hand side.
    """

    mesh: Triangulation
    exponents: ElementExponents
    delta: float
    dof_map: np.ndarray
    grads: np.ndarray
    load: np.ndarray
    free: np.ndarray
    space: str = "CR"
    f_h: np.ndarray | None = None

    def __post_init__(self):
        self.areas = self.mesh.areas()
        self.ndof = len(self.load)
        self._free_index = np.full(self.ndof, -1, dtype=np.int64)
        self._free_index[self.free] = np.arange(len(self.free))
        loc = self._free_index[self.dof_map]
        rows = np.repeat(loc, 3, axis=1).ravel()
        cols = np.tile(loc, (1, 3)).ravel()
        self._keep = (rows >= 0) & (cols >= 0)
        self._rows, self._cols = rows[self._keep], cols[self._keep]

    @property
    def n_free(self) -> int:
        return len(self.free)

    def gradient(self, u) -> np.ndarray:
        return np.einsum("ti,tid->td", np.asarray(u)[self.dof_map], self.grads)

    def expand(self, u_free) -> np.ndarray:
        u = np.zeros(self.ndof)
        u[self.free] = u_free
        return u

    def energy(self, u) -> float:
        g = self.gradient(u)
        phi = eval_phi(self.exponents.p_h, self.delta, np.linalg.norm(g, axis=1))
        return float(np.sum(self.areas * phi) - self.load @ u)


def cr_system(mesh: Triangulation, exponents: ElementExponents, delta: float, f_h) -> NonlinearSystem:
    """CR system with right-hand side (f_h, Pi_h v); f_h is one value per element."""
    f_h = np.broadcast_to(np.asarray(f_h, dtype=float), (mesh.n_elements,))
    loc = np.repeat((f_h * mesh.areas() / 3.0)[:, None], 3, axis=1)
    load = np.bincount(mesh.side_of_element.ravel(), weights=loc.ravel(), minlength=mesh.n_sides)
    return NonlinearSystem(mesh, exponents, float(delta), mesh.side_of_element,
                           fem.cr_basis_gradients(mesh), load, fem.CRSpace(mesh).free_dofs,
                           space="CR", f_h=np.array(f_h))


def p1_system(mesh: Triangulation, exponents: ElementExponents, delta: float, f,
              quad: fem.SimplexQuadrature | None = None) -> NonlinearSystem:
    """Conforming P1 system with right-hand side (f, v) integrated by quadrature."""
    quad = quad or fem.triangle_rule(8)
    pts = quad.points(mesh)
    fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    loc = mesh.areas()[:, None] * np.einsum("tq,q,qi->ti", fv, quad.weights, quad.bary)
    load = np.bincount(mesh.elements.ravel(), weights=loc.ravel(), minlength=mesh.n_vertices)
    return NonlinearSystem(mesh, exponents, float(delta), mesh.elements,
                           mesh.barycentric_gradients(), load, fem.P1Space(mesh).free_dofs,
                           space="P1")


def assemble_residual(sys: NonlinearSystem, u) -> np.ndarray:
    """Free-DOF residual R_i(u) = (A_h(grad u), grad phi_i) - load_i."""
    A = eval_A(sys.exponents.p_h, sys.delta, sys.gradient(u))
    loc = sys.areas[:, None] * np.einsum("td,tid->ti", A, sys.grads)
    full = np.bincount(sys.dof_map.ravel(), weights=loc.ravel(), minlength=sys.ndof)
    return (full - sys.load)[sys.free]


def assemble_jacobian(sys: NonlinearSystem, u) -> sp.csr_matrix:
    g = sys.gradient(u)
    try:
        DA = eval_DA(sys.exponents.p_h, sys.delta, g)
    except DomainError as exc:
        raise ArithmeticError("singular linearisation") from exc
    K = sys.areas[:, None, None] * np.einsum("tid,tde,tje->tij", sys.grads, DA, sys.grads)
    K = 0.5 * (K + K.transpose(0, 2, 1))
    vals = K.ravel()[sys._keep]
    n = sys.n_free
    return sp.csr_matrix((vals, (sys._rows, sys._cols)), shape=(n, n))


def _linear_solve(J, rhs, config: SolverConfig, rnorm: float, report: SolveReport):
    report.linear_solves += 1
    if config.linear_solver == "direct":
        return spla.spsolve(J.tocsc(), rhs)
    it = [0]

    def count(_):
        it[0] += 1

    diag = J.diagonal()
    M = sp.diags(1.0 / diag)
    tol = config.linear_forcing * rnorm / max(np.linalg.norm(rhs), 1e-300)
    x, info = spla.cg(J, rhs, rtol=min(tol, 1e-2), atol=0.0, M=M, maxiter=20 * J.shape[0],
                      callback=count)
    report.linear_iterations += it[0]
    if info != 0:
        log.warning("CG did not reach the forcing tolerance (info=%d)", info)
    return x


def newton_solve(sys: NonlinearSystem, config: SolverConfig | None = None, u0=None):
    """Damped Newton with Armijo backtracking on the merit 0.5 |R|^2.

    Returns (u, report); raises ConvergenceError with the report attached.
    """
    config = config or SolverConfig()
    u = np.zeros(sys.ndof) if u0 is None else np.array(u0, dtype=float)
    u[np.setdiff1d(np.arange(sys.ndof), sys.free)] = 0.0
    report = SolveReport()
    R = assemble_residual(sys, u)
    rnorm = float(np.linalg.norm(R))
    r0 = rnorm
    report.initial_residual = r0
    report.residual_history.append(rnorm)
    report.energy_history.append(sys.energy(u))

    def done(rn):
        return rn <= config.abs_tol or rn <= config.rel_tol * r0

    while not done(rnorm):
        if report.iterations >= config.max_newton_iters:
            report.residual, report.relative_residual = rnorm, rnorm / r0
            report.message = "maximum Newton iterations exceeded"
            raise ConvergenceError(report.message, report)
        J = assemble_jacobian(sys, u)
        d = _linear_solve(J, -R, config, rnorm, report)
        merit0 = 0.5 * rnorm ** 2
        slope = float(R @ (J @ d))
        if slope >= 0:
            slope = -2.0 * merit0
        lam = 1.0
        for _ in range(config.max_halvings + 1):
            trial = u.copy()
            trial[sys.free] += lam * d
            Rt = assemble_residual(sys, trial)
            mt = 0.5 * float(Rt @ Rt)
            if np.isfinite(mt) and mt <= merit0 + config.armijo * lam * slope:
                break
            lam *= config.backtrack
        else:
            report.residual, report.relative_residual = rnorm, rnorm / r0
            report.message = "line search stagnated"
            raise ConvergenceError(report.message, report)
        u, R = trial, Rt
        rnorm = float(np.sqrt(2.0 * mt))
        report.iterations += 1
        report.step_lengths.append(lam)
        report.residual_history.append(rnorm)
        report.energy_history.append(sys.energy(u))
        log.debug("newton %d: |R| = %.3e, step %.3g", report.iterations, rnorm, lam)

    report.converged = True
    report.residual = rnorm
    report.relative_residual = rnorm / r0 if r0 > 0 else 0.0
    report.message = "converged"
    return u, report


def solve_conforming_p1(sys: NonlinearSystem, config: SolverConfig | None = None, u0=None):
    if sys.space != "P1":
        raise ValueError("expected a system built by p1_system")
    return newton_solve(sys, config, u0)


def prolong_cr(coarse: Triangulation, fine: Triangulation, u) -> np.ndarray:
    """Evaluate a coarse CR field at the side midpoints of its red refinement."""
    if fine.parent is None or fine.level != coarse.level + 1:
        raise ValueError("fine mesh must be the red refinement of the coarse mesh")
    t = fine.elements_of_side[:, 0]
    par = fine.parent[t]
    c = coarse.element_coords()[par]
    x = fine.side_midpoints()
    # barycentric coordinates of x in the parent element
    e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    r = x - c[:, 0]
    l1 = (r[:, 0] * e2[:, 1] - r[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * r[:, 1] - e1[:, 1] * r[:, 0]) / det
    lam = np.column_stack([1.0 - l1 - l2, l1, l2])
    loc = np.asarray(u, dtype=float)[coarse.side_of_element[par]]
    out = np.sum(loc * (1.0 - 2.0 * lam), axis=1)
    out[fine.boundary_label == DIRICHLET] = 0.0
    return out
