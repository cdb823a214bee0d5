"""Crouzeix-Raviart, P1, lowest-order Raviart-Thomas and piecewise constants.

DOF conventions:

* CR: one value per side, the value at the side midpoint. On element T the
  basis function of local side i is ``1 - 2 * lambda_i``.
* P1: one value per vertex.
* RT0: fields are stored element-locally in the affine form
  ``a_T + b_T (x - x_T)``; ``RTField.flux`` gives the outward normal
  component on each local side. A conforming field has matching traces;
  ``RTField.from_side_dofs`` builds one from global side fluxes oriented by
  the ``T+`` normal.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError
from .mesh import DIRICHLET, NEUMANN, Triangulation


# ---------------------------------------------------------------- quadrature

@dataclass(frozen=True, eq=False)
class SimplexQuadrature:
    bary: np.ndarray  # (n, 3) barycentric points, strictly interior
    weights: np.ndarray  # (n,), sum to 1 (reference measure normalised)
    degree: int

    def points(self, mesh: Triangulation) -> np.ndarray:
        """Physical quadrature points, shape (T, n, 2)."""
        return np.einsum("qi,tid->tqd", self.bary, mesh.element_coords())

    def integrate(self, mesh: Triangulation, values) -> np.ndarray:
        """Element integrals from point values of shape (T, n, ...)."""
        vals = np.asarray(values, dtype=float)
        out = np.einsum("tq...,q->t...", vals, self.weights)
        return mesh.areas().reshape((-1,) + (1,) * (out.ndim - 1)) * out


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule(generators, degree):
    pts, wts = [], []
    for g in generators:
        if g[0] == "c":
            pts.append((1 / 3, 1 / 3, 1 / 3))
            wts.append(g[1])
        elif g[0] == 3:
            p, w = _orbit3(*g[1:])
            pts += p
            wts += w
        else:
            p, w = _orbit6(*g[1:])
            pts += p
            wts += w
    wts = np.array(wts)
    bary = np.array(pts)
    bary.setflags(write=False)
    wts = wts / wts.sum()
    wts.setflags(write=False)
    return SimplexQuadrature(bary=bary, weights=wts, degree=degree)


_RULES = {
    1: _rule([("c", 1.0)], 1),
    2: _rule([(3, 1 / 6, 1 / 3)], 2),
    5: _rule([("c", 0.225),
              (3, 0.470142064105115, 0.132394152788506),
              (3, 0.101286507323456, 0.125939180544827)], 5),
    # 16-point symmetric rule (Dunavant), all points interior, positive weights
    8: _rule([("c", 0.144315607677787),
              (3, 0.459292588292723, 0.095091634267285),
              (3, 0.170569307751760, 0.103217370534718),
              (3, 0.050547228317031, 0.032458497623198),
              (6, 0.008394777409958, 0.263112829634638, 0.027230314174435)], 8),
}


def triangle_rule(degree: int = 8) -> SimplexQuadrature:
    """Smallest shipped symmetric interior rule exact to at least ``degree``."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no rule of degree {degree}; highest is {max(_RULES)}")


def shipped_rules():
    return dict(_RULES)


def monomial_integral_reference(i: int, j: int) -> float:
    """Exact integral of x^i y^j over the triangle (0,0), (1,0), (0,1)."""
    return factorial(i) * factorial(j) / factorial(i + j + 2)


# ---------------------------------------------------------------- spaces

@dataclass(frozen=True, eq=False)
class CRSpace:
    mesh: Triangulation

    @property
    def ndof(self) -> int:
        return self.mesh.n_sides

    @property
    def dirichlet_mask(self) -> np.ndarray:
        return self.mesh.boundary_label == DIRICHLET

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)


@dataclass(frozen=True, eq=False)
class P1Space:
    mesh: Triangulation

    @property
    def ndof(self) -> int:
        return self.mesh.n_vertices

    @property
    def dirichlet_mask(self) -> np.ndarray:
        mask = np.zeros(self.mesh.n_vertices, dtype=bool)
        mask[self.mesh.dirichlet_vertices] = True
        return mask

    @property
    def free_dofs(self) -> np.ndarray:
        return np.flatnonzero(~self.dirichlet_mask)


@dataclass(frozen=True, eq=False)
class RT0Space:
    mesh: Triangulation

    @property
    def ndof(self) -> int:
        return self.mesh.n_sides

    @property
    def neumann_mask(self) -> np.ndarray:
        return self.mesh.boundary_label == NEUMANN


# ---------------------------------------------------------------- CR fields

def cr_basis_gradients(mesh: Triangulation) -> np.ndarray:
    """Gradients of the three local CR basis functions, shape (T, 3, 2)."""
    return -2.0 * mesh.barycentric_gradients()


def cr_gradient(mesh: Triangulation, u) -> np.ndarray:
    """Element-wise gradient of a CR field, shape (T, 2)."""
    u = np.asarray(u, dtype=float)
    return np.einsum("ti,tid->td", u[mesh.side_of_element], cr_basis_gradients(mesh))


def cr_mean(mesh: Triangulation, u) -> np.ndarray:
    """Element means of a CR field (the value at the barycenter)."""
    return np.asarray(u, dtype=float)[mesh.side_of_element].mean(axis=1)


def cr_evaluate_bary(mesh: Triangulation, u, bary) -> np.ndarray:
    """CR field at barycentric points ``bary`` (n, 3) of every element, (T, n)."""
    loc = np.asarray(u, dtype=float)[mesh.side_of_element]
    return np.einsum("ti,qi->tq", loc, 1.0 - 2.0 * np.asarray(bary))


def cr_evaluate(mesh: Triangulation, u, element: int, x) -> float:
    lam = barycentric_coordinates(mesh, element, x)
    loc = np.asarray(u, dtype=float)[mesh.side_of_element[element]]
    return float(loc @ (1.0 - 2.0 * lam))


def cr_interpolate(mesh: Triangulation, func) -> np.ndarray:
    """Side-midpoint values of a point-wise function."""
    return np.asarray(func(mesh.side_midpoints()), dtype=float)


def p1_to_cr(mesh: Triangulation, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return 0.5 * (v[mesh.sides[:, 0]] + v[mesh.sides[:, 1]])


def cr_vertex_traces(mesh: Triangulation, u) -> np.ndarray:
    """(v|_T)(P_j) for each element vertex j, shape (T, 3)."""
    loc = np.asarray(u, dtype=float)[mesh.side_of_element]
    return loc.sum(axis=1, keepdims=True) - 2.0 * loc


def barycentric_coordinates(mesh: Triangulation, element: int, x) -> np.ndarray:
    c = mesh.vertices[mesh.elements[element]]
    M = np.array([[c[0, 0], c[1, 0], c[2, 0]], [c[0, 1], c[1, 1], c[2, 1]], [1.0, 1.0, 1.0]])
    return np.linalg.solve(M, np.array([x[0], x[1], 1.0]))


def p1_gradient(mesh: Triangulation, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.einsum("ti,tid->td", v[mesh.elements], mesh.barycentric_gradients())


def p1_evaluate_bary(mesh: Triangulation, v, bary) -> np.ndarray:
    return np.einsum("ti,qi->tq", np.asarray(v, dtype=float)[mesh.elements], np.asarray(bary))


def l2_project_pc(mesh: Triangulation, f, quad: SimplexQuadrature | None = None) -> np.ndarray:
    """Element means of ``f`` by quadrature; vector-valued ``f`` gives (T, k)."""
    quad = quad or triangle_rule(8)
    pts = quad.points(mesh)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float)
    vals = vals.reshape(pts.shape[:2] + vals.shape[1:])
    return np.einsum("tq...,q->t...", vals, quad.weights)


def _side_location(mesh: Triangulation, side: int, x, tol=1e-12):
    a, b = mesh.vertices[mesh.sides[side]]
    e = b - a
    L2 = float(e @ e)
    s = float((np.asarray(x) - a) @ e) / L2
    dist = abs(float(e[0] * (x[1] - a[1]) - e[1] * (x[0] - a[0]))) / np.sqrt(L2)
    if dist > tol * np.sqrt(L2) or s < -tol or s > 1 + tol:
        raise DomainError("point does not lie on the side")
    return s


def jump(mesh: Triangulation, v, side: int, x) -> float:
    """T+ trace minus T- trace of a CR field at ``x`` on ``side``."""
    _side_location(mesh, side, x)
    tp, tm = mesh.elements_of_side[side]
    val = cr_evaluate(mesh, v, tp, x)
    if tm < 0:
        return val
    return val - cr_evaluate(mesh, v, tm, x)


def cr_midpoint_jumps(mesh: Triangulation, u) -> np.ndarray:
    """Jumps at all side midpoints (boundary: the trace itself)."""
    loc = np.asarray(u, dtype=float)[mesh.side_of_element]
    # the trace of the CR basis of local side i at the midpoint of local side k is delta_ik
    S = mesh.n_sides
    traces = np.zeros((S, 2))
    pos = (mesh.side_sign < 0).astype(int)
    traces[mesh.side_of_element.ravel(), pos.ravel()] = loc.ravel()
    interior = mesh.elements_of_side[:, 1] >= 0
    return np.where(interior, traces[:, 0] - traces[:, 1], traces[:, 0])


# ---------------------------------------------------------------- RT0 fields

@dataclass(frozen=True, eq=False)
class RTField:
    """Element-wise RT0 field y|_T = a_T + b_T (x - x_T), x_T the barycenter.

    Every RT0 function on a triangle has this form, so divergence (2 b_T)
    and element mean (a_T) are read off without cancellation.
    """

    mesh: Triangulation
    a: np.ndarray  # (T, 2)
    b: np.ndarray  # (T,)

    @classmethod
    def from_local(cls, mesh: Triangulation, a, b, center=None) -> "RTField":
        """Field a_T + b_T (x - center_T); the center defaults to the barycenter."""
        a = np.array(np.broadcast_to(np.asarray(a, dtype=float), (mesh.n_elements, 2)))
        b = np.array(np.broadcast_to(np.asarray(b, dtype=float), (mesh.n_elements,)))
        if center is not None:
            shift = mesh.element_coords().mean(axis=1) - np.asarray(center, dtype=float)
            a = a + b[:, None] * shift
        return cls(mesh, a, b)

    @classmethod
    def from_constant(cls, mesh: Triangulation, c) -> "RTField":
        return cls.from_local(mesh, c, 0.0)

    @classmethod
    def from_flux(cls, mesh: Triangulation, flux) -> "RTField":
        """From outward normal components on the three local sides, (T, 3)."""
        flux = np.asarray(flux, dtype=float)
        c = mesh.element_coords()
        coef = flux * mesh.side_lengths()[mesh.side_of_element] / (2.0 * mesh.areas()[:, None])
        # local basis psi_i(x) = coef_i (x - P_i)
        b = np.sum(coef, axis=1)
        a = np.einsum("ti,tid->td", coef, c.mean(axis=1)[:, None, :] - c)
        return cls(mesh, a, b)

    @classmethod
    def from_side_dofs(cls, mesh: Triangulation, y) -> "RTField":
        """From global side fluxes oriented by the T+ normal."""
        y = np.asarray(y, dtype=float)
        return cls.from_flux(mesh, mesh.side_sign * y[mesh.side_of_element])

    @property
    def flux(self) -> np.ndarray:
        """Outward normal components on the local sides, (T, 3)."""
        m = self.mesh
        n = m.outward_normals()
        mids = m.side_midpoints()[m.side_of_element] - m.element_coords().mean(axis=1)[:, None, :]
        return (np.einsum("td,tid->ti", self.a, n)
                + self.b[:, None] * np.einsum("tid,tid->ti", mids, n))

    def divergence(self) -> np.ndarray:
        return 2.0 * self.b

    def evaluate_bary(self, bary) -> np.ndarray:
        """Field at barycentric points of every element, shape (T, n, 2)."""
        c = self.mesh.element_coords()
        bary = np.asarray(bary, dtype=float)
        rel = np.einsum("qi,tid->tqd", bary - 1.0 / 3.0, c)
        return self.a[:, None, :] + self.b[:, None, None] * rel

    def evaluate(self, element: int, x) -> np.ndarray:
        lam = barycentric_coordinates(self.mesh, element, x)
        return self.evaluate_bary(lam[None, :])[element, 0]

    def mean(self) -> np.ndarray:
        """Element means Pi_h y = y(x_T), shape (T, 2)."""
        return self.a.copy()

    def normal_jumps(self) -> np.ndarray:
        """Sum of outward normal components across each side; the trace on the boundary."""
        m = self.mesh
        return np.bincount(m.side_of_element.ravel(), weights=self.flux.ravel(), minlength=m.n_sides)

    def side_dofs(self) -> np.ndarray:
        """Global side fluxes (T+ orientation), averaging the two traces."""
        m = self.mesh
        acc = np.bincount(m.side_of_element.ravel(), weights=(m.side_sign * self.flux).ravel(),
                          minlength=m.n_sides)
        count = np.where(m.elements_of_side[:, 1] >= 0, 2.0, 1.0)
        return acc / count

    def __add__(self, other: "RTField") -> "RTField":
        return RTField(self.mesh, self.a + other.a, self.b + other.b)


def rt0_evaluate(y: RTField, element: int, x) -> np.ndarray:
    return y.evaluate(element, x)


def rt0_divergence(y: RTField) -> np.ndarray:
    return y.divergence()


def normal_jump(y: RTField, side: int) -> float:
    return float(y.normal_jumps()[side])


def discrete_curl(mesh: Triangulation, psi) -> RTField:
    """Curl (d2 psi, -d1 psi) of a P1 potential; divergence-free and in RT0."""
    g = p1_gradient(mesh, psi)
    return RTField.from_constant(mesh, np.column_stack([g[:, 1], -g[:, 0]]))


# ---------------------------------------------------------------- operators

def node_average(mesh: Triangulation, u) -> np.ndarray:
    """Average of adjacent element traces at free vertices, 0 on Dirichlet vertices."""
    tr = cr_vertex_traces(mesh, u)
    V = mesh.n_vertices
    acc = np.bincount(mesh.elements.ravel(), weights=tr.ravel(), minlength=V)
    cnt = np.bincount(mesh.elements.ravel(), minlength=V)
    out = acc / cnt
    out[mesh.dirichlet_vertices] = 0.0
    return out


def elements_at_vertex_count(mesh: Triangulation) -> np.ndarray:
    return np.bincount(mesh.elements.ravel(), minlength=mesh.n_vertices)


def check_discrete_ibp(mesh: Triangulation, v, y: RTField, relative: bool = True) -> float:
    """|(grad_h v, Pi_h y) + (Pi_h v, div y)|, optionally relative.

    The relative value divides by the sum of absolute element contributions,
    the condition number of the summation, so that accidental cancellation
    between the two global terms does not inflate it.
    """
    area = mesh.areas()
    t1 = area * np.einsum("td,td->t", cr_gradient(mesh, v), y.mean())
    t2 = area * cr_mean(mesh, v) * y.divergence()
    res = abs(np.sum(t1) + np.sum(t2))
    if not relative:
        return res
    scale = np.sum(np.abs(t1)) + np.sum(np.abs(t2))
    return res / scale if scale > 0 else res


def cr_gradient_operator(mesh: Triangulation, free=None) -> sp.csr_matrix:
    """Sparse map from CR DOFs to stacked element gradients (2T x S)."""
    G = cr_basis_gradients(mesh)
    T = mesh.n_elements
    rows = np.concatenate([np.repeat(2 * np.arange(T), 3), np.repeat(2 * np.arange(T) + 1, 3)])
    cols = np.concatenate([mesh.side_of_element.ravel()] * 2)
    vals = np.concatenate([G[:, :, 0].ravel(), G[:, :, 1].ravel()])
    B = sp.csr_matrix((vals, (rows, cols)), shape=(2 * T, mesh.n_sides))
    return B if free is None else B[:, free]


def helmholtz_split(mesh: Triangulation, y):
    """Split piecewise-constant y into grad_h(S^cr_D) part plus an L2-orthogonal rest.

    Returns (coefficients of the gradient part, residual field (T, 2)).
    """
    y = np.asarray(y, dtype=float)
    free = CRSpace(mesh).free_dofs
    B = cr_gradient_operator(mesh, free)
    W = sp.diags(np.repeat(mesh.areas(), 2))
    K = (B.T @ W @ B).tocsc()
    rhs = B.T @ (W @ y.ravel())
    c = spla.spsolve(K, rhs)
    u = np.zeros(mesh.n_sides)
    u[free] = c
    return u, y - cr_gradient(mesh, u)


# ---------------------------------------------------------------- field I/O

FIELD_TAGS = ("CR", "P1", "RT0", "P0")


def save_field(path, tag: str, level: int, values) -> None:
    """Plain-text field: header "<tag> <level> <ndof>", then one value per line."""
    if tag not in FIELD_TAGS:
        raise ValueError(f"unknown space tag {tag!r}")
    values = np.asarray(values, dtype=float).ravel()
    lines = [f"{tag} {int(level)} {len(values)}"] + [repr(v) for v in values.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_field(path):
    """Returns (tag, level, values)."""
    lines = Path(path).read_text().split()
    tag, level, n = lines[0], int(lines[1]), int(lines[2])
    if tag not in FIELD_TAGS:
        raise ValueError(f"unknown space tag {tag!r}")
    values = np.array([float(v) for v in lines[3:3 + n]])
    if len(values) != n:
        raise ValueError("truncated field file")
    return tag, level, values
