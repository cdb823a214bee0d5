"""Simplicial triangulations of rectangles with side/element topology.

Local conventions used throughout the package:

* elements are stored counter-clockwise;
* local side ``i`` of an element is the side opposite its local vertex ``i``;
* sides are the sorted vertex pairs, numbered lexicographically;
* the lower-indexed element adjacent to a side is its ``T+`` element, and the
  global side normal is the outward normal of ``T+`` (outward on the boundary).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

LABEL_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}
_LABEL_CODES = {v: k for k, v in LABEL_NAMES.items()}


def _frozen(a, dtype=None):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Triangulation:
    vertices: np.ndarray  # (V, 2)
    elements: np.ndarray  # (T, 3), counter-clockwise
    sides: np.ndarray  # (S, 2), sorted pairs
    side_of_element: np.ndarray  # (T, 3), side opposite local vertex i
    side_sign: np.ndarray  # (T, 3), +1 if the element is T+ of that side
    elements_of_side: np.ndarray  # (S, 2), -1 marks a missing neighbour
    boundary_label: np.ndarray  # (S,)
    level: int = 0
    parent: np.ndarray | None = None  # (T,) parent element after red_refine

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_sides(self) -> int:
        return len(self.sides)

    @property
    def interior_sides(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_label == INTERIOR)

    @property
    def dirichlet_sides(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_label == DIRICHLET)

    @property
    def neumann_sides(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_label == NEUMANN)

    @property
    def dirichlet_vertices(self) -> np.ndarray:
        return np.unique(self.sides[self.dirichlet_sides])

    def element_coords(self) -> np.ndarray:
        """Vertex coordinates per element, shape (T, 3, 2)."""
        return self.vertices[self.elements]

    def areas(self) -> np.ndarray:
        c = self.element_coords()
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def side_lengths(self) -> np.ndarray:
        d = self.vertices[self.sides[:, 1]] - self.vertices[self.sides[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def side_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.sides[:, 0]] + self.vertices[self.sides[:, 1]])

    def domain_area(self) -> float:
        return float(self.areas().sum())

    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (T, 3, 2)."""
        c = self.element_coords()
        area2 = 2.0 * self.areas()
        grads = np.empty((self.n_elements, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            # rotate the opposite edge P_j -> P_k by -90 degrees
            e = c[:, k] - c[:, j]
            grads[:, i, 0] = -e[:, 1] / area2
            grads[:, i, 1] = e[:, 0] / area2
        return grads

    def outward_normals(self) -> np.ndarray:
        """Outward unit normals of the local sides, shape (T, 3, 2)."""
        c = self.element_coords()
        n = np.empty((self.n_elements, 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            e = c[:, k] - c[:, j]
            n[:, i, 0] = e[:, 1]
            n[:, i, 1] = -e[:, 0]
        return n / np.linalg.norm(n, axis=2, keepdims=True)

    def chunkiness(self) -> float:
        """max over elements of diam(T) / inradius(T)."""
        c = self.element_coords()
        edges = np.stack([np.linalg.norm(c[:, (i + 2) % 3] - c[:, (i + 1) % 3], axis=1)
                          for i in range(3)], axis=1)
        rho = 2.0 * self.areas() / edges.sum(axis=1)
        return float(np.max(edges.max(axis=1) / rho))

    def save(self, path) -> None:
        save_mesh(self, path)


def from_elements(vertices, elements, boundary_label: Callable[[np.ndarray], np.ndarray],
                  level: int = 0, parent=None) -> Triangulation:
    """Build the full topology of a mesh given vertices and element triples.

    ``boundary_label`` maps an array of boundary side indices' vertex pairs
    (shape (B, 2)) to their labels (DIRICHLET or NEUMANN).
    """
    vertices = np.asarray(vertices, dtype=float)
    elements = np.array(elements, dtype=np.int64)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise ValueError("vertices must have shape (V, 2)")
    if elements.ndim != 2 or elements.shape[1] != 3:
        raise ValueError("elements must have shape (T, 3)")

    c = vertices[elements]
    e1 = c[:, 1] - c[:, 0]
    e2 = c[:, 2] - c[:, 0]
    signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(signed == 0.0):
        raise ValueError("degenerate element")
    flip = signed < 0
    elements[flip] = elements[flip][:, [0, 2, 1]]

    n_el = len(elements)
    # local side i is opposite local vertex i
    local = np.stack([elements[:, [1, 2]], elements[:, [2, 0]], elements[:, [0, 1]]], axis=1)
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    sides, inverse = np.unique(pairs, axis=0, return_inverse=True)
    inverse = inverse.reshape(n_el, 3)

    n_sides = len(sides)
    counts = np.bincount(inverse.ravel(), minlength=n_sides)
    if counts.max() > 2:
        raise ValueError("side shared by more than two elements")
    # stable sort keeps the lower element index first within each side
    order = np.argsort(inverse.ravel(), kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.empty(3 * n_el, dtype=np.int64)
    rank[order] = np.arange(3 * n_el) - np.repeat(starts, counts)
    elements_of_side = np.full((n_sides, 2), -1, dtype=np.int64)
    elements_of_side[inverse.ravel(), rank] = np.repeat(np.arange(n_el), 3)
    side_sign = np.where(rank == 0, 1, -1).astype(np.int8).reshape(n_el, 3)

    labels = np.zeros(n_sides, dtype=np.int8)
    bnd = np.flatnonzero(elements_of_side[:, 1] < 0)
    if len(bnd):
        labels[bnd] = np.asarray(boundary_label(sides[bnd]), dtype=np.int8)
        if np.any((labels[bnd] != DIRICHLET) & (labels[bnd] != NEUMANN)):
            raise ValueError("boundary sides must be labelled dirichlet or neumann")

    return Triangulation(
        vertices=_frozen(vertices, float),
        elements=_frozen(elements),
        sides=_frozen(sides),
        side_of_element=_frozen(inverse),
        side_sign=_frozen(side_sign),
        elements_of_side=_frozen(elements_of_side),
        boundary_label=_frozen(labels),
        level=int(level),
        parent=None if parent is None else _frozen(parent, np.int64),
    )


def build_criss_cross(n: int = 2, domain=((-1.0, 1.0), (-1.0, 1.0)),
                      dirichlet_on: Callable[[np.ndarray], np.ndarray] | None = None
                      ) -> Triangulation:
    """n x n Cartesian grid with each cell split along alternating diagonals.

    ``dirichlet_on`` receives boundary side midpoints (B, 2) and returns a
    boolean mask; unmarked boundary sides become Neumann. Default: all
    Dirichlet.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate rectangle")
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    elements = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                elements += [(a, b, c), (a, c, d)]
            else:
                elements += [(a, b, d), (b, c, d)]

    def label(pairs):
        if dirichlet_on is None:
            return np.full(len(pairs), DIRICHLET)
        mid = 0.5 * (vertices[pairs[:, 0]] + vertices[pairs[:, 1]])
        return np.where(np.asarray(dirichlet_on(mid), dtype=bool), DIRICHLET, NEUMANN)

    return from_elements(vertices, elements, label, level=0)


def red_refine(mesh: Triangulation) -> Triangulation:
    """Split every element into four congruent children via side midpoints."""
    V = mesh.n_vertices
    mids = mesh.side_midpoints()
    vertices = np.vstack([mesh.vertices, mids])
    el = mesh.elements
    m = mesh.side_of_element + V  # midpoint of side opposite local vertex i
    a, b, c = el[:, 0], el[:, 1], el[:, 2]
    m_bc, m_ca, m_ab = m[:, 0], m[:, 1], m[:, 2]
    children = np.stack([
        np.column_stack([a, m_ab, m_ca]),
        np.column_stack([m_ab, b, m_bc]),
        np.column_stack([m_ca, m_bc, c]),
        np.column_stack([m_bc, m_ca, m_ab]),
    ], axis=1).reshape(-1, 3)
    parent = np.repeat(np.arange(mesh.n_elements), 4)
    old_labels = mesh.boundary_label

    def label(pairs):
        # a boundary half-side joins an old vertex and the midpoint of its parent side
        mid = np.where(pairs[:, 0] >= V, pairs[:, 0], pairs[:, 1]) - V
        return old_labels[mid]

    return from_elements(vertices, children, label, level=mesh.level + 1, parent=parent)


def refine_to(mesh: Triangulation, level: int) -> Triangulation:
    while mesh.level < level:
        mesh = red_refine(mesh)
    return mesh


@dataclass(frozen=True, eq=False)
class MeshMetrics:
    h_avg: float
    h_T: np.ndarray
    h_S: np.ndarray
    x_T: np.ndarray
    x_S: np.ndarray
    omega_T: list
    omega_S: list

    @property
    def h_max(self) -> float:
        return float(self.h_T.max())


def compute_metrics(mesh: Triangulation) -> MeshMetrics:
    c = mesh.element_coords()
    edges = np.stack([np.linalg.norm(c[:, (i + 2) % 3] - c[:, (i + 1) % 3], axis=1)
                      for i in range(3)], axis=1)
    h_avg = (mesh.domain_area() / mesh.n_vertices) ** 0.5

    # vertex -> elements incidence, then element patches by vertex sharing
    n_el = mesh.n_elements
    stars = [[] for _ in range(mesh.n_vertices)]
    for t, tri in enumerate(mesh.elements):
        for v in tri:
            stars[v].append(t)
    omega_T = [np.unique(np.concatenate([stars[v] for v in mesh.elements[t]]))
               for t in range(n_el)]
    omega_S = [e[e >= 0] for e in mesh.elements_of_side]
    return MeshMetrics(
        h_avg=float(h_avg),
        h_T=_frozen(edges.max(axis=1)),
        h_S=_frozen(mesh.side_lengths()),
        x_T=_frozen(c.mean(axis=1)),
        x_S=_frozen(mesh.side_midpoints()),
        omega_T=omega_T,
        omega_S=omega_S,
    )


def save_mesh(mesh: Triangulation, path) -> None:
    """Plain-text export: "V S T" header, vertices, labelled sides, elements."""
    lines = [f"{mesh.n_vertices} {mesh.n_sides} {mesh.n_elements}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {LABEL_NAMES[int(l)]}"
              for (i, j), l in zip(mesh.sides.tolist(), mesh.boundary_label)]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.elements.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path, level: int = 0) -> Triangulation:
    tokens = Path(path).read_text().split("\n")
    V, S, T = (int(t) for t in tokens[0].split())
    body = tokens[1:]
    vertices = np.array([[float(t) for t in line.split()] for line in body[:V]])
    side_rows = [line.split() for line in body[V:V + S]]
    elements = np.array([[int(t) for t in line.split()] for line in body[V + S:V + S + T]])
    table = {(int(i), int(j)): _LABEL_CODES[name] for i, j, name in side_rows}

    def label(pairs):
        return np.array([table[(int(i), int(j))] for i, j in pairs])

    mesh = from_elements(vertices, elements, label, level=level)
    if mesh.n_sides != S:
        raise ValueError(f"side count mismatch: file {S}, rebuilt {mesh.n_sides}")
    return mesh
