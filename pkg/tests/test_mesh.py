import numpy as np
import pytest

from crvex.mesh import (DIRICHLET, INTERIOR, NEUMANN, build_criss_cross, compute_metrics,
                        from_elements, load_mesh, red_refine, refine_to, save_mesh)


def check_topology(mesh):
    assert mesh.n_vertices - mesh.n_sides + mesh.n_elements == 1
    assert np.all(mesh.areas() > 0)
    interior = mesh.boundary_label == INTERIOR
    assert np.all(mesh.elements_of_side[interior, 1] >= 0)
    assert np.all(mesh.elements_of_side[~interior, 1] == -1)
    for s in np.flatnonzero(interior)[:200]:
        t0, t1 = mesh.elements_of_side[s]
        shared = set(mesh.elements[t0]) & set(mesh.elements[t1])
        assert shared == set(mesh.sides[s])
    # local side i is opposite local vertex i
    for t in range(min(mesh.n_elements, 200)):
        for i in range(3):
            s = mesh.side_of_element[t, i]
            assert mesh.elements[t, i] not in mesh.sides[s]
            assert t in mesh.elements_of_side[s]
    assert np.all(mesh.sides[:, 0] < mesh.sides[:, 1])
    order = np.lexsort((mesh.sides[:, 1], mesh.sides[:, 0]))
    assert np.array_equal(order, np.arange(mesh.n_sides))


def test_smallest_mesh_counts():
    m = build_criss_cross(1)
    assert (m.n_vertices, m.n_elements, m.n_sides) == (4, 2, 5)
    assert len(m.interior_sides) == 1
    check_topology(m)


def test_default_mesh_counts_and_mesh_size():
    m = build_criss_cross(2)
    assert (m.n_vertices, m.n_sides, m.n_elements) == (9, 16, 8)
    assert np.isclose(compute_metrics(m).h_avg, 2.0 / 3.0)
    assert np.isclose(m.domain_area(), 4.0)
    check_topology(m)


def test_criss_cross_diagonals_alternate():
    m = build_criss_cross(2)
    # with n = 2 every diagonal runs through the origin
    origin = np.flatnonzero(np.all(m.vertices == 0.0, axis=1))[0]
    assert np.all(np.any(m.elements == origin, axis=1))


def test_degenerate_rectangle_rejected():
    with pytest.raises(ValueError):
        build_criss_cross(2, domain=((0.0, 0.0), (0.0, 1.0)))
    with pytest.raises(ValueError):
        build_criss_cross(0)


def test_boundary_selector():
    m = build_criss_cross(2, dirichlet_on=lambda x: x[..., 0] < -1 + 1e-12)
    assert len(m.dirichlet_sides) == 2
    assert len(m.neumann_sides) == 6
    assert set(m.dirichlet_vertices.tolist()) == set(np.flatnonzero(m.vertices[:, 0] == -1.0))


@pytest.mark.parametrize("level", [1, 2, 3, 4])
def test_refinement_invariants(level):
    coarse = refine_to(build_criss_cross(2), level - 1)
    fine = red_refine(coarse)
    check_topology(fine)
    assert fine.level == level and fine.n_elements == 4 * coarse.n_elements
    hc, hf = compute_metrics(coarse), compute_metrics(fine)
    assert np.allclose(hf.h_T, hc.h_T[fine.parent] / 2)
    assert np.isclose(hf.h_avg, hc.h_avg / 2, rtol=0.2)
    assert np.isclose(fine.chunkiness(), coarse.chunkiness())
    assert np.allclose(np.bincount(fine.parent, weights=fine.areas()), coarse.areas())
    # children lie inside the parent and are similar with ratio 1/2
    assert np.allclose(fine.areas(), coarse.areas()[fine.parent] / 4)
    # boundary sides stay on the boundary with their labels
    assert len(fine.dirichlet_sides) == 2 * len(coarse.dirichlet_sides)


def test_averaged_mesh_size_halves_asymptotically():
    ms = [refine_to(build_criss_cross(2), k) for k in range(5)]
    h = [compute_metrics(m).h_avg for m in ms]
    # card(N) = (2^(k+1) + 1)^2, so h_k = 2 / (2^(k+1) + 1)
    assert np.allclose(h, [2.0 / (2 ** (k + 1) + 1) for k in range(5)])


def test_refinement_keeps_neumann_labels():
    m = build_criss_cross(2, dirichlet_on=lambda x: x[..., 1] > 1 - 1e-12)
    f = refine_to(m, 2)
    mids = f.side_midpoints()
    top = np.isclose(mids[:, 1], 1.0)
    assert np.all(f.boundary_label[top] == DIRICHLET)
    other = (f.boundary_label != INTERIOR) & ~top
    assert np.all(f.boundary_label[other] == NEUMANN)


def test_metrics_on_reference_triangle():
    m = from_elements(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                      lambda pairs: np.full(len(pairs), DIRICHLET))
    met = compute_metrics(m)
    assert np.allclose(met.x_T[0], [1 / 3, 1 / 3])
    s = [i for i, (a, b) in enumerate(m.sides.tolist()) if (a, b) == (0, 1)][0]
    assert np.allclose(met.x_S[s], [0.5, 0.0]) and np.isclose(met.h_S[s], 1.0)
    assert np.isclose(met.h_T[0], np.sqrt(2))


def test_orientation_is_fixed():
    m = from_elements(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 2, 1]]),
                      lambda pairs: np.full(len(pairs), DIRICHLET))
    assert m.areas()[0] > 0


# enumerated once at level 3: the largest vertex patch (valence-8 origin plus
# the two valence-6 neighbours) has 15 elements
PATCH_BOUND = 15


@pytest.mark.parametrize("level", [1, 3, 5])
def test_patches(level):
    m = refine_to(build_criss_cross(2), level)
    met = compute_metrics(m)
    for s in m.interior_sides:
        assert len(met.omega_S[s]) == 2
    assert max(len(p) for p in met.omega_T) <= PATCH_BOUND
    ratio = np.array([m.areas()[p].sum() for p in met.omega_T]) / m.areas()
    assert ratio.max() <= PATCH_BOUND


def test_save_load_round_trip(tmp_path):
    m = refine_to(build_criss_cross(2, dirichlet_on=lambda x: x[..., 0] > 0.5), 2)
    path = tmp_path / "mesh.txt"
    save_mesh(m, path)
    assert path.read_text().splitlines()[0] == f"{m.n_vertices} {m.n_sides} {m.n_elements}"
    back = load_mesh(path, level=2)
    for name in ("vertices", "elements", "sides", "side_of_element", "side_sign",
                 "elements_of_side", "boundary_label"):
        assert np.array_equal(getattr(m, name), getattr(back, name)), name
    assert back.level == 2
