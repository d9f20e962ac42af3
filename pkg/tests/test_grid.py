import numpy as np
import pytest

from h2flow.grid import DIRICHLET, INTERIOR, NOFLUX, RockField, build_grid, face_transmissibility, parse_boundary


def test_1d_counts_and_tags():
    g = build_grid([1.0], [4])
    assert g.n_cells == 4 and g.n_faces == 5
    assert list(g.tags) == [DIRICHLET, INTERIOR, INTERIOR, INTERIOR, NOFLUX]
    assert np.allclose(g.centers[:, 0], [0.125, 0.375, 0.625, 0.875])
    assert np.allclose(g.dist, [0.125, 0.25, 0.25, 0.25, 0.125])
    assert g.volumes.sum() == pytest.approx(1.0)


def test_2d_counts():
    g = build_grid([3.0, 2.0], [3, 2], "left=dirichlet, rest=noflux")
    assert g.n_cells == 6
    assert g.n_faces == 4 * 2 + 3 * 3 == 17
    assert g.dirichlet_faces.size == 2
    assert set(np.array(g.face_side, dtype=object)[g.dirichlet_faces]) == {"left"}
    assert g.volumes.sum() == pytest.approx(6.0)


def test_2d_boundary_normals_point_outward():
    g = build_grid([1.0, 1.0], [3, 3], "rest=dirichlet")
    bnd = g.face_cells[:, 1] < 0
    outward = np.einsum("ij,ij->i", g.face_center[bnd] - g.centers[g.face_cells[bnd, 0]],
                        g.face_normal[bnd])
    assert np.all(outward > 0)


def test_series_transmissibility():
    g = build_grid([2.0], [2], "rest=dirichlet")
    K = np.array([1.0, 3.0])
    T = face_transmissibility(g, K)
    # interior face: 1 / (0.5/1 + 0.5/3)
    assert T[1] == pytest.approx(1.0 / (0.5 / 1.0 + 0.5 / 3.0))
    assert T[0] == pytest.approx(1.0 / 0.5)
    assert T[2] == pytest.approx(3.0 / 0.5)


def test_transmissibility_vanishes_with_permeability():
    g = build_grid([2.0], [2], "rest=dirichlet")
    T = face_transmissibility(g, np.array([0.0, 1.0]))
    assert T[0] == 0.0 and T[1] == 0.0 and T[2] > 0


def test_closed_grid_rejected_unless_allowed():
    with pytest.raises(ValueError, match="Dirichlet"):
        build_grid([1.0], [5], "rest=noflux")
    g = build_grid([1.0], [5], "rest=noflux", allow_closed=True)
    assert g.flux_faces.size == 4


def test_closed_grid_sums_of_normals_vanish():
    # sum over the faces of each cell of area * normal = 0
    g = build_grid([1.0, 1.0], [4, 3], "rest=noflux", allow_closed=True)
    acc = np.zeros((g.n_cells, 2))
    for f, (i, j) in enumerate(g.face_cells):
        acc[i] += g.face_area[f] * g.face_normal[f]
        if j >= 0:
            acc[j] -= g.face_area[f] * g.face_normal[f]
    assert np.allclose(acc, 0.0)


def test_parse_boundary_errors():
    with pytest.raises(ValueError):
        parse_boundary("left=robin, rest=noflux", 1)
    with pytest.raises(ValueError):
        parse_boundary("top=dirichlet, rest=noflux", 1)
    with pytest.raises(ValueError):
        parse_boundary("left=dirichlet", 1)


def test_bad_grid_input():
    with pytest.raises(ValueError):
        build_grid([1.0], [0])
    with pytest.raises(ValueError):
        build_grid([-1.0], [3])
    with pytest.raises(ValueError):
        build_grid([1.0, 1.0, 1.0], [2, 2, 2])


def test_gravity_drop():
    g = build_grid([1.0], [2], "rest=dirichlet", gravity=[-9.8])
    drop = g.gravity_drop()
    assert np.allclose(drop, [-9.8 * -0.25, -9.8 * 0.5, -9.8 * 0.25])


def test_rock_uniform_broadcasts():
    g = build_grid([1.0], [3])
    r = RockField.uniform(g, porosity=0.2, permeability=2.0, r_g=1.0)
    assert r.porosity.shape == (3,) and np.all(r.permeability == 2.0)
    assert np.all(r.r_w == 0.0)
