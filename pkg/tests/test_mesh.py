import math

import numpy as np
import pytest

from app.core.errors import DegenerateCellError, MeshError, ParameterError
from app.models.mesh import SimplicialMesh
from app.services.assembly import dof_map
from app.services.mesh import (
    build_ball_mesh,
    build_interval_mesh,
    cell_map,
    cell_volumes,
    check_mesh,
    prolongate,
    quality,
    refine_uniform,
)


def test_interval_mesh_nodes_and_boundary():
    mesh = build_interval_mesh(4)
    assert np.allclose(mesh.vertices[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    assert mesh.boundary_vertex.tolist() == [False, False, False, False, True]
    assert mesh.n_cells == 4
    assert mesh.level == 2
    check_mesh(mesh)


def test_graded_interval_mesh_clusters_at_origin():
    mesh = build_interval_mesh(8, grading=2.0)
    lengths = np.diff(mesh.vertices[:, 0])
    assert lengths[0] < lengths[-1]
    assert mesh.vertices[-1, 0] == 1.0


@pytest.mark.parametrize("n_cells, grading", [(1, 1.0), (4, 0.5)])
def test_interval_mesh_rejects_bad_input(n_cells, grading):
    with pytest.raises(ParameterError):
        build_interval_mesh(n_cells, grading)


def test_octahedron_has_only_the_origin_as_dof(ball_0):
    assert ball_0.n_vertices == 7
    assert ball_0.n_cells == 8
    assert dof_map(ball_0).n_dofs == 1
    assert ball_0.origin_index == 0
    check_mesh(ball_0)


@pytest.mark.parametrize("boundary", ["projected", "polyhedral"])
@pytest.mark.parametrize("level", [0, 1, 2])
def test_ball_meshes_are_valid(level, boundary):
    mesh = build_ball_mesh(level, boundary)
    assert mesh.n_cells == 8 * 8 ** level
    check_mesh(mesh)
    assert np.all(cell_volumes(mesh) > 0)


def test_polyhedral_volume_is_preserved(polyhedral_meshes):
    for mesh in polyhedral_meshes:
        assert quality(mesh).volume == pytest.approx(4.0 / 3.0, rel=1e-12)
        boundary = mesh.vertices[mesh.boundary_vertex]
        assert np.allclose(np.abs(boundary).sum(axis=1), 1.0)


def test_projected_volume_grows_toward_the_ball():
    volumes = [quality(build_ball_mesh(level)).volume for level in range(4)]
    assert all(b > a for a, b in zip(volumes, volumes[1:]))
    assert volumes[-1] < 4.0 * math.pi / 3.0
    mesh = build_ball_mesh(2)
    assert np.allclose(np.linalg.norm(mesh.vertices[mesh.boundary_vertex], axis=1), 1.0)


def test_refinement_keeps_coarse_vertices(polyhedral_meshes):
    coarse, fine = polyhedral_meshes[1], polyhedral_meshes[2]
    assert np.array_equal(fine.vertices[: coarse.n_vertices], coarse.vertices)


def test_shape_constants_stable_after_first_refinement(polyhedral_meshes):
    qualities = [quality(mesh) for mesh in polyhedral_meshes[1:]]
    for level, q in enumerate(qualities, start=1):
        assert q.h == pytest.approx(math.sqrt(3.0) / 2.0 * 2.0 ** (1 - level), rel=1e-12)
        assert 0.0 < q.quasi_uniform_ratio <= 1.0
    sigmas = [q.sigma for q in qualities]
    assert max(sigmas) == pytest.approx(min(sigmas), rel=1e-10)


def test_prolongation_reproduces_linear_functions(polyhedral_meshes):
    coarse, fine = polyhedral_meshes[1], polyhedral_meshes[2]

    def f(x):
        return 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 2]

    assert np.allclose(prolongate(fine, f(coarse.vertices)), f(fine.vertices))


def test_interval_refinement_matches_direct_construction():
    refined = refine_uniform(build_interval_mesh(4))
    direct = build_interval_mesh(8)
    assert np.allclose(np.sort(refined.vertices[:, 0]), direct.vertices[:, 0])
    assert np.all(np.diff(refined.vertices[refined.cells[:, 0], 0]) > 0)
    check_mesh(refined)


def test_cell_map_rejects_flat_cells():
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    mesh = SimplicialMesh(
        dim=3,
        vertices=vertices,
        cells=np.array([[0, 1, 2, 3]]),
        boundary_vertex=np.array([False, True, True, True]),
        domain_tag="ball_polyhedral",
    )
    with pytest.raises(DegenerateCellError) as info:
        cell_map(mesh, 0)
    assert info.value.cell_index == 0
    with pytest.raises(MeshError):
        check_mesh(mesh)


def test_check_mesh_requires_interior_origin(ball_0):
    flags = ball_0.boundary_vertex.copy()
    flags[0] = True
    broken = SimplicialMesh(
        dim=3,
        vertices=ball_0.vertices,
        cells=ball_0.cells,
        boundary_vertex=flags,
        domain_tag=ball_0.domain_tag,
    )
    with pytest.raises(MeshError):
        check_mesh(broken)


def test_ball_mesh_rejects_unknown_boundary():
    with pytest.raises(ParameterError):
        build_ball_mesh(1, "curved")


def _regular_tetrahedron() -> SimplicialMesh:
    vertices = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    return SimplicialMesh(
        dim=3,
        vertices=vertices / (2.0 * math.sqrt(2.0)),
        cells=np.array([[0, 1, 2, 3]]),
        boundary_vertex=np.ones(4, dtype=bool),
        domain_tag="ball_polyhedral",
    )


def test_quality_of_a_regular_tetrahedron():
    q = quality(_regular_tetrahedron())
    assert q.h == pytest.approx(1.0)
    assert q.sigma == pytest.approx(2.0 * math.sqrt(6.0))
    assert q.volume == pytest.approx(1.0 / (6.0 * math.sqrt(2.0)))
    assert q.quasi_uniform_ratio == pytest.approx(1.0)


def test_cell_map_determinant_is_six_times_the_volume(polyhedral_meshes):
    mesh = polyhedral_meshes[2]
    volumes = cell_volumes(mesh)
    for cell in (0, mesh.n_cells // 2, mesh.n_cells - 1):
        cmap = cell_map(mesh, cell)
        assert cmap.det_abs == pytest.approx(6.0 * volumes[cell], rel=1e-12)
        assert np.allclose(cmap.matrix @ np.eye(3)[0] + cmap.offset, mesh.vertices[mesh.cells[cell, 1]])
    total = sum(cell_map(mesh, cell).det_abs for cell in range(mesh.n_cells)) / 6.0
    assert total == pytest.approx(4.0 / 3.0, rel=1e-12)
