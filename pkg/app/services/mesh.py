import logging
import math

import numpy as np

from app.core.errors import DegenerateCellError, MeshError, ParameterError
from app.models.mesh import AffineCellMap, MeshQuality, SimplicialMesh

logger = logging.getLogger(__name__)

# Local node numbering used by red refinement: the dim + 1 parent vertices
# followed by the edge midpoints in the order of EDGE_PAIRS.
EDGE_PAIRS = {
    1: ((0, 1),),
    2: ((0, 1), (0, 2), (1, 2)),
    3: ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)),
}

RED_CHILDREN = {
    1: np.array([[0, 2], [2, 1]]),
    2: np.array([[0, 3, 4], [3, 1, 5], [4, 5, 2], [3, 5, 4]]),
    # corner children first, then the inner octahedron cut along x02-x13
    3: np.array([
        [0, 4, 5, 6],
        [4, 1, 7, 8],
        [5, 7, 2, 9],
        [6, 8, 9, 3],
        [4, 5, 6, 8],
        [4, 5, 7, 8],
        [5, 6, 8, 9],
        [5, 7, 8, 9],
    ]),
}

BOUNDARY_KINDS = ("projected", "polyhedral")


def reference_children(dim: int) -> np.ndarray:
    """Barycentric vertex coordinates of the red children of the reference simplex.

    Shape (n_children, dim + 1, dim + 1); row v of child c is the barycentric
    position of that child's vertex v.
    """
    nodes = [np.eye(dim + 1)[i] for i in range(dim + 1)]
    nodes += [0.5 * (nodes[a] + nodes[b]) for a, b in EDGE_PAIRS[dim]]
    nodes = np.array(nodes)
    return nodes[RED_CHILDREN[dim]]


def build_interval_mesh(n_cells: int, grading: float = 1.0) -> SimplicialMesh:
    if n_cells < 2:
        raise ParameterError(f"interval mesh needs at least 2 cells, got {n_cells}")
    if grading < 1.0:
        raise ParameterError(f"grading exponent must be >= 1, got {grading}")

    nodes = (np.arange(n_cells + 1) / n_cells) ** grading
    nodes[-1] = 1.0
    cells = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    boundary = np.zeros(n_cells + 1, dtype=bool)
    boundary[-1] = True
    level = int(round(math.log2(n_cells))) if n_cells & (n_cells - 1) == 0 else 0
    return SimplicialMesh(
        dim=1,
        vertices=nodes.reshape(-1, 1),
        cells=cells,
        boundary_vertex=boundary,
        level=level,
        domain_tag="interval",
    )


def _octahedron() -> tuple[np.ndarray, np.ndarray]:
    vertices = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
    ])
    cells = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                cells.append([0, 1 if sx > 0 else 2, 3 if sy > 0 else 4, 5 if sz > 0 else 6])
    return vertices, np.array(cells, dtype=np.int64)


def _orient(vertices: np.ndarray, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exchange the first two vertices of negatively oriented tetrahedra."""
    corners = vertices[cells]
    det = np.linalg.det(corners[:, 1:] - corners[:, :1])
    swapped = det < 0
    oriented = cells.copy()
    oriented[swapped, 0], oriented[swapped, 1] = cells[swapped, 1], cells[swapped, 0]
    return oriented, swapped


def _unswap(mesh: SimplicialMesh) -> np.ndarray:
    cells = mesh.cells.copy()
    if mesh.swapped is not None:
        s = mesh.swapped
        cells[s, 0], cells[s, 1] = mesh.cells[s, 1], mesh.cells[s, 0]
    return cells


def boundary_faces(cells: np.ndarray) -> np.ndarray:
    """Facets that belong to exactly one cell, as sorted vertex tuples."""
    nv = cells.shape[1]
    faces = np.concatenate([np.delete(cells, i, axis=1) for i in range(nv)])
    faces = np.sort(faces, axis=1)
    unique, counts = np.unique(faces, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("non-conforming mesh: a facet is shared by more than two cells")
    return unique[counts == 1]


def _ball_boundary(n_vertices: int, cells: np.ndarray) -> np.ndarray:
    flags = np.zeros(n_vertices, dtype=bool)
    flags[np.unique(boundary_faces(cells))] = True
    return flags


def build_ball_mesh(level: int, boundary: str = "projected") -> SimplicialMesh:
    if level < 0:
        raise ParameterError(f"refinement level must be >= 0, got {level}")
    if boundary not in BOUNDARY_KINDS:
        raise ParameterError(f"boundary must be one of {BOUNDARY_KINDS}, got {boundary!r}")

    vertices, cells = _octahedron()
    cells, swapped = _orient(vertices, cells)
    mesh = SimplicialMesh(
        dim=3,
        vertices=vertices,
        cells=cells,
        boundary_vertex=_ball_boundary(len(vertices), cells),
        level=0,
        domain_tag="ball_projected" if boundary == "projected" else "ball_polyhedral",
        swapped=swapped,
    )
    for _ in range(level):
        mesh = refine_uniform(mesh)
    logger.debug("ball mesh level=%d boundary=%s cells=%d", level, boundary, mesh.n_cells)
    return mesh


def refine_uniform(mesh: SimplicialMesh) -> SimplicialMesh:
    """Red refinement: every cell splits into 2**dim children.

    Coarse vertices keep their indices; edge midpoints are appended in
    lexicographic order of the edge's vertex pair.
    """
    dim = mesh.dim
    cells = _unswap(mesh) if dim == 3 else mesh.cells
    pairs = np.array(EDGE_PAIRS[dim])

    edges = np.sort(cells[:, pairs], axis=2).reshape(-1, 2)
    unique_edges, inverse = np.unique(edges, axis=0, return_inverse=True)
    midpoint_index = mesh.n_vertices + inverse.reshape(cells.shape[0], len(pairs))

    vertices = np.vstack([
        mesh.vertices,
        0.5 * (mesh.vertices[unique_edges[:, 0]] + mesh.vertices[unique_edges[:, 1]]),
    ])
    local_nodes = np.hstack([cells, midpoint_index])
    children = local_nodes[:, RED_CHILDREN[dim]].reshape(-1, dim + 1)

    if dim == 1:
        boundary = np.zeros(len(vertices), dtype=bool)
        boundary[np.argmax(vertices[:, 0])] = True
        order = np.argsort(vertices[children[:, 0], 0], kind="stable")
        return SimplicialMesh(
            dim=1,
            vertices=vertices,
            cells=children[order],
            boundary_vertex=boundary,
            level=mesh.level + 1,
            domain_tag=mesh.domain_tag,
            parent_edges=unique_edges,
        )

    boundary = _ball_boundary(len(vertices), children)
    if mesh.domain_tag == "ball_projected":
        vertices[boundary] /= np.linalg.norm(vertices[boundary], axis=1, keepdims=True)
    children, swapped = _orient(vertices, children)
    return SimplicialMesh(
        dim=dim,
        vertices=vertices,
        cells=children,
        boundary_vertex=boundary,
        level=mesh.level + 1,
        domain_tag=mesh.domain_tag,
        swapped=swapped,
        parent_edges=unique_edges,
    )


def prolongate(fine: SimplicialMesh, coarse_values: np.ndarray) -> np.ndarray:
    """Vertex values of the coarse P1 function seen on the refined mesh."""
    if fine.parent_edges is None:
        raise ParameterError("mesh was not produced by refine_uniform")
    coarse_values = np.asarray(coarse_values, dtype=float)
    mids = 0.5 * (coarse_values[fine.parent_edges[:, 0]] + coarse_values[fine.parent_edges[:, 1]])
    return np.concatenate([coarse_values, mids])


def cell_jacobians(mesh: SimplicialMesh) -> tuple[np.ndarray, np.ndarray]:
    """Affine matrices (n_cells, dim, dim) and signed determinants per cell."""
    corners = mesh.cell_vertices()
    matrices = np.transpose(corners[:, 1:] - corners[:, :1], (0, 2, 1))
    return matrices, np.linalg.det(matrices)


def cell_volumes(mesh: SimplicialMesh) -> np.ndarray:
    _, det = cell_jacobians(mesh)
    return np.abs(det) / math.factorial(mesh.dim)


def cell_map(mesh: SimplicialMesh, cell: int) -> AffineCellMap:
    if not 0 <= cell < mesh.n_cells:
        raise ParameterError(f"cell index {cell} out of range")
    corners = mesh.vertices[mesh.cells[cell]]
    matrix = (corners[1:] - corners[0]).T
    det_abs = abs(float(np.linalg.det(matrix)))
    scale = np.max(np.linalg.norm(corners[1:] - corners[0], axis=1)) ** mesh.dim
    if det_abs <= 1e-14 * scale:
        raise DegenerateCellError(cell)
    return AffineCellMap(matrix=matrix, offset=corners[0].copy(), det_abs=det_abs)


def _diameters(corners: np.ndarray) -> np.ndarray:
    diffs = corners[:, :, None, :] - corners[:, None, :, :]
    return np.linalg.norm(diffs, axis=-1).max(axis=(1, 2))


def _inradii(corners: np.ndarray, volumes: np.ndarray) -> np.ndarray:
    if corners.shape[2] == 1:
        return 0.5 * volumes
    area = np.zeros(corners.shape[0])
    for drop in range(4):
        face = np.delete(corners, drop, axis=1)
        area += 0.5 * np.linalg.norm(
            np.cross(face[:, 1] - face[:, 0], face[:, 2] - face[:, 0]), axis=1
        )
    return 3.0 * volumes / area


def quality(mesh: SimplicialMesh) -> MeshQuality:
    corners = mesh.cell_vertices()
    h_cell = _diameters(corners)
    volumes = cell_volumes(mesh)
    degenerate = np.flatnonzero(volumes <= 1e-15 * h_cell ** mesh.dim)
    if degenerate.size:
        raise DegenerateCellError(int(degenerate[0]))

    rho = _inradii(corners, volumes)
    h, h_min = float(h_cell.max()), float(h_cell.min())
    return MeshQuality(
        h=h,
        h_min=h_min,
        sigma=float(np.max(h_cell / rho)),
        quasi_uniform_ratio=h_min / h,
        volume=float(volumes.sum()),
    )


def check_mesh(mesh: SimplicialMesh) -> None:
    """Raise MeshError unless the mesh satisfies every structural invariant."""
    if mesh.cells.shape[1] != mesh.dim + 1:
        raise MeshError(f"cells must have {mesh.dim + 1} vertices")
    if mesh.cells.min() < 0 or mesh.cells.max() >= mesh.n_vertices:
        raise MeshError("cell references a vertex that does not exist")

    _, det = cell_jacobians(mesh)
    bad = np.flatnonzero(det <= 0)
    if bad.size:
        raise DegenerateCellError(int(bad[0]), f"cell {int(bad[0])} has non-positive volume")

    try:
        origin = mesh.origin_index
    except ValueError as exc:
        raise MeshError(str(exc)) from exc
    if mesh.boundary_vertex[origin]:
        raise MeshError("the origin must be an interior vertex")
    if np.any(np.linalg.norm(mesh.vertices, axis=1) > 1.0 + 1e-12):
        raise MeshError("vertex outside the closed unit ball")

    if mesh.dim == 1:
        expected = np.isclose(mesh.vertices[:, 0], 1.0, rtol=0, atol=1e-14)
    else:
        expected = _ball_boundary(mesh.n_vertices, mesh.cells)
    if not np.array_equal(expected, mesh.boundary_vertex):
        raise MeshError("boundary flags differ from the topological boundary")
