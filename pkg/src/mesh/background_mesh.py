"""
Background Mesh Module

This module builds the structured tetrahedral background triangulation of the
bounding box that hosts the surface. It provides:
- Uniform cube grids with edge 0.5 * 2^-level
- Kuhn (Freudenthal) subdivision of every cube into 6 tetrahedra
- Face-to-tetrahedron incidence for conformity checks
- Volume and shape-regularity diagnostics

The Kuhn subdivision is translation invariant, so neighbouring cubes split
their shared faces identically and the mesh is conforming.
"""

import logging
from dataclasses import dataclass
from itertools import permutations
from typing import Dict, List, Tuple

import numpy as np

from errors import ConfigurationError, ResourceLimitError

logger = logging.getLogger(__name__)

MAX_LEVEL = 7
BASE_EDGE = 0.5
DEFAULT_BBOX = ((-1.5, -1.5, -1.5), (1.5, 1.5, 1.5))


@dataclass(frozen=True)
class BackgroundMesh:
    """
    Immutable structured tetrahedral mesh of an axis-aligned box.

    Attributes:
        vertices (np.ndarray): (n_vertices, 3) coordinates
        tets (np.ndarray): (n_tets, 4) vertex ids, positively oriented
        level (int): Refinement level
        cube_edge (float): Nominal mesh size h = 0.5 * 2^-level
        bbox (tuple): ((xmin, ymin, zmin), (xmax, ymax, zmax))
        cells_per_axis (tuple): Number of cubes along x, y, z
    """
    vertices: np.ndarray
    tets: np.ndarray
    level: int
    cube_edge: float
    bbox: Tuple[Tuple[float, float, float], Tuple[float, float, float]]
    cells_per_axis: Tuple[int, int, int]

    @property
    def h(self):
        return self.cube_edge

    @property
    def n_tets(self):
        return len(self.tets)

    def tet_coords(self, tet_ids=None):
        """Return (n, 4, 3) vertex coordinates of the selected tetrahedra."""
        tets = self.tets if tet_ids is None else self.tets[tet_ids]
        return self.vertices[tets]


def _kuhn_templates():
    """
    Local vertex indices (into the 8 cube corners) of the 6 Kuhn tetrahedra.

    Corner (i, j, k) has local index i + 2j + 4k. Every tetrahedron follows a
    monotone path 000 -> 111 along one permutation of the axes; orientation is
    fixed so that all signed volumes are positive.
    """
    templates = []
    for perm in permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] = 1
            path.append(corner.copy())
        coords = np.array(path, dtype=float)
        ids = [int(c[0] + 2 * c[1] + 4 * c[2]) for c in path]
        if np.linalg.det(coords[1:] - coords[0]) < 0:
            ids[2], ids[3] = ids[3], ids[2]
        templates.append(ids)
    return np.array(templates, dtype=np.int64)


def build_background_mesh(bbox=DEFAULT_BBOX, level=0):
    """
    Build the structured Kuhn mesh of a box at a given refinement level.

    Args:
        bbox (tuple): ((xmin, ymin, zmin), (xmax, ymax, zmax)); every extent
            must be a positive integer multiple of 0.5
        level (int): Refinement level, 0 <= level <= 7

    Returns:
        BackgroundMesh: Mesh with cube edge 0.5 * 2^-level

    Raises:
        ResourceLimitError: If level exceeds the guard
        ConfigurationError: If the box is empty or not tileable by cubes
    """
    level = int(level)
    if level < 0:
        raise ConfigurationError(f"Refinement level must be >= 0, got {level}")
    if level > MAX_LEVEL:
        raise ResourceLimitError(
            f"Refinement level {level} exceeds the guard {MAX_LEVEL}"
        )

    lower = np.asarray(bbox[0], dtype=float)
    upper = np.asarray(bbox[1], dtype=float)
    extent = upper - lower
    if np.any(extent <= 0):
        raise ConfigurationError(f"Bounding box is empty: {bbox}")

    h = BASE_EDGE * 2.0 ** (-level)
    counts = extent / h
    n = np.rint(counts).astype(np.int64)
    if np.any(np.abs(counts - n) > 1e-9 * np.maximum(counts, 1.0)):
        raise ConfigurationError(
            f"Bounding box extents {extent.tolist()} are not multiples of "
            f"the cube edge {BASE_EDGE}"
        )
    nx, ny, nz = (int(v) for v in n)

    # Vertex grid, x fastest
    xs = lower[0] + h * np.arange(nx + 1)
    ys = lower[1] + h * np.arange(ny + 1)
    zs = lower[2] + h * np.arange(nz + 1)
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing='ij')
    vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    # Cube origin vertex ids and the 8 corner offsets
    ci, cj, ck = np.meshgrid(
        np.arange(nx), np.arange(ny), np.arange(nz), indexing='ij'
    )
    ci, cj, ck = ci.ravel(order='F'), cj.ravel(order='F'), ck.ravel(order='F')
    sx, sy = nx + 1, (nx + 1) * (ny + 1)
    origin = ci + sx * cj + sy * ck
    corner_offsets = np.array(
        [i + sx * j + sy * k
         for k in (0, 1) for j in (0, 1) for i in (0, 1)],
        dtype=np.int64
    )
    corners = origin[:, None] + corner_offsets[None, :]

    templates = _kuhn_templates()
    tets = corners[:, templates].reshape(-1, 4)

    mesh = BackgroundMesh(
        vertices=vertices,
        tets=tets,
        level=level,
        cube_edge=h,
        bbox=(tuple(lower.tolist()), tuple(upper.tolist())),
        cells_per_axis=(nx, ny, nz),
    )
    logger.info(
        f"Background mesh level {level}: {nx}x{ny}x{nz} cubes, "
        f"{len(tets)} tets, h = {h:g}"
    )
    return mesh


def tet_volumes(vertices, tets):
    """Signed volumes of the given tetrahedra."""
    x = vertices[tets]
    edges = x[:, 1:, :] - x[:, :1, :]
    return np.linalg.det(edges) / 6.0


def face_adjacency(mesh_or_tets) -> Dict[Tuple[int, int, int], List[int]]:
    """
    Face-to-tetrahedron incidence map.

    Args:
        mesh_or_tets (BackgroundMesh or np.ndarray): Mesh or (n, 4) tet array

    Returns:
        dict: Sorted vertex triple -> list of incident tet ids (length 1 for
            boundary faces, 2 for interior faces)
    """
    tets = getattr(mesh_or_tets, 'tets', mesh_or_tets)
    tets = np.asarray(tets, dtype=np.int64)
    local_faces = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    faces = np.sort(tets[:, local_faces].reshape(-1, 3), axis=1)
    owners = np.repeat(np.arange(len(tets)), 4)

    order = np.lexsort((faces[:, 2], faces[:, 1], faces[:, 0]))
    faces, owners = faces[order], owners[order]

    incidence: Dict[Tuple[int, int, int], List[int]] = {}
    for face, owner in zip(map(tuple, faces.tolist()), owners.tolist()):
        incidence.setdefault(face, []).append(owner)
    return incidence


def shape_regularity(mesh, tet_ids=None):
    """
    Ratio of the largest tet diameter to the smallest inscribed radius.

    Args:
        mesh (BackgroundMesh): Mesh to inspect
        tet_ids (np.ndarray): Restrict to these tets, all when None

    Returns:
        float: max diameter / min inradius over all tets
    """
    tets = mesh.tets if tet_ids is None else mesh.tets[tet_ids]
    x = mesh.vertices[tets]
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    diam = np.max(
        [np.linalg.norm(x[:, i] - x[:, j], axis=1) for i, j in pairs], axis=0
    )
    volume = np.abs(tet_volumes(mesh.vertices, tets))
    local_faces = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]
    area = np.zeros(len(x))
    for f in local_faces:
        a, b, c = x[:, f[0]], x[:, f[1]], x[:, f[2]]
        area += 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    inradius = 3.0 * volume / area
    return float(diam.max() / inradius.min())
