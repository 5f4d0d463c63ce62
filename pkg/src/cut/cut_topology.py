"""
Cut Topology Module

This module turns the level set into the discrete interface data used by all
later stages. It provides:
- Interpolation of the exact level set into V_h^{k_g} on the cut band
- The piecewise-linear reduction of the interpolant (vertex values only)
- Marching-tetrahedra extraction of the planar interface Gamma^lin
- Area, watertightness and containment diagnostics
- A legacy VTK dump of Gamma^lin through meshio

Vertex values that are exactly zero are moved to +1e-14 * h before any sign
classification, so every tet is either cut or strictly on one side.
"""

import logging
from dataclasses import dataclass

import meshio
import numpy as np

from errors import GeometryError
from fe_space import FEFunction, build_fespace

logger = logging.getLogger(__name__)

ZERO_SHIFT = 1e-14
DEGENERATE_AREA = 1e-14
EDGE_KEY_QUANTUM = 1e-9

LOCAL_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


@dataclass
class CutTopology:
    """
    Active tetrahedra and the planar interface pieces inside them.

    Attributes:
        mesh (BackgroundMesh): Background mesh
        active_tets (np.ndarray): (n_active,) sorted background tet ids
        vertex_values (np.ndarray): (n_active, 4) perturbed values of the
            linear level set at the tet vertices
        signs (np.ndarray): (n_active, 4) sign pattern, -1 or +1
        tris (np.ndarray): (n_active, 2, 3, 3) triangle vertex coordinates,
            padded; counter-clockwise seen from the positive side
        n_tris (np.ndarray): (n_active,) number of valid triangles (0..2)
        grad_lin (np.ndarray): (n_active, 3) constant gradient of the linear
            level set on every active tet
        n_lin (np.ndarray): (n_active, 3) unit normals grad_lin / |grad_lin|
        n_dropped (int): Degenerate triangles removed during extraction
    """
    mesh: object
    active_tets: np.ndarray
    vertex_values: np.ndarray
    signs: np.ndarray
    tris: np.ndarray
    n_tris: np.ndarray
    grad_lin: np.ndarray
    n_lin: np.ndarray
    n_dropped: int = 0

    @property
    def n_active(self):
        return len(self.active_tets)

    def triangle_list(self):
        """
        Flat list of valid triangles.

        Returns:
            tuple: (cells (m,), triangles (m, 3, 3)) with cells indexing
                active_tets, ordered by tet id then by local triangle
        """
        mask = np.arange(2)[None, :] < self.n_tris[:, None]
        cells = np.nonzero(mask)[0]
        return cells, self.tris[mask]


def _perturbed_signs(values, h):
    values = np.where(values == 0.0, ZERO_SHIFT * h, values)
    return values, np.where(values < 0.0, -1, 1).astype(np.int8)


def cut_band(mesh, vertex_phi):
    """
    Tets with a mixed sign pattern of the (perturbed) vertex values.

    Args:
        mesh (BackgroundMesh): Background mesh
        vertex_phi (np.ndarray): (n_vertices,) level set values at vertices

    Returns:
        np.ndarray: Sorted ids of tets with both signs present
    """
    _, signs = _perturbed_signs(vertex_phi[mesh.tets], mesh.h)
    mixed = signs.min(axis=1) != signs.max(axis=1)
    return np.nonzero(mixed)[0]


def interpolate_levelset(mesh, oracle, k_g):
    """
    Nodal interpolation phi_h of the exact level set in V_h^{k_g}.

    The interpolant lives on the cut band, the tets whose vertex values of
    phi change sign. These are exactly the tets that the linear reduction
    marks as active.

    Args:
        mesh (BackgroundMesh): Background mesh
        oracle (LevelSetOracle): Exact level set
        k_g (int): Geometry degree 1..3

    Returns:
        FEFunction: phi_h on the band tets

    Raises:
        GeometryError: If a band node lies outside the oracle tube or the
            band is empty
    """
    vertex_phi = oracle.phi(mesh.vertices)
    band = cut_band(mesh, vertex_phi)
    if len(band) == 0:
        raise GeometryError(
            f"Level set has no zero crossing on the level-{mesh.level} mesh"
        )
    space = build_fespace(mesh, band, k_g)
    inside = oracle.in_tube(space.node_coords)
    if not np.all(inside):
        bad = space.node_coords[~inside][0]
        raise GeometryError(
            f"Cut-band node {bad.tolist()} lies outside the level-set tube "
            f"(half width {oracle.tube_halfwidth})"
        )
    phi_h = FEFunction(space, oracle.phi(space.node_coords))
    logger.info(
        f"Level set interpolated: P{k_g}, {len(band)} band tets, "
        f"{space.n_dofs} nodes"
    )
    return phi_h


def linearize(phi_h):
    """
    Piecewise-linear nodal interpolant I^1 phi_h.

    Vertex nodes come first in every local numbering, so the linear
    reduction keeps local entries 0..3 and drops the rest.

    Args:
        phi_h (FEFunction): Scalar level-set interpolant

    Returns:
        FEFunction: phi_hat_h on the same tets, degree 1
    """
    space = phi_h.space
    if space.degree == 1:
        return FEFunction(space, phi_h.coefficients.copy())
    linear = build_fespace(space.mesh, space.tets, 1)
    coeffs = np.empty(linear.n_dofs)
    coeffs[linear.cell_dofs] = phi_h.local_coefficients()[:, :4]
    return FEFunction(linear, coeffs)


def _edge_points(coords, values, global_ids, edges):
    """
    Zero crossings on local edges (n, 2) of every tet.

    Each edge is parametrized from its lower global vertex id, so tets that
    share an edge compute bitwise identical points.
    """
    rows = np.arange(len(coords))
    a, b = edges[:, 0], edges[:, 1]
    swap = global_ids[rows, a] > global_ids[rows, b]
    lo = np.where(swap, b, a)
    hi = np.where(swap, a, b)
    s_lo, s_hi = values[rows, lo], values[rows, hi]
    t = s_lo / (s_lo - s_hi)
    x_lo, x_hi = coords[rows, lo], coords[rows, hi]
    return x_lo + t[:, None] * (x_hi - x_lo)


def _find_edge(a, b):
    return np.where(
        (LOCAL_EDGES[:, 0] == np.minimum(a, b))
        & (LOCAL_EDGES[:, 1] == np.maximum(a, b))
    )[0][0]


def _crossing_edges(pattern):
    """
    Local edges of a sign pattern (tuple of 4 signs) in polygon order.
    """
    neg = [i for i in range(4) if pattern[i] < 0]
    pos = [i for i in range(4) if pattern[i] > 0]
    if len(neg) in (1, 3):
        lone = neg if len(neg) == 1 else pos
        rest = pos if len(neg) == 1 else neg
        return [_find_edge(lone[0], r) for r in rest]
    a, b = neg
    c, d = pos
    return [_find_edge(a, c), _find_edge(a, d),
            _find_edge(b, d), _find_edge(b, c)]


def _orient(tri, normal):
    """Flip triangles whose normal disagrees with the level-set gradient."""
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum('ij,ij->i', cross, normal) < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def _triangle_areas(tri):
    cross = np.cross(tri[..., 1, :] - tri[..., 0, :],
                     tri[..., 2, :] - tri[..., 0, :])
    return 0.5 * np.linalg.norm(cross, axis=-1)


def extract_cut(mesh, phi_hat):
    """
    Marching-tetrahedra extraction of Gamma^lin from the linear level set.

    Sign patterns with one isolated vertex give one triangle; 2-2 patterns
    give a quadrilateral split along its shorter diagonal. Triangles with
    area below 1e-14 h^2 are dropped and counted.

    Args:
        mesh (BackgroundMesh): Background mesh
        phi_hat (FEFunction): Degree-1 level set on the cut band

    Returns:
        CutTopology: Active tets with their interface triangles
    """
    space = phi_hat.space
    h = mesh.h
    raw = phi_hat.local_coefficients()[:, :4]
    values, signs = _perturbed_signs(raw, h)
    mixed = signs.min(axis=1) != signs.max(axis=1)
    if not np.all(mixed):
        keep = np.nonzero(mixed)[0]
        values, signs = values[keep], signs[keep]
        tet_ids = space.tets[keep]
    else:
        tet_ids = space.tets
    order = np.argsort(tet_ids, kind='stable')
    tet_ids, values, signs = tet_ids[order], values[order], signs[order]

    n_active = len(tet_ids)
    global_ids = mesh.tets[tet_ids]
    coords = mesh.vertices[global_ids]

    # gradient of the affine interpolant: B^{-T} (s_i - s_0)
    B = np.transpose(coords[:, 1:, :] - coords[:, :1, :], (0, 2, 1))
    ds = values[:, 1:] - values[:, :1]
    grad_lin = np.linalg.solve(np.transpose(B, (0, 2, 1)), ds[..., None])[..., 0]
    grad_norm = np.linalg.norm(grad_lin, axis=1)
    if np.any(grad_norm == 0.0):
        raise GeometryError("Linear level set has a vanishing gradient")
    n_lin = grad_lin / grad_norm[:, None]

    tris = np.zeros((n_active, 2, 3, 3))
    n_tris = np.zeros(n_active, dtype=np.int64)
    pattern_ids = ((signs < 0) * np.array([1, 2, 4, 8])).sum(axis=1)

    for pid in np.unique(pattern_ids):
        rows = np.nonzero(pattern_ids == pid)[0]
        pattern = tuple(-1 if pid >> i & 1 else 1 for i in range(4))
        edge_ids = _crossing_edges(pattern)
        points = np.stack(
            [_edge_points(coords[rows], values[rows], global_ids[rows],
                          np.repeat(LOCAL_EDGES[[e]], len(rows), axis=0))
             for e in edge_ids],
            axis=1
        )
        normal = n_lin[rows]
        if len(edge_ids) == 3:
            tris[rows, 0] = _orient(points, normal)
            n_tris[rows] = 1
            continue
        d02 = np.linalg.norm(points[:, 2] - points[:, 0], axis=1)
        d13 = np.linalg.norm(points[:, 3] - points[:, 1], axis=1)
        use02 = d02 <= d13
        first = np.where(use02[:, None, None], points[:, [0, 1, 2]],
                         points[:, [0, 1, 3]])
        second = np.where(use02[:, None, None], points[:, [0, 2, 3]],
                          points[:, [1, 2, 3]])
        tris[rows, 0] = _orient(first, normal)
        tris[rows, 1] = _orient(second, normal)
        n_tris[rows] = 2

    # drop degenerate pieces, keeping valid triangles packed in front
    areas = _triangle_areas(tris)
    valid = (np.arange(2)[None, :] < n_tris[:, None])
    degenerate = valid & (areas < DEGENERATE_AREA * h * h)
    n_dropped = int(degenerate.sum())
    if n_dropped:
        logger.warning(
            f"Dropped {n_dropped} degenerate interface triangles "
            f"(area < {DEGENERATE_AREA:g} h^2)"
        )
        move = degenerate[:, 0] & valid[:, 1] & ~degenerate[:, 1]
        tris[move, 0] = tris[move, 1]
        n_tris = (valid & ~degenerate).sum(axis=1)

    cut = CutTopology(
        mesh=mesh,
        active_tets=tet_ids,
        vertex_values=values,
        signs=signs,
        tris=tris,
        n_tris=n_tris,
        grad_lin=grad_lin,
        n_lin=n_lin,
        n_dropped=n_dropped,
    )
    logger.info(
        f"Interface extracted: {n_active} active tets, "
        f"{int(n_tris.sum())} triangles"
    )
    return cut


def gamma_lin_area(cut):
    """Total area of the planar interface Gamma^lin."""
    _, tris = cut.triangle_list()
    return float(_triangle_areas(tris).sum())


def edge_incidence(cut):
    """
    Number of triangles sharing each interface edge.

    Edges are keyed by their quantized endpoint coordinates; edges that
    collapse to a single key (length below the quantum) are ignored.

    Returns:
        np.ndarray: Incidence count of every distinct edge
    """
    _, tris = cut.triangle_list()
    keys = np.rint(tris / EDGE_KEY_QUANTUM).astype(np.int64)
    pairs = np.concatenate(
        [np.stack([keys[:, i], keys[:, (i + 1) % 3]], axis=1)
         for i in range(3)]
    )
    nondegenerate = np.any(pairs[:, 0] != pairs[:, 1], axis=1)
    pairs = pairs[nondegenerate]
    # order the endpoints lexicographically inside each edge
    first_larger = _lex_greater(pairs[:, 0], pairs[:, 1])
    ordered = np.where(first_larger[:, None, None], pairs[:, ::-1], pairs)
    _, counts = np.unique(ordered.reshape(len(ordered), 6), axis=0,
                          return_counts=True)
    return counts


def _lex_greater(a, b):
    """Row-wise lexicographic a > b for integer (n, 3) arrays."""
    diff = a - b
    nonzero = diff != 0
    first = np.argmax(nonzero, axis=1)
    lead = diff[np.arange(len(diff)), first]
    return lead > 0


def is_watertight(cut):
    """True when every interface edge is shared by exactly two triangles."""
    counts = edge_incidence(cut)
    return bool(len(counts) > 0 and np.all(counts == 2))


def triangles_inside_tets(cut, tol=1e-12):
    """
    True when every triangle vertex has barycentric coordinates in
    [-tol, 1 + tol] with respect to its tet.
    """
    cells, tris = cut.triangle_list()
    coords = cut.mesh.tet_coords(cut.active_tets[cells])
    B = np.transpose(coords[:, 1:, :] - coords[:, :1, :], (0, 2, 1))
    rel = tris - coords[:, :1, :]
    xi = np.linalg.solve(B[:, None, :, :], rel[..., None])[..., 0]
    bary = np.concatenate([1.0 - xi.sum(axis=-1, keepdims=True), xi], axis=-1)
    return bool(np.all((bary >= -tol) & (bary <= 1.0 + tol)))


def reference_triangles(cut):
    """
    Interface triangles in reference coordinates of their tets.

    Returns:
        np.ndarray: (n_active, 2, 3, 3) reference coordinates, padded
    """
    coords = cut.mesh.tet_coords(cut.active_tets)
    B = np.transpose(coords[:, 1:, :] - coords[:, :1, :], (0, 2, 1))
    rel = cut.tris - coords[:, None, None, 0, :]
    return np.einsum('nij,nstj->nsti', np.linalg.inv(B), rel)


def write_gamma_lin_vtk(cut, path):
    """
    Write Gamma^lin as a triangle soup in legacy ASCII VTK.

    Args:
        cut (CutTopology): Extracted interface
        path (str): Output file path
    """
    cells, tris = cut.triangle_list()
    points = tris.reshape(-1, 3)
    connectivity = np.arange(len(points)).reshape(-1, 3)
    mesh = meshio.Mesh(
        points,
        [("triangle", connectivity)],
        cell_data={"tet_id": [cut.active_tets[cells].astype(np.int64)]},
    )
    meshio.write(path, mesh, file_format="vtk", binary=False)
    logger.info(f"Gamma^lin written to {path} ({len(tris)} triangles)")
