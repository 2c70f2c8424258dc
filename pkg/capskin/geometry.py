"""Triangle mesh of the skin's outer surface and the queries run against it.

All lengths are millimeters. Meshes and point sets are immutable after
construction and safe to share between threads.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from capskin.errors import MeshFormatError, StorageError, ValidationError
from capskin.records import as_vec3, frozen_array

_LOGGER = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-9
DEFAULT_SURFACE_SPACING = 1.0
DEFAULT_DENSE_SPACING = 2.0

# relative slack when collecting near-tied candidates from the kd-tree
_TIE_SLACK = 1e-9


def triangle_areas(corners):
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def _derive_edges(triangles):
    pairs = np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    pairs.sort(axis=1)
    return np.unique(pairs, axis=0)


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray

    @classmethod
    def from_arrays(cls, vertices, triangles):
        vertices = frozen_array(vertices, what="mesh vertices")
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValidationError("mesh vertices have shape %s, expected (n, 3)" % (vertices.shape,))
        triangles = np.array(triangles, dtype=np.int64)
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise ValidationError("mesh needs at least one triangle, got shape %s" % (triangles.shape,))

        bad = np.nonzero((triangles < 0) | (triangles >= len(vertices)))[0]
        if len(bad) > 0:
            raise ValidationError(
                "triangle %d references vertex index out of range [0, %d)"
                % (bad[0], len(vertices))
            )
        areas = triangle_areas(vertices[triangles])
        degenerate = np.nonzero(areas <= MIN_TRIANGLE_AREA)[0]
        if len(degenerate) > 0:
            raise ValidationError(
                "triangle %d is degenerate (area %.3g mm^2)" % (degenerate[0], areas[degenerate[0]])
            )

        triangles.flags.writeable = False
        edges = _derive_edges(triangles)
        edges.flags.writeable = False
        return cls(vertices, triangles, edges)

    @property
    def corners(self):
        """Triangle corner coordinates, shape (n_triangles, 3, 3)."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self):
        return triangle_areas(self.corners)

    @cached_property
    def centroid(self):
        """Area-weighted centroid of the surface."""
        centers = self.corners.mean(axis=1)
        return as_vec3((centers * self.areas[:, None]).sum(axis=0) / self.areas.sum())

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def load_mesh(path):
    """Read a mesh made of `v x y z` and `f i j k` (1-based) lines."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise StorageError("cannot read mesh %s: %s" % (path, e)) from e

    vertices = []
    triangles = []
    face_lines = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind not in ("v", "f"):
            raise MeshFormatError(path, lineno, "unsupported line type %r" % kind)
        if len(tokens) != 4:
            raise MeshFormatError(path, lineno, "expected 3 values after %r, got %d" % (kind, len(tokens) - 1))
        try:
            if kind == "v":
                xyz = [float(t) for t in tokens[1:]]
                if not all(math.isfinite(c) for c in xyz):
                    raise MeshFormatError(path, lineno, "non-finite vertex coordinate")
                vertices.append(xyz)
            else:
                triangles.append([int(t) - 1 for t in tokens[1:]])
                face_lines.append(lineno)
        except ValueError:
            raise MeshFormatError(path, lineno, "malformed number in %r" % line)

    if not triangles:
        raise MeshFormatError(path, None, "no faces")

    for face, lineno in zip(triangles, face_lines):
        for index in face:
            if index < 0 or index >= len(vertices):
                raise MeshFormatError(
                    path,
                    lineno,
                    "face index %d out of range (mesh has %d vertices)" % (index + 1, len(vertices)),
                )

    corners = np.array(vertices, dtype=float)[np.array(triangles)]
    for area, lineno in zip(triangle_areas(corners), face_lines):
        if area <= MIN_TRIANGLE_AREA:
            raise MeshFormatError(path, lineno, "degenerate face (area %.3g mm^2)" % area)

    mesh = SurfaceMesh.from_arrays(vertices, triangles)
    _LOGGER.debug(
        "Loaded mesh %s: %d vertices, %d triangles, %d edges",
        path, len(mesh.vertices), len(mesh.triangles), len(mesh.edges),
    )
    return mesh


def save_mesh(mesh, path, header=None):
    try:
        with open(path, "w", encoding="utf-8") as f:
            if header:
                for line in header.splitlines():
                    f.write("# %s\n" % line)
            for x, y, z in mesh.vertices:
                f.write("v %r %r %r\n" % (float(x), float(y), float(z)))
            for i, j, k in mesh.triangles:
                f.write("f %d %d %d\n" % (i + 1, j + 1, k + 1))
    except OSError as e:
        raise StorageError("cannot write mesh %s: %s" % (path, e)) from e


@dataclass(frozen=True, eq=False)
class SurfacePointSet:
    points: np.ndarray
    spacing: float

    def __post_init__(self):
        points = frozen_array(self.points, what="surface points")
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValidationError("surface points have shape %s, expected (n, 3)" % (points.shape,))
        object.__setattr__(self, "points", points)

    def __len__(self):
        return len(self.points)

    @cached_property
    def tree(self):
        return cKDTree(self.points)


@dataclass(frozen=True, eq=False)
class SurfaceProjection:
    index: int
    point: np.ndarray
    distance: float


def _subtriangle_centroids(res):
    """Barycentric (s, t) of the centroids of the res*res sub-triangles, grid order."""
    params = []
    for i in range(res):
        for j in range(res - i):
            params.append(((3 * i + 1) / (3 * res), (3 * j + 1) / (3 * res)))
            if i + j <= res - 2:
                params.append(((3 * i + 2) / (3 * res), (3 * j + 2) / (3 * res)))
    return np.array(params)


def discretize_surface(mesh, spacing):
    """Cover the mesh with sub-triangle centroids no farther than `spacing` apart.

    Each triangle is split into a res x res barycentric grid with
    res = ceil(longest edge / spacing); points are ordered by triangle index,
    then grid index.
    """
    if not spacing > 0:
        raise ValidationError("spacing must be > 0, got %r" % spacing)

    corners = mesh.corners
    a = corners[:, 0]
    ab = corners[:, 1] - a
    ac = corners[:, 2] - a
    bc = corners[:, 2] - corners[:, 1]
    longest = np.max(
        np.stack([np.linalg.norm(ab, axis=1), np.linalg.norm(ac, axis=1), np.linalg.norm(bc, axis=1)]),
        axis=0,
    )
    res = np.maximum(1, np.ceil(longest / spacing)).astype(np.int64)
    counts = res * res
    offsets = np.concatenate([[0], np.cumsum(counts)])
    points = np.empty((offsets[-1], 3))

    for r in np.unique(res):
        params = _subtriangle_centroids(int(r))
        tri = np.nonzero(res == r)[0]
        block = (
            a[tri, None, :]
            + params[None, :, 0, None] * ab[tri, None, :]
            + params[None, :, 1, None] * ac[tri, None, :]
        )
        for k, t in enumerate(tri):
            points[offsets[t]:offsets[t + 1]] = block[k]

    _LOGGER.debug("Discretized %d triangles into %d points at %.3g mm", len(corners), len(points), spacing)
    return SurfacePointSet(points, float(spacing))


def nearest_surface_points(queries, point_set):
    """Vectorized nearest_surface_point; returns (indices, distances)."""
    if len(point_set) == 0:
        raise ValidationError("surface point set is empty")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != 3 or not np.all(np.isfinite(queries)):
        raise ValidationError("queries must be finite 3D points")

    points = point_set.points
    tree = point_set.tree
    approx, _ = tree.query(queries)
    indices = np.empty(len(queries), dtype=np.int64)
    distances = np.empty(len(queries))
    for q, (query, d) in enumerate(zip(queries, approx)):
        # Gather every candidate that might tie with the kd-tree hit, then break ties by index.
        candidates = np.array(sorted(tree.query_ball_point(query, d * (1 + _TIE_SLACK) + 1e-12)))
        exact = np.sqrt(np.sum((points[candidates] - query) ** 2, axis=1))
        best = int(np.argmin(exact))
        indices[q] = candidates[best]
        distances[q] = exact[best]
    return indices, distances


def nearest_surface_point(query, point_set):
    query = as_vec3(query, "query")
    indices, distances = nearest_surface_points(query[None, :], point_set)
    index = int(indices[0])
    return SurfaceProjection(index, point_set.points[index], float(distances[0]))


def closest_points_on_mesh(mesh, queries):
    """Exact closest point on the mesh surface for each query, shape (n, 3)."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    corners = mesh.corners
    out = np.empty_like(queries)
    for q, query in enumerate(queries):
        candidates = _closest_on_triangles(corners, query)
        d2 = np.sum((candidates - query) ** 2, axis=1)
        out[q] = candidates[int(np.argmin(d2))]
    return out


def _closest_on_triangles(corners, p):
    # Voronoi-region walk of Ericson's ClosestPtPointTriangle, over all triangles at once.
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        out = a + ab * (vb * denom)[:, None] + ac * (vc * denom)[:, None]

        # later assignments take precedence, mirroring the early returns of the scalar walk
        on_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out = np.where(on_bc[:, None], b + w[:, None] * (c - b), out)

        on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        w = d2 / (d2 - d6)
        out = np.where(on_ac[:, None], a + w[:, None] * ac, out)

        out = np.where(((d6 >= 0) & (d5 <= d6))[:, None], c, out)

        on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        v = d1 / (d1 - d3)
        out = np.where(on_ab[:, None], a + v[:, None] * ab, out)

        out = np.where(((d3 >= 0) & (d4 <= d3))[:, None], b, out)
        out = np.where(((d1 <= 0) & (d2 <= 0))[:, None], a, out)
    return out


def sample_random_edge_point(mesh, rng):
    """Pick an edge uniformly, then a point uniformly along it.

    Edges are not weighted by length.
    """
    if len(mesh.edges) == 0:
        raise ValidationError("mesh has no edges")
    edge = mesh.edges[int(rng.integers(len(mesh.edges)))]
    t = float(rng.random())
    start = mesh.vertices[edge[0]]
    end = mesh.vertices[edge[1]]
    return as_vec3(start + t * (end - start))


def sample_surface_points(mesh, count, rng):
    """Area-uniform random points on the surface."""
    tri = rng.choice(len(mesh.triangles), size=count, p=mesh.areas / mesh.areas.sum())
    u = rng.random(count)
    v = rng.random(count)
    flip = u + v > 1
    u[flip] = 1 - u[flip]
    v[flip] = 1 - v[flip]
    corners = mesh.corners[tri]
    return (
        corners[:, 0]
        + u[:, None] * (corners[:, 1] - corners[:, 0])
        + v[:, None] * (corners[:, 2] - corners[:, 0])
    )


def farthest_point_sample(points, n, start):
    """Greedy max-min subsampling.

    Returns the chosen indices and, for each pick, its distance to the points
    chosen before it (0 for the start). Ties go to the lowest index.
    """
    points = np.asarray(points, dtype=float)
    if n > len(points):
        raise ValidationError("cannot pick %d points out of %d" % (n, len(points)))
    chosen = np.empty(n, dtype=np.int64)
    pick_distance = np.zeros(n)
    chosen[0] = start
    min_d = np.sqrt(np.sum((points - points[start]) ** 2, axis=1))
    for k in range(1, n):
        idx = int(np.argmax(min_d))
        chosen[k] = idx
        pick_distance[k] = min_d[idx]
        min_d = np.minimum(min_d, np.sqrt(np.sum((points - points[idx]) ** 2, axis=1)))
    return chosen, pick_distance


def sample_even_spacing(mesh, n, dense_spacing=DEFAULT_DENSE_SPACING):
    """`n` near-uniform surface points by farthest-point subsampling.

    The dense set is discretize_surface(mesh, dense_spacing); the first pick is
    the dense point nearest the area-weighted surface centroid.
    """
    if n < 1:
        raise ValidationError("even spacing needs n >= 1, got %d" % n)
    dense = discretize_surface(mesh, dense_spacing)
    start = nearest_surface_point(mesh.centroid, dense).index
    chosen, _ = farthest_point_sample(dense.points, n, start)
    return dense.points[chosen]
