"""
.. module:: mesh
   :platform: Unix, Windows
   :synopsis: conforming triangulations of partitioned square domains

Two partition families are supported:

-   ``checkerboard(m)``: ``m * m`` equal squares. For ``m = 2`` the domain is
    ``]-1/2, 1/2[^2`` and the mesh is exactly symmetric under both coordinate
    reflections; otherwise the domain is ``]0, 1[^2``.
-   ``distorted_quad``: four convex quadrilaterals sharing one interior corner,
    each meeting one side of ``]-1/2, 1/2[^2`` in an edge point.

Subdomains are numbered row by row from the bottom left, starting at 1. Vertex
layers are clustered geometrically toward the skeleton (the union of the
interior subdomain boundaries).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .exception import InvalidGeometry, InsufficientRefinement
from .log import get_logger

logger = get_logger(__name__)

SYMMETRY_TOL = 1e-12
MERGE_DECIMALS = 13

CHECKERBOARD = "checkerboard"
DISTORTED = "distorted_quad"

DEFAULT_INTERIOR_POINT = (0.1, -0.08)
# bottom, right, top, left
DEFAULT_EDGE_POINTS = ((0.1, -0.5), (0.5, -0.08), (-0.1, 0.5), (-0.5, 0.08))


@dataclass(frozen=True)
class GeometrySpec:
    """
    Description of a partitioned domain and its mesh resolution.

    :param kind: ``"checkerboard"`` or ``"distorted_quad"``.
    :param m: squares per side for checkerboards.
    :param interior_point: common corner of the four distorted subdomains.
    :param edge_points: bottom, right, top and left edge points of the distorted
                        partition.
    :param refinement_level: each subdomain side carries ``2**refinement_level``
                             uniform cells before grading.
    :param grading_strength: ``0`` gives a uniform mesh; ``s > 0`` adds
                             ``refinement_level + 2`` vertex layers at distances
                             ``h/2 * q**j`` from the skeleton with ``q = 2**-s``.
    """

    kind: str = CHECKERBOARD
    m: int = 2
    interior_point: tuple = DEFAULT_INTERIOR_POINT
    edge_points: tuple = DEFAULT_EDGE_POINTS
    refinement_level: int = 0
    grading_strength: float = 0.0

    @classmethod
    def checkerboard(cls, m=2, refinement_level=0, grading_strength=0.0):
        return cls(kind=CHECKERBOARD, m=int(m), refinement_level=int(refinement_level),
                   grading_strength=float(grading_strength))

    @classmethod
    def distorted_quad(cls, interior_point=DEFAULT_INTERIOR_POINT, edge_points=DEFAULT_EDGE_POINTS,
                       refinement_level=0, grading_strength=0.0):
        return cls(kind=DISTORTED, m=2,
                   interior_point=tuple(float(c) for c in interior_point),
                   edge_points=tuple(tuple(float(c) for c in p) for p in edge_points),
                   refinement_level=int(refinement_level), grading_strength=float(grading_strength))

    @classmethod
    def parse(cls, text, refinement_level=0, grading_strength=0.0):
        """
        Build a spec from its short name.

        >>> GeometrySpec.parse("checkerboard(4)").d
        16
        >>> GeometrySpec.parse("distorted").kind
        'distorted_quad'
        """
        name = text.strip().lower().replace(" ", "")
        if name in ("distorted", DISTORTED):
            return cls.distorted_quad(refinement_level=refinement_level, grading_strength=grading_strength)
        if name.startswith(CHECKERBOARD):
            rest = name[len(CHECKERBOARD):]
            m = 2
            if rest:
                if not (rest.startswith("(") and rest.endswith(")") and rest[1:-1].isdigit()):
                    raise InvalidGeometry(f"cannot read geometry {text!r}.")
                m = int(rest[1:-1])
            return cls.checkerboard(m, refinement_level, grading_strength)
        raise InvalidGeometry(f"unknown geometry {text!r}.")

    @property
    def d(self):
        return self.m * self.m if self.kind == CHECKERBOARD else 4

    @property
    def label(self):
        if self.kind == CHECKERBOARD:
            return f"{CHECKERBOARD}({self.m})"
        return DISTORTED

    @property
    def is_symmetric_construction(self):
        return self.kind == CHECKERBOARD and self.m == 2

    def bounds(self):
        """Lower-left and upper-right corner of the domain."""
        if self.kind == CHECKERBOARD and self.m != 2:
            return (0.0, 0.0), (1.0, 1.0)
        return (-0.5, -0.5), (0.5, 0.5)

    def validate(self):
        if self.kind not in (CHECKERBOARD, DISTORTED):
            raise InvalidGeometry(f"unknown partition kind {self.kind!r}.")
        if self.refinement_level < 0:
            raise InvalidGeometry(f"refinement level must be nonnegative, got {self.refinement_level}.")
        if not math.isfinite(self.grading_strength) or self.grading_strength < 0:
            raise InvalidGeometry(f"grading strength must be a nonnegative number, got {self.grading_strength}.")
        if self.kind == CHECKERBOARD:
            if self.m < 1:
                raise InvalidGeometry(f"checkerboard needs m >= 1, got {self.m}.")
            return
        px, py = self.interior_point
        if not (abs(px) < 0.5 and abs(py) < 0.5):
            raise InvalidGeometry(f"interior point {self.interior_point} is not inside the domain.")
        if len(self.edge_points) != 4:
            raise InvalidGeometry("four edge points are needed.")
        sides = ((1, -0.5), (0, 0.5), (1, 0.5), (0, -0.5))
        for name, point, (axis, value) in zip(("bottom", "right", "top", "left"), self.edge_points, sides):
            free = point[1 - axis]
            if point[axis] != value or not abs(free) < 0.5:
                raise InvalidGeometry(f"{name} edge point {point} is not strictly inside its side.")
        for label, quad in enumerate(distorted_quads(self), start=1):
            if not _is_convex(quad):
                raise InvalidGeometry(f"subdomain {label} is not a convex quadrilateral.")


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """
    Triangulation with subdomain labels.

    ``subdomain`` holds 1-based labels per triangle; ``is_dirichlet`` flags
    vertices on the outer boundary and ``is_skeleton`` flags the remaining
    vertices shared by two or more subdomains.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    subdomain: np.ndarray
    is_dirichlet: np.ndarray
    is_skeleton: np.ndarray
    d: int
    geometry: GeometrySpec = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def areas(self):
        return np.abs(self.signed_areas())

    def skeleton_vertices(self):
        return np.flatnonzero(self.is_skeleton)

    def summary(self):
        return {
            'vertices': int(self.n_vertices),
            'triangles': int(self.n_triangles),
            'subdomains': int(self.d),
            'dirichlet_vertices': int(self.is_dirichlet.sum()),
            'skeleton_vertices': int(self.is_skeleton.sum()),
        }


@dataclass(frozen=True, eq=False)
class IntervalMesh:
    """Uniform mesh of ``]0, 1[`` split into ``d`` equal subintervals."""

    nodes: np.ndarray
    cell_subdomain: np.ndarray
    is_dirichlet: np.ndarray
    is_skeleton: np.ndarray
    d: int
    cells_per_subinterval: int

    @property
    def breakpoints(self):
        return np.arange(self.d + 1) / self.d


@dataclass
class SymmetryReport:
    """
    Outcome of :func:`check_reflection_symmetry`.

    ``vertex_maps`` holds, for the reflections ``x1 -> -x1`` and ``x2 -> -x2``
    (about the domain center), the image index of every vertex; entries are
    ``-1`` where no image vertex exists. ``label_maps`` holds the induced
    subdomain permutations as dicts, or ``None`` when the triangles do not map
    onto each other.
    """

    symmetric: bool
    unmatched_vertices: np.ndarray
    unmatched_triangles: int
    vertex_maps: tuple
    label_maps: tuple = field(default=(None, None))


def graded_points(n, strength, layers, at_start, at_end):
    """
    Points of ``[0, 1]``: the uniform grid with ``n`` cells plus, at each graded
    end, ``layers`` points at distances ``q**j / (2 n)``, ``q = 2**-strength``.

    >>> graded_points(2, 0.0, 3, True, True).tolist()
    [0.0, 0.5, 1.0]
    >>> graded_points(1, 1.0, 2, True, False).tolist()
    [0.0, 0.25, 0.5, 1.0]
    """
    base = np.arange(n + 1) / n
    if strength <= 0 or layers <= 0:
        return base
    q = 2.0 ** (-strength)
    delta = 0.5 * q ** np.arange(layers) / n
    extra = []
    if at_start:
        extra.append(delta)
    if at_end:
        extra.append(1.0 - delta)
    points = np.concatenate([base] + extra)
    return np.unique(np.round(points, MERGE_DECIMALS))


def distorted_quads(spec):
    """Corner lists ``(C, A, P, B)`` of the four distorted subdomains.

    ``C`` is the domain corner, ``P`` the interior point and ``A``, ``B`` the
    edge points, so that ``A-P`` and ``B-P`` are interface edges.
    """
    bottom, right, top, left = (np.asarray(p, dtype=float) for p in spec.edge_points)
    centre = np.asarray(spec.interior_point, dtype=float)
    corners = {1: (-0.5, -0.5), 2: (0.5, -0.5), 3: (-0.5, 0.5), 4: (0.5, 0.5)}
    arms = {1: (bottom, left), 2: (bottom, right), 3: (top, left), 4: (top, right)}
    return [np.array([corners[i], arms[i][0], centre, arms[i][1]]) for i in range(1, 5)]


def subdomain_polygons(spec):
    """Closed subdomain polygons, counterclockwise, indexed by label - 1."""
    if spec.kind == DISTORTED:
        polygons = []
        for quad in distorted_quads(spec):
            if _polygon_area(quad) < 0:
                quad = quad[::-1]
            polygons.append(quad)
        return polygons
    (x0, y0), (x1, y1) = spec.bounds()
    m = spec.m
    hx, hy = (x1 - x0) / m, (y1 - y0) / m
    polygons = []
    for row in range(m):
        for col in range(m):
            a, b = x0 + col * hx, y0 + row * hy
            polygons.append(np.array([(a, b), (a + hx, b), (a + hx, b + hy), (a, b + hy)]))
    return polygons


def build_mesh(spec):
    """
    Build the triangulation described by ``spec``.

    :raises InvalidGeometry: for invalid or degenerate specs.
    :raises InsufficientRefinement: when no vertex is left after removing the
                                    boundary.
    """
    spec.validate()
    if spec.kind == CHECKERBOARD:
        vertices, triangles, labels = _checkerboard(spec)
    else:
        vertices, triangles, labels = _distorted(spec)

    (x0, y0), (x1, y1) = spec.bounds()
    tol = 1e-12
    is_dirichlet = ((np.abs(vertices[:, 0] - x0) < tol) | (np.abs(vertices[:, 0] - x1) < tol)
                    | (np.abs(vertices[:, 1] - y0) < tol) | (np.abs(vertices[:, 1] - y1) < tol))
    if is_dirichlet.all():
        raise InsufficientRefinement(spec.refinement_level)

    mesh = Mesh2D(vertices=vertices, triangles=triangles, subdomain=labels,
                  is_dirichlet=is_dirichlet, is_skeleton=_skeleton_flags(vertices, triangles, labels, is_dirichlet),
                  d=spec.d, geometry=spec)
    logger.info("%s mesh, level %d, grading %g: %d vertices, %d triangles, %d skeleton vertices.",
                spec.label, spec.refinement_level, spec.grading_strength,
                mesh.n_vertices, mesh.n_triangles, int(mesh.is_skeleton.sum()))
    return mesh


def _layers(spec):
    return spec.refinement_level + 2 if spec.grading_strength > 0 else 0


def _checkerboard(spec):
    n = 2 ** spec.refinement_level
    layers = _layers(spec)
    s = spec.grading_strength
    m = spec.m

    if m == 2:
        half = 0.5 * graded_points(n, s, layers, True, False)
        axis = np.concatenate([-half[:0:-1], half])
    else:
        pieces = []
        for c in range(m):
            local = graded_points(n, s, layers, c > 0, c < m - 1)
            pieces.append((c + local) / m)
        axis = np.unique(np.round(np.concatenate(pieces), MERGE_DECIMALS))

    nx = len(axis)
    X, Y = np.meshgrid(axis, axis)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx - 1), np.arange(nx - 1))
    i, j = i.ravel(), j.ravel()
    a = j * nx + i
    b = a + 1
    c = a + nx + 1
    e = a + nx
    cx = 0.5 * (axis[i] + axis[i + 1])
    cy = 0.5 * (axis[j] + axis[j + 1])

    (x0, y0), (x1, y1) = spec.bounds()
    col = np.minimum((m * (cx - x0) / (x1 - x0)).astype(int), m - 1)
    row = np.minimum((m * (cy - y0) / (y1 - y0)).astype(int), m - 1)
    cell_label = row * m + col + 1

    if m == 2:
        # diagonals mirror across both axes
        rising = (cx * cy) > 0
    else:
        rising = np.ones(len(a), dtype=bool)

    t1 = np.where(rising[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, e]))
    t2 = np.where(rising[:, None], np.column_stack([a, c, e]), np.column_stack([b, c, e]))
    triangles = np.vstack([t1, t2])
    labels = np.concatenate([cell_label, cell_label])
    return vertices, _orient(vertices, triangles), labels


def _distorted(spec):
    n = 2 ** spec.refinement_level
    pts = graded_points(n, spec.grading_strength, _layers(spec), False, True)
    k = len(pts)
    S, T = np.meshgrid(pts, pts)
    S, T = S.ravel(), T.ravel()

    all_vertices, all_triangles, all_labels = [], [], []
    offset = 0
    i, j = np.meshgrid(np.arange(k - 1), np.arange(k - 1))
    i, j = i.ravel(), j.ravel()
    a = j * k + i
    cells = np.vstack([np.column_stack([a, a + 1, a + k + 1]), np.column_stack([a, a + k + 1, a + k])])

    for label, (C, A, P, B) in enumerate(distorted_quads(spec), start=1):
        w_c = ((1 - S) * (1 - T))[:, None]
        w_a = (S * (1 - T))[:, None]
        w_p = (S * T)[:, None]
        w_b = ((1 - S) * T)[:, None]
        all_vertices.append(w_c * C + w_a * A + w_p * P + w_b * B)
        all_triangles.append(cells + offset)
        all_labels.append(np.full(len(cells), label))
        offset += k * k

    raw = np.vstack(all_vertices)
    vertices, inverse = np.unique(np.round(raw, MERGE_DECIMALS), axis=0, return_inverse=True)
    triangles = inverse.reshape(-1)[np.vstack(all_triangles)]
    labels = np.concatenate(all_labels)
    return vertices, _orient(vertices, triangles), labels


def _orient(vertices, triangles):
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(area == 0):
        raise InvalidGeometry("degenerate triangle produced.")
    flipped = area < 0
    triangles = triangles.copy()
    triangles[flipped, 1], triangles[flipped, 2] = triangles[flipped, 2], triangles[flipped, 1].copy()
    return triangles


def _skeleton_flags(vertices, triangles, labels, is_dirichlet):
    nv = len(vertices)
    flat = triangles.ravel()
    lab = np.repeat(labels, 3)
    lowest = np.full(nv, np.iinfo(np.int64).max)
    highest = np.full(nv, -1)
    np.minimum.at(lowest, flat, lab)
    np.maximum.at(highest, flat, lab)
    return (lowest != highest) & (highest >= 0) & ~is_dirichlet


def vertex_labels(mesh):
    """Smallest subdomain label among the triangles around each vertex."""
    lowest = np.full(mesh.n_vertices, np.iinfo(np.int64).max)
    np.minimum.at(lowest, mesh.triangles.ravel(), np.repeat(mesh.subdomain, 3))
    return lowest


def check_reflection_symmetry(mesh, tol=SYMMETRY_TOL):
    """
    Check the mesh against both coordinate reflections about the domain center.

    :return: ``(symmetric, report)``; the report lists vertices without a
             mirror image and the induced vertex and label maps.
    """
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    centre = 0.5 * (lo + hi)
    tree = cKDTree(mesh.vertices)

    unmatched = set()
    maps = []
    label_maps = []
    bad_triangles = 0
    for axis in (0, 1):
        mirrored = mesh.vertices.copy()
        mirrored[:, axis] = 2 * centre[axis] - mirrored[:, axis]
        dist, image = tree.query(mirrored)
        miss = dist > tol
        unmatched.update(np.flatnonzero(miss).tolist())
        image = np.where(miss, -1, image)
        maps.append(image)
        if miss.any():
            bad_triangles += mesh.n_triangles
            label_maps.append(None)
            continue
        count, label_map = _triangle_image(mesh, image)
        bad_triangles += count
        label_maps.append(label_map)

    symmetric = not unmatched and bad_triangles == 0 and all(lm is not None for lm in label_maps)
    report = SymmetryReport(symmetric=symmetric, unmatched_vertices=np.array(sorted(unmatched), dtype=int),
                            unmatched_triangles=int(bad_triangles), vertex_maps=tuple(maps),
                            label_maps=tuple(label_maps))
    if not symmetric:
        logger.debug("mesh is not reflection symmetric: %d vertices, %d triangles unmatched.",
                     len(report.unmatched_vertices), report.unmatched_triangles)
    return symmetric, report


def _triangle_image(mesh, image):
    own = np.sort(mesh.triangles, axis=1)
    mapped = np.sort(image[mesh.triangles], axis=1)
    position = {tuple(t): k for k, t in enumerate(own.tolist())}
    label_map = {}
    missing = 0
    for k, t in enumerate(mapped.tolist()):
        target = position.get(tuple(t))
        if target is None:
            missing += 1
            continue
        src, dst = int(mesh.subdomain[k]), int(mesh.subdomain[target])
        if label_map.setdefault(src, dst) != dst:
            missing += 1
    if missing:
        return missing, None
    return 0, label_map


def check_alignment(mesh, tol=1e-12):
    """Indices of triangles with a vertex outside their labeled subdomain."""
    if mesh.geometry is None:
        raise InvalidGeometry("alignment needs the geometry the mesh was built from.")
    polygons = subdomain_polygons(mesh.geometry)
    bad = []
    for label, polygon in enumerate(polygons, start=1):
        members = np.flatnonzero(mesh.subdomain == label)
        points = mesh.vertices[mesh.triangles[members]].reshape(-1, 2)
        inside = _inside_convex(polygon, points, tol).reshape(-1, 3).all(axis=1)
        bad.extend(members[~inside].tolist())
    return sorted(bad)


def check_conformity(mesh):
    """
    Edges violating conformity: used by more than two triangles, or used once
    without lying on the outer boundary.
    """
    edges = np.vstack([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    unique, counts = np.unique(edges, axis=0, return_counts=True)
    crowded = unique[counts > 2]
    lone = unique[counts == 1]
    open_edges = lone[~(mesh.is_dirichlet[lone[:, 0]] & mesh.is_dirichlet[lone[:, 1]])]
    return [tuple(e) for e in np.vstack([crowded, open_edges]).tolist()]


def build_interval_mesh(d, cells_per_subinterval):
    """
    Uniform mesh of ``]0, 1[`` with ``d`` equal subintervals of
    ``cells_per_subinterval`` cells each.

    >>> build_interval_mesh(1, 2).nodes.tolist()
    [0.0, 0.5, 1.0]
    """
    if d < 1 or cells_per_subinterval < 1:
        raise InvalidGeometry(f"interval mesh needs d >= 1 and cells >= 1, got {d}, {cells_per_subinterval}.")
    n = d * cells_per_subinterval
    nodes = np.arange(n + 1) / n
    cell_subdomain = np.repeat(np.arange(1, d + 1), cells_per_subinterval)
    is_dirichlet = np.zeros(n + 1, dtype=bool)
    is_dirichlet[[0, -1]] = True
    is_skeleton = np.zeros(n + 1, dtype=bool)
    is_skeleton[np.arange(1, d) * cells_per_subinterval] = True
    return IntervalMesh(nodes=nodes, cell_subdomain=cell_subdomain, is_dirichlet=is_dirichlet,
                        is_skeleton=is_skeleton, d=d, cells_per_subinterval=cells_per_subinterval)


def export_mesh(mesh, path):
    """Write ``NV NT d``, then vertices ``x y dirichlet skeleton``, then
    triangles ``v0 v1 v2 subdomain``."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{mesh.n_vertices} {mesh.n_triangles} {mesh.d}\n")
        for (x, y), dirichlet, skeleton in zip(mesh.vertices, mesh.is_dirichlet, mesh.is_skeleton):
            handle.write(f"{x:.17e} {y:.17e} {int(dirichlet)} {int(skeleton)}\n")
        for (a, b, c), label in zip(mesh.triangles, mesh.subdomain):
            handle.write(f"{a} {b} {c} {label}\n")


def load_mesh(path, geometry=None):
    """Read a mesh written by :func:`export_mesh`."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 3:
            raise InvalidGeometry(f"{path}: malformed header.")
        nv, nt, d = (int(v) for v in header)
        vertex_rows = [handle.readline().split() for _ in range(nv)]
        triangle_rows = [handle.readline().split() for _ in range(nt)]
    vertices = np.array([[float(r[0]), float(r[1])] for r in vertex_rows])
    flags = np.array([[int(r[2]), int(r[3])] for r in vertex_rows], dtype=bool).reshape(nv, 2)
    tri = np.array([[int(v) for v in r] for r in triangle_rows], dtype=np.int64).reshape(nt, 4)
    return Mesh2D(vertices=vertices, triangles=tri[:, :3], subdomain=tri[:, 3], is_dirichlet=flags[:, 0],
                  is_skeleton=flags[:, 1], d=d, geometry=geometry)


def perturb_vertex(mesh, index, offset):
    """Copy of ``mesh`` with one vertex moved by ``offset``."""
    vertices = mesh.vertices.copy()
    vertices[index] += np.asarray(offset, dtype=float)
    return replace(mesh, vertices=vertices)


def _polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def _is_convex(poly):
    edges = np.roll(poly, -1, axis=0) - poly
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    return bool(np.all(cross > 1e-12) or np.all(cross < -1e-12))


def _inside_convex(polygon, points, tol):
    edges = np.roll(polygon, -1, axis=0) - polygon
    rel = points[:, None, :] - polygon[None, :, :]
    cross = edges[None, :, 0] * rel[:, :, 1] - edges[None, :, 1] * rel[:, :, 0]
    length = np.linalg.norm(edges, axis=1)
    return np.all(cross >= -tol * length[None, :], axis=1)
