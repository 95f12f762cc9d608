"""
.. module:: fem
   :platform: Unix, Windows
   :synopsis: P1 finite elements, Dirichlet elimination and banded Cholesky

Stiffness matrices are assembled for piecewise constant coefficients with exact
element integrals, so discrete identities such as additivity over subdomains
hold to rounding. Dirichlet vertices are removed by deleting their rows and
columns. The Cholesky factor works on a reverse Cuthill-McKee ordering and is
stored in LAPACK band format.
"""

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .exception import (DimensionMismatch, EllipticityViolation, InvalidSubdomainWeights,
                        NotPositiveDefinite)
from .log import get_logger
from .mesh import Mesh2D, build_mesh, check_reflection_symmetry, vertex_labels
from .registry import SingletonMetaDiscretizationRegistry

logger = get_logger(__name__)

POSITIVE_DEFINITE = "positive definite"
SEMIDEFINITE = "positive semidefinite"
INDEFINITE = "indefinite"


@dataclass(frozen=True, eq=False)
class SparseSymOperator:
    """
    Symmetric sparse matrix over the free degrees of freedom.

    ``definiteness`` records what the assembly knows about the form:
    ``"positive definite"``, ``"positive semidefinite"`` or ``"indefinite"``.
    """

    matrix: sp.csr_matrix
    definiteness: str = POSITIVE_DEFINITE

    @property
    def dimension(self):
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    def toarray(self):
        return self.matrix.toarray()

    def scaled(self, factor):
        definiteness = self.definiteness
        if factor < 0 and definiteness != INDEFINITE:
            definiteness = INDEFINITE
        elif factor == 0:
            definiteness = SEMIDEFINITE
        return SparseSymOperator(self.matrix * factor, definiteness)

    def quadratic_form(self, v):
        return float(v @ (self.matrix @ v))

    def is_symmetric(self):
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or np.max(np.abs(diff.data)) == 0.0

    def to_coordinate_text(self, path):
        """Write ``i j value`` lines (0-based) of the stored nonzeros."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8") as handle:
            for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                handle.write(f"{i} {j} {v:.17e}\n")


@dataclass(frozen=True, eq=False)
class DofMap:
    """
    Numbering of the free (non-Dirichlet) vertices.

    ``free_index_of_vertex`` is ``-1`` for eliminated vertices.
    """

    free_index_of_vertex: np.ndarray
    vertex_of_dof: np.ndarray
    skeleton_dofs: np.ndarray
    interior_dofs_of_subdomain: tuple

    @property
    def n_free(self):
        return len(self.vertex_of_dof)

    @property
    def n_skeleton(self):
        return len(self.skeleton_dofs)

    def restrict(self, full):
        """Vertex vector -> free DOF vector."""
        return np.asarray(full)[self.vertex_of_dof]

    def extend(self, free, n_vertices):
        """Free DOF vector -> vertex vector with zeros on the boundary."""
        free = np.asarray(free)
        out = np.zeros((n_vertices,) + free.shape[1:])
        out[self.vertex_of_dof] = free
        return out

    def free_permutation(self, vertex_map):
        """Free DOF permutation induced by a vertex permutation."""
        image = self.free_index_of_vertex[np.asarray(vertex_map)[self.vertex_of_dof]]
        if np.any(image < 0):
            raise DimensionMismatch("a map of free vertices onto free vertices", "boundary images")
        return image


def build_dofmap(mesh):
    free = ~mesh.is_dirichlet
    vertex_of_dof = np.flatnonzero(free)
    index = np.full(mesh.n_vertices, -1, dtype=np.int64)
    index[vertex_of_dof] = np.arange(len(vertex_of_dof))
    skeleton = index[np.flatnonzero(mesh.is_skeleton & free)]

    labels = vertex_labels(mesh)
    interior = free & ~mesh.is_skeleton
    per_subdomain = tuple(index[np.flatnonzero(interior & (labels == i))] for i in range(1, mesh.d + 1))
    return DofMap(free_index_of_vertex=index, vertex_of_dof=vertex_of_dof,
                  skeleton_dofs=skeleton, interior_dofs_of_subdomain=per_subdomain)


def local_stiffness(coords):
    """
    P1 element stiffness for unit coefficient on the triangle ``coords``.

    >>> local_stiffness([(0, 0), (1, 0), (0, 1)]).tolist()
    [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]
    """
    p = np.asarray(coords, dtype=float)
    return _element_matrices(p[None])[0]


def _element_matrices(p):
    # edge opposite to each vertex
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = 0.5 * np.abs(e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    return np.einsum("tik,tjk->tij", e, e) / (4.0 * area)[:, None, None]


def assemble_stiffness(mesh, subdomain_weights, dofmap=None, eliminate=True):
    """
    Stiffness matrix of ``int w grad(u) . grad(v)`` with ``w`` equal to
    ``subdomain_weights[i - 1]`` on subdomain ``i``.

    :param eliminate: drop Dirichlet rows and columns (default).
    :raises InvalidSubdomainWeights: wrong length or non-finite weights.
    """
    weights = np.asarray(subdomain_weights, dtype=float).ravel()
    if len(weights) != mesh.d or not np.all(np.isfinite(weights)):
        raise InvalidSubdomainWeights(mesh.d, list(weights))

    local = _element_matrices(mesh.vertices[mesh.triangles]) * weights[mesh.subdomain - 1][:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K = ((K + K.T) * 0.5).tocsr()

    if np.any(weights < 0):
        logger.warning("negative subdomain weight in %s: the form is indefinite.", weights.tolist())
        definiteness = INDEFINITE
    elif np.any(weights == 0):
        definiteness = SEMIDEFINITE
    else:
        definiteness = POSITIVE_DEFINITE

    if eliminate:
        dofmap = dofmap or build_dofmap(mesh)
        keep = dofmap.vertex_of_dof
        K = K[keep][:, keep].tocsr()
    K.sort_indices()
    return SparseSymOperator(K, definiteness)


def assemble_load(mesh, f=1.0, dofmap=None, eliminate=True):
    """
    Load vector ``int f phi_j`` for constant or per-triangle (P0) ``f``.

    Each triangle gives a third of ``f * area`` to each of its vertices.
    """
    values = np.broadcast_to(np.asarray(f, dtype=float), (mesh.n_triangles,))
    share = np.repeat(values * mesh.areas() / 3.0, 3)
    full = np.bincount(mesh.triangles.ravel(), weights=share, minlength=mesh.n_vertices)
    if not eliminate:
        return full
    dofmap = dofmap or build_dofmap(mesh)
    return full[dofmap.vertex_of_dof]


@dataclass(eq=False)
class CholeskyFactor:
    """
    Banded Cholesky factor of a permuted operator.

    With ``P v = v[permutation]`` and ``P A P^T = Lb Lb^T`` (``Lb`` banded lower
    triangular), the factor of ``A`` itself is ``L = P^T Lb``; every method works
    in the original ordering.
    """

    band: np.ndarray
    permutation: np.ndarray
    bandwidth: int
    inverse_permutation: np.ndarray = field(init=False)

    def __post_init__(self):
        self.inverse_permutation = np.empty_like(self.permutation)
        self.inverse_permutation[self.permutation] = np.arange(len(self.permutation))

    @property
    def dimension(self):
        return self.band.shape[1]

    @property
    def smallest_pivot(self):
        return float(self.band[0].min()) if self.dimension else float("inf")

    @cached_property
    def _upper_band(self):
        l, n = self.bandwidth, self.dimension
        ab = np.zeros_like(self.band)
        for k in range(l + 1):
            ab[l - k, k:] = self.band[k, :n - k]
        return ab

    @cached_property
    def lower_factor(self):
        """``Lb`` as a sparse matrix (permuted ordering)."""
        n = self.dimension
        diagonals = [self.band[k, :n - k] for k in range(self.bandwidth + 1)]
        return sp.diags(diagonals, [-k for k in range(self.bandwidth + 1)], shape=(n, n), format="csr")

    def _check(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dimension:
            raise DimensionMismatch(self.dimension, rhs.shape[0])
        return rhs

    def _to_original(self, permuted):
        return permuted[self.inverse_permutation]

    def solve(self, rhs):
        """Solve ``A x = rhs`` for a vector or a block of columns."""
        rhs = self._check(rhs)
        if self.dimension == 0:
            return rhs.copy()
        x = sla.cho_solve_banded((self.band, True), rhs[self.permutation], check_finite=False)
        return self._to_original(x)

    def mul_Lt(self, v):
        """``L^T v``."""
        v = self._check(v)
        return self.lower_factor.T @ v[self.permutation]

    def mul_L(self, w):
        """``L w``."""
        w = self._check(w)
        return self._to_original(self.lower_factor @ w)

    def solve_L(self, v):
        """``L^{-1} v``."""
        v = self._check(v)
        if self.dimension == 0:
            return v.copy()
        return sla.solve_banded((self.bandwidth, 0), self.band, v[self.permutation], check_finite=False)

    def solve_Lt(self, w):
        """``L^{-T} w``."""
        w = self._check(w)
        if self.dimension == 0:
            return w.copy()
        x = sla.solve_banded((0, self.bandwidth), self._upper_band, w, check_finite=False)
        return self._to_original(x)

    def energy_norm(self, v):
        """``sqrt(v^T A v)`` per column."""
        return np.linalg.norm(self.mul_Lt(v), axis=0)

    def permutation_digest(self):
        return hashlib.sha256(np.ascontiguousarray(self.permutation, dtype=np.int64).tobytes()).hexdigest()


def cholesky(op, ordering="rcm", permutation=None):
    """
    Factor a symmetric positive definite operator.

    :param ordering: ``"rcm"`` (reverse Cuthill-McKee) or ``"natural"``.
    :param permutation: reuse a precomputed ordering, e.g. for operators with the
                        sparsity pattern of an already factored one.
    :raises NotPositiveDefinite: carries the original index of the failing pivot.
    """
    A = op.matrix if isinstance(op, SparseSymOperator) else sp.csr_matrix(op)
    n = A.shape[0]
    if permutation is None:
        if ordering == "natural" or n == 0:
            permutation = np.arange(n)
        else:
            permutation = np.asarray(reverse_cuthill_mckee(A.tocsr(), symmetric_mode=True), dtype=np.int64)
    permutation = np.asarray(permutation, dtype=np.int64)

    Ap = A[permutation][:, permutation].tocoo()
    lower = Ap.row >= Ap.col
    offsets = Ap.row[lower] - Ap.col[lower]
    bandwidth = int(offsets.max()) if offsets.size else 0
    band = np.zeros((bandwidth + 1, n))
    np.add.at(band, (offsets, Ap.col[lower]), Ap.data[lower])

    if n:
        c, info = lapack.dpbtrf(band, lower=1)
        if info > 0:
            pivot = int(permutation[info - 1])
            raise NotPositiveDefinite(pivot)
        if info < 0:
            raise NotPositiveDefinite(-1)
        band = c
    logger.debug("cholesky: n=%d, bandwidth=%d.", n, bandwidth)
    return CholeskyFactor(band=band, permutation=permutation, bandwidth=bandwidth)


def solve(fac, rhs):
    """``A^{-1} rhs`` with the factor of ``A``."""
    return fac.solve(rhs)


def energy_norm(op, v):
    return float(np.sqrt(max(op.quadratic_form(v), 0.0)))


def check_ellipticity(theta, y):
    y = np.asarray(y, dtype=float)
    bound = float(theta * np.max(np.abs(y))) if y.size else 0.0
    if not bound < 1.0:
        raise EllipticityViolation(bound)


def direct_parametric_solve(target, theta, y, f=1.0):
    """
    Galerkin solution at a fixed parameter ``y`` with subdomain weights
    ``1 - theta * y_i``.

    :param target: a :class:`Discretization` (reuses its operators and
                   ordering) or a :class:`~neumann_lowrank.mesh.Mesh2D`.
    :raises EllipticityViolation: unless ``theta * |y_i| < 1`` for all ``i``.
    """
    check_ellipticity(theta, y)
    weights = 1.0 - theta * np.asarray(y, dtype=float)
    if isinstance(target, Mesh2D):
        dofmap = build_dofmap(target)
        op = assemble_stiffness(target, weights, dofmap)
        return cholesky(op).solve(assemble_load(target, f, dofmap))
    return target.solve_weighted(weights, target.load(f))


class Discretization(metaclass=SingletonMetaDiscretizationRegistry):
    """
    Mesh, DOF map, operators and factor for one geometry.

    Instances are cached per :class:`~neumann_lowrank.mesh.GeometrySpec`: a
    second construction with the same spec returns the first instance unless
    ``force=True`` is passed. Passing an explicit ``mesh`` bypasses the cache.
    Asking for a cached spec with different keyword parameters raises
    :class:`~neumann_lowrank.exception.CachedParameterMismatch`.

    >>> spec = GeometrySpec.checkerboard(2, refinement_level=2, grading_strength=1.0)
    >>> disc = Discretization(spec)
    >>> Discretization(spec) is disc
    True
    >>> disc.destroy()
    """

    def __init__(self, spec, mesh=None, ordering="rcm"):
        self.spec = spec
        self.ordering = ordering
        self.mesh = mesh if mesh is not None else build_mesh(spec)
        self.dofmap = build_dofmap(self.mesh)
        self.subdomain_operators = tuple(
            assemble_stiffness(self.mesh, np.eye(self.mesh.d)[i], self.dofmap) for i in range(self.mesh.d))
        self.stiffness = assemble_stiffness(self.mesh, np.ones(self.mesh.d), self.dofmap)
        self.factor = cholesky(self.stiffness, ordering=ordering)
        logger.info("%s: %d free DOFs, %d on the skeleton, bandwidth %d.", spec.label if spec else "mesh",
                    self.dofmap.n_free, self.dofmap.n_skeleton, self.factor.bandwidth)

    @property
    def d(self):
        return self.mesh.d

    @property
    def n_free(self):
        return self.dofmap.n_free

    @cached_property
    def symmetry(self):
        """``(symmetric, report)`` of the mesh reflection check."""
        return check_reflection_symmetry(self.mesh)

    def load(self, f=1.0):
        return assemble_load(self.mesh, f, self.dofmap)

    def weighted_operator(self, weights):
        """Stiffness for subdomain weights, as the sum of the unit operators."""
        weights = np.asarray(weights, dtype=float)
        if len(weights) != self.d:
            raise InvalidSubdomainWeights(self.d, list(weights))
        matrix = sum(w * op.matrix for w, op in zip(weights, self.subdomain_operators))
        definiteness = INDEFINITE if np.any(weights < 0) else (
            SEMIDEFINITE if np.any(weights == 0) else POSITIVE_DEFINITE)
        return SparseSymOperator(sp.csr_matrix(matrix), definiteness)

    def solve_weighted(self, weights, rhs):
        op = self.weighted_operator(weights)
        return cholesky(op, permutation=self.factor.permutation).solve(rhs)

    def free_reflections(self):
        """Free DOF permutations of both coordinate reflections (symmetric meshes only)."""
        symmetric, report = self.symmetry
        if not symmetric:
            return None
        return tuple(self.dofmap.free_permutation(m) for m in report.vertex_maps)

    def metadata(self):
        symmetric, _ = self.symmetry
        record = {
            'geometry': self.spec.label if self.spec else None,
            'refinement_level': self.spec.refinement_level if self.spec else None,
            'grading_strength': self.spec.grading_strength if self.spec else None,
            'free_dofs': int(self.dofmap.n_free),
            'skeleton_dofs': int(self.dofmap.n_skeleton),
            'bandwidth': int(self.factor.bandwidth),
            'permutation_sha256': self.factor.permutation_digest(),
            'reflection_symmetric': bool(symmetric),
        }
        record.update(self.mesh.summary())
        return record

    @staticmethod
    def exists(spec):
        """Return True if a discretization for ``spec`` is cached."""
        return SingletonMetaDiscretizationRegistry.registry_exists(spec)

    def destroy(self):
        """Remove this discretization from the cache."""
        if self.spec is not None and SingletonMetaDiscretizationRegistry.lookup(self.spec) is self:
            SingletonMetaDiscretizationRegistry.remove_registry(self.spec)
