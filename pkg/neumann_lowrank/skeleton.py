"""
.. module:: skeleton
   :platform: Unix, Windows
   :synopsis: Steklov-Poincaré operators and symmetry subspaces on a four subdomain skeleton

For a partition into four subdomains meeting in one interior point, every free
vector splits into its skeleton trace and one interior block per subdomain. The
interior blocks of a discrete harmonic extension solve local Dirichlet problems,
so the energy of the extension is ``w^T S w`` with the Schur complement
``S = sum_i S_i``.

The trace space of the 2x2 checkerboard carries three symmetry subspaces: even
traces, traces odd on the horizontal interface line and zero on the vertical
one, and the other way round. The operators

    G_i = theta S^{-1} H_i,  H_1 = S_1 - S_2 - S_3 + S_4,
                             H_2 = S_1 + S_2 - S_3 - S_4,
                             H_3 = S_1 - S_2 + S_3 - S_4

map these subspaces into each other, which bounds the dimension of the spans
generated by the trace Neumann series.
"""

import itertools
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .exception import InvalidConfig, InvalidGeometry, NotPositiveDefinite, SingularInteriorBlock, UnsupportedGeometry
from .fem import SparseSymOperator, cholesky
from .log import get_logger
from .lowrank import DEFAULT_RANK_CUTOFF, factor_singular_values, numerical_rank
from .mesh import DISTORTED
from .pool import resolve

logger = get_logger(__name__)

LEMMA_THRESHOLD = 1e-8
SPAN_CUTOFF = 1e-10
ZERO_TOL = 1e-8
FULL_ENUMERATION_LIMIT = 5
COORD_TOL = 1e-10

# signs of S_1..S_4 in H_1, H_2, H_3
H_SIGNS = {
    1: (1.0, -1.0, -1.0, 1.0),
    2: (1.0, 1.0, -1.0, -1.0),
    3: (1.0, -1.0, 1.0, -1.0),
}


def _relative(numerator, denominator):
    return float(numerator / denominator) if denominator > 0 else 0.0


@dataclass(eq=False)
class _InteriorBlock:
    dofs: np.ndarray
    coupling: sp.csr_matrix
    factor: object


class TraceSpace:
    """
    Skeleton trace space of a four subdomain discretization.

    :param target: a :class:`~neumann_lowrank.neumann.ProblemSetup` or a
                   :class:`~neumann_lowrank.fem.Discretization`.
    :param theta: scaling of the ``G_i``; taken from the setup when omitted and
                  required when ``target`` is a bare discretization.
    :param pool: :class:`~neumann_lowrank.pool.WorkerPool` for the four local
                 Schur complements.
    :raises UnsupportedGeometry: unless the mesh has exactly four subdomains.
    :raises InvalidConfig: when no ``theta`` is given or carried by ``target``.
    """

    def __init__(self, target, theta=None, pool=None):
        disc = getattr(target, "discretization", target)
        if disc.d != 4:
            label = disc.spec.label if disc.spec is not None else f"{disc.d} subdomain"
            raise UnsupportedGeometry(label, "a partition into four subdomains")
        self.discretization = disc
        if theta is None:
            theta = getattr(target, "theta", None)
        if theta is None:
            raise InvalidConfig("theta is required when building a trace space from a discretization.")
        self.theta = float(theta)
        self.dofs = disc.dofmap.skeleton_dofs
        self.cache = {}
        pool = resolve(pool)

        parts = pool.map(self._local_schur, range(disc.d))
        self.blocks = tuple(block for block, _ in parts)
        self.steklov = tuple(S for _, S in parts)
        self.gram = sum(self.steklov)
        try:
            self._gram_factor = sla.cho_factor(self.gram, lower=False, check_finite=False)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(-1)
        logger.info("trace space: %d skeleton DOFs.", self.dimension)

    def _local_schur(self, index):
        disc = self.discretization
        A = disc.subdomain_operators[index].matrix.tocsr()
        interior = disc.dofmap.interior_dofs_of_subdomain[index]
        A_ss = A[self.dofs][:, self.dofs].toarray()
        A_Is = A[interior][:, self.dofs].tocsr()
        try:
            factor = cholesky(A[interior][:, interior])
        except NotPositiveDefinite:
            raise SingularInteriorBlock(index + 1)
        S = A_ss - A_Is.T @ factor.solve(A_Is.toarray())
        S = 0.5 * (S + S.T)
        return _InteriorBlock(interior, A_Is, factor), S

    @property
    def dimension(self):
        return len(self.dofs)

    @cached_property
    def _gram_upper(self):
        return np.triu(self._gram_factor[0])

    def steklov_operator(self, i):
        """``S_i`` for the 1-based subdomain ``i``."""
        return SparseSymOperator(sp.csr_matrix(self.steklov[i - 1]), "positive semidefinite")

    def solve(self, rhs):
        """``S^{-1} rhs``."""
        return sla.cho_solve(self._gram_factor, rhs, check_finite=False)

    def inner(self, v, w):
        return float(v @ (self.gram @ w))

    def norm(self, v):
        """Trace norm ``sqrt(v^T S v)`` per column."""
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(self._gram_upper @ v, axis=0)

    def metric_apply(self, v):
        """``R v`` for the Cholesky factor ``S = R^T R``."""
        return self._gram_upper @ v

    def trace(self, v):
        return np.asarray(v)[self.dofs]

    def extend(self, w):
        """
        Discrete harmonic extension of the trace ``w`` (vector or columns):
        the trace is kept and every interior block solves its local Dirichlet
        problem with zero load.
        """
        w = np.asarray(w, dtype=float)
        out = np.zeros((self.discretization.n_free,) + w.shape[1:])
        out[self.dofs] = w
        for block in self.blocks:
            if len(block.dofs):
                out[block.dofs] = -block.factor.solve(block.coupling @ w)
        return out

    def skeleton_load(self, load):
        """Condensed load ``f_s - sum_i A_si A_ii^{-1} f_i`` on the trace DOFs."""
        load = np.asarray(load, dtype=float)
        condensed = load[self.dofs].copy()
        for block in self.blocks:
            if len(block.dofs):
                condensed -= block.coupling.T @ block.factor.solve(load[block.dofs])
        return condensed

    def g_trace(self, load):
        """``S^{-1} f_Gamma``, the trace of ``A^{-1} f``."""
        return self.solve(self.skeleton_load(load))

    def H(self, i):
        return sum(sign * S for sign, S in zip(H_SIGNS[i], self.steklov))

    @cached_property
    def G_matrices(self):
        """Dense ``G_1, G_2, G_3``."""
        return tuple(self.theta * self.solve(self.H(i)) for i in (1, 2, 3))

    def G(self, i, v):
        return self.G_matrices[i - 1] @ v

    def unscaled_G(self, i, v):
        """``S^{-1} H_i v``, i.e. ``G_i / theta``."""
        return self.G(i, v) / self.theta

    def contraction_ratio(self, y, v):
        """``|theta S^{-1} sum_i y_i S_i v| / |v|`` in the trace norm."""
        y = np.asarray(y, dtype=float)
        norm_v = float(self.norm(v))
        if norm_v == 0.0:
            return 0.0
        applied = self.theta * self.solve(sum(yi * (S @ v) for yi, S in zip(y, self.steklov)))
        return float(self.norm(applied)) / norm_v


def trace_space(setup, pool=None):
    """The :class:`TraceSpace` of ``setup``, built once and kept in ``setup.cache``."""
    if isinstance(setup, TraceSpace):
        return setup
    cache = getattr(setup, "cache", None)
    if cache is None:
        return TraceSpace(setup, pool=pool)
    if "trace_space" not in cache:
        cache["trace_space"] = TraceSpace(setup, pool=pool)
    return cache["trace_space"]


@dataclass(eq=False)
class SymmetryDecomposition:
    """
    Projectors onto even traces (``P_1``), traces odd on the horizontal line
    and zero on the vertical one (``P_2``), and the reverse (``P_3``).

    ``reflection[j]`` is the skeleton position of the point reflection image of
    skeleton DOF ``j``; ``horizontal`` and ``vertical`` flag the two interface
    lines, the crossing point excluded.
    """

    reflection: np.ndarray
    horizontal: np.ndarray
    vertical: np.ndarray
    exact: bool = True

    def reflect(self, v):
        return np.asarray(v)[self.reflection]

    def even(self, v):
        return 0.5 * (v + self.reflect(v))

    def odd(self, v):
        return 0.5 * (v - self.reflect(v))

    def project(self, j, v):
        v = np.asarray(v, dtype=float)
        if j == 1:
            return self.even(v)
        mask = self.horizontal if j == 2 else self.vertical
        return self.odd(v) * (mask[:, None] if v.ndim == 2 else mask)

    def split(self, v):
        return tuple(self.project(j, v) for j in (1, 2, 3))


def symmetry_decomposition(space):
    """
    Build the projectors of ``space``.

    On reflection symmetric meshes the point reflection comes from the vertex
    maps of the mesh. Otherwise the skeleton arms are paired by their relative
    distance from the interior point.
    """
    disc = space.discretization
    coords = disc.mesh.vertices[disc.dofmap.vertex_of_dof[space.dofs]]
    position = np.full(disc.n_free, -1, dtype=np.int64)
    position[space.dofs] = np.arange(space.dimension)

    reflections = disc.free_reflections()
    if reflections is not None:
        flip_x, flip_y = reflections
        reflection = position[flip_x[flip_y[space.dofs]]]
        if np.any(reflection < 0):
            raise InvalidGeometry("point reflection does not map the skeleton onto itself.")
        centre = 0.5 * (disc.mesh.vertices.min(axis=0) + disc.mesh.vertices.max(axis=0))
        on_x = np.abs(coords[:, 1] - centre[1]) < COORD_TOL
        on_y = np.abs(coords[:, 0] - centre[0]) < COORD_TOL
        return SymmetryDecomposition(reflection, on_x & ~on_y, on_y & ~on_x, exact=True)

    logger.warning("mesh is not reflection symmetric: trace reflection taken from the arm correspondence.")
    return _arm_decomposition(disc, coords)


def _arm_decomposition(disc, coords):
    spec = disc.spec
    if spec is None or spec.kind != DISTORTED:
        raise InvalidGeometry("arm correspondence needs the distorted partition the mesh was built from.")
    centre = np.asarray(spec.interior_point, dtype=float)
    # bottom, right, top, left
    directions = [np.asarray(p, dtype=float) - centre for p in spec.edge_points]

    n = len(coords)
    arm = np.full(n, -1)
    fraction = np.zeros(n)
    rel = coords - centre
    for a, D in enumerate(directions):
        length2 = float(D @ D)
        t = rel @ D / length2
        distance = np.abs(rel[:, 0] * D[1] - rel[:, 1] * D[0]) / np.sqrt(length2)
        hit = (distance < COORD_TOL) & (t > COORD_TOL) & (t <= 1.0 + COORD_TOL)
        arm[hit] = a
        fraction[hit] = t[hit]
    at_centre = np.linalg.norm(rel, axis=1) < COORD_TOL
    if np.any((arm < 0) & ~at_centre):
        raise InvalidGeometry("skeleton vertex off the four interface arms.")

    reflection = np.arange(n)
    for a in range(4):
        mine = np.flatnonzero(arm == a)
        theirs = np.flatnonzero(arm == (a + 2) % 4)
        order = np.argsort(fraction[theirs])
        sorted_t = fraction[theirs][order]
        for j in mine:
            k = int(np.clip(np.searchsorted(sorted_t, fraction[j]), 1, max(len(sorted_t) - 1, 1)))
            candidates = [c for c in (k - 1, k) if 0 <= c < len(sorted_t)]
            best = min(candidates, key=lambda c: abs(sorted_t[c] - fraction[j]), default=None)
            if best is None or abs(sorted_t[best] - fraction[j]) > 1e-8:
                raise InvalidGeometry("opposite skeleton arms do not carry matching vertices.")
            reflection[j] = theirs[order[best]]
    horizontal = (arm == 1) | (arm == 3)
    vertical = (arm == 0) | (arm == 2)
    return SymmetryDecomposition(reflection, horizontal, vertical, exact=False)


def decomposition(setup):
    """The :class:`SymmetryDecomposition` of ``setup``, kept in ``setup.cache``."""
    space = trace_space(setup)
    cache = getattr(setup, "cache", None)
    if cache is None:
        return symmetry_decomposition(space)
    if "symmetry_decomposition" not in cache:
        cache["symmetry_decomposition"] = symmetry_decomposition(space)
    return cache["symmetry_decomposition"]


def harmonic_extension(setup, trace_values):
    """Free DOF vector of the discrete harmonic extension of ``trace_values``."""
    return trace_space(setup).extend(trace_values)


def steklov_matrix(setup, i):
    """Steklov-Poincaré operator ``S_i`` of subdomain ``i`` (1-based) on the trace DOFs."""
    return trace_space(setup).steklov_operator(i)


def apply_G(setup, i, v):
    """``theta S^{-1} H_i v`` for ``i`` in 1..3."""
    if i not in H_SIGNS:
        raise InvalidGeometry(f"G_{i} is not defined, 1..3 expected.")
    return trace_space(setup).G(i, np.asarray(v, dtype=float))


def _load(setup, f=None):
    if f is None and hasattr(setup, "load") and not callable(setup.load):
        return setup.load
    return trace_space(setup).discretization.load(1.0 if f is None else f)


def skeleton_load(setup, f=None):
    return trace_space(setup).skeleton_load(_load(setup, f))


def g_trace(setup, f=None):
    """Trace of the solution for ``y = 0``, computed on the skeleton."""
    return trace_space(setup).g_trace(_load(setup, f))


def trace_contraction(setup, y, v):
    return trace_space(setup).contraction_ratio(y, v)


def symmetry_defect(setup, v):
    """``|(I - P_1) v| / |v|`` in the trace norm."""
    space = trace_space(setup)
    v = np.asarray(v, dtype=float)
    return _relative(float(space.norm(v - decomposition(setup).project(1, v))), float(space.norm(v)))


# (name, G index, source subspace, target subspace)
INCLUSIONS = (
    (2, 1, 3),
    (1, 2, 3),
    (3, 1, 2),
    (1, 3, 2),
    (3, 2, 1),
    (2, 3, 1),
)


@dataclass
class LemmaReport:
    """Largest residual of every check over all trials."""

    residuals: dict = field(default_factory=dict)
    threshold: float = LEMMA_THRESHOLD
    n_trials: int = 0
    exact_symmetry: bool = True

    def update(self, name, value):
        self.residuals[name] = max(self.residuals.get(name, 0.0), float(value))

    def failures(self):
        return [name for name, value in self.residuals.items() if not value <= self.threshold]

    @property
    def passed(self):
        return not self.failures()

    def rows(self):
        return list(self.residuals.items())


def lemma_residuals(space, parts, v, w, y):
    """
    Residuals of every check for one set of inputs: ``v`` and ``w`` are trace
    vectors, ``y`` a parameter in ``[-1, 1]^4``. All residuals are relative to
    the trace norm of the input and zero for zero input.
    """
    out = {}
    P = {j: parts.project(j, v) for j in (1, 2, 3)}
    norm = space.norm
    norm_v = float(norm(v))

    for i in (1, 2, 3):
        out[f"annihilation_G{i}_V{i}"] = _relative(float(norm(space.G(i, P[i]))), norm_v)

    for i, source, target in INCLUSIONS:
        image = space.G(i, P[source])
        out[f"inclusion_G{i}_V{source}_in_V{target}"] = _relative(
            float(norm(image - parts.project(target, image))), norm_v)

    # the identities are homogeneous only without the theta scaling
    v2, v3 = P[2], P[3]
    bare = space.unscaled_G
    out["identity_G2G3_v2_equals_G1_v2"] = _relative(float(norm(bare(2, bare(3, v2)) - bare(1, v2))), norm_v)
    out["identity_G3G2_v3_equals_G1_v3"] = _relative(float(norm(bare(3, bare(2, v3)) - bare(1, v3))), norm_v)
    out["identity_G3G3_v2_equals_v2"] = _relative(float(norm(bare(3, bare(3, v2)) - v2)), norm_v)
    out["identity_G2G2_v3_equals_v3"] = _relative(float(norm(bare(2, bare(2, v3)) - v3)), norm_v)

    norm_w = float(norm(w))
    Q = {j: parts.project(j, w) for j in (1, 2, 3)}
    for a, b in ((1, 2), (1, 3), (2, 3)):
        out[f"orthogonality_V{a}_V{b}"] = _relative(abs(space.inner(P[a], Q[b])), norm_v * norm_w)

    out["completeness"] = _relative(float(norm(P[1] + P[2] + P[3] - v)), norm_v)
    for i in (1, 2, 3):
        out[f"self_adjoint_G{i}"] = _relative(
            abs(space.inner(space.G(i, v), w) - space.inner(v, space.G(i, w))), norm_v * norm_w)

    out["trace_contraction"] = max(0.0, space.contraction_ratio(y, v) - space.theta)
    return out


def steklov_conjugacy(space, parts):
    """Entrywise defect of ``S_4 = R S_1 R`` under the point reflection ``R``."""
    S1, S4 = space.steklov[0], space.steklov[3]
    r = parts.reflection
    scale = float(np.max(np.abs(S1))) if S1.size else 0.0
    return _relative(float(np.max(np.abs(S4 - S1[np.ix_(r, r)]))) if S1.size else 0.0, scale)


def verify_lemmas(setup, n_random_trials=20, seed=0, threshold=LEMMA_THRESHOLD):
    """
    Check the subspace mapping properties of ``G_1, G_2, G_3`` on random traces.

    :return: :class:`LemmaReport` with the largest residual of each check;
             residuals above ``threshold`` count as failures.
    """
    space = trace_space(setup)
    parts = decomposition(setup)
    rng = np.random.default_rng(seed)
    report = LemmaReport(threshold=threshold, n_trials=n_random_trials, exact_symmetry=parts.exact)
    for _ in range(n_random_trials):
        v = rng.standard_normal(space.dimension)
        w = rng.standard_normal(space.dimension)
        y = rng.uniform(-1.0, 1.0, size=4)
        for name, value in lemma_residuals(space, parts, v, w, y).items():
            report.update(name, value)
    report.update("conjugacy_S1_S4", steklov_conjugacy(space, parts))

    failed = report.failures()
    if failed:
        logger.warning("%d of %d checks above %.1e: %s", len(failed), len(report.residuals), threshold,
                       ", ".join(failed))
    else:
        logger.info("all %d checks within %.1e.", len(report.residuals), threshold)
    return report


@dataclass(frozen=True)
class SpanGrowthRow:
    k: int
    dim: int
    dim_full: int
    bound_8k1: int
    bound_words: int
    bound_split: int


def span_dimension(space, vectors, cutoff=SPAN_CUTOFF):
    """Numerical dimension of the span of ``vectors`` in the trace metric."""
    if not vectors:
        return 0
    W = np.column_stack(vectors)
    norms = space.norm(W)
    W = W[:, norms > 0] / norms[norms > 0]
    if W.shape[1] == 0:
        return 0
    R = space.metric_apply(W)
    eig = np.linalg.eigvalsh(R.T @ R)
    return int(np.count_nonzero(eig > cutoff * eig.max()))


def _next_node(node, letter):
    """Successor of one component node under ``G_letter``; ``None`` means zero."""
    kind = node[0]
    if kind == "g1":
        if letter == 1:
            return None
        return ("chain", 3, 0) if letter == 2 else ("chain", 2, 0)
    _, c, i = node
    s = c if i % 2 == 0 else 5 - c
    if kind == "chain":
        if letter == 1:
            return ("chain", c, i + 1)
        return None if letter == s else ("side", c, i)
    if letter == 1:
        return None
    return ("chain", c, i) if letter == 5 - s else ("chain", c, i + 1)


def pruned_span(space, components, k_max):
    """
    Distinct nonzero elements of ``F_k(g)`` for ``k = 0..k_max`` without
    enumerating all words.

    ``components`` are the three symmetry parts of ``g`` (``None`` for a zero
    part). Each part moves along a fixed graph: the even part is annihilated
    by ``G_1``, an odd part is annihilated by one of ``G_2, G_3`` depending on
    the parity of its ``G_1`` power, and squares of the other return to the
    chain. A word is thus determined by the three graph nodes it reaches.
    Words are applied without the theta scaling, which leaves every span
    unchanged.

    :return: list over ``k`` of the vectors first reached at that length.
    """
    start = (("g1",) if components[0] is not None else None,
             ("chain", 2, 0) if components[1] is not None else None,
             ("chain", 3, 0) if components[2] is not None else None)
    values = {}
    for slot, node in enumerate(start):
        if node is not None:
            values[(slot, node)] = components[slot]

    def vector(state):
        return sum(values[(slot, node)] for slot, node in enumerate(state) if node is not None)

    levels = [[vector(start)]] if any(n is not None for n in start) else [[]]
    seen = {start}
    frontier = deque([start])
    for _ in range(k_max):
        nxt = deque()
        found = []
        while frontier:
            state = frontier.popleft()
            for letter in (1, 2, 3):
                child = []
                for slot, node in enumerate(state):
                    if node is None:
                        child.append(None)
                        continue
                    image = _next_node(node, letter)
                    if image is not None and (slot, image) not in values:
                        values[(slot, image)] = space.unscaled_G(letter, values[(slot, node)])
                    child.append(image)
                child = tuple(child)
                if all(n is None for n in child) or child in seen:
                    continue
                seen.add(child)
                nxt.append(child)
                found.append(vector(child))
        levels.append(found)
        frontier = nxt
    return levels


def full_span(space, g, k_max, zero_tol=ZERO_TOL):
    """All words of length ``<= k_max`` applied to ``g``, level by level.

    Words use the unscaled ``G_i / theta``, whose trace norms are at most one.
    Images below ``zero_tol * |g|`` are dropped together with their descendants.
    """
    scale = float(space.norm(g))
    level = [g] if scale > 0 else []
    levels = [list(level)]
    limit = zero_tol * scale
    for _ in range(1, k_max + 1):
        images = (space.unscaled_G(i, v) for v in level for i in (1, 2, 3))
        level = [w for w in images if float(space.norm(w)) > limit]
        levels.append(level)
    return levels


def span_growth(setup, g=None, k_max=6, full_limit=FULL_ENUMERATION_LIMIT, cutoff=SPAN_CUTOFF,
                zero_tol=ZERO_TOL):
    """
    Numerical dimension of ``span F_k(g)`` for ``k = 0..k_max``.

    :param g: trace vector, ``S^{-1} f_Gamma`` of the setup when omitted.
    :param full_limit: largest ``k`` also checked by enumerating all ``3**k``
                       words; ``dim_full`` is ``-1`` beyond it.
    :return: list of :class:`SpanGrowthRow`.
    """
    space = trace_space(setup)
    parts = decomposition(setup)
    g = g_trace(setup) if g is None else np.asarray(g, dtype=float)
    scale = float(space.norm(g))
    components = [c if float(space.norm(c)) > zero_tol * scale else None for c in parts.split(g)]

    pruned = pruned_span(space, components, k_max)
    full_k = min(full_limit, k_max)
    if k_max > full_limit:
        logger.info("span growth: full enumeration stops at k=%d.", full_limit)
    full = full_span(space, g, full_k, zero_tol)

    rows = []
    for k in range(k_max + 1):
        dim = span_dimension(space, list(itertools.chain.from_iterable(pruned[:k + 1])), cutoff)
        dim_full = span_dimension(space, list(itertools.chain.from_iterable(full[:k + 1])), cutoff) \
            if k <= full_k else -1
        rows.append(SpanGrowthRow(k=k, dim=dim, dim_full=dim_full, bound_8k1=8 * k + 1,
                                  bound_words=3 ** k + 1, bound_split=3 * (2 ** (k + 1) - 1)))
        logger.debug("span growth k=%d: %d (full %d).", k, dim, dim_full)
    return rows


@dataclass(frozen=True)
class RankSplit:
    interior_ranks: tuple
    trace_rank: int
    interior_singular_values: tuple
    trace_singular_values: np.ndarray

    @property
    def total_bound(self):
        return len(self.interior_ranks) + self.trace_rank


def skeleton_rank_split(setup, pair, cutoff=DEFAULT_RANK_CUTOFF):
    """
    Ranks of the trace part and of the interior remainders of ``pair``.

    The iterate splits energy orthogonally into the harmonic extension of its
    trace and one block per subdomain vanishing on the skeleton; the trace part
    is measured in the trace norm, each block in the energy of its subdomain.
    """
    space = trace_space(setup)
    V_s = space.trace(pair.V)
    trace_sigma = factor_singular_values(space.metric_apply(V_s), pair.Phi) if pair.rank else np.zeros(0)
    harmonic = space.extend(V_s)

    interior_sigma = []
    for block in space.blocks:
        if not len(block.dofs) or not pair.rank:
            interior_sigma.append(np.zeros(0))
            continue
        remainder = pair.V[block.dofs] - harmonic[block.dofs]
        interior_sigma.append(factor_singular_values(block.factor.mul_Lt(remainder), pair.Phi))

    return RankSplit(interior_ranks=tuple(numerical_rank(s, cutoff) for s in interior_sigma),
                     trace_rank=numerical_rank(trace_sigma, cutoff),
                     interior_singular_values=tuple(interior_sigma),
                     trace_singular_values=trace_sigma)
