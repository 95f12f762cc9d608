"""
.. module:: neumann
   :platform: Unix, Windows
   :synopsis: truncated Neumann iteration in low-rank form and its diagnostics

The parametric problem ``(A0 - sum_i y_i A_i) u(y) = f`` is solved by the
fixed-point iteration ``u_{k+1} = g + sum_i y_i B_i u_k`` with ``B_i = A0^{-1} A_i``
and ``g = A0^{-1} f``, carried out on the Legendre coefficients: one step is

    V_{k+1} Phi_{k+1}^T = g e_0^T + sum_i (B_i V_k) (M_i Phi_k)^T

followed by an SVD truncation in the energy metric. Without truncation and for
``k < J`` the iterate is exactly the Taylor partial sum of degree ``k``.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exception import EllipticityViolation, InvalidConfig, TaylorDegreeExceeded
from .fem import SparseSymOperator, cholesky
from .legendre import (evaluate_expansion, monomial_coefficients,
                       monomial_to_legendre_1d, multiplication_matrices, n_dk, total_degree_set)
from .log import get_logger
from .lowrank import (ABSOLUTE, DEFAULT_RANK_CUTOFF, DEFAULT_TRUNCATION, LowRankPair, SumTerm, add,
                      factor_singular_values, frobenius_norm, numerical_rank, svd_truncate, truncate_sum)
from .pool import resolve

logger = get_logger(__name__)

PARTITIONED = "partitioned"
PROPORTIONAL = "proportional"
DEFAULT_TAYLOR_CAP = 30
DEFAULT_SAMPLE_COUNT = 20
DECAY_THRESHOLD = 1e-8


@dataclass(eq=False)
class ProblemSetup:
    """
    Everything one iteration needs.

    ``operators[i]`` discretizes ``psi_{i+1}``; ``rho`` is the contraction
    factor of ``sum_i y_i B_i`` in the energy norm (``theta`` for the partitioned
    problem, ``sum |c_i|`` for ``psi_i = c_i a0``).
    """

    discretization: object
    operators: tuple
    load: np.ndarray
    g: np.ndarray
    theta: float
    index_set: object
    multiplication: tuple
    rho: float
    kind: str = PARTITIONED
    coefficients: np.ndarray = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def mesh(self):
        return self.discretization.mesh

    @property
    def dofmap(self):
        return self.discretization.dofmap

    @property
    def stiffness(self):
        return self.discretization.stiffness

    @property
    def factor(self):
        return self.discretization.factor

    @property
    def d(self):
        return len(self.operators)

    @property
    def M(self):
        return len(self.g)

    @property
    def N(self):
        return len(self.index_set)

    @property
    def J(self):
        return self.index_set.J

    def apply_B(self, i, V):
        """``B_i V = A0^{-1} A_i V`` for the 0-based operator index ``i``."""
        return self.factor.solve(self.operators[i] @ V)

    def operator_at(self, y):
        """``A0 - sum_i y_i A_i``."""
        y = np.asarray(y, dtype=float)
        matrix = self.stiffness.matrix - sum(yi * op.matrix for yi, op in zip(y, self.operators))
        return SparseSymOperator(matrix.tocsr())

    def check_parameter(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.d,):
            raise InvalidConfig(f"parameter of shape {y.shape} given, ({self.d},) expected.")
        if np.any(np.abs(y) > 1.0):
            raise EllipticityViolation(float(self.rho * np.max(np.abs(y))))
        return y

    def direct_solve(self, y):
        """Galerkin solution at ``y`` by factoring the assembled operator."""
        y = self.check_parameter(y)
        fac = cholesky(self.operator_at(y), permutation=self.factor.permutation)
        return fac.solve(self.load)

    def energy_norm(self, v):
        return self.factor.energy_norm(v)


def _finish_setup(disc, operators, f, theta, J, rho, kind, coefficients=None, cap=None):
    if not rho < 1.0:
        raise EllipticityViolation(rho)
    index_set = total_degree_set(len(operators), J) if cap is None else total_degree_set(len(operators), J, cap)
    load = disc.load(f)
    g = disc.factor.solve(load)
    logger.info("%s setup: d=%d, J=%d, N=%d, M=%d, rho=%g.", kind, len(operators), J, len(index_set),
                len(g), rho)
    return ProblemSetup(discretization=disc, operators=tuple(operators), load=load, g=g, theta=theta,
                        index_set=index_set, multiplication=multiplication_matrices(index_set), rho=rho,
                        kind=kind, coefficients=coefficients)


def partitioned_setup(disc, theta=0.5, f=1.0, J=11, cap=None):
    """``psi_i = theta * chi_{D_i}`` on a partitioned domain with unit mean coefficient."""
    if not 0.0 < theta < 1.0:
        raise EllipticityViolation(theta)
    operators = [op.scaled(theta) for op in disc.subdomain_operators]
    return _finish_setup(disc, operators, f, theta, J, rho=theta, kind=PARTITIONED, cap=cap)


def proportional_setup(disc, c, f=1.0, J=11, cap=None):
    """``psi_i = c_i * a0`` so that ``A_i = c_i A0``."""
    c = np.asarray(c, dtype=float)
    rho = float(np.sum(np.abs(c)))
    if not rho < 1.0:
        raise EllipticityViolation(rho)
    operators = [disc.stiffness.scaled(ci) for ci in c]
    return _finish_setup(disc, operators, f, rho, J, rho=rho, kind=PROPORTIONAL, coefficients=c, cap=cap)


@dataclass
class StepRecord:
    k: int
    rank_before: int
    rank_after: int
    singular_values: np.ndarray
    discarded_tail: float
    wall_time: float
    step_difference: float = float("nan")


@dataclass
class IterationTrace:
    steps: list = field(default_factory=list)
    final: LowRankPair = None
    converged: bool = False

    def ranks(self):
        return [s.rank_after for s in self.steps]

    def append(self, record):
        if record.k != len(self.steps):
            raise InvalidConfig(f"step {record.k} recorded after {len(self.steps)} steps.")
        self.steps.append(record)


def initial_pair(setup):
    e0 = np.zeros(setup.N)
    e0[0] = 1.0
    return LowRankPair.outer(setup.g, e0)


def step_terms(setup, pair, pool=None):
    """The ``d + 1`` blocks of one iteration step applied to ``pair``."""
    pool = resolve(pool)
    e0 = np.zeros((setup.N, 1))
    e0[0, 0] = 1.0
    terms = [SumTerm(setup.g.reshape(-1, 1), e0)]
    if pair.rank:
        solved = pool.map(lambda i: setup.apply_B(i, pair.V), range(setup.d))
        terms.extend(SumTerm(BV, pair.Phi, M) for BV, M in zip(solved, setup.multiplication))
    return terms


def iterate(setup, k_max, eps=DEFAULT_TRUNCATION, mode=ABSOLUTE, stop_tol=None, pool=None, callback=None):
    """
    Run the truncated iteration from ``u_0 = g e_0^T``.

    :param k_max: number of steps.
    :param eps: truncation tolerance of every step.
    :param stop_tol: stop early once discarded tail plus step difference (both
                     in the energy Frobenius norm) fall below this value.
    :param pool: :class:`~neumann_lowrank.pool.WorkerPool` for the ``d`` solves
                 of a step.
    :param callback: called as ``callback(k, pair, record)`` after every step.
    :return: ``(pair, trace)``.
    """
    if k_max < 0:
        raise InvalidConfig(f"k_max must be nonnegative, got {k_max}.")
    if not setup.rho < 1.0:
        raise EllipticityViolation(setup.rho)
    pool = resolve(pool)
    trace = IterationTrace()

    started = time.perf_counter()
    start_pair = initial_pair(setup)
    if not np.any(setup.g):
        start_pair = LowRankPair.zeros(setup.M, setup.N)
    pair, report = svd_truncate(start_pair, setup.factor, eps, mode)
    record = StepRecord(0, start_pair.rank, report.output_rank, report.singular_values,
                        report.discarded_tail_norm, time.perf_counter() - started)
    trace.append(record)
    if callback:
        callback(0, pair, record)

    for k in range(1, k_max + 1):
        started = time.perf_counter()
        terms = step_terms(setup, pair, pool)
        new, report = truncate_sum(terms, setup.factor, eps, mode)
        difference = frobenius_norm(add([new, pair.negate()]), setup.factor) if stop_tol is not None else float("nan")
        record = StepRecord(k, report.input_rank, report.output_rank, report.singular_values,
                            report.discarded_tail_norm, time.perf_counter() - started, difference)
        trace.append(record)
        logger.info("step %d: rank %d -> %d, tail %.3e.", k, record.rank_before, record.rank_after,
                    record.discarded_tail)
        logger.debug("step %d took %.3f s.", k, record.wall_time)
        pair = new
        if callback:
            callback(k, pair, record)
        if stop_tol is not None and record.discarded_tail + difference < stop_tol:
            trace.converged = True
            logger.info("converged after %d steps.", k)
            break

    trace.final = pair
    return pair, trace


class TaylorCoefficients:
    """
    Memoized Taylor coefficients ``t_nu = sum_{i: nu_i > 0} B_i t_{nu - e_i}``,
    ``t_0 = g``.
    """

    def __init__(self, setup, cap=DEFAULT_TAYLOR_CAP):
        self.setup = setup
        self.cap = cap
        self.__cache = {(0,) * setup.d: setup.g}

    def __len__(self):
        return len(self.__cache)

    def __call__(self, nu):
        nu = tuple(int(v) for v in nu)
        degree = sum(nu)
        if degree > self.cap:
            raise TaylorDegreeExceeded(degree, self.cap)
        cached = self.__cache.get(nu)
        if cached is not None:
            return cached
        total = np.zeros(self.setup.M)
        for i, power in enumerate(nu):
            if power == 0:
                continue
            prev = list(nu)
            prev[i] -= 1
            total += self.setup.apply_B(i, self(prev))
        self.__cache[nu] = total
        return total


def taylor_coefficient(setup, nu, cache=None, cap=DEFAULT_TAYLOR_CAP):
    """Taylor coefficient ``t_nu`` of ``y -> u(y)`` at ``y = 0``."""
    cache = cache if cache is not None else TaylorCoefficients(setup, cap)
    return cache(nu)


def taylor_partial_sum(setup, k, cache=None):
    """
    Dense Legendre coefficient matrix of ``sum_{|nu| <= k} t_nu y**nu``.

    :raises TaylorDegreeExceeded: for ``k > J``.
    """
    if k > setup.J:
        raise TaylorDegreeExceeded(k, setup.J)
    cache = cache if cache is not None else TaylorCoefficients(setup)
    table = monomial_to_legendre_1d(setup.J)
    U = np.zeros((setup.M, setup.N))
    for nu in setup.index_set:
        if sum(nu) > k:
            break
        U += np.outer(cache(nu), monomial_coefficients(nu, setup.index_set, table))
    return U


def contraction_estimate(setup, y, n_power_iters=50, seed=0):
    """
    Power iteration estimate of the energy norm of ``v -> sum_i y_i B_i v``.

    The operator is self-adjoint in the energy inner product, so every ratio
    ``|T v| / |v|`` is a lower bound of the norm; the largest one is returned.
    """
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(setup.M)
    v /= setup.energy_norm(v)
    best = 0.0
    for _ in range(n_power_iters):
        w = setup.factor.solve(sum(yi * (op @ v) for yi, op in zip(y, setup.operators)))
        norm = float(setup.energy_norm(w))
        best = max(best, norm)
        if norm == 0.0:
            break
        v = w / norm
    return best


def parameter_samples(d, count=DEFAULT_SAMPLE_COUNT, seed=0, corners=True, origin=False):
    """
    Seeded uniform samples of ``[-1, 1]^d``, followed by ``2**min(d, 4)``
    corners and optionally the origin.

    For ``d > 4`` the corners vary the first four coordinates; coordinate ``j``
    repeats the sign of coordinate ``j mod 4``.
    """
    rng = np.random.default_rng(seed)
    parts = [rng.uniform(-1.0, 1.0, size=(count, d))]
    if corners:
        q = min(d, 4)
        signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * q), indexing="ij")).reshape(q, -1).T
        parts.append(signs[:, np.arange(d) % q])
    if origin:
        parts.append(np.zeros((1, d)))
    return np.vstack(parts)


class SampledError:
    """
    Sampled sup-norm error against direct solves.

    Reference solutions are computed once per sample (through ``pool``) and
    reused for every iterate.
    """

    def __init__(self, setup, samples, pool=None):
        self.setup = setup
        self.samples = np.asarray(samples, dtype=float)
        self.references = np.column_stack(resolve(pool).map(setup.direct_solve, self.samples))

    def errors(self, pair):
        approx = evaluate_expansion(pair, self.setup.index_set, self.samples)
        return self.setup.energy_norm(approx - self.references)

    def __call__(self, pair):
        return float(np.max(self.errors(pair)))


def sampled_sup_error(setup, iterate_k, sample_count=DEFAULT_SAMPLE_COUNT, seed=0, pool=None):
    """Max over seeded samples of the energy error; a lower bound of the sup error."""
    samples = parameter_samples(setup.d, sample_count, seed)
    return SampledError(setup, samples, pool)(iterate_k)


def apriori_error_bound(setup, k):
    """``|g| rho^(k+1) / (1 - rho)``, the sup error bound of the degree ``k`` partial sum."""
    norm_g = float(setup.energy_norm(setup.g))
    return norm_g * setup.rho ** (k + 1) / (1.0 - setup.rho)


@dataclass(frozen=True)
class RankBounds:
    generic: int
    improved: int
    theorem_2x2: int


def rank_bound_table(d, k):
    """
    Rank bounds of the degree ``k`` partial sum.

    >>> rank_bound_table(4, 10)
    RankBounds(generic=1001, improved=286, theorem_2x2=85)
    """
    return RankBounds(generic=n_dk(d, k), improved=n_dk(d - 1, k), theorem_2x2=8 * k + 5)


def log_linear_fit(sigma, first=5, last=40, cutoff=DEFAULT_RANK_CUTOFF):
    """
    Slope and coefficient of determination of ``log sigma_k`` over ``k = first..last``.

    Only singular values above ``cutoff * sigma_1`` enter the fit, so the
    rounding floor at the end of the sequence does not bend it. Fewer than
    three usable values give ``(nan, nan)``.

    >>> [round(v, 6) for v in log_linear_fit([2.0 ** -k for k in range(20)])]
    [-0.693147, 1.0]
    """
    sigma = np.asarray(sigma, dtype=float)
    last = min(last, numerical_rank(sigma, cutoff))
    k = np.arange(first, last + 1)
    if len(k) < 3:
        return float("nan"), float("nan")
    y = np.log(sigma[k - 1])
    slope, intercept = np.polyfit(k, y, 1)
    residual = y - (slope * k + intercept)
    total = np.sum((y - y.mean()) ** 2)
    return float(slope), float(1.0 - np.sum(residual ** 2) / total) if total > 0 else 1.0


def rank_slope(ranks, first=1):
    """Least-squares slope of ``ranks[k]`` against ``k`` for ``k >= first``."""
    ranks = np.asarray(ranks, dtype=float)[first:]
    if len(ranks) < 2:
        return float("nan")
    return float(np.polyfit(np.arange(first, first + len(ranks)), ranks, 1)[0])


def superlinear_growth(ranks):
    """
    True when some later rank increment exceeds the first one.

    Ranks saturate at ``d + #skeleton`` on a finite mesh, so the last increment
    says nothing about the growth before saturation.

    >>> superlinear_growth([1, 16, 45, 49])
    True
    >>> superlinear_growth([1, 9, 17, 25])
    False
    """
    increments = np.diff(np.asarray(ranks, dtype=int))
    return bool(len(increments) > 1 and np.max(increments[1:]) > increments[0])


def legendre_dominance_violations(sigma, norms, first=5, cutoff=DEFAULT_RANK_CUTOFF, slack=1e-10):
    """
    Indices ``k >= first`` with ``sigma_k`` above the ``k``-th largest Legendre
    coefficient norm.

    Singular values at or below ``cutoff * sigma_1`` are rounding noise and are
    not compared.
    """
    sigma = np.asarray(sigma, dtype=float)
    ordered = np.sort(np.asarray(norms, dtype=float))[::-1]
    count = min(numerical_rank(sigma, cutoff), len(ordered))
    return [k for k in range(first, count + 1) if sigma[k - 1] > ordered[k - 1] * (1.0 + slack)]


@dataclass(frozen=True)
class HalfCount:
    """Singular values and Legendre norms above ``threshold * sigma_1``."""

    threshold: float
    singular_values: int
    legendre_norms: int

    @property
    def holds(self):
        return 2 * self.singular_values <= self.legendre_norms


def half_count(sigma, norms, threshold=DECAY_THRESHOLD):
    """
    Compare how many singular values and how many Legendre norms stay above
    ``threshold * sigma_1``.

    >>> half_count([1.0, 1e-3, 1e-12], [1.0, 0.5, 0.1, 1e-2, 1e-9]).holds
    True
    """
    sigma = np.asarray(sigma, dtype=float)
    norms = np.asarray(norms, dtype=float)
    level = threshold * sigma[0] if sigma.size else 0.0
    return HalfCount(threshold=threshold, singular_values=int(np.count_nonzero(sigma > level)),
                     legendre_norms=int(np.count_nonzero(norms > level)))


@dataclass(frozen=True)
class WidthEstimate:
    """
    Best degree reachable with ``n`` terms and the resulting error bound
    ``rho^(k+1) / (1 - rho)`` (relative to ``|g|``) for each rank bound.
    """

    n: int
    k_generic: int
    bound_generic: float
    k_improved: int
    bound_improved: float
    k_checkerboard: int
    bound_checkerboard: float
    rate_generic: float
    rate_improved: float
    rate_checkerboard: float


def _largest_degree(count, n):
    if count(0) > n:
        return -1
    k = 0
    while count(k + 1) <= n:
        k += 1
    return k


def nwidth_bounds(d, n, rho):
    """
    Upper bounds for the ``n``-width of the solution manifold through the
    rank bounds of the partial sums.

    The ``rate_*`` fields are the asymptotic forms ``exp(-|ln rho| n^(1/d))``,
    ``exp(-|ln rho| n^(1/(d-1)))`` and ``exp(-|ln rho| n / 8)``.
    """
    if n < 1:
        raise InvalidConfig(f"n must be positive, got {n}.")
    log_rho = abs(math.log(rho))

    def bound(k):
        return rho ** (k + 1) / (1.0 - rho) if k >= 0 else float("inf")

    k_gen = _largest_degree(lambda k: n_dk(d, k), n)
    k_imp = _largest_degree(lambda k: n_dk(d - 1, k), n)
    k_chk = (n - 5) // 8 if n >= 5 else -1
    return WidthEstimate(
        n=n, k_generic=k_gen, bound_generic=bound(k_gen), k_improved=k_imp, bound_improved=bound(k_imp),
        k_checkerboard=k_chk, bound_checkerboard=bound(k_chk),
        rate_generic=math.exp(-log_rho * n ** (1.0 / d)),
        rate_improved=math.exp(-log_rho * n ** (1.0 / max(d - 1, 1))),
        rate_checkerboard=math.exp(-log_rho * n / 8.0))


def galerkin_residual(setup, pair):
    """
    Relative residual of the coupled Galerkin system
    ``A0 U - sum_i A_i U M_i = f e_0^T`` in the dual energy norm.
    """
    e0 = np.zeros((setup.N, 1))
    e0[0, 0] = 1.0
    spatial = [setup.load.reshape(-1, 1)]
    parametric = [e0]
    if pair.rank:
        spatial.append(-(setup.stiffness @ pair.V))
        parametric.append(pair.Phi)
        for op, M in zip(setup.operators, setup.multiplication):
            spatial.append(op @ pair.V)
            parametric.append(M @ pair.Phi)
    W = setup.factor.solve_L(np.hstack(spatial))
    sigma = factor_singular_values(W, np.hstack(parametric))
    residual = float(np.sqrt(np.sum(sigma ** 2)))
    scale = float(setup.energy_norm(setup.g))
    return residual / scale if scale else residual

