"""
.. module:: oned
   :platform: Unix, Windows
   :synopsis: exact solutions and snapshot ranks on the interval

On ``]0, 1[`` split into ``d`` equal subintervals with coefficient
``a_i = 1 - theta * y_i`` on the ``i``-th one, the flux ``a u'`` is affine, so on
every subinterval

    u = alpha_i + beta_i x + gamma_i x**2 / 2,   beta_i = c / a_i,  gamma_i = -f / a_i,

with one flux constant ``c`` fixed by ``u(1) = 0``. The solution manifold thus
lies in a space of dimension ``2d - 1`` at most. P1 finite elements on a mesh
aligned with the breakpoints are nodally exact for this problem.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exception import DimensionMismatch, EllipticityViolation, InsufficientSamples
from .fem import SparseSymOperator, check_ellipticity, cholesky
from .legendre import evaluate_expansion
from .log import get_logger
from .lowrank import factor_singular_values, singular_values_in_metric
from .mesh import build_interval_mesh
from .neumann import iterate, parameter_samples, proportional_setup
from .pool import resolve

logger = get_logger(__name__)

DEFAULT_CELLS = 8


@dataclass(frozen=True, eq=False)
class Snapshot1D:
    """
    Closed form solution for one parameter.

    ``alpha``, ``beta`` and ``gamma`` hold the coefficients of ``1``, ``x`` and
    ``x**2 / 2`` per subinterval; ``nodal`` holds the values at the free nodes of
    the mesh the snapshot was requested for (empty without a mesh).
    """

    y: np.ndarray
    theta: float
    f: float
    breakpoints: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    nodal: np.ndarray

    @property
    def d(self):
        return len(self.y)

    @property
    def coefficient(self):
        return 1.0 - self.theta * self.y

    def piece(self, x):
        """Subinterval index (0-based) of every point of ``x``."""
        x = np.asarray(x, dtype=float)
        return np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, self.d - 1)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        i = self.piece(x)
        return self.alpha[i] + self.beta[i] * x + 0.5 * self.gamma[i] * x ** 2

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        i = self.piece(x)
        return self.beta[i] + self.gamma[i] * x

    def continuity_defect(self):
        """Largest jump of ``u`` and of ``a u'`` across the interior breakpoints."""
        if self.d == 1:
            return 0.0, 0.0
        x = self.breakpoints[1:-1]
        left = np.arange(self.d - 1)
        right = left + 1
        value_jump = (self.alpha[right] - self.alpha[left] + (self.beta[right] - self.beta[left]) * x
                      + 0.5 * (self.gamma[right] - self.gamma[left]) * x ** 2)
        a = self.coefficient
        flux_jump = (a[right] * (self.beta[right] + self.gamma[right] * x)
                     - a[left] * (self.beta[left] + self.gamma[left] * x))
        return float(np.max(np.abs(value_jump))), float(np.max(np.abs(flux_jump)))


def solve_1d_analytic(d, theta, y, f=1.0, mesh=None):
    """
    Exact solution of ``-((1 - theta y_i) u')' = f`` with ``u(0) = u(1) = 0``.

    :param mesh: optional :class:`~neumann_lowrank.mesh.IntervalMesh`; the
                 snapshot then carries the values at its free nodes.
    :raises EllipticityViolation: unless ``theta * |y_i| < 1``.

    >>> snap = solve_1d_analytic(1, 0.5, [0.0])
    >>> round(float(snap.evaluate(0.5)), 12)
    0.125
    """
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != d:
        raise DimensionMismatch(d, len(y))
    check_ellipticity(theta, y)
    a = 1.0 - theta * y
    x = np.arange(d + 1) / d
    h = np.diff(x)
    squares = np.diff(x ** 2)

    c = f * np.sum(squares / (2.0 * a)) / np.sum(h / a)
    beta = c / a
    gamma = -f / a
    alpha = np.zeros(d)
    for i in range(1, d):
        xi = x[i]
        alpha[i] = alpha[i - 1] + (beta[i - 1] - beta[i]) * xi + 0.5 * (gamma[i - 1] - gamma[i]) * xi ** 2

    snap = Snapshot1D(y=y, theta=float(theta), f=float(f), breakpoints=x, alpha=alpha, beta=beta, gamma=gamma,
                      nodal=np.zeros(0))
    if mesh is None:
        return snap
    if mesh.d != d:
        raise DimensionMismatch(d, mesh.d)
    return Snapshot1D(y=y, theta=float(theta), f=float(f), breakpoints=x, alpha=alpha, beta=beta, gamma=gamma,
                      nodal=snap.evaluate(mesh.nodes[~mesh.is_dirichlet]))


def assemble_interval_stiffness(mesh, weights):
    """P1 stiffness on the free nodes with weight ``weights[i - 1]`` on subinterval ``i``."""
    weights = np.asarray(weights, dtype=float)
    if len(weights) != mesh.d:
        raise DimensionMismatch(mesh.d, len(weights))
    n = len(mesh.nodes)
    h = np.diff(mesh.nodes)
    w = weights[mesh.cell_subdomain - 1] / h
    cells = np.arange(n - 1)
    rows = np.concatenate([cells, cells + 1, cells, cells + 1])
    cols = np.concatenate([cells, cells + 1, cells + 1, cells])
    vals = np.concatenate([w, w, -w, -w])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    free = np.flatnonzero(~mesh.is_dirichlet)
    return SparseSymOperator(K[free][:, free].tocsr())


def assemble_interval_load(mesh, f=1.0):
    """``f h / 2`` from every cell to each of its two nodes, free nodes only."""
    h = np.diff(mesh.nodes)
    load = np.zeros(len(mesh.nodes))
    load[:-1] += 0.5 * f * h
    load[1:] += 0.5 * f * h
    return load[~mesh.is_dirichlet]


def solve_1d_fem(mesh, theta, y, f=1.0):
    """Nodal P1 Galerkin solution at the free nodes."""
    y = np.asarray(y, dtype=float)
    check_ellipticity(theta, y)
    op = assemble_interval_stiffness(mesh, 1.0 - theta * y)
    return cholesky(op).solve(assemble_interval_load(mesh, f))


def oned_samples(d, n_samples, seed=0):
    """Seeded uniform samples, plus all corners of ``[-1, 1]^d`` for ``d <= 4``."""
    return parameter_samples(d, n_samples, seed, corners=d <= 4)


def snapshot_matrix(d, theta, n_samples, seed=0, cells=DEFAULT_CELLS, f=1.0, pool=None):
    """Free node values of the exact solutions at :func:`oned_samples`, one per column."""
    if n_samples < 2 * d:
        raise InsufficientSamples(n_samples, 2 * d)
    mesh = build_interval_mesh(d, cells)
    samples = oned_samples(d, n_samples, seed)
    columns = resolve(pool).map(lambda y: solve_1d_analytic(d, theta, y, f, mesh).nodal, samples)
    return mesh, samples, np.column_stack(columns)


def snapshot_rank(d, theta, n_samples, seed=0, cells=DEFAULT_CELLS, f=1.0, pool=None):
    """
    Singular values of the snapshot matrix in the ``H^1_0`` seminorm.

    :raises InsufficientSamples: for fewer than ``2 d`` samples.
    :return: nonincreasing singular values.
    """
    mesh, _, U = snapshot_matrix(d, theta, n_samples, seed, cells, f, pool)
    metric = cholesky(assemble_interval_stiffness(mesh, np.ones(d)))
    sigma = factor_singular_values(metric.mul_Lt(U), np.eye(U.shape[1]))
    logger.info("1d snapshots: d=%d, %d samples, sigma_%d/sigma_1 = %.3e.", d, U.shape[1], min(2 * d, len(sigma)),
                sigma[min(2 * d, len(sigma)) - 1] / sigma[0])
    return sigma


def singular_value_ratio(sigma, k):
    """``sigma_k / sigma_1`` (1-based), zero when fewer than ``k`` values exist."""
    sigma = np.asarray(sigma, dtype=float)
    if len(sigma) < k or sigma[0] == 0:
        return 0.0
    return float(sigma[k - 1] / sigma[0])


@dataclass
class ProportionalCheck:
    setup: object
    pair: object
    trace: object
    sigma: np.ndarray

    @property
    def ratio(self):
        return singular_value_ratio(self.sigma, 2)


def proportional_rank_check(disc, c, f=1.0, J=24, k_max=120, eps=1e-15, stop_tol=1e-14, pool=None):
    """
    Run the iteration for ``psi_i = c_i a0``; the solution is ``g / (1 - c . y)``
    and every iterate has rank one.

    :raises EllipticityViolation: for ``sum |c_i| >= 1``.
    :return: :class:`ProportionalCheck` with all singular values of the final pair.
    """
    c = np.asarray(c, dtype=float)
    if not np.sum(np.abs(c)) < 1.0:
        raise EllipticityViolation(float(np.sum(np.abs(c))))
    setup = proportional_setup(disc, c, f=f, J=J)
    pair, trace = iterate(setup, k_max, eps=eps, stop_tol=stop_tol, pool=pool)
    return ProportionalCheck(setup=setup, pair=pair, trace=trace, sigma=singular_values_in_metric(pair, setup.factor))


def proportional_factor_defect(check, samples):
    """
    Largest relative deviation of ``<u(y), g> / |g|^2`` (energy inner product)
    from ``1 / (1 - c . y)`` over ``samples``.
    """
    setup = check.setup
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    values = evaluate_expansion(check.pair, setup.index_set, samples)
    Ag = setup.stiffness @ setup.g
    factors = (Ag @ values) / float(setup.g @ Ag)
    exact = 1.0 / (1.0 - samples @ setup.coefficients)
    return float(np.max(np.abs(factors - exact) / np.abs(exact)))
