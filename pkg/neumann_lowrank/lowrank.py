"""
.. module:: lowrank
   :platform: Unix, Windows
   :synopsis: factored semidiscrete functions and SVD truncation in the energy metric

A :class:`LowRankPair` represents the ``M x N`` coefficient matrix ``V Phi^T``:
column ``nu`` is the finite element coefficient vector of the Legendre
coefficient ``u_nu``. Singular values are taken with respect to the energy inner
product on the spatial side and the Euclidean one on the parametric side, which
is done by working with ``L^T V`` for the Cholesky factor ``L``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .exception import DimensionMismatch, InvalidConfig, InvalidTolerance
from .log import get_logger

logger = get_logger(__name__)

DEFAULT_TRUNCATION = 1e-15
DEFAULT_RANK_CUTOFF = 1e-10
ABSOLUTE = "absolute"
RELATIVE = "relative"


@dataclass(frozen=True, eq=False)
class LowRankPair:
    """
    ``u = V Phi^T``.

    After :func:`svd_truncate` the pair is in SVD-normalized form: the columns
    of ``L^T V`` are orthogonal with norms ``sigma``, the columns of ``Phi`` are
    orthonormal and ``sigma`` is positive and nonincreasing.
    """

    V: np.ndarray
    Phi: np.ndarray
    sigma: np.ndarray = None

    def __post_init__(self):
        if self.V.ndim != 2 or self.Phi.ndim != 2 or self.V.shape[1] != self.Phi.shape[1]:
            raise DimensionMismatch("factors with equal column counts", f"{self.V.shape} and {self.Phi.shape}")

    @classmethod
    def zeros(cls, M, N):
        return cls(np.zeros((M, 0)), np.zeros((N, 0)), np.zeros(0))

    @classmethod
    def outer(cls, v, phi):
        return cls(np.asarray(v, dtype=float).reshape(-1, 1), np.asarray(phi, dtype=float).reshape(-1, 1))

    @property
    def rank(self):
        """Representation rank (number of factor columns)."""
        return self.V.shape[1]

    @property
    def shape(self):
        return self.V.shape[0], self.Phi.shape[0]

    def to_dense(self):
        return self.V @ self.Phi.T

    def negate(self):
        return LowRankPair(-self.V, self.Phi)

    def scaled(self, factor):
        return LowRankPair(factor * self.V, self.Phi)


@dataclass(frozen=True)
class TruncationReport:
    input_rank: int
    output_rank: int
    discarded_tail_norm: float
    singular_values: np.ndarray


@dataclass(frozen=True, eq=False)
class SumTerm:
    """
    One block ``V (op @ Phi)^T`` of a formal sum; ``op`` is an optional sparse
    matrix acting on the parametric side.
    """

    V: np.ndarray
    Phi: np.ndarray
    op: object = None

    @property
    def rank(self):
        return self.V.shape[1]

    def parametric(self):
        return self.Phi if self.op is None else self.op @ self.Phi


def add(pairs):
    """Concatenate factors; the representation rank is the sum of the ranks."""
    pairs = list(pairs)
    if not pairs:
        raise DimensionMismatch("at least one pair", 0)
    shape = pairs[0].shape
    for pair in pairs[1:]:
        if pair.shape != shape:
            raise DimensionMismatch(shape, pair.shape)
    return LowRankPair(np.hstack([p.V for p in pairs]), np.hstack([p.Phi for p in pairs]))


def _orthogonalize(A):
    """Economic QR; the two factors reproduce ``A``."""
    if A.shape[1] == 0:
        return np.zeros((A.shape[0], 0)), np.zeros((0, 0))
    return sla.qr(A, mode="economic", check_finite=False)


def _core_svd(W, Phi):
    """SVD of ``W Phi^T`` through QR of both factors."""
    Q1, R1 = _orthogonalize(W)
    Q2, R2 = _orthogonalize(Phi)
    if R1.size == 0 or R2.size == 0:
        return Q1[:, :0], np.zeros(0), Q2[:, :0]
    core = R1 @ R2.T
    try:
        U, s, Zt = sla.svd(core, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        U, s, Zt = sla.svd(core, full_matrices=False, lapack_driver="gesvd", check_finite=False)
    return Q1 @ U, s, Q2 @ Zt.T


def factor_singular_values(W, Phi):
    """Singular values of ``W Phi^T`` (Euclidean on both sides)."""
    return _core_svd(np.asarray(W, dtype=float), np.asarray(Phi, dtype=float))[1]


def retained_rank(s, tol):
    """Smallest ``n`` whose discarded tail ``sqrt(sum_{k >= n} s_k^2)`` is at most ``tol``."""
    tail = np.sqrt(np.cumsum((s ** 2)[::-1])[::-1])
    keep = np.flatnonzero(tail > tol)
    return int(keep[-1] + 1) if keep.size else 0


def _check_tolerance(tol, mode):
    if tol < 0 or not np.isfinite(tol):
        raise InvalidTolerance(tol)
    if mode not in (ABSOLUTE, RELATIVE):
        raise InvalidConfig(f"unknown truncation mode {mode!r}.")


def svd_truncate(pair, metric, tol=DEFAULT_TRUNCATION, mode=ABSOLUTE):
    """
    Truncated SVD of ``pair`` in the metric of ``metric`` (a Cholesky factor).

    The spatial factor ``L^T V`` and the parametric factor are orthogonalized
    and the SVD runs on the small core, so the cost stays linear in the factor
    lengths.

    :param tol: bound for the Frobenius norm of the discarded part; with
                ``mode="relative"`` it is scaled by the Frobenius norm of the input.
    :return: ``(pair, report)`` with the output in SVD-normalized form.
    :raises InvalidTolerance: for negative ``tol``.
    """
    _check_tolerance(tol, mode)
    M, N = pair.shape
    if pair.rank == 0:
        return LowRankPair.zeros(M, N), TruncationReport(0, 0, 0.0, np.zeros(0))

    X, s, Y = _core_svd(metric.mul_Lt(pair.V), pair.Phi)
    threshold = tol * float(np.sqrt(np.sum(s ** 2))) if mode == RELATIVE else tol
    n = retained_rank(s, threshold)
    tail = float(np.sqrt(np.sum(s[n:] ** 2)))

    X, Y, sigma = X[:, :n], Y[:, :n], s[:n].copy()
    if n:
        lead = np.argmax(np.abs(Y), axis=0)
        signs = np.sign(Y[lead, np.arange(n)])
        signs[signs == 0] = 1.0
        X, Y = X * signs, Y * signs
    V = metric.solve_Lt(X) * sigma if n else np.zeros((M, 0))
    report = TruncationReport(input_rank=pair.rank, output_rank=n, discarded_tail_norm=tail, singular_values=s)
    return LowRankPair(V, Y, sigma), report


def truncate_sum(terms, metric, tol=DEFAULT_TRUNCATION, mode=ABSOLUTE):
    """
    Truncate ``sum_b V_b (op_b Phi_b)^T`` without materializing all blocks when
    the representation rank exceeds the spatial dimension.

    In that case the stacked spatial factor ``L^T [V_1 ... V_B]`` is reduced by a
    QR decomposition ``Q R`` first and the parametric side is accumulated as
    ``sum_b op_b (Phi_b R_b^T)``, which has only ``M`` columns.

    :return: ``(pair, report)`` as :func:`svd_truncate`; ``report.input_rank``
             is the formal representation rank of the sum.
    """
    _check_tolerance(tol, mode)
    terms = [t for t in terms if t.rank]
    if not terms:
        raise DimensionMismatch("at least one nonempty term", 0)
    total = sum(t.rank for t in terms)
    M = terms[0].V.shape[0]

    if total <= M:
        pair = LowRankPair(np.hstack([t.V for t in terms]), np.hstack([t.parametric() for t in terms]))
        return svd_truncate(pair, metric, tol, mode)

    Q, R = sla.qr(metric.mul_Lt(np.hstack([t.V for t in terms])), mode="economic", check_finite=False)
    Y = None
    start = 0
    for term in terms:
        block = R[:, start:start + term.rank]
        start += term.rank
        part = term.Phi @ block.T
        if term.op is not None:
            part = term.op @ part
        Y = part if Y is None else Y + part
    logger.debug("compressed a sum of rank %d to %d spatial columns.", total, Q.shape[1])
    compressed = LowRankPair(metric.solve_Lt(Q), Y)
    pair, report = svd_truncate(compressed, metric, tol, mode)
    return pair, TruncationReport(total, report.output_rank, report.discarded_tail_norm, report.singular_values)


def singular_values_in_metric(pair, metric):
    """All singular values of ``pair``, nonincreasing, without truncation."""
    if pair.rank == 0:
        return np.zeros(0)
    return factor_singular_values(metric.mul_Lt(pair.V), pair.Phi)


def frobenius_norm(pair, metric):
    return float(np.sqrt(np.sum(singular_values_in_metric(pair, metric) ** 2)))


def numerical_rank(sigma, cutoff_relative=DEFAULT_RANK_CUTOFF):
    """
    Count of singular values above ``cutoff_relative * sigma[0]``.

    >>> numerical_rank([1.0, 1e-3, 1e-20])
    2
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.size == 0 or sigma[0] <= 0:
        return 0
    return int(np.count_nonzero(sigma > cutoff_relative * sigma[0]))


def coefficient_norms(pair, metric, dense=False):
    """
    Energy norms of the Legendre coefficients ``u_nu = V Phi[nu]^T``.

    ``dense=True`` forms the full coefficient matrix first; both paths agree up
    to rounding.
    """
    if pair.rank == 0:
        return np.zeros(pair.shape[1])
    if dense:
        return metric.energy_norm(pair.to_dense())
    W = metric.mul_Lt(pair.V)
    gram = W.T @ W
    squares = np.einsum("ij,jk,ik->i", pair.Phi, gram, pair.Phi)
    return np.sqrt(np.maximum(squares, 0.0))
