"""
.. module:: legendre
   :platform: Unix, Windows
   :synopsis: orthonormal tensor Legendre basis and total degree index sets

Polynomials are orthonormal under the uniform probability measure on
``[-1, 1]``, i.e. ``L_n = sqrt(2n + 1) P_n``. Multi-indices of a
:class:`MultiIndexSet` are stored in graded lexicographic order (total degree
first, then lexicographic), position 0 being the zero index. This order is
also the row order of every parametric factor and of exported index files.

.. note::
    The multiplication matrices drop the couplings from total degree ``J`` to
    ``J + 1``: they are the Galerkin discretization of multiplication by
    ``y_i`` on the polynomial space, not an approximation of it.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.special import eval_legendre

from .exception import AxisOutOfRange, DimensionMismatch, IndexSetOverflow, InvalidConfig

DEFAULT_INDEX_CAP = 10 ** 6


def n_dk(d, k):
    """Number of multi-indices in ``d`` variables of total degree at most ``k``.

    >>> n_dk(4, 15), n_dk(16, 5)
    (3876, 20349)
    """
    if k < 0:
        return 0
    return math.comb(k + d, d)


def beta(n):
    """Recurrence coefficient ``<y L_n, L_{n+1}>``."""
    n = np.asarray(n, dtype=float)
    return (n + 1.0) / np.sqrt((2.0 * n + 1.0) * (2.0 * n + 3.0))


@dataclass(frozen=True, eq=False)
class MultiIndexSet:
    """Ordered total degree index set ``{nu : |nu| <= J}``."""

    d: int
    J: int
    indices: np.ndarray
    _position: dict = field(repr=False)

    def __len__(self):
        return len(self.indices)

    @property
    def size(self):
        return len(self.indices)

    def position_of(self, nu):
        """Storage position of ``nu``, or ``None`` if it is not in the set."""
        return self._position.get(tuple(int(v) for v in nu))

    def degrees(self):
        return self.indices.sum(axis=1)

    def __iter__(self):
        return (tuple(row) for row in self.indices.tolist())


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def total_degree_set(d, J, cap=DEFAULT_INDEX_CAP):
    """
    All multi-indices in ``d`` variables with total degree at most ``J``.

    :raises DimensionMismatch: when ``d < 1``.
    :raises InvalidConfig: when ``J < 0``.
    :raises IndexSetOverflow: when the set would hold more than ``cap`` indices.
    """
    if d < 1:
        raise DimensionMismatch("d >= 1", d)
    if J < 0:
        raise InvalidConfig(f"total degree J must be non-negative, got {J}.")
    size = n_dk(d, J)
    if size > cap:
        raise IndexSetOverflow(size, cap)
    rows = [nu for degree in range(J + 1) for nu in _compositions(degree, d)]
    indices = np.array(rows, dtype=np.int64).reshape(size, d)
    position = {nu: k for k, nu in enumerate(rows)}
    return MultiIndexSet(d=d, J=J, indices=indices, _position=position)


def multiplication_matrix(i, index_set):
    """
    Galerkin matrix of multiplication by ``y_i`` (``i`` is 1-based).

    Entries couple ``nu`` and ``nu + e_i`` with weight ``beta(nu_i)``; indices of
    total degree ``J`` have no upper neighbour.
    """
    d = index_set.d
    if not 1 <= i <= d:
        raise AxisOutOfRange(i, d)
    axis = i - 1
    rows, cols, vals = [], [], []
    below = np.flatnonzero(index_set.degrees() < index_set.J)
    for r in below:
        nu = index_set.indices[r].copy()
        nu[axis] += 1
        c = index_set.position_of(nu)
        rows.append(r)
        cols.append(c)
        vals.append(beta(index_set.indices[r, axis]))
    n = len(index_set)
    upper = sp.coo_matrix((np.asarray(vals, dtype=float), (rows, cols)), shape=(n, n))
    return (upper + upper.T).tocsr()


def multiplication_matrices(index_set):
    return tuple(multiplication_matrix(i, index_set) for i in range(1, index_set.d + 1))


def eval_tensor_legendre(nu, y):
    """``prod_i L_{nu_i}(y_i)`` for one point ``y``."""
    nu = np.asarray(nu, dtype=int)
    y = np.asarray(y, dtype=float)
    return float(np.prod(np.sqrt(2.0 * nu + 1.0) * eval_legendre(nu, y)))


def legendre_table(J, t):
    """Values ``L_n(t)`` for ``n = 0..J``; shape ``(J + 1,) + t.shape``."""
    t = np.asarray(t, dtype=float)
    table = np.empty((J + 1,) + t.shape)
    table[0] = 1.0
    if J >= 1:
        table[1] = np.sqrt(3.0) * t
    for n in range(1, J):
        table[n + 1] = (t * table[n] - beta(n - 1) * table[n - 1]) / beta(n)
    return table


def evaluate_basis(index_set, y):
    """
    All basis values ``L_nu(y)``.

    :param y: one point of shape ``(d,)`` or a batch of shape ``(s, d)``.
    :return: shape ``(N,)`` or ``(s, N)``.
    """
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    table = legendre_table(index_set.J, Y)  # (J+1, s, d)
    values = np.ones((Y.shape[0], len(index_set)))
    for axis in range(index_set.d):
        values *= table[index_set.indices[:, axis], :, axis].T
    return values[0] if single else values


def evaluate_expansion(coeffs, index_set, y):
    """
    ``sum_nu u_nu L_nu(y)`` for a low-rank pair (evaluated factor-wise) or a
    dense ``M x N`` coefficient matrix.
    """
    basis = evaluate_basis(index_set, y)
    if hasattr(coeffs, "Phi"):
        return coeffs.V @ (coeffs.Phi.T @ basis.T)
    return np.asarray(coeffs) @ basis.T


def monomial_to_legendre_1d(n):
    """
    Matrix ``C`` with ``t**k = sum_j C[j, k] L_j(t)`` for ``k <= n``.

    >>> np.round(monomial_to_legendre_1d(2)[:, 2], 12).tolist()
    [0.333333333333, 0.0, 0.298142396999]
    """
    C = np.zeros((n + 1, n + 1))
    C[0, 0] = 1.0
    for k in range(n):
        col = C[:, k]
        nxt = np.zeros(n + 1)
        nxt[1:] += beta(np.arange(n)) * col[:-1]
        nxt[:-1] += beta(np.arange(n)) * col[1:]
        C[:, k + 1] = nxt
    return C


def monomial_coefficients(nu, index_set, table=None):
    """Legendre coefficients (over ``index_set``) of the monomial ``y**nu``."""
    if table is None:
        table = monomial_to_legendre_1d(index_set.J)
    coeffs = np.ones(len(index_set))
    for axis, power in enumerate(nu):
        coeffs *= table[index_set.indices[:, axis], power]
    return coeffs


def gauss_tensor_grid(d, order):
    """Tensor Gauss-Legendre rule for the uniform probability measure.

    :return: points ``(order**d, d)`` and weights summing to one.
    """
    x, w = leggauss(order)
    w = w / 2.0
    points = np.array(list(itertools.product(x, repeat=d)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=d))), axis=1)
    return points, weights


def write_index_set(index_set, path):
    """One multi-index per line, in storage order."""
    with open(path, "w", encoding="utf-8") as handle:
        for row in index_set.indices.tolist():
            handle.write(" ".join(str(v) for v in row) + "\n")
