import numpy as np
import scipy.sparse as sp

from neumann_lowrank.fem import Discretization, SparseSymOperator
from neumann_lowrank.mesh import GeometrySpec
from neumann_lowrank.neumann import partitioned_setup

UNIFORM_2X2 = GeometrySpec.checkerboard(2, refinement_level=2, grading_strength=0.0)
GRADED_2X2 = GeometrySpec.checkerboard(2, refinement_level=2, grading_strength=1.0)
COARSE_2X2 = GeometrySpec.checkerboard(2, refinement_level=1, grading_strength=0.0)
DISTORTED = GeometrySpec.distorted_quad(refinement_level=2, grading_strength=0.0)
GRADED_FINE_2X2 = GeometrySpec.checkerboard(2, refinement_level=3, grading_strength=1.0)
# more than 85 skeleton DOFs, so 8k + 5 binds below the skeleton ceiling for k <= 10
GRADED_LARGE_2X2 = GeometrySpec.checkerboard(2, refinement_level=5, grading_strength=1.0)
DISTORTED_LARGE = GeometrySpec.distorted_quad(refinement_level=5, grading_strength=1.0)
CHECKERBOARD_4X4 = GeometrySpec.checkerboard(4, refinement_level=1, grading_strength=0.0)


def small_setup(spec=UNIFORM_2X2, J=6, theta=0.5):
    return partitioned_setup(Discretization(spec), theta=theta, f=1.0, J=J)


def laplacian_1d(n):
    """Tridiagonal ``[-1, 2, -1]`` operator of size ``n``."""
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return SparseSymOperator(sp.diags([off, main, off], [-1, 0, 1], format="csr"))


def random_factors(M, N, r, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((M, r)), rng.standard_normal((N, r))


class Doubler:
    """Stand-in factor whose ``solve`` doubles its input."""

    def __init__(self):
        self.calls = 0

    def solve(self, rhs):
        self.calls += 1
        return 2.0 * np.asarray(rhs)
