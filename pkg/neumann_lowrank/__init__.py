"""Low-rank truncated Neumann series for affine-parametric diffusion problems.

The library discretizes ``-div(a(x, y) grad u) = f`` with
``a = a0 - sum_i y_i psi_i`` on partitioned domains, runs the fixed-point
iteration on Legendre coefficients in factored form and measures ranks,
errors and the symmetry structure behind the rank bounds.

"""

__version__ = "1.0"
__author__ = 'neumann_lowrank developers'
__docformat__ = 'restructuredtext'
__keywords__ = 'parametric PDE low-rank Neumann series Legendre Galerkin'

from .fem import Discretization
from .mesh import GeometrySpec
from .neumann import iterate, partitioned_setup, proportional_setup
from .pool import WorkerPool
