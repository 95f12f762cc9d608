import unittest

import numpy as np

from neumann_lowrank.exception import EllipticityViolation, InvalidConfig, TaylorDegreeExceeded
from neumann_lowrank.fem import Discretization
from neumann_lowrank.legendre import n_dk
from neumann_lowrank.lowrank import coefficient_norms, numerical_rank
from neumann_lowrank.neumann import (HalfCount, IterationTrace, SampledError, StepRecord, TaylorCoefficients,
                                     apriori_error_bound, contraction_estimate, galerkin_residual, half_count,
                                     iterate, legendre_dominance_violations, log_linear_fit, nwidth_bounds,
                                     parameter_samples, partitioned_setup, proportional_setup, rank_bound_table,
                                     rank_slope, sampled_sup_error, superlinear_growth, taylor_partial_sum)
from neumann_lowrank.pool import WorkerPool
from neumann_lowrank.registry import SingletonMetaDiscretizationRegistry
from neumann_lowrank.tests.cls import (CHECKERBOARD_4X4, COARSE_2X2, DISTORTED_LARGE, GRADED_2X2, GRADED_LARGE_2X2,
                                       UNIFORM_2X2, small_setup)


class SetupTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup()

    def test_shapes(self):
        self.assertEqual(self.setup.d, 4)
        self.assertEqual(self.setup.M, 49)
        self.assertEqual(self.setup.N, n_dk(4, 6))
        self.assertEqual(self.setup.rho, 0.5)

    def test_operators_sum_to_scaled_stiffness(self):
        """the subdomain indicators sum to one"""
        total = sum(op.matrix for op in self.setup.operators)
        np.testing.assert_allclose(total.toarray(), 0.5 * self.setup.stiffness.toarray(), atol=1e-13)

    def test_direct_solve_at_ones(self):
        u = self.setup.direct_solve(np.ones(4))
        np.testing.assert_allclose(u, self.setup.g / 0.5, rtol=1e-12)

    def test_check_parameter(self):
        self.assertRaises(InvalidConfig, self.setup.check_parameter, np.zeros(3))
        self.assertRaises(EllipticityViolation, self.setup.check_parameter, np.array([0, 0, 1.5, 0]))

    def test_theta_range(self):
        disc = Discretization(UNIFORM_2X2)
        self.assertRaises(EllipticityViolation, partitioned_setup, disc, 1.0)
        self.assertRaises(EllipticityViolation, proportional_setup, disc, [0.5, 0.5, 0.0, 0.0])


class IterationTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(J=6)
        self.pairs = {}

    def collect(self, k, pair, record):
        self.pairs[k] = pair

    def test_taylor_recovery(self):
        """without truncation the k-th iterate is the degree k Taylor partial sum"""
        setup = small_setup(J=8)
        iterate(setup, 6, eps=0.0, callback=self.collect)
        cache = TaylorCoefficients(setup)
        for k in range(7):
            exact = taylor_partial_sum(setup, k, cache)
            error = np.linalg.norm(self.pairs[k].to_dense() - exact) / np.linalg.norm(exact)
            self.assertLessEqual(error, 1e-11, f"k = {k}")

    def test_rank_bounds(self):
        """numerical ranks stay below n(d - 1, k) and 8k + 5"""
        _, trace = iterate(self.setup, 5)
        for record in trace.steps:
            bound = min(rank_bound_table(4, record.k).improved, rank_bound_table(4, record.k).theorem_2x2,
                        self.setup.M)
            self.assertLessEqual(numerical_rank(record.singular_values), bound)
        self.assertEqual(trace.steps[0].rank_after, 1)

    def test_trace_records(self):
        _, trace = iterate(self.setup, 3)
        self.assertEqual([s.k for s in trace.steps], [0, 1, 2, 3])
        self.assertEqual(trace.ranks(), [s.rank_after for s in trace.steps])
        self.assertFalse(trace.converged)
        self.assertTrue(all(s.rank_after <= s.rank_before for s in trace.steps[1:]))

    def test_pool_gives_same_iterate(self):
        inline, _ = iterate(self.setup, 3)
        with WorkerPool("solves", max_workers=2) as pool:
            threaded, _ = iterate(self.setup, 3, pool=pool)
        np.testing.assert_allclose(threaded.to_dense(), inline.to_dense(), atol=1e-14)

    def test_negative_steps(self):
        self.assertRaises(InvalidConfig, iterate, self.setup, -1)

    def test_trace_order(self):
        trace = IterationTrace()
        self.assertRaises(InvalidConfig, trace.append, StepRecord(1, 1, 1, np.ones(1), 0.0, 0.0))


class TaylorTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(spec=COARSE_2X2, J=4)

    def test_first_order(self):
        """t_{e_i} = B_i g"""
        cache = TaylorCoefficients(self.setup)
        np.testing.assert_allclose(cache((0, 1, 0, 0)), self.setup.apply_B(1, self.setup.g))
        self.assertGreaterEqual(len(cache), 2)

    def test_degree_cap(self):
        cache = TaylorCoefficients(self.setup, cap=2)
        self.assertRaises(TaylorDegreeExceeded, cache, (1, 1, 1, 0))
        self.assertRaises(TaylorDegreeExceeded, taylor_partial_sum, self.setup, 5)


class ErrorTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(J=8)
        self.pairs = {}
        iterate(self.setup, 6, callback=lambda k, pair, record: self.pairs.__setitem__(k, pair))
        self.sampler = SampledError(self.setup, parameter_samples(4, 10, seed=1))

    def test_sampled_error_below_bound(self):
        for k, pair in self.pairs.items():
            self.assertLessEqual(self.sampler(pair), apriori_error_bound(self.setup, k) * (1 + 1e-8))

    def test_bound_attained_at_corner(self):
        """at y = (1, 1, 1, 1) the sampled error equals the a-priori bound"""
        for k in range(1, 6):
            self.assertAlmostEqual(self.sampler(self.pairs[k]) / apriori_error_bound(self.setup, k), 1.0, places=8)

    def test_error_halves(self):
        errors = [self.sampler(self.pairs[k]) for k in range(6)]
        for before, after in zip(errors, errors[1:]):
            self.assertAlmostEqual(after / before, 0.5, places=6)

    def test_sampled_sup_error(self):
        self.assertAlmostEqual(sampled_sup_error(self.setup, self.pairs[3], sample_count=10, seed=1),
                               self.sampler(self.pairs[3]), places=14)


class ContractionTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(J=2)

    def test_bounded_by_theta(self):
        for y in parameter_samples(4, 5, seed=2):
            self.assertLessEqual(contraction_estimate(self.setup, y), 0.5 + 1e-8)

    def test_equal_at_ones(self):
        """sum_i B_i = theta I"""
        self.assertAlmostEqual(contraction_estimate(self.setup, np.ones(4)), 0.5, places=12)

    def test_zero(self):
        self.assertEqual(contraction_estimate(self.setup, np.zeros(4)), 0.0)


class ConvergenceTest(unittest.TestCase):

    def test_zero_coefficients(self):
        """with psi = 0 the first step reproduces the start and the run stops"""
        setup = proportional_setup(Discretization(COARSE_2X2), np.zeros(4), J=3)
        pair, trace = iterate(setup, 10, stop_tol=1e-14)
        self.assertTrue(trace.converged)
        self.assertEqual(len(trace.steps), 2)
        self.assertEqual(pair.rank, 1)

    def test_galerkin_residual(self):
        setup = small_setup(spec=COARSE_2X2, J=3)
        first, _ = iterate(setup, 2)
        last, _ = iterate(setup, 60)
        self.assertLess(galerkin_residual(setup, last), 1e-9)
        self.assertGreater(galerkin_residual(setup, first), galerkin_residual(setup, last))


class BoundTableTest(unittest.TestCase):

    def test_rank_bounds(self):
        bounds = rank_bound_table(4, 10)
        self.assertEqual((bounds.generic, bounds.improved, bounds.theorem_2x2), (1001, 286, 85))

    def test_widths(self):
        width = nwidth_bounds(4, 13, 0.5)
        self.assertEqual((width.k_generic, width.k_improved, width.k_checkerboard), (1, 2, 1))
        self.assertAlmostEqual(width.bound_improved, 0.25)
        self.assertRaises(InvalidConfig, nwidth_bounds, 4, 0, 0.5)

    def test_samples(self):
        """corners follow the uniform samples; for d > 4 they repeat every four axes"""
        samples = parameter_samples(16, 3, seed=0)
        self.assertEqual(samples.shape, (3 + 16, 16))
        corners = samples[3:]
        np.testing.assert_array_equal(corners[:, 4:8], corners[:, :4])
        self.assertTrue(np.all(np.abs(corners) == 1.0))
        self.assertEqual(parameter_samples(2, 4, corners=False, origin=True).shape, (5, 2))


class DecayAnalysisTest(unittest.TestCase):

    def test_exact_geometric_decay(self):
        sigma = [0.5 ** k for k in range(1, 41)]
        slope, r2 = log_linear_fit(sigma)
        self.assertAlmostEqual(slope, -0.6931471805599453, places=10)
        self.assertAlmostEqual(r2, 1.0, places=12)

    def test_rounding_floor_left_out(self):
        """values below the rank cutoff do not bend the fit"""
        sigma = [0.5 ** k for k in range(30)] + [1e-17] * 10
        slope, r2 = log_linear_fit(sigma)
        self.assertAlmostEqual(slope, -0.6931471805599453, places=10)
        self.assertAlmostEqual(r2, 1.0, places=12)
        _, bent = log_linear_fit(sigma, cutoff=0.0)
        self.assertLess(bent, r2)

    def test_too_short(self):
        slope, r2 = log_linear_fit([1.0, 0.5])
        self.assertNotEqual(slope, slope)
        self.assertNotEqual(r2, r2)

    def test_rank_slope(self):
        self.assertAlmostEqual(rank_slope([1, 13, 21, 29, 37]), 8.0, places=12)
        self.assertNotEqual(rank_slope([1]), rank_slope([1]))

    def test_superlinear_growth(self):
        """a later increment above the first one counts, saturation does not hide it"""
        self.assertTrue(superlinear_growth([1, 16, 45, 49, 49]))
        self.assertFalse(superlinear_growth([1, 9, 17, 25]))
        self.assertFalse(superlinear_growth([1, 16]))

    def test_legendre_dominance(self):
        norms = [0.1, 3.0, 0.25, 2.0, 1.0, 1.5, 0.05]
        self.assertEqual(legendre_dominance_violations([4.0, 2.0, 1.0, 0.5, 0.3, 0.2], norms), [5, 6])
        self.assertEqual(legendre_dominance_violations([4.0, 2.0, 1.0, 0.5, 0.2, 1e-12], norms), [])

    def test_half_count(self):
        counts = half_count([1.0, 1e-3, 1e-9], [1.0, 0.5, 1e-7, 1e-9])
        self.assertEqual(counts, HalfCount(threshold=1e-8, singular_values=2, legendre_norms=3))
        self.assertFalse(counts.holds)


class SymmetricDecayTest(unittest.TestCase):

    def setUp(self):
        self.skip_teardown = False
        self.setup = small_setup(spec=GRADED_2X2, J=8)
        self.pair, self.trace = iterate(self.setup, 60, stop_tol=1e-12)
        self.norms = coefficient_norms(self.pair, self.setup.factor)

    def test_singular_values_below_legendre_norms(self):
        """from the fifth on, every singular value is below the matching sorted Legendre norm"""
        self.assertTrue(self.trace.converged)
        self.assertGreater(numerical_rank(self.pair.sigma), 5)
        self.assertEqual(legendre_dominance_violations(self.pair.sigma, self.norms), [])

    def test_half_count(self):
        """at most half as many singular values as Legendre norms stay above 1e-8"""
        counts = half_count(self.pair.sigma, self.norms)
        self.assertGreater(counts.singular_values, 0)
        self.assertTrue(counts.holds, counts)

    def tearDown(self):
        if not self.skip_teardown:
            SingletonMetaDiscretizationRegistry.clear_registry()


class RankGrowthTest(unittest.TestCase):

    def setUp(self):
        self.skip_teardown = False

    def test_checkerboard_linear_growth(self):
        """on the 2x2 checkerboard the rank of u_k stays below 8k + 5 and grows with slope at most 9"""
        setup = small_setup(spec=GRADED_LARGE_2X2, J=11)
        self.assertGreater(setup.d + setup.dofmap.n_skeleton, rank_bound_table(4, 10).theorem_2x2)
        _, trace = iterate(setup, 10)
        ranks = [numerical_rank(record.singular_values) for record in trace.steps]
        for k, rank in enumerate(ranks):
            self.assertLessEqual(rank, 8 * k + 5, f"k = {k}")
        self.assertLessEqual(rank_slope(ranks), 9.0)

    def test_distorted_exceeds_linear_bound(self):
        """without the reflection symmetry the rank leaves 8k + 5 before k = 8"""
        setup = small_setup(spec=DISTORTED_LARGE, J=11)
        self.assertGreater(setup.d + setup.dofmap.n_skeleton, rank_bound_table(4, 8).theorem_2x2)
        _, trace = iterate(setup, 8)
        exceeded = [record.k for record in trace.steps if record.rank_after > 8 * record.k + 5]
        self.assertTrue(exceeded, trace.ranks())

    def test_sixteen_subdomains(self):
        """with 16 subdomains the ranks grow faster than linearly while the singular values decay exponentially"""
        setup = small_setup(spec=CHECKERBOARD_4X4, J=5)
        pair, trace = iterate(setup, 30, stop_tol=1e-10)
        ranks = trace.ranks()
        self.assertTrue(superlinear_growth(ranks), ranks)
        slope, r2 = log_linear_fit(pair.sigma)
        self.assertLess(slope, 0.0)
        self.assertGreaterEqual(r2, 0.95)

    def tearDown(self):
        if not self.skip_teardown:
            SingletonMetaDiscretizationRegistry.clear_registry()
