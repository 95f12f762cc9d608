import unittest

import numpy as np

from neumann_lowrank.exception import InvalidConfig, InvalidGeometry, UnsupportedGeometry
from neumann_lowrank.fem import Discretization
from neumann_lowrank.neumann import iterate
from neumann_lowrank.skeleton import (TraceSpace, apply_G, decomposition, g_trace, harmonic_extension,
                                      lemma_residuals, skeleton_rank_split, span_growth, steklov_matrix,
                                      symmetry_defect, trace_contraction, trace_space, verify_lemmas)
from neumann_lowrank.tests.cls import (CHECKERBOARD_4X4, DISTORTED, GRADED_2X2, GRADED_FINE_2X2, UNIFORM_2X2,
                                       small_setup)


class TraceSpaceTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(spec=GRADED_2X2, J=3)
        self.space = trace_space(self.setup)
        self.rng = np.random.default_rng(11)

    def test_cached_on_setup(self):
        self.assertIs(trace_space(self.setup), self.space)
        self.assertEqual(self.space.dimension, 29)

    def test_schur_sum(self):
        """S is the sum of the local Schur complements and is positive definite"""
        np.testing.assert_allclose(sum(self.space.steklov), self.space.gram)
        self.assertGreater(np.linalg.eigvalsh(self.space.gram).min(), 0.0)
        for i in range(1, 5):
            S = steklov_matrix(self.setup, i).toarray()
            np.testing.assert_allclose(S, S.T, atol=1e-14)
            eig = np.linalg.eigvalsh(S)
            self.assertGreaterEqual(eig.min(), -1e-12 * eig.max())

    def test_extension(self):
        """the extension keeps the trace and is discrete harmonic inside every subdomain"""
        w = self.rng.standard_normal(self.space.dimension)
        u = harmonic_extension(self.setup, w)
        np.testing.assert_allclose(self.space.trace(u), w)
        residual = self.setup.stiffness @ u
        interior = np.concatenate(self.setup.dofmap.interior_dofs_of_subdomain)
        np.testing.assert_allclose(residual[interior], 0.0, atol=1e-12 * np.abs(residual).max())

    def test_energy_identity(self):
        """the energy of the extension on D_i is w^T S_i w"""
        w = self.rng.standard_normal(self.space.dimension)
        u = self.space.extend(w)
        for i, op in enumerate(self.setup.discretization.subdomain_operators):
            self.assertAlmostEqual(op.quadratic_form(u), float(w @ self.space.steklov[i] @ w),
                                   delta=1e-10 * self.space.inner(w, w))
        self.assertAlmostEqual(float(self.space.norm(w)) ** 2, self.space.inner(w, w),
                               delta=1e-10 * self.space.inner(w, w))

    def test_g_trace(self):
        """the condensed solve gives the trace of g"""
        np.testing.assert_allclose(g_trace(self.setup), self.setup.g[self.space.dofs], rtol=1e-10,
                                   atol=1e-14)

    def test_extension_of_g(self):
        """g minus the extension of its trace solves the local problems with zero trace"""
        remainder = self.setup.g - self.space.extend(g_trace(self.setup))
        np.testing.assert_allclose(self.space.trace(remainder), 0.0, atol=1e-14)

    def test_trace_contraction(self):
        v = self.rng.standard_normal(self.space.dimension)
        for _ in range(5):
            y = self.rng.uniform(-1, 1, 4)
            self.assertLessEqual(trace_contraction(self.setup, y, v), 0.5 + 1e-10)
        self.assertAlmostEqual(trace_contraction(self.setup, np.ones(4), v), 0.5, places=10)
        self.assertEqual(trace_contraction(self.setup, np.ones(4), np.zeros(self.space.dimension)), 0.0)

    def test_four_subdomains_required(self):
        self.assertRaises(UnsupportedGeometry, TraceSpace, Discretization(CHECKERBOARD_4X4))

    def test_theta_source(self):
        """theta comes from the setup or the caller, never from a default"""
        disc = self.setup.discretization
        self.assertRaises(InvalidConfig, TraceSpace, disc)
        self.assertEqual(TraceSpace(disc, theta=0.3).theta, 0.3)
        self.assertEqual(TraceSpace(small_setup(spec=GRADED_2X2, J=1, theta=0.25)).theta, 0.25)
        self.assertEqual(self.space.theta, 0.5)

    def test_G_index(self):
        self.assertRaises(InvalidGeometry, apply_G, self.setup, 4, np.zeros(self.space.dimension))


class SymmetryDecompositionTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(spec=GRADED_2X2, J=3)
        self.space = trace_space(self.setup)
        self.parts = decomposition(self.setup)
        self.rng = np.random.default_rng(4)

    def test_exact_reflection(self):
        self.assertTrue(self.parts.exact)
        r = self.parts.reflection
        np.testing.assert_array_equal(r[r], np.arange(self.space.dimension))
        self.assertFalse(np.any(self.parts.horizontal & self.parts.vertical))

    def test_projectors(self):
        """the three parts sum to the input and are idempotent"""
        v = self.rng.standard_normal(self.space.dimension)
        parts = self.parts.split(v)
        np.testing.assert_allclose(sum(parts), v, atol=1e-14)
        for j, part in enumerate(parts, start=1):
            np.testing.assert_allclose(self.parts.project(j, part), part, atol=1e-14)

    def test_projector_columns(self):
        V = self.rng.standard_normal((self.space.dimension, 3))
        np.testing.assert_allclose(self.parts.project(2, V)[:, 1], self.parts.project(2, V[:, 1]))

    def test_conjugacy(self):
        """S_4 is S_1 seen through the point reflection"""
        S1, S4 = self.space.steklov[0], self.space.steklov[3]
        r = self.parts.reflection
        np.testing.assert_allclose(S4, S1[np.ix_(r, r)], atol=1e-10 * np.abs(S1).max())

    def test_g_is_even(self):
        self.assertLess(symmetry_defect(self.setup, g_trace(self.setup)), 1e-12)

    def test_odd_vector_defect(self):
        v = self.parts.project(2, self.rng.standard_normal(self.space.dimension))
        self.assertAlmostEqual(symmetry_defect(self.setup, v), 1.0, places=10)


class OperatorIdentityTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(spec=GRADED_2X2, J=3)
        self.space = trace_space(self.setup)
        parts = decomposition(self.setup)
        rng = np.random.default_rng(8)
        self.v1, self.v2, self.v3 = parts.split(rng.standard_normal(self.space.dimension))
        self.parts = parts

    def assertSmall(self, vector, reference):
        self.assertLess(float(self.space.norm(vector)), 1e-9 * float(self.space.norm(reference)))

    def test_annihilation(self):
        """G_i vanishes on the i-th subspace"""
        for i, v in zip((1, 2, 3), (self.v1, self.v2, self.v3)):
            self.assertSmall(apply_G(self.setup, i, v), v)

    def test_inclusions(self):
        image = apply_G(self.setup, 2, self.v1)
        self.assertSmall(image - self.parts.project(3, image), self.v1)
        image = apply_G(self.setup, 1, self.v2)
        self.assertSmall(image - self.parts.project(3, image), self.v2)
        image = apply_G(self.setup, 3, self.v2)
        self.assertSmall(image - self.parts.project(1, image), self.v2)

    def test_squares(self):
        """the unscaled G_3 squares to the identity on V_2, G_2 on V_3"""
        bare = self.space.unscaled_G
        self.assertSmall(bare(3, bare(3, self.v2)) - self.v2, self.v2)
        self.assertSmall(bare(2, bare(2, self.v3)) - self.v3, self.v3)

    def test_products(self):
        bare = self.space.unscaled_G
        self.assertSmall(bare(2, bare(3, self.v2)) - bare(1, self.v2), self.v2)
        self.assertSmall(bare(3, bare(2, self.v3)) - bare(1, self.v3), self.v3)

    def test_scaling(self):
        np.testing.assert_allclose(self.space.G(1, self.v2), 0.5 * self.space.unscaled_G(1, self.v2))


class LemmaReportTest(unittest.TestCase):

    def test_symmetric_mesh_passes(self):
        report = verify_lemmas(small_setup(spec=GRADED_2X2, J=2), n_random_trials=5, seed=1)
        self.assertTrue(report.passed, report.failures())
        self.assertTrue(report.exact_symmetry)
        self.assertEqual(len(report.rows()), 22)
        self.assertIn("conjugacy_S1_S4", report.residuals)

    def test_zero_input(self):
        setup = small_setup(spec=UNIFORM_2X2, J=2)
        space = trace_space(setup)
        zero = np.zeros(space.dimension)
        residuals = lemma_residuals(space, decomposition(setup), zero, zero, np.ones(4))
        self.assertTrue(all(value == 0.0 for value in residuals.values()))

    def test_distorted_mesh_fails(self):
        """without exact symmetry the identities are visibly violated"""
        report = verify_lemmas(small_setup(spec=DISTORTED, J=2), n_random_trials=3, seed=0)
        self.assertFalse(report.exact_symmetry)
        self.assertFalse(report.passed)
        self.assertGreater(max(report.residuals.values()), 1e-6)


class SpanGrowthTest(unittest.TestCase):

    def setUp(self):
        self.setup = small_setup(spec=GRADED_FINE_2X2, J=1)
        self.rows = span_growth(self.setup, k_max=4, full_limit=4)

    def test_start(self):
        self.assertEqual(self.rows[0].dim, 1)
        self.assertEqual(self.rows[0].bound_8k1, 1)

    def test_bounds(self):
        """dimensions stay below 8k + 1 and never shrink"""
        self.assertGreater(trace_space(self.setup).dimension, self.rows[-1].bound_8k1)
        for row in self.rows:
            self.assertLessEqual(row.dim, row.bound_8k1)
            self.assertLessEqual(row.dim_full, row.bound_8k1)
            self.assertLessEqual(row.dim, row.bound_words)
        dims = [row.dim for row in self.rows]
        self.assertEqual(dims, sorted(dims))

    def test_pruned_matches_full(self):
        """the pruned recursion spans what all 3**k words span"""
        for row in self.rows:
            self.assertGreaterEqual(row.dim_full, 0)
            self.assertEqual(row.dim, row.dim_full)

    def test_full_limit(self):
        rows = span_growth(self.setup, k_max=3, full_limit=1)
        self.assertEqual([row.dim_full for row in rows[2:]], [-1, -1])
        self.assertEqual(rows[1].dim_full, rows[1].dim)


class RankSplitTest(unittest.TestCase):

    def test_interior_blocks_rank_one(self):
        """the part of an iterate vanishing on the skeleton has rank one per subdomain"""
        setup = small_setup(spec=UNIFORM_2X2, J=4)
        pair, _ = iterate(setup, 3)
        split = skeleton_rank_split(setup, pair)
        self.assertTrue(all(rank <= 1 for rank in split.interior_ranks))
        self.assertLessEqual(split.trace_rank, pair.rank)
        self.assertEqual(split.total_bound, 4 + split.trace_rank)
