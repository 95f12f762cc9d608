import os
import tempfile
import unittest

import numpy as np

from neumann_lowrank.exception import InsufficientRefinement, InvalidGeometry
from neumann_lowrank.mesh import (DISTORTED, GeometrySpec, build_interval_mesh, build_mesh, check_alignment,
                                  check_conformity, check_reflection_symmetry, export_mesh, graded_points,
                                  load_mesh, perturb_vertex)
from neumann_lowrank.tests.cls import CHECKERBOARD_4X4, COARSE_2X2, GRADED_2X2, UNIFORM_2X2
from neumann_lowrank.tests.cls import DISTORTED as DISTORTED_SPEC


class GeometrySpecTest(unittest.TestCase):

    def test_parse_checkerboard(self):
        """checkerboard(m) has m * m subdomains"""
        self.assertEqual(GeometrySpec.parse("checkerboard(4)").d, 16)
        self.assertEqual(GeometrySpec.parse("checkerboard").d, 4)

    def test_parse_distorted(self):
        spec = GeometrySpec.parse("distorted", refinement_level=3)
        self.assertEqual(spec.kind, DISTORTED)
        self.assertEqual(spec.refinement_level, 3)

    def test_parse_unknown(self):
        """unknown names and malformed sizes are rejected"""
        self.assertRaises(InvalidGeometry, GeometrySpec.parse, "hexagon")
        self.assertRaises(InvalidGeometry, GeometrySpec.parse, "checkerboard(x)")

    def test_interior_point_outside(self):
        spec = GeometrySpec.distorted_quad(interior_point=(0.7, 0.0))
        self.assertRaises(InvalidGeometry, spec.validate)

    def test_negative_grading(self):
        spec = GeometrySpec.checkerboard(2, refinement_level=1, grading_strength=-1.0)
        self.assertRaises(InvalidGeometry, build_mesh, spec)

    def test_specs_are_hashable(self):
        """equal specs are equal dictionary keys"""
        self.assertEqual({UNIFORM_2X2: 1}[GeometrySpec.checkerboard(2, 2, 0.0)], 1)


class MeshBuildTest(unittest.TestCase):

    def test_uniform_counts(self):
        mesh = build_mesh(UNIFORM_2X2)
        self.assertEqual(mesh.n_vertices, 81)
        self.assertEqual(mesh.n_triangles, 128)
        self.assertEqual(int(mesh.is_dirichlet.sum()), 32)
        self.assertEqual(int(mesh.is_skeleton.sum()), 13)

    def test_distorted_counts(self):
        """the four patches are merged along the interface arms"""
        mesh = build_mesh(DISTORTED_SPEC)
        self.assertEqual(mesh.n_vertices, 81)
        self.assertEqual(mesh.n_triangles, 128)

    def test_areas_cover_domain(self):
        for spec in (UNIFORM_2X2, GRADED_2X2, DISTORTED_SPEC, CHECKERBOARD_4X4):
            mesh = build_mesh(spec)
            self.assertTrue(np.all(mesh.signed_areas() > 0))
            self.assertAlmostEqual(float(mesh.areas().sum()), 1.0, places=12)

    def test_conforming_and_aligned(self):
        for spec in (GRADED_2X2, DISTORTED_SPEC, CHECKERBOARD_4X4):
            mesh = build_mesh(spec)
            self.assertEqual(check_conformity(mesh), [])
            self.assertEqual(check_alignment(mesh), [])

    def test_labels_follow_quadrants(self):
        """subdomains are numbered row by row from the bottom left"""
        mesh = build_mesh(GRADED_2X2)
        centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        expected = 1 + (centroids[:, 0] > 0).astype(int) + 2 * (centroids[:, 1] > 0).astype(int)
        np.testing.assert_array_equal(mesh.subdomain, expected)

    def test_skeleton_vertices_on_interfaces(self):
        mesh = build_mesh(GRADED_2X2)
        points = mesh.vertices[mesh.skeleton_vertices()]
        on_lines = (np.abs(points[:, 0]) < 1e-14) | (np.abs(points[:, 1]) < 1e-14)
        self.assertTrue(np.all(on_lines))

    def test_refinement_grows_skeleton(self):
        counts = [int(build_mesh(GeometrySpec.checkerboard(2, level, 1.0)).is_skeleton.sum()) for level in (1, 2, 3)]
        self.assertTrue(counts[0] < counts[1] < counts[2])

    def test_grading_adds_layers(self):
        """graded meshes resolve the interfaces more finely"""
        uniform = build_mesh(UNIFORM_2X2)
        graded = build_mesh(GRADED_2X2)
        self.assertGreater(graded.n_vertices, uniform.n_vertices)
        distance = np.abs(graded.vertices[:, 0])
        self.assertLess(float(distance[distance > 0].min()), 0.125 / 2)

    def test_no_interior_vertex(self):
        self.assertRaises(InsufficientRefinement, build_mesh, GeometrySpec.checkerboard(1, 0))

    def test_graded_points(self):
        self.assertEqual(graded_points(2, 0.0, 3, True, True).tolist(), [0.0, 0.5, 1.0])
        self.assertEqual(graded_points(1, 1.0, 2, True, False).tolist(), [0.0, 0.25, 0.5, 1.0])


class SymmetryTest(unittest.TestCase):

    def test_checkerboard_symmetric(self):
        """the 2x2 checkerboard is exactly symmetric under both reflections"""
        symmetric, report = check_reflection_symmetry(build_mesh(GRADED_2X2))
        self.assertTrue(symmetric)
        self.assertEqual(len(report.unmatched_vertices), 0)
        self.assertEqual(report.label_maps[0], {1: 2, 2: 1, 3: 4, 4: 3})
        self.assertEqual(report.label_maps[1], {1: 3, 3: 1, 2: 4, 4: 2})

    def test_reflection_maps_are_involutions(self):
        _, report = check_reflection_symmetry(build_mesh(COARSE_2X2))
        for image in report.vertex_maps:
            np.testing.assert_array_equal(image[image], np.arange(len(image)))

    def test_distorted_not_symmetric(self):
        symmetric, report = check_reflection_symmetry(build_mesh(DISTORTED_SPEC))
        self.assertFalse(symmetric)
        self.assertGreater(len(report.unmatched_vertices), 0)

    def test_perturbed_vertex_breaks_symmetry(self):
        mesh = build_mesh(UNIFORM_2X2)
        inner = np.flatnonzero(~mesh.is_dirichlet & ~mesh.is_skeleton)[0]
        symmetric, report = check_reflection_symmetry(perturb_vertex(mesh, inner, (1e-3, 0.0)))
        self.assertFalse(symmetric)
        self.assertIn(inner, report.unmatched_vertices.tolist())


class MeshExportTest(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.skip_teardown = False

    def test_reload(self):
        """an exported mesh reads back unchanged"""
        mesh = build_mesh(GRADED_2X2)
        path = os.path.join(self.directory.name, "mesh.txt")
        export_mesh(mesh, path)
        loaded = load_mesh(path, GRADED_2X2)
        np.testing.assert_array_equal(loaded.vertices, mesh.vertices)
        np.testing.assert_array_equal(loaded.triangles, mesh.triangles)
        np.testing.assert_array_equal(loaded.subdomain, mesh.subdomain)
        np.testing.assert_array_equal(loaded.is_dirichlet, mesh.is_dirichlet)
        np.testing.assert_array_equal(loaded.is_skeleton, mesh.is_skeleton)
        self.assertEqual(loaded.d, 4)

    def test_header(self):
        mesh = build_mesh(COARSE_2X2)
        path = os.path.join(self.directory.name, "mesh.txt")
        export_mesh(mesh, path)
        with open(path, encoding="utf-8") as handle:
            self.assertEqual(handle.readline().split(), [str(mesh.n_vertices), str(mesh.n_triangles), "4"])

    def test_malformed_header(self):
        path = os.path.join(self.directory.name, "bad.txt")
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("1 2\n")
        self.assertRaises(InvalidGeometry, load_mesh, path)

    def tearDown(self):
        if not self.skip_teardown:
            self.directory.cleanup()


class IntervalMeshTest(unittest.TestCase):

    def test_skeleton_nodes(self):
        """every interior subinterval boundary is a skeleton node"""
        mesh = build_interval_mesh(4, 8)
        self.assertEqual(len(mesh.nodes), 33)
        self.assertEqual(np.flatnonzero(mesh.is_skeleton).tolist(), [8, 16, 24])
        self.assertEqual(np.flatnonzero(mesh.is_dirichlet).tolist(), [0, 32])

    def test_invalid(self):
        self.assertRaises(InvalidGeometry, build_interval_mesh, 0, 4)
