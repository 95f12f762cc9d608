import json
import os
import tempfile
import unittest

from neumann_lowrank.cli import EXIT_OK, EXIT_USAGE, build_parser, main
from neumann_lowrank.export import read_csv
from neumann_lowrank.registry import SingletonMetaDiscretizationRegistry


class CommandLineTest(unittest.TestCase):

    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.skip_teardown = False

    def path(self, *parts):
        return os.path.join(self.directory.name, *parts)

    def write_config(self, name, text):
        with open(self.path(name), "w", encoding="utf-8") as handle:
            handle.write(text)
        return self.path(name)

    def meta(self, out):
        with open(os.path.join(out, "meta.json"), encoding="utf-8") as handle:
            return json.load(handle)

    def test_usage_errors(self):
        """missing command, missing settings and unknown presets exit with 2"""
        self.assertEqual(main([]), EXIT_USAGE)
        self.assertEqual(main(["run"]), EXIT_USAGE)
        self.assertEqual(main(["run", "--preset", "fig-9"]), EXIT_USAGE)

    def test_lemmas_need_checkerboard(self):
        out = self.path("lemmas")
        self.assertEqual(main(["lemmas", "--preset", "fig-4-2b", "--refine", "1", "--out", out]), EXIT_USAGE)

    def test_mesh(self):
        out = self.path("mesh")
        status = main(["mesh", "--preset", "fig-4-2a", "--refine", "1", "--out", out])
        self.assertEqual(status, EXIT_OK)
        meta = self.meta(out)
        self.assertTrue(meta['reflection_symmetric'])
        self.assertEqual(meta['failures'], [])
        self.assertEqual(meta['subdomains'], 4)
        self.assertTrue(os.path.exists(os.path.join(out, "mesh.txt")))

    def test_distorted_mesh(self):
        out = self.path("distorted")
        self.assertEqual(main(["mesh", "--preset", "fig-4-2b", "--refine", "1", "--out", out]), EXIT_OK)
        self.assertFalse(self.meta(out)['reflection_symmetric'])

    def test_oned(self):
        out = self.path("oned")
        config = self.write_config("oned.cfg", f"oned_d = 2\noned_samples = 8\noned_cells = 4\nout = {out}\n")
        self.assertEqual(main(["oned", "--config", config]), EXIT_OK)
        rows = read_csv(os.path.join(out, "oned_svs.csv"))
        self.assertEqual(list(rows[0].keys()), ["k", "sigma"])
        self.assertLessEqual(self.meta(out)['numerical_rank'], 3)

    def test_lemmas(self):
        out = self.path("lemmas")
        config = self.write_config("lemmas.cfg", "geometry = checkerboard(2)\nrefine = 1\ngrading = 1.0\nJ = 2\n"
                                                  "n_trials = 3\nspan_k_max = 2\n")
        self.assertEqual(main(["lemmas", "--config", config, "--out", out]), EXIT_OK)
        residuals = read_csv(os.path.join(out, "lemma_residuals.csv"))
        self.assertTrue(all(float(row['residual']) <= 1e-8 for row in residuals))
        span = read_csv(os.path.join(out, "span_growth.csv"))
        self.assertEqual([row['k'] for row in span], ["0", "1", "2"])
        self.assertEqual(list(span[0].keys())[:3], ["k", "dim", "bound_8k1"])

    def test_run_is_deterministic(self):
        """two runs with one configuration write identical tables"""
        config = self.write_config("run.cfg", "geometry = distorted\nrefine = 1\ngrading = 0.0\nJ = 3\nk_max = 3\n"
                                              "sample_count = 3\n")
        first, second = self.path("first"), self.path("second")
        self.assertEqual(main(["run", "--config", config, "--out", first]), EXIT_OK)
        SingletonMetaDiscretizationRegistry.clear_registry()
        self.assertEqual(main(["run", "--config", config, "--out", second]), EXIT_OK)
        for name in ("ranks.csv", "error.csv", "singular_values.csv", "legendre_norms.csv"):
            with open(os.path.join(first, name), encoding="utf-8") as a, \
                    open(os.path.join(second, name), encoding="utf-8") as b:
                self.assertEqual(a.read(), b.read(), name)
        ranks = read_csv(os.path.join(first, "ranks.csv"))
        self.assertEqual([row['k'] for row in ranks], ["0", "1", "2", "3"])
        self.assertEqual(self.meta(first)['failures'], [])

    def test_parser(self):
        args = build_parser().parse_args(["run", "--preset", "fig-6", "--workers", "3"])
        self.assertEqual((args.command, args.preset, args.workers), ("run", "fig-6", 3))

    def tearDown(self):
        if not self.skip_teardown:
            self.directory.cleanup()
