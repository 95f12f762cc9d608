"""
.. module:: cli
   :platform: Unix, Windows
   :synopsis: command line entry point

Subcommands:

``run``
    truncated iteration with rank, error and decay records and their checks.
``lemmas``
    skeleton subspace checks and span growth on the 2x2 checkerboard.
``oned``
    snapshot ranks of the interval problem.
``mesh``
    mesh export and mesh checks.

Exit codes: 0 success, 1 failed check, 2 usage error.
"""

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import PRESETS, build_config
from .exception import InvalidConfig, NeumannLowRankError, UnsupportedGeometry
from .export import (ERROR_FIELDS, LEMMA_FIELDS, RANKS_FIELDS, SIGMA_FIELDS, SPAN_FIELDS, STEP_SIGMA_FIELDS,
                     NORM_FIELDS, norm_rows, sigma_rows, step_sigma_rows, write_csv, write_json)
from .fem import Discretization
from .legendre import n_dk
from .log import configure, get_logger
from .lowrank import coefficient_norms, numerical_rank
from .mesh import CHECKERBOARD, DISTORTED, build_interval_mesh, build_mesh, check_alignment, \
    check_conformity, check_reflection_symmetry, export_mesh, load_mesh
from .neumann import (SampledError, apriori_error_bound, half_count, iterate, legendre_dominance_violations,
                      log_linear_fit, parameter_samples, partitioned_setup, rank_bound_table, rank_slope,
                      superlinear_growth)
from .oned import oned_samples, singular_value_ratio, snapshot_rank, solve_1d_analytic, solve_1d_fem
from .pool import WorkerPool
from .skeleton import SPAN_CUTOFF, span_growth, trace_space, verify_lemmas

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

NORM_AGREEMENT = 1e-10
NODAL_AGREEMENT = 1e-12
ONED_RANK_CUTOFF = 1e-10
SPAN_CROSS_CHECK = 4
RANK_SLOPE_LIMIT = 9.0
DISTORTED_HORIZON = 8
LOG_LINEAR_R2 = 0.95


class Outcome:
    """Failed checks and recorded observations of one command."""

    def __init__(self):
        self.failures = []
        self.observations = {}

    def check(self, ok, name, detail=""):
        if not ok:
            self.failures.append(name)
            logger.error("%s failed. %s", name, detail)
        return ok

    def observe(self, name, value):
        self.observations[name] = value

    @property
    def status(self):
        return EXIT_FAILED if self.failures else EXIT_OK


def _is_checkerboard(spec, m):
    return spec.kind == CHECKERBOARD and spec.m == m


def cmd_run(config, pool):
    spec = config.geometry_spec()
    disc = Discretization(spec)
    setup = partitioned_setup(disc, config.theta, config.f, config.J)
    samples = parameter_samples(setup.d, config.sample_count, config.seed)
    sampler = SampledError(setup, samples, pool)
    limit = setup.d + disc.dofmap.n_skeleton

    rank_rows, error_rows = [], []

    def record(k, pair, step):
        bounds = rank_bound_table(setup.d, k)
        rank_rows.append({'k': k, 'rank_before': step.rank_before, 'rank_after': step.rank_after,
                          'bound_generic': bounds.generic, 'bound_improved': bounds.improved,
                          'bound_8k5': bounds.theorem_2x2,
                          'numerical_rank': numerical_rank(pair.sigma, config.rank_cutoff)})
        error_rows.append({'k': k, 'sampled_sup_error': sampler(pair),
                           'apriori_bound': apriori_error_bound(setup, k)})

    pair, trace = iterate(setup, config.k_max, eps=config.eps, mode=config.mode, stop_tol=config.stop_tol,
                          pool=pool, callback=record)
    outcome = Outcome()

    for row in rank_rows:
        k, rank = row['k'], row['numerical_rank']
        outcome.check(row['rank_after'] <= row['rank_before'], f"truncation_k{k}")
        outcome.check(rank <= limit, f"skeleton_ceiling_k{k}", f"rank {rank} > d + skeleton DOFs = {limit}.")
        outcome.check(rank <= n_dk(setup.d - 1, k), f"improved_bound_k{k}",
                      f"rank {rank} > n(d-1, k) = {n_dk(setup.d - 1, k)}.")

    norms = coefficient_norms(pair, setup.factor)
    dense = coefficient_norms(pair, setup.factor, dense=True)
    scale = float(np.max(norms)) if norms.size else 0.0
    outcome.check(float(np.max(np.abs(norms - dense))) <= NORM_AGREEMENT * max(scale, 1.0), "legendre_norm_paths")

    sigma = pair.sigma if pair.sigma is not None else np.zeros(0)
    ranks = [row['numerical_rank'] for row in rank_rows]

    if _is_checkerboard(spec, 2):
        for row in rank_rows:
            outcome.check(row['numerical_rank'] <= row['bound_8k5'], f"bound_8k5_k{row['k']}",
                          f"rank {row['numerical_rank']} > {row['bound_8k5']}.")
        for k in legendre_dominance_violations(sigma, norms, cutoff=config.rank_cutoff):
            outcome.check(False, f"svd_below_legendre_k{k}")
        if sigma.size:
            counts = half_count(sigma, norms)
            outcome.observe("sigma_above_1e-8", counts.singular_values)
            outcome.observe("legendre_norms_above_1e-8", counts.legendre_norms)
            outcome.check(counts.holds, "half_count", f"{counts.singular_values} singular values against "
                                                      f"{counts.legendre_norms} Legendre norms.")
        if len(ranks) > 2:
            slope = rank_slope(ranks)
            outcome.observe("rank_slope", slope)
            outcome.check(slope <= RANK_SLOPE_LIMIT, "rank_slope", f"slope {slope:.3f} > {RANK_SLOPE_LIMIT}.")
    else:
        exceeded = [row['k'] for row in rank_rows if row['rank_after'] > row['bound_8k5']]
        outcome.observe("exceeds_8k5_at", exceeded)
        slope, r2 = log_linear_fit(sigma, cutoff=config.rank_cutoff)
        outcome.observe("log_linear_slope", slope)
        outcome.observe("log_linear_r2", r2)
        truncated = [row['rank_after'] for row in rank_rows]
        if len(truncated) > 2:
            outcome.observe("rank_increments", np.diff(truncated).tolist())
            outcome.observe("superlinear_growth", superlinear_growth(truncated))
        if spec.kind == DISTORTED and config.k_max >= DISTORTED_HORIZON \
                and limit > rank_bound_table(setup.d, DISTORTED_HORIZON).theorem_2x2:
            outcome.check(any(k <= DISTORTED_HORIZON for k in exceeded), "exceeds_8k5",
                          f"rank stays within 8k + 5 up to k = {DISTORTED_HORIZON}.")
        if spec.kind == CHECKERBOARD and spec.m >= 3:
            outcome.check(r2 >= LOG_LINEAR_R2 and slope < 0, "log_linear_decay",
                          f"slope {slope:.3g}, R^2 {r2:.3g}.")
            if len(truncated) > 2:
                outcome.check(superlinear_growth(truncated), "superlinear_growth",
                              f"rank increments {np.diff(truncated).tolist()}.")

    errors = [row['sampled_sup_error'] for row in error_rows]
    ratios = [errors[k + 1] / errors[k] for k in range(1, len(errors) - 1) if errors[k] > 0]
    outcome.observe("error_ratios", ratios)

    out = config.out
    write_csv(os.path.join(out, "ranks.csv"), RANKS_FIELDS, rank_rows)
    write_csv(os.path.join(out, "error.csv"), ERROR_FIELDS, error_rows)
    write_csv(os.path.join(out, "singular_values.csv"), SIGMA_FIELDS, sigma_rows(sigma))
    write_csv(os.path.join(out, "legendre_norms.csv"), NORM_FIELDS, norm_rows(norms, setup.index_set))
    write_csv(os.path.join(out, "step_singular_values.csv"), STEP_SIGMA_FIELDS, step_sigma_rows(trace))
    write_json(os.path.join(out, "meta.json"), {
        'command': "run",
        'config': config.as_dict(),
        'discretization': disc.metadata(),
        'parameters': setup.d,
        'index_set_size': setup.N,
        'sample_seed': config.seed,
        'samples': len(samples),
        'steps': len(trace.steps) - 1,
        'converged': trace.converged,
        'final_rank': pair.rank,
        'solve_batches': pool.stats['count'],
        'observations': outcome.observations,
        'failures': outcome.failures,
    })
    return outcome.status


def cmd_lemmas(config, pool):
    spec = config.geometry_spec()
    if not _is_checkerboard(spec, 2):
        raise UnsupportedGeometry(spec.label)
    setup = partitioned_setup(Discretization(spec), config.theta, config.f, config.J)
    trace_space(setup, pool)
    report = verify_lemmas(setup, config.n_trials, config.seed)
    rows = span_growth(setup, k_max=config.span_k_max)

    outcome = Outcome()
    for name in report.failures():
        outcome.check(False, name, f"residual {report.residuals[name]:.3e}.")
    for row in rows:
        outcome.check(row.dim <= row.bound_8k1, f"span_bound_k{row.k}", f"dim {row.dim} > {row.bound_8k1}.")
        if row.k <= SPAN_CROSS_CHECK and row.dim_full >= 0:
            outcome.check(row.dim == row.dim_full, f"span_enumeration_k{row.k}",
                          f"pruned {row.dim}, full {row.dim_full}.")

    out = config.out
    write_csv(os.path.join(out, "lemma_residuals.csv"), LEMMA_FIELDS,
              [{'check_name': name, 'residual': value} for name, value in report.rows()])
    write_csv(os.path.join(out, "span_growth.csv"), SPAN_FIELDS + ["dim_full", "bound_words", "bound_split"],
              [dataclasses.asdict(row) for row in rows])
    write_json(os.path.join(out, "meta.json"), {
        'command': "lemmas",
        'config': config.as_dict(),
        'discretization': setup.discretization.metadata(),
        'skeleton_dofs': trace_space(setup).dimension,
        'threshold': report.threshold,
        'span_cutoff': SPAN_CUTOFF,
        'failures': outcome.failures,
    })
    return outcome.status


def cmd_oned(config, pool):
    d = config.oned_d
    sigma = snapshot_rank(d, config.theta, config.oned_samples, config.seed, config.oned_cells, config.f, pool)
    outcome = Outcome()
    ratio = singular_value_ratio(sigma, 2 * d)
    outcome.check(ratio <= ONED_RANK_CUTOFF, "oned_rank", f"sigma_{2 * d}/sigma_1 = {ratio:.3e}.")

    mesh = build_interval_mesh(d, config.oned_cells)
    worst = 0.0
    for y in oned_samples(d, config.oned_samples, config.seed):
        exact = solve_1d_analytic(d, config.theta, y, config.f, mesh).nodal
        fem = solve_1d_fem(mesh, config.theta, y, config.f)
        worst = max(worst, float(np.max(np.abs(exact - fem))))
    outcome.check(worst <= NODAL_AGREEMENT, "nodal_agreement", f"largest nodal difference {worst:.3e}.")

    write_csv(os.path.join(config.out, "oned_svs.csv"), SIGMA_FIELDS, sigma_rows(sigma))
    write_json(os.path.join(config.out, "meta.json"), {
        'command': "oned",
        'config': config.as_dict(),
        'numerical_rank': numerical_rank(sigma, ONED_RANK_CUTOFF),
        'sigma_ratio': ratio,
        'nodal_difference': worst,
        'failures': outcome.failures,
    })
    return outcome.status


def cmd_mesh(config, pool):
    spec = config.geometry_spec()
    mesh = build_mesh(spec)
    symmetric, report = check_reflection_symmetry(mesh)
    outcome = Outcome()
    outcome.check(not check_conformity(mesh), "conformity")
    outcome.check(not check_alignment(mesh), "alignment")
    if spec.is_symmetric_construction:
        outcome.check(symmetric, "reflection_symmetry",
                      f"{len(report.unmatched_vertices)} vertices without mirror image.")

    path = os.path.join(config.out, "mesh.txt")
    os.makedirs(config.out, exist_ok=True)
    export_mesh(mesh, path)
    reloaded = load_mesh(path, spec)
    outcome.check(np.array_equal(reloaded.vertices, mesh.vertices)
                  and np.array_equal(reloaded.triangles, mesh.triangles)
                  and np.array_equal(reloaded.subdomain, mesh.subdomain)
                  and np.array_equal(reloaded.is_skeleton, mesh.is_skeleton), "reload")

    record = {
        'command': "mesh",
        'config': config.as_dict(),
        'geometry': spec.label,
        'reflection_symmetric': bool(symmetric),
        'failures': outcome.failures,
    }
    record.update(mesh.summary())
    write_json(os.path.join(config.out, "meta.json"), record)
    return outcome.status


HELP = {
    'run': "truncated Neumann iteration with rank and error records",
    'lemmas': "skeleton subspace checks and span growth (checkerboard(2) only)",
    'oned': "snapshot ranks of the interval problem",
    'mesh': "export and check a mesh",
}

COMMANDS = {
    'run': cmd_run,
    'lemmas': cmd_lemmas,
    'oned': cmd_oned,
    'mesh': cmd_mesh,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="neumann-lowrank",
                                     description="Low-rank Neumann series experiments for parametric diffusion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' configuration file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set")
    common.add_argument("--out", help="output directory")
    common.add_argument("--geometry", help=f"checkerboard(m) or {DISTORTED}")
    common.add_argument("--refine", type=int, help="refinement level")
    common.add_argument("--grading", type=float, help="grading strength")
    common.add_argument("--workers", type=int, help="worker threads for independent solves")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name])
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    configure(logging.DEBUG if args.verbose else logging.INFO)
    overrides = {'out': args.out, 'geometry': args.geometry, 'refine': args.refine, 'grading': args.grading,
                 'workers': args.workers}
    try:
        config = build_config(args.preset, args.config, overrides)
    except InvalidConfig as err:
        parser.print_usage(sys.stderr)
        print(err.message, file=sys.stderr)
        return EXIT_USAGE

    try:
        with WorkerPool("solves", max_workers=config.workers) as pool:
            status = COMMANDS[args.command](config, pool)
    except (InvalidConfig, UnsupportedGeometry) as err:
        print(err.message, file=sys.stderr)
        return EXIT_USAGE
    except NeumannLowRankError as err:
        print(err.message, file=sys.stderr)
        return EXIT_FAILED
    logger.info("%s finished with status %d.", args.command, status)
    return status


if __name__ == "__main__":
    sys.exit(main())
