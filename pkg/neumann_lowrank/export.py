"""
.. module:: export
   :platform: Unix, Windows
   :synopsis: CSV and JSON artifacts of a run

Every CSV file starts with a header row; reals are written as ``%.17e`` so that
two runs with the same configuration produce identical files.
"""

import csv
import json
import os

import numpy as np

from .log import get_logger

logger = get_logger(__name__)

FLOAT_FORMAT = "{:.17e}"

RANKS_FIELDS = ["k", "rank_before", "rank_after", "bound_generic", "bound_improved", "bound_8k5",
                "numerical_rank"]
ERROR_FIELDS = ["k", "sampled_sup_error", "apriori_bound"]
SIGMA_FIELDS = ["k", "sigma"]
NORM_FIELDS = ["k", "norm", "multi_index"]
STEP_SIGMA_FIELDS = ["k", "index", "sigma"]
LEMMA_FIELDS = ["check_name", "residual"]
SPAN_FIELDS = ["k", "dim", "bound_8k1"]


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT.format(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def write_csv(path, fieldnames, rows):
    """Write ``rows`` (dicts) with a header; missing keys give empty cells."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k, "")) for k in fieldnames})
    logger.debug("wrote %s (%d rows).", path, len(rows))
    return path


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def write_json(path, record):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(record, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def sigma_rows(sigma):
    """Rows ``k, sigma`` with 1-based ``k``."""
    return [{'k': k, 'sigma': float(s)} for k, s in enumerate(sigma, start=1)]


def norm_rows(norms, index_set):
    """Legendre coefficient norms sorted decreasingly, with their multi-indices."""
    order = np.argsort(-np.asarray(norms), kind="stable")
    return [{'k': rank, 'norm': float(norms[j]), 'multi_index': " ".join(str(v) for v in index_set.indices[j])}
            for rank, j in enumerate(order, start=1)]


def step_sigma_rows(trace, limit=80):
    rows = []
    for step in trace.steps:
        for index, s in enumerate(step.singular_values[:limit], start=1):
            rows.append({'k': step.k, 'index': index, 'sigma': float(s)})
    return rows
