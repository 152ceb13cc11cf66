"""End-to-end run orchestration and the run manifest.

One run: load cohort -> condensed distances -> Ward linkage -> selection
curve -> cut -> size-ordered clusters -> characterization tables. Every
stage leaves a file artifact in the output directory, so later stages can
be re-run from files. Reruns with the same inputs, configuration, and
seed produce byte-identical artifacts except for the "timings" block of
run.json.
"""

from __future__ import annotations

import dataclasses
import json
import os
import platform
import time
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from .cohort import Cohort, default_catalog, load_cohort
from .distance import condensed_matrix, read_matrix, write_matrix
from .errors import ConfigError
from .linkage import cut, ward_linkage, write_tree
from .reports import (
    cluster_summary,
    density_table,
    log_odds_heatmap,
    order_clusters,
    write_assignments,
    write_density,
    write_heatmap,
    write_summary,
)
from .selection import FIRST_LOCAL_MAX, FIXED, POLICIES, scan, write_curve

MATRIX_FILE = "matrix.tjd"
TREE_FILE = "tree.csv"
CURVE_FILE = "curve.csv"
CURVE_META_FILE = "curve.json"
ASSIGNMENTS_FILE = "assignments.csv"
SUMMARY_FILE = "summary.csv"
HEATMAP_FILE = "heatmap.csv"
DENSITY_FILE = "density.csv"
RUN_FILE = "run.json"


@dataclass
class RunConfig:
    events: str
    patients: str
    out_dir: str
    catalog: str | None = None  # None -> built-in catalog
    ward_variant: str = "d2"
    k_min: int = 2
    k_max: int = 20
    fixed_k: int | None = None
    policy: str = FIRST_LOCAL_MAX
    workers: int = 1
    seed: int = 0
    matrix_in: str | None = None
    matrix_out: str | None = None
    mc_replicates: int | None = None  # None -> plain chi-square tests

    def validate(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.policy == FIXED and self.fixed_k is None:
            raise ConfigError("policy 'fixed' requires fixed_k")
        if self.fixed_k is not None and self.fixed_k < 2:
            raise ConfigError("fixed_k must be >= 2")
        if self.k_min < 2 or self.k_min > self.k_max:
            raise ConfigError(f"need 2 <= k_min <= k_max, got {self.k_min}..{self.k_max}")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if self.mc_replicates is not None and self.mc_replicates < 1:
            raise ConfigError("mc_replicates must be >= 1")


def _versions():
    return {
        "trajclust": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def run_pipeline(config: RunConfig) -> dict:
    """Execute the full pipeline and write all artifacts into out_dir."""
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    timings: dict[str, float] = {}
    diagnostics: dict = {}

    t0 = time.perf_counter()
    catalog = load_catalog_arg(config.catalog)
    cohort = load_cohort(config.events, config.patients, catalog)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if config.matrix_in:
        matrix = read_matrix(config.matrix_in)
        if matrix.n != len(cohort):
            raise ConfigError(
                f"matrix file holds n={matrix.n}, cohort has {len(cohort)} patients"
            )
        matrix_path = config.matrix_in
    else:
        matrix = condensed_matrix(cohort, workers=config.workers)
        matrix_path = None
    if config.matrix_out:
        write_matrix(matrix, config.matrix_out)
        matrix_path = config.matrix_out
    diagnostics["empty_union_pairs"] = int(matrix.empty_union_pairs)
    timings["distance"] = time.perf_counter() - t0

    # the matrix may be consumed in place when a pristine copy exists on
    # disk; the selection stage then reloads it from the file
    destructive = matrix_path is not None

    t0 = time.perf_counter()
    tree = ward_linkage(matrix, variant=config.ward_variant, copy=not destructive)
    diagnostics["monotone_heights"] = bool(tree.monotone)
    timings["linkage"] = time.perf_counter() - t0

    if destructive:
        matrix = read_matrix(matrix_path)

    t0 = time.perf_counter()
    n = len(cohort)
    k_min = config.k_min
    k_max = min(config.k_max, n - 1)
    if k_min > k_max:
        raise ConfigError(f"k range [{config.k_min}, {config.k_max}] is empty for n={n}")
    curve = scan(
        tree, matrix, k_min=k_min, k_max=k_max,
        policy=config.policy, fixed_k=config.fixed_k,
    )
    chosen_k = curve.chosen_k
    diagnostics["selection_missing_k"] = [
        int(k) for k, c in zip(curve.k_values, curve.coefficients) if np.isnan(c)
    ]
    timings["selection"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    partition = order_clusters(cut(tree, chosen_k))
    timings["cut"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mode = "monte_carlo" if config.mc_replicates else "chi_square"
    replicates = config.mc_replicates or 10_000
    summary = cluster_summary(
        cohort, partition, mode=mode, replicates=replicates, seed=config.seed
    )
    heatmap = log_odds_heatmap(cohort, partition)
    densities = density_table(cohort, partition)
    timings["characterize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = config.out_dir
    write_tree(tree, os.path.join(out, TREE_FILE))
    write_curve(curve, os.path.join(out, CURVE_FILE), os.path.join(out, CURVE_META_FILE))
    write_assignments(cohort, partition, os.path.join(out, ASSIGNMENTS_FILE))
    write_summary(summary, os.path.join(out, SUMMARY_FILE))
    write_heatmap(heatmap, os.path.join(out, HEATMAP_FILE))
    write_density(densities, os.path.join(out, DENSITY_FILE))
    timings["write"] = time.perf_counter() - t0

    manifest = {
        "config": _config_echo(config),
        "versions": _versions(),
        "n_patients": n,
        "ward_variant": config.ward_variant,
        "seed": config.seed,
        "chosen_k": int(chosen_k),
        "cluster_sizes": [int(s) for s in partition.sizes()],
        "diagnostics": diagnostics,
        "timings": timings,
    }
    with open(os.path.join(out, RUN_FILE), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _config_echo(config: RunConfig) -> dict:
    echo = dataclasses.asdict(config)
    echo["catalog"] = config.catalog or "builtin"
    return echo


def load_catalog_arg(catalog: str | None):
    from .cohort import load_catalog

    if catalog is None or catalog == "builtin":
        return default_catalog()
    return load_catalog(catalog)
