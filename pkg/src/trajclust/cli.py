"""Command line entry points.

Subcommands mirror the pipeline stages so long runs can be split and
resumed from file artifacts:

    synth      generate a synthetic labeled cohort
    distance   compute the condensed dissimilarity matrix and cache it
    cluster    run linkage + selection + cut, write tree/curve/assignments
    report     characterization tables for an existing assignment
    all        the full pipeline in one go

Errors print one machine-readable JSON line to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .cohort import load_cohort, save_cohort
from .distance import condensed_matrix, read_matrix, write_matrix
from .errors import ConfigError, TrajclustError
from .linkage import cut, read_tree, ward_linkage, write_tree
from .pipeline import (
    ASSIGNMENTS_FILE,
    CURVE_FILE,
    CURVE_META_FILE,
    DENSITY_FILE,
    HEATMAP_FILE,
    MATRIX_FILE,
    SUMMARY_FILE,
    TREE_FILE,
    RunConfig,
    load_catalog_arg,
    run_pipeline,
)
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
from .selection import FIRST_LOCAL_MAX, FIXED, GLOBAL_MAX_AMONG_LOCAL, scan, write_curve
from .synth import builtin_archetype_spec, generate, load_archetype_spec, write_truth

_POLICY_NAMES = {
    "first-local-max": FIRST_LOCAL_MAX,
    "global-max": GLOBAL_MAX_AMONG_LOCAL,
}


def _parse_k(value: str):
    """--k accepts 'auto' or 'fixed=<int>'."""
    if value == "auto":
        return None
    if value.startswith("fixed="):
        try:
            return int(value[len("fixed="):])
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"expected 'auto' or 'fixed=<int>', got {value!r}")


def _add_io_args(p, catalog=True):
    p.add_argument("--events", required=True, help="events CSV path")
    p.add_argument("--patients", required=True, help="patients CSV path")
    if catalog:
        p.add_argument("--catalog", default=None,
                       help="condition catalog CSV ('builtin' or omit for the built-in)")
    p.add_argument("--out-dir", required=True, help="output directory")


def _add_cluster_args(p):
    p.add_argument("--ward", choices=["d", "d2"], default="d2",
                   help="Ward update on raw (d) or squared (d2) dissimilarities")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--k", type=_parse_k, default=None, metavar="auto|fixed=<k>",
                   help="partition size: 'auto' scans the curve, 'fixed=<k>' pins it")
    p.add_argument("--policy", choices=sorted(_POLICY_NAMES), default="first-local-max")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for the distance matrix (0 = cpu count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajclust",
        description="cluster condition trajectories under right censoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled cohort")
    p.add_argument("--archetypes", default=None,
                   help="archetype spec JSON (omit for the built-in mixture)")
    p.add_argument("--n", type=int, required=True, help="number of patients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("distance", help="compute and cache the dissimilarity matrix")
    _add_io_args(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--matrix-out", default=None,
                   help="matrix cache path (default <out-dir>/matrix.tjd)")

    p = sub.add_parser("cluster", help="linkage, selection curve, and assignments")
    _add_io_args(p)
    _add_cluster_args(p)
    p.add_argument("--matrix-in", default=None, help="reuse a cached matrix file")
    p.add_argument("--matrix-out", default=None, help="also cache the matrix here")

    p = sub.add_parser("select-k", help="rebuild the selection curve from cached artifacts")
    p.add_argument("--matrix-in", required=True, help="cached matrix file")
    p.add_argument("--tree", required=True, help="linkage tree CSV")
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--policy", choices=sorted(_POLICY_NAMES), default="first-local-max")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="characterization tables for an assignment")
    _add_io_args(p)
    p.add_argument("--assignments", required=True, help="assignments CSV from 'cluster'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mc-replicates", type=int, default=None,
                   help="use Monte Carlo association tests with this many replicates")

    p = sub.add_parser("all", help="full pipeline")
    _add_io_args(p)
    _add_cluster_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--matrix-in", default=None)
    p.add_argument("--matrix-out", default=None)
    p.add_argument("--mc-replicates", type=int, default=None)

    return parser


def _cmd_synth(args) -> None:
    if args.archetypes:
        spec = load_archetype_spec(args.archetypes)
    else:
        spec = builtin_archetype_spec()
    labeled = generate(spec, args.n, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    save_cohort(labeled.cohort, args.out_dir)
    write_truth(labeled, os.path.join(args.out_dir, "truth.csv"))


def _cmd_distance(args) -> None:
    catalog = load_catalog_arg(args.catalog)
    cohort = load_cohort(args.events, args.patients, catalog)
    matrix = condensed_matrix(cohort, workers=args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    path = args.matrix_out or os.path.join(args.out_dir, MATRIX_FILE)
    write_matrix(matrix, path)


def _cmd_cluster(args) -> None:
    catalog = load_catalog_arg(args.catalog)
    cohort = load_cohort(args.events, args.patients, catalog)
    if args.matrix_in:
        matrix = read_matrix(args.matrix_in)
        if matrix.n != len(cohort):
            raise ConfigError(
                f"matrix file holds n={matrix.n}, cohort has {len(cohort)} patients"
            )
    else:
        matrix = condensed_matrix(cohort, workers=args.workers)
    if args.matrix_out:
        write_matrix(matrix, args.matrix_out)

    tree = ward_linkage(matrix, variant=args.ward)
    n = len(cohort)
    k_max = min(args.k_max, n - 1)
    if args.k_min > k_max:
        raise ConfigError(f"k range [{args.k_min}, {args.k_max}] is empty for n={n}")
    if args.k is not None:
        curve = scan(tree, matrix, k_min=args.k_min, k_max=k_max,
                     policy=FIXED, fixed_k=args.k)
    else:
        curve = scan(tree, matrix, k_min=args.k_min, k_max=k_max,
                     policy=_POLICY_NAMES[args.policy])
    partition = order_clusters(cut(tree, curve.chosen_k))

    os.makedirs(args.out_dir, exist_ok=True)
    write_tree(tree, os.path.join(args.out_dir, TREE_FILE))
    write_curve(curve, os.path.join(args.out_dir, CURVE_FILE),
                os.path.join(args.out_dir, CURVE_META_FILE))
    write_assignments(cohort, partition, os.path.join(args.out_dir, ASSIGNMENTS_FILE))


def _cmd_select_k(args) -> None:
    matrix = read_matrix(args.matrix_in)
    tree = read_tree(args.tree)
    k_max = min(args.k_max, matrix.n - 1)
    if args.k_min > k_max:
        raise ConfigError(f"k range [{args.k_min}, {args.k_max}] is empty for n={matrix.n}")
    curve = scan(tree, matrix, k_min=args.k_min, k_max=k_max,
                 policy=_POLICY_NAMES[args.policy])
    os.makedirs(args.out_dir, exist_ok=True)
    write_curve(curve, os.path.join(args.out_dir, CURVE_FILE),
                os.path.join(args.out_dir, CURVE_META_FILE))


def _read_assignments(path: str, cohort) -> "list[int]":
    import csv

    from .errors import SchemaError, ValidationError

    by_id = {p.patient_id: i for i, p in enumerate(cohort.patients)}
    labels = [-1] * len(cohort)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in ("patient_id", "cluster"):
            if col not in fields:
                raise SchemaError(f"{path}: missing column {col!r}")
        for row in reader:
            pid = row["patient_id"]
            if pid not in by_id:
                raise ValidationError(f"{path}: unknown patient_id {pid!r}")
            labels[by_id[pid]] = int(row["cluster"]) - 1
    if any(l < 0 for l in labels):
        raise ValidationError(f"{path}: not every patient has an assignment")
    return labels


def _cmd_report(args) -> None:
    import numpy as np

    from .linkage import Partition

    catalog = load_catalog_arg(args.catalog)
    cohort = load_cohort(args.events, args.patients, catalog)
    labels = np.asarray(_read_assignments(args.assignments, cohort), dtype=np.int64)
    partition = Partition(k=int(labels.max()) + 1, labels=labels)

    mode = "monte_carlo" if args.mc_replicates else "chi_square"
    replicates = args.mc_replicates or 10_000
    summary = cluster_summary(cohort, partition, mode=mode,
                              replicates=replicates, seed=args.seed)
    heatmap = log_odds_heatmap(cohort, partition)
    densities = density_table(cohort, partition)

    os.makedirs(args.out_dir, exist_ok=True)
    write_summary(summary, os.path.join(args.out_dir, SUMMARY_FILE))
    write_heatmap(heatmap, os.path.join(args.out_dir, HEATMAP_FILE))
    write_density(densities, os.path.join(args.out_dir, DENSITY_FILE))


def _cmd_all(args) -> None:
    if args.k is not None:
        policy, fixed_k = FIXED, args.k
    else:
        policy, fixed_k = _POLICY_NAMES[args.policy], None
    config = RunConfig(
        events=args.events,
        patients=args.patients,
        out_dir=args.out_dir,
        catalog=args.catalog,
        ward_variant=args.ward,
        k_min=args.k_min,
        k_max=args.k_max,
        fixed_k=fixed_k,
        policy=policy,
        workers=args.workers,
        seed=args.seed,
        matrix_in=args.matrix_in,
        matrix_out=args.matrix_out,
        mc_replicates=args.mc_replicates,
    )
    run_pipeline(config)


_COMMANDS = {
    "synth": _cmd_synth,
    "distance": _cmd_distance,
    "cluster": _cmd_cluster,
    "select-k": _cmd_select_k,
    "report": _cmd_report,
    "all": _cmd_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except TrajclustError as exc:
        print(json.dumps({"error": exc.category, "message": str(exc)}),
              file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
