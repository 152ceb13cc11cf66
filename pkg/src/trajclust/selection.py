"""Partition-size selection by point-biserial correlation.

For a candidate partition, every patient pair is scored 0 (same cluster)
or 1 (different clusters). The point-biserial coefficient is the Pearson
correlation between the condensed distances and that binary indicator;
higher values mean the partition's split lines up with large distances.

``scan`` evaluates a whole range of cut sizes against one tree. It walks
the merge list once: each pair of patients crosses exactly one merge, so
per-merge cross-cluster sums give every cut's within-cluster totals at
the cost of a single pass over the condensed values.

Selection policies over the resulting curve:

* ``first_local_max`` (default): smallest k that is a strict interior
  local maximum;
* ``global_max_among_local``: the strict local maximum with the largest
  coefficient;
* ``fixed``: a caller-supplied k, bypassing the curve.

Endpoints never qualify as local maxima, and a k whose coefficient is
undefined is recorded as missing and excluded.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .distance import CondensedDistanceMatrix, pair_index_any
from .errors import ConfigError, UndefinedCoefficientError
from .linkage import MergeTree, Partition, cut

FIRST_LOCAL_MAX = "first_local_max"
GLOBAL_MAX_AMONG_LOCAL = "global_max_among_local"
FIXED = "fixed"
POLICIES = (FIRST_LOCAL_MAX, GLOBAL_MAX_AMONG_LOCAL, FIXED)

_GATHER_CHUNK = 1 << 22


@dataclass(frozen=True)
class SelectionCurve:
    """Coefficient per candidate k; NaN marks an undefined coefficient."""

    k_values: np.ndarray
    coefficients: np.ndarray
    local_maxima: tuple[int, ...]
    chosen_k: int
    policy: str

    def coefficient(self, k: int) -> float:
        pos = int(np.searchsorted(self.k_values, k))
        if pos >= self.k_values.size or self.k_values[pos] != k:
            raise ConfigError(f"k={k} not in scanned range")
        return float(self.coefficients[pos])

    def with_policy(self, policy: str, fixed_k: int | None = None) -> "SelectionCurve":
        chosen = select_k(self, policy, fixed_k)
        return replace(self, policy=policy, chosen_k=chosen)


def _pearson_from_sums(total, total_sq, n_pairs, within_sum, n_within):
    """Pearson correlation between distances and the 0/1 between-indicator,
    assembled from sufficient statistics."""
    n_between = n_pairs - n_within
    if n_within <= 0 or n_between <= 0:
        raise UndefinedCoefficientError(
            "partition needs at least one within-cluster and one between-cluster pair"
        )
    mean_d = total / n_pairs
    second = total_sq / n_pairs
    var_d = second - mean_d * mean_d
    # the subtraction cancels to rounding noise when distances are constant
    if var_d <= second * 1e-13:
        raise UndefinedCoefficientError("distances have zero variance")
    p_between = n_between / n_pairs
    var_b = p_between * (1.0 - p_between)
    between_sum = total - within_sum
    cov = between_sum / n_pairs - mean_d * p_between
    return float(cov / math.sqrt(var_d * var_b))


def _within_sums(matrix: CondensedDistanceMatrix, partition: Partition):
    within_sum = 0.0
    n_within = 0
    for label in range(partition.k):
        members = partition.members(label)
        m = members.size
        if m < 2:
            continue
        i, j = np.triu_indices(m, k=1)
        idx = pair_index_any(matrix.n, members[i], members[j])
        within_sum += float(matrix.values[idx].sum())
        n_within += idx.size
    return within_sum, n_within


def point_biserial(matrix: CondensedDistanceMatrix, partition: Partition) -> float:
    """Point-biserial coefficient of one partition against the distances."""
    if partition.n != matrix.n:
        raise ConfigError(
            f"partition over {partition.n} patients does not match matrix n={matrix.n}"
        )
    if partition.k < 2:
        raise UndefinedCoefficientError("partition needs at least two clusters")
    n_pairs = matrix.n * (matrix.n - 1) // 2
    total = float(matrix.values.sum())
    total_sq = float(np.square(matrix.values).sum())
    within_sum, n_within = _within_sums(matrix, partition)
    return _pearson_from_sums(total, total_sq, n_pairs, within_sum, n_within)


def _merge_cross_sums(tree: MergeTree, matrix: CondensedDistanceMatrix):
    """Per merge: the sum and count of pairs first joined by that merge."""
    n = tree.n
    values = matrix.values
    members: dict[int, np.ndarray] = {i: np.array([i], dtype=np.int64) for i in range(n)}
    cross_sum = np.zeros(n - 1)
    cross_count = np.zeros(n - 1, dtype=np.int64)
    for t in range(n - 1):
        la, lb = int(tree.left[t]), int(tree.right[t])
        a, b = members.pop(la), members.pop(lb)
        total = 0.0
        # chunk the cross product to bound temporary memory
        step = max(1, _GATHER_CHUNK // max(1, a.size))
        for s in range(0, b.size, step):
            bb = b[s : s + step]
            idx = pair_index_any(n, a[:, None], bb[None, :]).ravel()
            total += float(values[idx].sum())
        cross_sum[t] = total
        cross_count[t] = a.size * b.size
        members[n + t] = np.concatenate([a, b])
    return cross_sum, cross_count


def scan(
    tree: MergeTree,
    matrix: CondensedDistanceMatrix,
    k_min: int = 2,
    k_max: int = 20,
    policy: str = FIRST_LOCAL_MAX,
    fixed_k: int | None = None,
) -> SelectionCurve:
    """Point-biserial curve over cut sizes k_min..k_max for one tree."""
    n = tree.n
    if matrix.n != n:
        raise ConfigError(f"tree over {n} leaves does not match matrix n={matrix.n}")
    if not 2 <= k_min <= k_max <= n - 1:
        raise ConfigError(
            f"need 2 <= k_min <= k_max <= n-1, got k_min={k_min} k_max={k_max} n={n}"
        )

    n_pairs = n * (n - 1) // 2
    total = float(matrix.values.sum())
    total_sq = float(np.square(matrix.values).sum())
    cross_sum, cross_count = _merge_cross_sums(tree, matrix)
    # cutting at k keeps the first n-k merges; pairs joined by them are within
    within_by_merges = np.concatenate([[0.0], np.cumsum(cross_sum)])
    count_by_merges = np.concatenate([[0], np.cumsum(cross_count)])

    k_values = np.arange(k_min, k_max + 1)
    coefficients = np.empty(k_values.size)
    for pos, k in enumerate(k_values):
        kept = n - int(k)
        try:
            coefficients[pos] = _pearson_from_sums(
                total, total_sq, n_pairs,
                float(within_by_merges[kept]), int(count_by_merges[kept]),
            )
        except UndefinedCoefficientError:
            coefficients[pos] = np.nan

    if np.all(np.isnan(coefficients)):
        raise UndefinedCoefficientError("coefficient undefined for every scanned k")

    maxima = _strict_local_maxima(k_values, coefficients)
    curve = SelectionCurve(
        k_values=k_values,
        coefficients=coefficients,
        local_maxima=maxima,
        chosen_k=0,
        policy=policy,
    )
    return replace(curve, chosen_k=select_k(curve, policy, fixed_k))


def _strict_local_maxima(k_values, coefficients) -> tuple[int, ...]:
    out = []
    for pos in range(1, k_values.size - 1):
        c, lo, hi = coefficients[pos], coefficients[pos - 1], coefficients[pos + 1]
        if np.isnan(c) or np.isnan(lo) or np.isnan(hi):
            continue
        if c > lo and c > hi:
            out.append(int(k_values[pos]))
    return tuple(out)


def select_k(curve: SelectionCurve, policy: str | None = None, fixed_k: int | None = None) -> int:
    """Apply a selection policy to a scanned curve and return the k."""
    policy = policy or curve.policy
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}, expected one of {POLICIES}")
    if policy == FIXED:
        if fixed_k is None:
            raise ConfigError("policy 'fixed' requires a k")
        if fixed_k < curve.k_values[0] or fixed_k > curve.k_values[-1]:
            raise ConfigError(
                f"fixed k={fixed_k} outside scanned range "
                f"[{curve.k_values[0]}, {curve.k_values[-1]}]"
            )
        return int(fixed_k)
    if curve.local_maxima:
        if policy == FIRST_LOCAL_MAX:
            return curve.local_maxima[0]
        best = max(curve.local_maxima, key=lambda k: (curve.coefficient(k), -k))
        return int(best)
    # no interior local maximum: fall back to the best defined coefficient
    finite = np.flatnonzero(~np.isnan(curve.coefficients))
    best = finite[np.argmax(curve.coefficients[finite])]
    return int(curve.k_values[best])


def cut_selected(tree: MergeTree, curve: SelectionCurve) -> Partition:
    return cut(tree, curve.chosen_k)


def write_curve(curve: SelectionCurve, csv_path, json_path=None) -> None:
    """CSV export (k,coefficient,is_local_max,chosen) plus a JSON metadata block."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "coefficient", "is_local_max", "chosen"])
        for k, c in zip(curve.k_values, curve.coefficients):
            w.writerow(
                [
                    int(k),
                    "" if np.isnan(c) else repr(float(c)),
                    int(int(k) in curve.local_maxima),
                    int(int(k) == curve.chosen_k),
                ]
            )
    if json_path is not None:
        meta = {
            "k_min": int(curve.k_values[0]),
            "k_max": int(curve.k_values[-1]),
            "policy": curve.policy,
            "chosen_k": int(curve.chosen_k),
            "local_maxima": [int(k) for k in curve.local_maxima],
            "missing_k": [int(k) for k, c in zip(curve.k_values, curve.coefficients) if np.isnan(c)],
        }
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
