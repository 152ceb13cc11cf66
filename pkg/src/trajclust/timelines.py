"""State timelines and the censoring-aware Jaccard distance.

A patient's history is encoded as a set of state intervals: once a
condition is recorded at onset age t, it stays active from t to the end
of follow-up. Two patients are compared only over their common follow-up
window W = min(horizon_a, horizon_b); everything after W is unobserved
for at least one of them and must not influence the distance. Absence
over the common window counts as agreement (a negative match), which is
what makes the comparison valid under right censoring.

The distance is one minus the ratio of jointly-active time to
either-active time, pooled across conditions over [0, W]. Interval
arithmetic is exact; no time grid is involved. ``jaccard_grid_oracle``
is an independent cross-check that rebuilds the same quantity from
explicit per-unit indicator vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .cohort import Cohort
from .errors import ValidationError


@dataclass(frozen=True)
class StateTimeline:
    """One patient's condition onsets against a fixed condition universe.

    ``conditions`` is the catalog's condition_id tuple; it fixes the
    column order used by the dense encoding and must be shared by any
    two timelines that are compared.
    """

    patient_index: int
    horizon: float
    onsets: Mapping[str, float]
    conditions: tuple[str, ...]

    def __post_init__(self):
        if self.horizon < 0:
            raise ValidationError("horizon must be >= 0")
        universe = set(self.conditions)
        for cid, onset in self.onsets.items():
            if cid not in universe:
                raise ValidationError(f"onset for condition outside the universe: {cid!r}")
            if onset < 0 or onset > self.horizon:
                raise ValidationError(
                    f"onset of {cid!r} must lie in [0, horizon], got {onset}"
                )

    def dense_row(self) -> np.ndarray:
        """Onset ages in condition order; +inf marks an absent condition."""
        row = np.full(len(self.conditions), np.inf)
        for k, cid in enumerate(self.conditions):
            if cid in self.onsets:
                row[k] = self.onsets[cid]
        return row


@dataclass(frozen=True)
class TimelineArrays:
    """Dense cohort encoding: one onset row per patient, +inf = absent."""

    onsets: np.ndarray  # (n, m) float64
    horizons: np.ndarray  # (n,) float64
    conditions: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.onsets.shape[0]


def timeline(cohort: Cohort, patient_index: int) -> StateTimeline:
    """Build the state timeline of one cohort member."""
    if not 0 <= patient_index < len(cohort):
        raise ValidationError(f"patient_index out of range: {patient_index}")
    p = cohort.patients[patient_index]
    return StateTimeline(
        patient_index=patient_index,
        horizon=p.follow_up_end,
        onsets=dict(p.events),
        conditions=cohort.catalog.ids,
    )


def encode_timelines(cohort: Cohort) -> TimelineArrays:
    n, m = len(cohort), len(cohort.catalog)
    ids = cohort.catalog.ids
    col = {cid: k for k, cid in enumerate(ids)}
    onsets = np.full((n, m), np.inf)
    horizons = np.empty(n)
    for i, p in enumerate(cohort.patients):
        horizons[i] = p.follow_up_end
        for cid, onset in p.events.items():
            onsets[i, col[cid]] = onset
    return TimelineArrays(onsets=onsets, horizons=horizons, conditions=ids)


def _pair_block(onsets_i, block_onsets, horizon_i, block_horizons):
    """Distances from one row to a block of rows. Shared by the pairwise
    function and the full-matrix computation so both produce identical
    floating-point results."""
    w = np.minimum(horizon_i, block_horizons)[:, None]
    # per condition: time both active resp. either active inside [0, W];
    # +inf onsets fall out through the clip
    inter = np.clip(w - np.maximum(onsets_i, block_onsets), 0.0, None).sum(axis=1)
    union = np.clip(w - np.minimum(onsets_i, block_onsets), 0.0, None).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = 1.0 - inter / union
    empty = union == 0.0
    # nothing observed in common for either patient: call them identical
    d[empty] = 0.0
    return d, empty


def jaccard(a: StateTimeline, b: StateTimeline) -> float:
    """Censoring-aware Jaccard distance between two timelines.

    Returns 0 when neither patient has any active time inside the common
    window (the all-negative-match convention; such pairs are counted in
    the matrix diagnostics because they can co-cluster young censored
    patients).
    """
    if a.conditions != b.conditions:
        raise ValidationError("timelines use different condition universes")
    d, _ = _pair_block(
        a.dense_row(),
        b.dense_row()[None, :],
        a.horizon,
        np.array([b.horizon]),
    )
    return float(d[0])


def jaccard_grid_oracle(a: StateTimeline, b: StateTimeline, resolution: float = 1.0) -> float:
    """Grid reimplementation of :func:`jaccard` for cross-checking.

    Lays a grid of the given step over the common window [0, W), builds
    explicit 0/1 state indicators per condition and cell, and counts
    matching versus either-active cells. Exact for integer-valued onsets
    at resolution 1.0; converges to :func:`jaccard` as the resolution
    shrinks on fractional data.
    """
    if a.conditions != b.conditions:
        raise ValidationError("timelines use different condition universes")
    if not resolution > 0:
        raise ValidationError("resolution must be > 0")
    w = min(a.horizon, b.horizon)
    n_cells = int(math.floor(w / resolution + 1e-9))
    if n_cells == 0:
        return 0.0
    starts = np.arange(n_cells) * resolution
    matches = 0
    unions = 0
    for cid in set(a.onsets) | set(b.onsets):
        active_a = starts >= a.onsets[cid] if cid in a.onsets else np.zeros(n_cells, bool)
        active_b = starts >= b.onsets[cid] if cid in b.onsets else np.zeros(n_cells, bool)
        matches += int((active_a & active_b).sum())
        unions += int((active_a | active_b).sum())
    if unions == 0:
        return 0.0
    return 1.0 - matches / unions
