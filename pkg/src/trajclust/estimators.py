"""Estimator-style wrappers around the functional core.

`CensoredJaccard` is a transformer producing pairwise distances,
`TrajectoryWard` a clusterer with the familiar fit/fit_predict surface,
get_params/set_params, and clone compatibility. Both accept a Cohort, a
list of PatientRecord, or (for the clusterer with metric="precomputed")
a ready distance matrix in square or condensed form.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from .cohort import Cohort, LtcCatalog, PatientRecord, default_catalog
from .distance import CondensedDistanceMatrix, condensed_matrix
from .errors import ValidationError
from .linkage import cut, ward_linkage
from .reports import order_clusters
from .selection import FIXED, FIRST_LOCAL_MAX, POLICIES, scan
from .timelines import encode_timelines


def _as_cohort(X, catalog: LtcCatalog | None) -> Cohort:
    if isinstance(X, Cohort):
        return X
    if isinstance(X, (list, tuple)) and X and all(isinstance(p, PatientRecord) for p in X):
        return Cohort(catalog=catalog or default_catalog(), patients=list(X))
    raise ValidationError(
        "expected a Cohort or a non-empty list of PatientRecord; "
        "for raw distance input use metric='precomputed'"
    )


def _as_condensed(X) -> CondensedDistanceMatrix:
    if isinstance(X, CondensedDistanceMatrix):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 2:
        if arr.shape[0] != arr.shape[1]:
            raise ValidationError("precomputed matrix must be square")
        if not np.allclose(arr, arr.T, atol=1e-12):
            raise ValidationError("precomputed matrix must be symmetric")
        if np.any(np.diag(arr) != 0.0):
            raise ValidationError("precomputed matrix must have a zero diagonal")
        n = arr.shape[0]
        i, j = np.triu_indices(n, k=1)
        return CondensedDistanceMatrix(n=n, values=arr[i, j])
    if arr.ndim == 1:
        # infer n from the condensed length m = n*(n-1)/2
        m = arr.size
        n = int(round((1.0 + np.sqrt(1.0 + 8.0 * m)) / 2.0))
        if n * (n - 1) // 2 != m:
            raise ValidationError(f"{m} values is not a valid condensed length")
        return CondensedDistanceMatrix(n=n, values=arr)
    raise ValidationError("precomputed input must be 1-d condensed or 2-d square")


class CensoredJaccard(TransformerMixin, BaseEstimator):
    """Pairwise censoring-aware Jaccard distances as a transformer.

    transform(X) returns the full square distance matrix for the samples
    in X (suitable for downstream estimators with metric="precomputed");
    transform_condensed(X) returns the condensed form.

    Parameters
    ----------
    catalog : LtcCatalog or None
        Condition universe used when X is a plain list of records;
        defaults to the built-in 30-condition catalog.
    n_jobs : int
        Worker processes for the pairwise computation.
    """

    def __init__(self, catalog=None, n_jobs=1):
        self.catalog = catalog
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        cohort = _as_cohort(X, self.catalog)
        self.n_features_in_ = len(cohort.catalog)
        return self

    def transform(self, X) -> np.ndarray:
        return self.transform_condensed(X).square()

    def transform_condensed(self, X) -> CondensedDistanceMatrix:
        cohort = _as_cohort(X, self.catalog)
        arrays = encode_timelines(cohort)
        return condensed_matrix(arrays, workers=self.n_jobs)


class TrajectoryWard(ClusterMixin, BaseEstimator):
    """Ward clustering of condition timelines with automatic size selection.

    Parameters
    ----------
    n_clusters : int or "auto"
        Fixed cut size, or "auto" to pick k from the point-biserial curve.
    metric : "censored_jaccard" or "precomputed"
    ward_variant : "d" or "d2"
    k_min, k_max : scanned range for automatic selection
    selection_policy : "first_local_max" or "global_max_among_local"
    catalog : condition universe for plain record lists
    n_jobs : worker processes for the distance stage

    Attributes
    ----------
    labels_ : cluster per sample, 0-based, renumbered by decreasing size
    n_clusters_ : the cut size actually used
    merge_tree_ : the full MergeTree
    selection_curve_ : SelectionCurve (None when n_clusters is fixed)
    """

    def __init__(
        self,
        n_clusters="auto",
        metric="censored_jaccard",
        ward_variant="d2",
        k_min=2,
        k_max=20,
        selection_policy=FIRST_LOCAL_MAX,
        catalog=None,
        n_jobs=1,
    ):
        self.n_clusters = n_clusters
        self.metric = metric
        self.ward_variant = ward_variant
        self.k_min = k_min
        self.k_max = k_max
        self.selection_policy = selection_policy
        self.catalog = catalog
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if self.metric == "precomputed":
            matrix = _as_condensed(X)
        elif self.metric == "censored_jaccard":
            cohort = _as_cohort(X, self.catalog)
            matrix = condensed_matrix(encode_timelines(cohort), workers=self.n_jobs)
        else:
            raise ValidationError(f"unknown metric {self.metric!r}")
        if self.selection_policy not in POLICIES or self.selection_policy == FIXED:
            raise ValidationError(
                "selection_policy must be 'first_local_max' or "
                "'global_max_among_local'; use n_clusters=<int> for a fixed cut"
            )

        tree = ward_linkage(matrix, variant=self.ward_variant)
        if self.n_clusters == "auto":
            k_max = min(self.k_max, matrix.n - 1)
            curve = scan(tree, matrix, self.k_min, k_max, policy=self.selection_policy)
            k = curve.chosen_k
            self.selection_curve_ = curve
        else:
            k = int(self.n_clusters)
            self.selection_curve_ = None
        partition = order_clusters(cut(tree, k))
        self.merge_tree_ = tree
        self.n_clusters_ = k
        self.labels_ = partition.labels
        return self

    # ClusterMixin supplies fit_predict on top of fit/labels_
