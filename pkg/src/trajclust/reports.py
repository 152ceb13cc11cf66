"""Cluster characterization tables and their CSV exports.

Clusters are renumbered by decreasing size before any reporting, so
"cluster 1" is always the largest. Exports use 1-based cluster ids; the
empty string marks the whole-cohort column ("all") where applicable.

Three tables are produced:

* summary: per variable, level, and cluster counts/percentages or
  median/IQR, with a test of association across clusters (Kruskal-Wallis
  for numeric variables, Pearson chi-square for categorical ones, with
  an optional seeded Monte Carlo mode);
* log-odds heatmap: per cluster, one multivariate logistic regression of
  cluster membership on a variable panel; a cell is displayed exactly
  when its p-value is below 0.05;
* onset-age densities: per condition (optionally per cluster) Gaussian
  kernel density curves rescaled to a unit maximum.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .cohort import ETHNICITIES, IMD_BANDS, RISK_FLAGS, Cohort
from .errors import (
    ConvergenceError,
    DegenerateTableError,
    FitError,
    SeparationError,
    UndefinedCoefficientError,
    ValidationError,
)
from .linkage import Partition
from .stats import (
    association_test,
    density_curve,
    fit_logistic,
    kruskal_wallis,
    numeric_summary,
)

AGE_AT_INDEX = "age_at_index_record"
LTC_COUNT = "additional_ltc_count"
AGE_AT_END = "age_at_end_of_follow_up"

PANEL_SOCIO = "sociodemographic_risk"
PANEL_LTC = "ltc"


def order_clusters(partition: Partition) -> Partition:
    """Renumber labels by decreasing cluster size.

    Ties go to the smaller original label, so the renumbering is stable.
    """
    sizes = partition.sizes()
    order = sorted(range(partition.k), key=lambda c: (-sizes[c], c))
    remap = np.empty(partition.k, dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
    return Partition(k=partition.k, labels=remap[partition.labels])


def stream_seed(seed: int, label: str) -> np.random.SeedSequence:
    """Independent, reproducible substream for one named computation."""
    digest = hashlib.sha256(label.encode()).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.SeedSequence([int(seed), key])


@dataclass
class SummaryRow:
    variable: str
    level: str  # "" for numeric variables
    cluster: str  # "1".."k" or "all"
    count: int
    percent: float | None
    median: float | None
    q1: float | None
    q3: float | None
    test: str
    statistic: float | None
    p_value: float | None


@dataclass
class ClusterSummary:
    k: int
    rows: list[SummaryRow] = field(default_factory=list)


def _categorical_rows(name, values, labels, k, levels, mode, replicates, seed):
    rows = []
    # association over levels observed anywhere; sparse levels stay in the
    # descriptive rows but an all-zero level cannot enter the test
    present = [lv for lv in levels if np.any(values == lv)]
    test_name = "chi_square" if mode == "chi_square" else "monte_carlo"
    stat = p = None
    if len(present) >= 2:
        table = np.array(
            [[int(np.sum((values == lv) & (labels == c))) for c in range(k)] for lv in present]
        )
        try:
            res = association_test(
                table,
                mode=mode,
                replicates=replicates,
                rng=stream_seed(seed, f"assoc:{name}"),
            )
            stat, p = res.statistic, res.p_value
        except DegenerateTableError:
            pass
    groups = [("all", np.ones(values.shape[0], dtype=bool))] + [
        (str(c + 1), labels == c) for c in range(k)
    ]
    for lv in levels:
        for gname, mask in groups:
            size = int(mask.sum())
            cnt = int(np.sum((values == lv) & mask))
            rows.append(
                SummaryRow(
                    variable=name,
                    level=str(lv),
                    cluster=gname,
                    count=cnt,
                    percent=100.0 * cnt / size,
                    median=None,
                    q1=None,
                    q3=None,
                    test=test_name,
                    statistic=stat,
                    p_value=p,
                )
            )
    return rows


def _numeric_rows(name, values, labels, k):
    res = kruskal_wallis([values[labels == c] for c in range(k)])
    summary = numeric_summary(values, labels)
    rows = []
    quartiles = [("all", summary.overall)] + [
        (str(c + 1), summary.per_group[c]) for c in range(k)
    ]
    for gname, q in quartiles:
        rows.append(
            SummaryRow(
                variable=name,
                level="",
                cluster=gname,
                count=q.n,
                percent=None,
                median=q.median,
                q1=q.q1,
                q3=q.q3,
                test="kruskal_wallis",
                statistic=res.statistic,
                p_value=res.p_value,
            )
        )
    return rows


def cluster_summary(
    cohort: Cohort,
    partition: Partition,
    mode: str = "chi_square",
    replicates: int = 10_000,
    seed: int = 0,
) -> ClusterSummary:
    """Descriptive and inferential summary of every reporting variable.

    Assumes the partition is already size-ordered (see
    :func:`order_clusters`); cluster c is exported as id c+1.
    """
    if partition.n != len(cohort):
        raise ValidationError("partition does not match the cohort size")
    if partition.k < 2:
        raise ValidationError("summary needs a partition with at least two clusters")
    k = partition.k
    labels = partition.labels
    out = ClusterSummary(k=k)

    index_id = cohort.catalog.index_condition.condition_id
    age_idx = cohort.age_at_index()
    ltc_count = np.array(
        [sum(1 for c in p.events if c != index_id) for p in cohort.patients], dtype=float
    )
    follow_end = np.array([p.follow_up_end for p in cohort.patients])

    out.rows += _numeric_rows(AGE_AT_INDEX, age_idx, labels, k)
    out.rows += _numeric_rows(LTC_COUNT, ltc_count, labels, k)
    out.rows += _numeric_rows(AGE_AT_END, follow_end, labels, k)

    def cat(name, values, levels):
        out.rows += _categorical_rows(
            name, np.asarray(values), labels, k, levels, mode, replicates, seed
        )

    cat("gender", [p.gender for p in cohort.patients], ["female", "male"])
    cat("ethnicity", [p.ethnicity for p in cohort.patients], list(ETHNICITIES))
    cat("imd_band", [p.imd_band for p in cohort.patients], list(IMD_BANDS))
    cat("end_status", [p.end_status for p in cohort.patients], ["censored", "died"])
    for flag in RISK_FLAGS:
        cat(flag, [int(getattr(p, flag)) for p in cohort.patients], [0, 1])
    for cid in cohort.catalog.non_index_ids:
        cat(cid, [int(cid in p.events) for p in cohort.patients], [0, 1])
    return out


def write_summary(summary: ClusterSummary, path) -> None:
    def fmt(x):
        return "" if x is None else repr(float(x))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["variable", "level", "cluster", "count", "percent", "median", "q1", "q3",
             "test", "stat", "p"]
        )
        for r in summary.rows:
            w.writerow(
                [r.variable, r.level, r.cluster, r.count, fmt(r.percent), fmt(r.median),
                 fmt(r.q1), fmt(r.q3), r.test, fmt(r.statistic), fmt(r.p_value)]
            )


@dataclass
class HeatmapCell:
    panel: str
    cluster: int  # 1-based
    variable: str
    log_odds: float | None
    se: float | None
    p_value: float | None
    displayed: bool
    note: str = ""


@dataclass
class LogOddsTable:
    k: int
    cells: list[HeatmapCell] = field(default_factory=list)


def _panel_designs(cohort: Cohort):
    """Variable names and columns for the two heatmap panels."""
    n = len(cohort)
    socio_names: list[str] = []
    socio_cols: list[np.ndarray] = []

    socio_names.append("gender_female")
    socio_cols.append(np.array([p.gender == "female" for p in cohort.patients], float))
    socio_names.append(AGE_AT_INDEX)
    socio_cols.append(cohort.age_at_index())
    for eth in ETHNICITIES:
        if eth == "White":
            continue  # reference level
        socio_names.append(f"ethnicity_{eth.replace('/', '_')}")
        socio_cols.append(np.array([p.ethnicity == eth for p in cohort.patients], float))
    for band in IMD_BANDS:
        if band == "less_deprived":
            continue  # reference level
        socio_names.append(f"imd_{band}")
        socio_cols.append(np.array([p.imd_band == band for p in cohort.patients], float))
    for flag in RISK_FLAGS:
        socio_names.append(flag)
        socio_cols.append(np.array([getattr(p, flag) for p in cohort.patients], float))

    ltc_names = list(cohort.catalog.non_index_ids)
    ltc_cols = [
        np.array([cid in p.events for p in cohort.patients], float) for cid in ltc_names
    ]
    return {
        PANEL_SOCIO: (socio_names, np.column_stack(socio_cols)),
        PANEL_LTC: (ltc_names, np.column_stack(ltc_cols)),
    }


def _fit_panel(names, X, y, cluster_no, panel):
    """One cluster-membership regression; returns cells, handling
    constant columns and separation cell by cell."""
    cells = []
    keep = [j for j in range(len(names)) if np.ptp(X[:, j]) > 0.0]
    dropped = [j for j in range(len(names)) if j not in keep]
    for j in dropped:
        cells.append(
            HeatmapCell(panel, cluster_no, names[j], None, None, None, False, "constant")
        )

    def design(cols):
        return np.column_stack([np.ones(X.shape[0])] + [X[:, j] for j in cols])

    separated: list[int] = []
    fit = None
    try:
        fit = fit_logistic(design(keep), y)
    except SeparationError:
        # find the diverging columns, drop them, refit the rest
        try:
            probe = fit_logistic(design(keep), y, separation_bound=np.inf)
            bad = np.flatnonzero(np.abs(probe.coef[1:]) > 15.0)
            separated = [keep[int(b)] for b in bad]
            reduced = [j for j in keep if j not in separated]
            for j in separated:
                cells.append(
                    HeatmapCell(panel, cluster_no, names[j], None, None, None, False,
                                "separation")
                )
            keep = reduced
            fit = fit_logistic(design(keep), y) if keep else None
        except (FitError, ConvergenceError, SeparationError, np.linalg.LinAlgError):
            fit = None
    except (FitError, ConvergenceError):
        fit = None

    if fit is None:
        done = {c.variable for c in cells}
        for j in range(len(names)):
            if names[j] not in done:
                cells.append(
                    HeatmapCell(panel, cluster_no, names[j], None, None, None, False,
                                "fit_failed")
                )
        return cells

    for slot, j in enumerate(keep, start=1):  # slot 0 is the intercept
        p = float(fit.p_values[slot])
        cells.append(
            HeatmapCell(
                panel,
                cluster_no,
                names[j],
                float(fit.coef[slot]),
                float(fit.se[slot]),
                p,
                displayed=p < 0.05,
            )
        )
    return cells


def log_odds_heatmap(cohort: Cohort, partition: Partition) -> LogOddsTable:
    """Per cluster and panel, a multivariate logistic regression of the
    cluster indicator on the panel variables."""
    if partition.n != len(cohort):
        raise ValidationError("partition does not match the cohort size")
    if partition.k < 2:
        raise ValidationError("heatmap needs a partition with at least two clusters")
    designs = _panel_designs(cohort)
    table = LogOddsTable(k=partition.k)
    for c in range(partition.k):
        y = (partition.labels == c).astype(float)
        for panel in (PANEL_SOCIO, PANEL_LTC):
            names, X = designs[panel]
            table.cells += _fit_panel(names, X, y, c + 1, panel)
    return table


def write_heatmap(table: LogOddsTable, path) -> None:
    def fmt(x):
        return "" if x is None else repr(float(x))

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["panel", "cluster", "variable", "log_odds", "se", "p", "displayed", "note"])
        for c in table.cells:
            w.writerow(
                [c.panel, c.cluster, c.variable, fmt(c.log_odds), fmt(c.se),
                 fmt(c.p_value), int(c.displayed), c.note]
            )


@dataclass
class DensityRow:
    condition: str
    cluster: str  # "" for the whole cohort
    age: float
    scaled_density: float


@dataclass
class DensityTable:
    rows: list[DensityRow] = field(default_factory=list)


def age_density(cohort: Cohort, condition_id: str, partition: Partition | None = None) -> DensityTable:
    """Onset-age density for one condition, optionally split by cluster.

    A sample of one is exported as a single point-mass row (density 1 at
    the observed age). A cluster with no carrier contributes no rows.
    """
    if condition_id not in cohort.catalog:
        raise ValidationError(f"unknown condition_id: {condition_id!r}")
    onsets = np.array(
        [p.events[condition_id] for p in cohort.patients if condition_id in p.events]
    )
    if onsets.size == 0:
        raise ValidationError(f"no patient has condition {condition_id!r}")
    table = DensityTable()
    curve = density_curve(onsets)
    for age, dens in zip(curve.ages, curve.scaled):
        table.rows.append(DensityRow(condition_id, "", float(age), float(dens)))
    if partition is not None:
        if partition.n != len(cohort):
            raise ValidationError("partition does not match the cohort size")
        for c in range(partition.k):
            sub = np.array(
                [
                    p.events[condition_id]
                    for p, lab in zip(cohort.patients, partition.labels)
                    if lab == c and condition_id in p.events
                ]
            )
            if sub.size == 0:
                continue
            curve = density_curve(sub)
            for age, dens in zip(curve.ages, curve.scaled):
                table.rows.append(DensityRow(condition_id, str(c + 1), float(age), float(dens)))
    return table


def density_table(
    cohort: Cohort, partition: Partition | None = None, conditions=None
) -> DensityTable:
    """Density rows for many conditions; conditions nobody has are skipped."""
    table = DensityTable()
    for cid in conditions if conditions is not None else cohort.catalog.ids:
        if not any(cid in p.events for p in cohort.patients):
            continue
        table.rows += age_density(cohort, cid, partition).rows
    return table


def write_density(table: DensityTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["condition", "cluster", "age", "scaled_density"])
        for r in table.rows:
            w.writerow([r.condition, r.cluster, repr(r.age), repr(r.scaled_density)])


def write_assignments(cohort: Cohort, partition: Partition, path) -> None:
    """patient_id,cluster with 1-based size-ordered cluster ids."""
    if partition.n != len(cohort):
        raise ValidationError("partition does not match the cohort size")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "cluster"])
        for p, lab in zip(cohort.patients, partition.labels):
            w.writerow([p.patient_id, int(lab) + 1])
