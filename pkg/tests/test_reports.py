"""Characterization reports: ordering, summary tables, heatmap, densities."""

import csv
import math

import numpy as np
import pytest

from trajclust.cohort import RISK_FLAGS
from trajclust.errors import ValidationError
from trajclust.linkage import Partition
from trajclust.reports import (
    AGE_AT_END,
    AGE_AT_INDEX,
    LTC_COUNT,
    PANEL_LTC,
    PANEL_SOCIO,
    age_density,
    cluster_summary,
    density_table,
    log_odds_heatmap,
    order_clusters,
    stream_seed,
    write_assignments,
    write_density,
    write_heatmap,
    write_summary,
)

# ------------------------------------------------------------ order_clusters


def test_order_clusters_sorts_by_decreasing_size():
    labels = np.repeat([0, 1, 2], [10, 30, 20])
    ordered = order_clusters(Partition(k=3, labels=labels))
    assert ordered.sizes().tolist() == [30, 20, 10]
    # contents preserved as sets: old 1 -> new 0, old 2 -> new 1, old 0 -> new 2
    assert np.array_equal(ordered.members(0), np.flatnonzero(labels == 1))
    assert np.array_equal(ordered.members(1), np.flatnonzero(labels == 2))
    assert np.array_equal(ordered.members(2), np.flatnonzero(labels == 0))


def test_order_clusters_identity_when_already_ordered():
    labels = np.repeat([0, 1, 2], [30, 20, 10])
    ordered = order_clusters(Partition(k=3, labels=labels))
    assert np.array_equal(ordered.labels, labels)


def test_order_clusters_breaks_size_ties_by_original_label():
    labels = np.repeat([0, 1, 2], [5, 5, 10])
    ordered = order_clusters(Partition(k=3, labels=labels))
    assert ordered.sizes().tolist() == [10, 5, 5]
    assert np.array_equal(ordered.members(1), np.flatnonzero(labels == 0))
    assert np.array_equal(ordered.members(2), np.flatnonzero(labels == 1))


def test_stream_seed_is_stable_and_label_dependent():
    a = np.random.default_rng(stream_seed(3, "assoc:gender")).integers(0, 1 << 30, 5)
    b = np.random.default_rng(stream_seed(3, "assoc:gender")).integers(0, 1 << 30, 5)
    c = np.random.default_rng(stream_seed(3, "assoc:ethnicity")).integers(0, 1 << 30, 5)
    assert a.tolist() == b.tolist()
    assert a.tolist() != c.tolist()


# ----------------------------------------------------------- cluster_summary


@pytest.fixture
def planted(make_cohort):
    """Two planted groups of 500: hypertension 40% vs 10%, gender mixed.

    Hypertension is the only non-constant condition, so its heatmap fit
    reduces to the univariate 2x2 closed form.
    """
    specs = []
    for i in range(500):
        events = {"stroke": 60.0}
        if i < 200:
            events["hypertension"] = 55.0
        gender = "female" if i % 5 < 3 else "male"  # 300 female
        specs.append((events, 80.0, {"gender": gender}))
    for i in range(500):
        events = {"stroke": 60.0}
        if i < 50:
            events["hypertension"] = 55.0
        gender = "female" if i % 5 < 2 else "male"  # 200 female
        specs.append((events, 80.0, {"gender": gender}))
    cohort = make_cohort(specs)
    labels = np.repeat([0, 1], [500, 500])
    return cohort, Partition(k=2, labels=labels)


def rows_for(summary, variable, cluster=None):
    rows = [r for r in summary.rows if r.variable == variable]
    if cluster is not None:
        rows = [r for r in rows if r.cluster == cluster]
    return rows


def test_summary_covers_every_reporting_variable(planted):
    cohort, part = planted
    summary = cluster_summary(cohort, part)
    variables = {r.variable for r in summary.rows}
    want = {AGE_AT_INDEX, LTC_COUNT, AGE_AT_END, "gender", "ethnicity", "imd_band",
            "end_status", *RISK_FLAGS, *cohort.catalog.non_index_ids}
    assert variables == want
    assert {r.cluster for r in summary.rows} == {"all", "1", "2"}


def test_summary_percentages_sum_to_hundred(planted):
    cohort, part = planted
    summary = cluster_summary(cohort, part)
    groups = {}
    for r in summary.rows:
        if r.percent is not None:
            groups.setdefault((r.variable, r.cluster), []).append(r.percent)
    assert groups
    for (variable, cluster), percents in groups.items():
        assert sum(percents) == pytest.approx(100.0, abs=0.1), (variable, cluster)


def test_summary_counts_and_tests(planted):
    cohort, part = planted
    summary = cluster_summary(cohort, part)
    hyper = {r.cluster: r for r in rows_for(summary, "hypertension") if r.level == "1"}
    assert hyper["1"].count == 200
    assert hyper["2"].count == 50
    assert hyper["all"].count == 250
    assert hyper["all"].percent == pytest.approx(25.0)
    assert hyper["1"].test == "chi_square"
    assert hyper["1"].p_value < 1e-6  # 40% vs 10% at n=1000
    age = rows_for(summary, AGE_AT_INDEX, "all")[0]
    assert age.test == "kruskal_wallis"
    assert (age.median, age.level) == (60.0, "")
    ltc = {r.cluster: r for r in rows_for(summary, LTC_COUNT)}
    assert ltc["all"].count == 1000
    assert ltc["1"].median == 0.0


def test_summary_monte_carlo_mode_is_seeded(planted):
    cohort, part = planted
    a = cluster_summary(cohort, part, mode="monte_carlo", replicates=300, seed=5)
    b = cluster_summary(cohort, part, mode="monte_carlo", replicates=300, seed=5)
    pa = [(r.variable, r.p_value) for r in a.rows if r.test == "monte_carlo"]
    pb = [(r.variable, r.p_value) for r in b.rows if r.test == "monte_carlo"]
    assert pa and pa == pb
    hyper = next(r for r in a.rows if r.variable == "hypertension" and r.p_value is not None)
    assert hyper.p_value == pytest.approx(1.0 / 301.0)  # far beyond every replicate


def test_summary_rejects_bad_partitions(planted):
    cohort, part = planted
    with pytest.raises(ValidationError, match="does not match"):
        cluster_summary(cohort, Partition(k=2, labels=part.labels[:-1]))
    with pytest.raises(ValidationError, match="two clusters"):
        cluster_summary(cohort, Partition(k=1, labels=np.zeros(1000, dtype=np.int64)))


def test_write_summary_format(tmp_path, planted):
    cohort, part = planted
    summary = cluster_summary(cohort, part)
    path = tmp_path / "summary.csv"
    write_summary(summary, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["variable", "level", "cluster", "count", "percent",
                             "median", "q1", "q3", "test", "stat", "p"]
    assert len(rows) == len(summary.rows)
    hyper = next(
        r for r in rows
        if r["variable"] == "hypertension" and r["level"] == "1" and r["cluster"] == "1"
    )
    assert float(hyper["percent"]) == 40.0
    assert hyper["median"] == ""


# ------------------------------------------------------------------ heatmap


def cell_of(table, panel, cluster, variable):
    hits = [
        c for c in table.cells
        if (c.panel, c.cluster, c.variable) == (panel, cluster, variable)
    ]
    assert len(hits) == 1, f"{panel}/{cluster}/{variable}: {len(hits)} cells"
    return hits[0]


def test_heatmap_recovers_planted_enrichment(planted):
    cohort, part = planted
    table = log_odds_heatmap(cohort, part)
    cell = cell_of(table, PANEL_LTC, 1, "hypertension")
    # every other condition column is constant, so the fit reduces to the
    # 2x2 closed form: ln((200*450)/(50*300)) = ln 6
    assert cell.log_odds == pytest.approx(math.log(6.0), abs=1e-6)
    assert cell.se == pytest.approx(math.sqrt(1 / 200 + 1 / 50 + 1 / 300 + 1 / 450), abs=1e-6)
    assert cell.p_value < 0.05
    assert cell.displayed and cell.note == ""
    # the mirror cluster sees the depletion
    assert cell_of(table, PANEL_LTC, 2, "hypertension").log_odds < 0


def test_heatmap_marks_constant_columns(planted):
    cohort, part = planted
    table = log_odds_heatmap(cohort, part)
    for cluster in (1, 2):
        cell = cell_of(table, PANEL_LTC, cluster, "dementia")
        assert cell.note == "constant"
        assert cell.log_odds is None and not cell.displayed
        # all-female / all-male halves make gender non-constant though
        assert cell_of(table, PANEL_SOCIO, cluster, "gender_female").log_odds is not None


def test_heatmap_displayed_flag_is_exactly_p_below_threshold(planted):
    cohort, part = planted
    table = log_odds_heatmap(cohort, part)
    assert any(c.p_value is not None for c in table.cells)
    for c in table.cells:
        if c.p_value is None:
            assert not c.displayed
        else:
            assert c.displayed == (c.p_value < 0.05)


def test_heatmap_reports_separated_cells_but_fits_the_rest(make_cohort):
    # hypertension carriers sit only in cluster 1, so its membership
    # regression is quasi-separated; diabetes still gets a coefficient
    specs = []
    for i in range(200):
        events = {"stroke": 60.0}
        if i < 30:
            events["hypertension"] = 55.0
        if i < 80:
            events["diabetes"] = 50.0
        specs.append((events, 80.0))
    for i in range(200):
        events = {"stroke": 60.0}
        if i < 40:
            events["diabetes"] = 50.0
        specs.append((events, 80.0))
    cohort = make_cohort(specs)
    part = Partition(k=2, labels=np.repeat([0, 1], [200, 200]))
    table = log_odds_heatmap(cohort, part)
    sep = cell_of(table, PANEL_LTC, 1, "hypertension")
    assert sep.note == "separation"
    assert sep.log_odds is None and not sep.displayed
    dia = cell_of(table, PANEL_LTC, 1, "diabetes")
    assert dia.note == "" and dia.log_odds is not None
    assert dia.log_odds == pytest.approx(math.log((80 * 160) / (120 * 40)), abs=1e-6)


def test_heatmap_rejects_degenerate_partition(planted):
    cohort, _ = planted
    with pytest.raises(ValidationError, match="two clusters"):
        log_odds_heatmap(cohort, Partition(k=1, labels=np.zeros(1000, dtype=np.int64)))


def test_heatmap_cell_grid_is_complete(small_labeled):
    cohort = small_labeled.cohort
    part = order_clusters(Partition(k=3, labels=small_labeled.archetype_labels))
    table = log_odds_heatmap(cohort, part)
    names_ltc = set(cohort.catalog.non_index_ids)
    for cluster in (1, 2, 3):
        got = {c.variable for c in table.cells
               if c.panel == PANEL_LTC and c.cluster == cluster}
        assert got == names_ltc
    socio = {c.variable for c in table.cells if c.panel == PANEL_SOCIO}
    assert "gender_female" in socio and AGE_AT_INDEX in socio
    assert not any(e.startswith("ethnicity_White") for e in socio)  # reference level


def test_write_heatmap_format(tmp_path, planted):
    cohort, part = planted
    table = log_odds_heatmap(cohort, part)
    path = tmp_path / "heatmap.csv"
    write_heatmap(table, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["panel", "cluster", "variable", "log_odds", "se", "p",
                             "displayed", "note"]
    assert len(rows) == len(table.cells)
    hyper = next(
        r for r in rows
        if r["variable"] == "hypertension" and r["cluster"] == "1"
    )
    assert float(hyper["log_odds"]) == pytest.approx(math.log(6.0), abs=1e-6)
    assert hyper["displayed"] == "1"


# ------------------------------------------------------------------ density


def test_age_density_overall_and_per_cluster(make_cohort):
    specs = []
    for i in range(40):
        specs.append(({"stroke": 60.0, "hypertension": 50.0 + (i % 7)}, 80.0))
    for i in range(40):
        specs.append(({"stroke": 60.0}, 80.0))
    cohort = make_cohort(specs)
    part = Partition(k=2, labels=np.repeat([0, 1], [40, 40]))
    table = age_density(cohort, "hypertension", part)
    clusters = {r.cluster for r in table.rows}
    assert clusters == {"", "1"}  # cluster 2 has no carriers, so no rows
    overall = [r for r in table.rows if r.cluster == ""]
    assert len(overall) == 512
    assert max(r.scaled_density for r in overall) == pytest.approx(1.0)
    assert all(r.condition == "hypertension" for r in table.rows)


def test_age_density_point_mass_cluster(make_cohort):
    specs = [({"stroke": 60.0, "asthma": 33.5}, 80.0)] + [
        ({"stroke": 60.0, "asthma": 20.0 + i}, 80.0) for i in range(10)
    ]
    cohort = make_cohort(specs)
    part = Partition(k=2, labels=np.array([0] + [1] * 10))
    table = age_density(cohort, "asthma", part)
    solo = [r for r in table.rows if r.cluster == "1"]
    assert len(solo) == 1
    assert (solo[0].age, solo[0].scaled_density) == (33.5, 1.0)


def test_age_density_errors(make_cohort):
    cohort = make_cohort([({"stroke": 60.0}, 80.0)] * 3)
    with pytest.raises(ValidationError, match="unknown condition"):
        age_density(cohort, "mystery")
    with pytest.raises(ValidationError, match="no patient has"):
        age_density(cohort, "asthma")


def test_density_table_skips_absent_conditions(make_cohort):
    cohort = make_cohort(
        [({"stroke": 60.0, "copd": 55.0 + i}, 80.0) for i in range(5)]
    )
    table = density_table(cohort)
    present = {r.condition for r in table.rows}
    assert present == {"stroke", "copd"}


def test_write_density_and_assignments(tmp_path, make_cohort):
    cohort = make_cohort(
        [({"stroke": 58.0 + i}, 80.0) for i in range(4)]
    )
    part = Partition(k=2, labels=np.array([0, 0, 1, 1]))
    dpath = tmp_path / "density.csv"
    write_density(density_table(cohort, part), dpath)
    with open(dpath, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["condition", "cluster", "age", "scaled_density"]
    assert {r["cluster"] for r in rows} == {"", "1", "2"}

    apath = tmp_path / "assignments.csv"
    write_assignments(cohort, part, apath)
    with open(apath, newline="") as fh:
        arows = list(csv.DictReader(fh))
    assert [(r["patient_id"], r["cluster"]) for r in arows] == [
        ("p1", "1"), ("p2", "1"), ("p3", "2"), ("p4", "2")
    ]
