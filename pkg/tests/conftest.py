import numpy as np
import pytest

from trajclust import StateTimeline, default_catalog, generate
from trajclust.cohort import Cohort, PatientRecord
from trajclust.synth import Archetype, ArchetypeSpec, ConditionMix


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture
def make_patient(catalog):
    """Factory for in-memory patient records; events default to stroke@60."""

    def _make(pid="p1", events=None, end=80.0, **kw):
        if events is None:
            events = {"stroke": 60.0}
        defaults = dict(
            gender="female",
            ethnicity="White",
            imd_band="less_deprived",
            end_status="censored",
        )
        defaults.update(kw)
        return PatientRecord(
            patient_id=pid, follow_up_end=end, events=dict(events), **defaults
        )

    return _make


@pytest.fixture
def make_cohort(catalog, make_patient):
    def _make(specs):
        """specs: list of (events, end) or (events, end, kwargs) tuples."""
        patients = []
        for i, spec in enumerate(specs):
            events, end = spec[0], spec[1]
            kw = spec[2] if len(spec) > 2 else {}
            patients.append(make_patient(f"p{i + 1}", events, end, **kw))
        return Cohort(catalog=catalog, patients=patients)

    return _make


@pytest.fixture
def random_timeline(catalog):
    conds = catalog.ids

    def _make(rng, horizon=None, integer=False, max_conditions=6):
        if horizon is None:
            horizon = float(rng.integers(10, 90)) if integer else float(rng.random() * 80 + 10)
        k = int(rng.integers(0, max_conditions))
        chosen = rng.choice(len(conds), size=k, replace=False)
        if integer:
            onsets = {conds[c]: float(rng.integers(0, int(horizon) + 1)) for c in chosen}
        else:
            onsets = {conds[c]: float(rng.random() * horizon) for c in chosen}
        return StateTimeline(
            patient_index=0, horizon=horizon, onsets=onsets, conditions=conds
        )

    return _make


def build_three_archetype_spec(catalog):
    """Three well-separated planted archetypes over the built-in catalog."""
    mk = ConditionMix
    archetypes = [
        Archetype(
            name="early_mental", weight=1 / 3,
            follow_up_mean=60.0, follow_up_sd=6.0, death_probability=0.05,
            conditions={
                "stroke": mk(1.0, 45.0, 4.0),
                "depression": mk(0.95, 30.0, 4.0),
                "anxiety": mk(0.9, 28.0, 4.0),
            },
        ),
        Archetype(
            name="vascular", weight=1 / 3,
            follow_up_mean=76.0, follow_up_sd=6.0, death_probability=0.2,
            conditions={
                "stroke": mk(1.0, 62.0, 4.0),
                "hypertension": mk(0.95, 50.0, 5.0),
                "diabetes": mk(0.9, 52.0, 5.0),
            },
        ),
        Archetype(
            name="cardiac_frail", weight=1 / 3,
            follow_up_mean=85.0, follow_up_sd=5.0, death_probability=0.5,
            conditions={
                "stroke": mk(1.0, 75.0, 4.0),
                "atrial_fibrillation": mk(0.95, 72.0, 4.0),
                "heart_failure": mk(0.9, 74.0, 4.0),
                "chronic_kidney_disease": mk(0.85, 70.0, 5.0),
            },
        ),
    ]
    return ArchetypeSpec(catalog=catalog, archetypes=archetypes)


@pytest.fixture(scope="session")
def three_archetype_spec(catalog):
    return build_three_archetype_spec(catalog)


@pytest.fixture(scope="session")
def small_labeled(three_archetype_spec):
    """150-patient planted cohort shared by selection/report tests."""
    return generate(three_archetype_spec, 150, seed=0)
