"""Synthetic cohorts with planted archetype structure.

A generator spec is a mixture of archetypes. Each archetype fixes a
follow-up distribution, a death probability, socio-demographic level
probabilities, and per-condition inclusion probabilities with onset-age
distributions. Onset ages are normal draws truncated to [0, horizon] by
rejection (1,000 attempts, then clamped into range). The index condition
is mandatory in every archetype with inclusion probability 1, so every
generated patient is cohort-eligible by construction.

Generation is deterministic given (spec, n, seed): one RNG stream, fixed
draw order per patient.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .cohort import (
    ETHNICITIES,
    IMD_BANDS,
    RISK_FLAGS,
    Cohort,
    LtcCatalog,
    PatientRecord,
    default_catalog,
    load_catalog,
)
from .errors import ValidationError

_MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class ConditionMix:
    probability: float
    onset_mean: float
    onset_sd: float

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValidationError(f"inclusion probability must be in [0, 1], got {self.probability}")
        if self.onset_sd < 0:
            raise ValidationError("onset_sd must be >= 0")


def _check_dist(name: str, dist: dict[str, float], levels) -> dict[str, float]:
    unknown = set(dist) - set(levels)
    if unknown:
        raise ValidationError(f"{name}: unknown levels {sorted(unknown)}")
    for lv, p in dist.items():
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"{name}: probability for {lv!r} must be in [0, 1]")
    total = sum(dist.values())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"{name}: probabilities sum to {total}, expected 1")
    return {lv: dist.get(lv, 0.0) for lv in levels}


@dataclass
class Archetype:
    name: str
    weight: float
    follow_up_mean: float
    follow_up_sd: float
    death_probability: float
    conditions: dict[str, ConditionMix]
    female_probability: float = 0.5
    ethnicity: dict[str, float] = field(default_factory=lambda: {"White": 1.0})
    imd: dict[str, float] = field(default_factory=lambda: {"less_deprived": 1.0})
    risk_factors: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.weight <= 0:
            raise ValidationError(f"archetype {self.name!r}: weight must be > 0")
        if self.follow_up_mean <= 0 or self.follow_up_sd < 0:
            raise ValidationError(f"archetype {self.name!r}: bad follow-up distribution")
        if not 0.0 <= self.death_probability <= 1.0:
            raise ValidationError(f"archetype {self.name!r}: bad death probability")
        if not 0.0 <= self.female_probability <= 1.0:
            raise ValidationError(f"archetype {self.name!r}: bad female probability")
        self.ethnicity = _check_dist(
            f"archetype {self.name!r} ethnicity", self.ethnicity, ETHNICITIES
        )
        self.imd = _check_dist(f"archetype {self.name!r} imd", self.imd, IMD_BANDS)
        unknown = set(self.risk_factors) - set(RISK_FLAGS)
        if unknown:
            raise ValidationError(
                f"archetype {self.name!r}: unknown risk factors {sorted(unknown)}"
            )


@dataclass
class ArchetypeSpec:
    catalog: LtcCatalog
    archetypes: list[Archetype]

    def __post_init__(self):
        if not self.archetypes:
            raise ValidationError("spec needs at least one archetype")
        names = [a.name for a in self.archetypes]
        if len(set(names)) != len(names):
            raise ValidationError("archetype names must be unique")
        total = sum(a.weight for a in self.archetypes)
        if abs(total - 1.0) > 1e-6:
            raise ValidationError(f"archetype weights sum to {total}, expected 1")
        index_id = self.catalog.index_condition.condition_id
        for a in self.archetypes:
            unknown = set(a.conditions) - set(self.catalog.ids)
            if unknown:
                raise ValidationError(
                    f"archetype {a.name!r}: conditions outside the catalog {sorted(unknown)}"
                )
            if index_id not in a.conditions:
                raise ValidationError(
                    f"archetype {a.name!r} must include the index condition {index_id!r}"
                )
            if a.conditions[index_id].probability != 1.0:
                raise ValidationError(
                    f"archetype {a.name!r}: index condition probability must be 1.0"
                )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.archetypes)


def load_archetype_spec(source, catalog: LtcCatalog | None = None) -> ArchetypeSpec:
    """Read a generator spec from JSON.

    The top-level "catalog" key may be "builtin" (default) or a path to
    a catalog CSV; an explicitly passed catalog wins over both.
    """
    if hasattr(source, "read"):
        raw = json.load(source)
    else:
        with open(source) as fh:
            raw = json.load(fh)
    if catalog is None:
        ref = raw.get("catalog", "builtin")
        catalog = default_catalog() if ref == "builtin" else load_catalog(ref)
    archetypes = []
    for spec in raw.get("archetypes", []):
        conditions = {
            cid: ConditionMix(
                probability=float(c["probability"]),
                onset_mean=float(c["onset_mean"]),
                onset_sd=float(c["onset_sd"]),
            )
            for cid, c in spec.get("conditions", {}).items()
        }
        archetypes.append(
            Archetype(
                name=str(spec["name"]),
                weight=float(spec["weight"]),
                follow_up_mean=float(spec["follow_up"]["mean"]),
                follow_up_sd=float(spec["follow_up"]["sd"]),
                death_probability=float(spec.get("death_probability", 0.0)),
                conditions=conditions,
                female_probability=float(spec.get("female_probability", 0.5)),
                ethnicity=dict(spec.get("ethnicity", {"White": 1.0})),
                imd=dict(spec.get("imd", {"less_deprived": 1.0})),
                risk_factors={k: float(v) for k, v in spec.get("risk_factors", {}).items()},
            )
        )
    return ArchetypeSpec(catalog=catalog, archetypes=archetypes)


def builtin_archetype_spec() -> ArchetypeSpec:
    """The packaged eight-archetype demonstration spec (illustrative
    numbers, not fitted to any real data)."""
    text = resources.files("trajclust").joinpath("data/archetypes8.json").read_text()
    return load_archetype_spec(io.StringIO(text))


@dataclass
class LabeledCohort:
    cohort: Cohort
    archetype_labels: np.ndarray  # index into archetype_names, one per patient
    archetype_names: tuple[str, ...]


def _truncated_normal(rng, mean, sd, lo, hi):
    if sd == 0.0:
        return min(max(mean, lo), hi)
    for _ in range(_MAX_ATTEMPTS):
        draw = rng.normal(mean, sd)
        if lo <= draw <= hi:
            return draw
    return min(max(rng.normal(mean, sd), lo), hi)


def generate(spec: ArchetypeSpec, n: int, seed: int = 0) -> LabeledCohort:
    """Draw a labeled cohort of n patients from a mixture spec."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    weights = np.array([a.weight for a in spec.archetypes])
    weights = weights / weights.sum()
    eth_levels = list(ETHNICITIES)
    imd_levels = list(IMD_BANDS)
    width = max(6, len(str(n)))

    patients: list[PatientRecord] = []
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        a_idx = int(rng.choice(len(spec.archetypes), p=weights))
        labels[i] = a_idx
        arch = spec.archetypes[a_idx]
        horizon = _truncated_normal(
            rng, arch.follow_up_mean, arch.follow_up_sd, 0.5, np.inf
        )
        gender = "female" if rng.random() < arch.female_probability else "male"
        ethnicity = eth_levels[
            int(rng.choice(len(eth_levels), p=[arch.ethnicity[e] for e in eth_levels]))
        ]
        imd = imd_levels[
            int(rng.choice(len(imd_levels), p=[arch.imd[b] for b in imd_levels]))
        ]
        flags = {
            name: bool(rng.random() < arch.risk_factors.get(name, 0.0))
            for name in RISK_FLAGS
        }
        end_status = "died" if rng.random() < arch.death_probability else "censored"
        events: dict[str, float] = {}
        # catalog order fixes the RNG consumption order
        for cid in spec.catalog.ids:
            mix = arch.conditions.get(cid)
            if mix is None:
                continue
            if rng.random() < mix.probability:
                events[cid] = _truncated_normal(
                    rng, mix.onset_mean, mix.onset_sd, 0.0, horizon
                )
        patients.append(
            PatientRecord(
                patient_id=f"p{i + 1:0{width}d}",
                gender=gender,
                ethnicity=ethnicity,
                imd_band=imd,
                follow_up_end=horizon,
                end_status=end_status,
                events=events,
                **flags,
            )
        )
    cohort = Cohort(catalog=spec.catalog, patients=patients)
    return LabeledCohort(
        cohort=cohort, archetype_labels=labels, archetype_names=spec.names
    )


def write_truth(labeled: LabeledCohort, path) -> None:
    """truth.csv: patient_id,archetype (by name)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "archetype"])
        for p, lab in zip(labeled.cohort.patients, labeled.archetype_labels):
            w.writerow([p.patient_id, labeled.archetype_names[int(lab)]])


def read_truth(path, patient_ids) -> np.ndarray:
    """Truth labels aligned to the given patient order."""
    with open(path, newline="") as fh:
        rows = {r["patient_id"]: r["archetype"] for r in csv.DictReader(fh)}
    names = sorted(set(rows.values()))
    index = {name: k for k, name in enumerate(names)}
    try:
        return np.array([index[rows[pid]] for pid in patient_ids], dtype=np.int64)
    except KeyError as exc:
        raise ValidationError(f"truth file missing patient {exc}") from None


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Chance-adjusted pair-counting agreement between two labelings.

    1 for identical partitions (up to label permutation), about 0 for
    independent ones. Degenerate cases where the expected and maximum
    index coincide return 1.0.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("labelings must be 1-d and equally long")
    if a.size < 2:
        raise ValidationError("need at least two items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    n_a, n_b = ai.max() + 1, bi.max() + 1
    table = np.zeros((n_a, n_b), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        x = np.asarray(x, dtype=np.float64)
        return (x * (x - 1.0) / 2.0).sum()

    sum_cells = comb2(table)
    sum_rows = comb2(table.sum(axis=1))
    sum_cols = comb2(table.sum(axis=0))
    total = a.size * (a.size - 1) / 2.0
    expected = sum_rows * sum_cols / total
    maximum = 0.5 * (sum_rows + sum_cols)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))
