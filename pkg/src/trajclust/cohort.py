"""Cohort data model and tabular IO.

A cohort couples a condition catalog with patient records. Each patient
carries socio-demographic fields, a follow-up horizon, and a mapping of
condition onsets (age in years, measured from birth). Histories are taken
as fully observed from age 0 up to the follow-up end; ages are decimal
years and are kept exact.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import SchemaError, ValidationError

GENDERS = ("female", "male")
ETHNICITIES = ("White", "Asian", "Black", "Mixed", "Other/Unknown")
IMD_BANDS = ("most_deprived", "less_deprived", "missing")
END_STATUSES = ("censored", "died")
RISK_FLAGS = (
    "smoking_ever",
    "substance_dependency",
    "alcohol",
    "chronic_pain",
    "hypercholesterolaemia",
    "morbid_obesity",
)

PATIENT_COLUMNS = (
    "patient_id",
    "gender",
    "ethnicity",
    "imd_band",
    "follow_up_end",
    "end_status",
) + RISK_FLAGS
EVENT_COLUMNS = ("patient_id", "condition_id", "onset_age")
CATALOG_COLUMNS = ("condition_id", "label", "category", "code_set", "is_index")

_ETHNICITY_ALIASES = {
    "white": "White",
    "asian": "Asian",
    "black": "Black",
    "mixed": "Mixed",
    "other": "Other/Unknown",
    "unknown": "Other/Unknown",
    "other/unknown": "Other/Unknown",
    "": "Other/Unknown",
}
_IMD_ALIASES = {
    "most_deprived": "most_deprived",
    "less_deprived": "less_deprived",
    "missing": "missing",
    "": "missing",
    # IMD quintiles: 1-2 most deprived, 3-5 less deprived
    "1": "most_deprived",
    "2": "most_deprived",
    "3": "less_deprived",
    "4": "less_deprived",
    "5": "less_deprived",
}


@dataclass(frozen=True)
class Condition:
    condition_id: str
    label: str
    category: str
    code_set: str
    is_index: bool


@dataclass(frozen=True)
class LtcCatalog:
    """Ordered set of long-term conditions; exactly one is the index condition."""

    conditions: tuple[Condition, ...]

    def __post_init__(self):
        ids = [c.condition_id for c in self.conditions]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate condition_id in catalog: {dup}")
        n_index = sum(c.is_index for c in self.conditions)
        if n_index != 1:
            raise ValidationError(
                f"catalog must declare exactly one index condition, found {n_index}"
            )

    def __len__(self):
        return len(self.conditions)

    def __iter__(self):
        return iter(self.conditions)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(c.condition_id for c in self.conditions)

    @property
    def index_condition(self) -> Condition:
        return next(c for c in self.conditions if c.is_index)

    @property
    def non_index_ids(self) -> tuple[str, ...]:
        return tuple(c.condition_id for c in self.conditions if not c.is_index)

    def get(self, condition_id: str) -> Condition:
        for c in self.conditions:
            if c.condition_id == condition_id:
                return c
        raise ValidationError(f"unknown condition_id: {condition_id!r}")

    def __contains__(self, condition_id: str) -> bool:
        return any(c.condition_id == condition_id for c in self.conditions)


@dataclass
class PatientRecord:
    patient_id: str
    gender: str
    ethnicity: str
    imd_band: str
    follow_up_end: float
    end_status: str
    smoking_ever: bool = False
    substance_dependency: bool = False
    alcohol: bool = False
    chronic_pain: bool = False
    hypercholesterolaemia: bool = False
    morbid_obesity: bool = False
    events: dict[str, float] = field(default_factory=dict)

    def risk_flag(self, name: str) -> bool:
        if name not in RISK_FLAGS:
            raise ValidationError(f"unknown risk flag: {name!r}")
        return getattr(self, name)


@dataclass
class Cohort:
    """Catalog plus patient records; population_size gives the denominator
    context for incidence reporting (defaults to the cohort size)."""

    catalog: LtcCatalog
    patients: list[PatientRecord]
    population_size: int = 0

    def __post_init__(self):
        if self.population_size <= 0:
            self.population_size = len(self.patients)

    def __len__(self):
        return len(self.patients)

    @property
    def t_max(self) -> float:
        if not self.patients:
            return 0.0
        return max(p.follow_up_end for p in self.patients)

    @property
    def patient_ids(self) -> list[str]:
        return [p.patient_id for p in self.patients]

    def age_at_index(self) -> np.ndarray:
        """Onset age of the index condition, one value per patient."""
        idx = self.catalog.index_condition.condition_id
        return np.array([p.events[idx] for p in self.patients], dtype=float)


def _open(source, mode="r"):
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(source, mode, newline=""), True


def _reader(source, required, what):
    stream, owned = _open(source)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        if owned:
            stream.close()
        raise SchemaError(f"{what}: empty file, header row required")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        if owned:
            stream.close()
        raise SchemaError(f"{what}: missing columns {missing}")
    return stream, owned, reader


def _parse_bool(raw, what, row_no):
    v = raw.strip().lower()
    if v in ("0", "false"):
        return False
    if v in ("1", "true"):
        return True
    raise SchemaError(f"{what} row {row_no}: unparsable boolean {raw!r}")


def _parse_float(raw, what, row_no, col):
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"{what} row {row_no}: unparsable {col} {raw!r}") from None


def load_catalog(source) -> LtcCatalog:
    """Read a condition catalog from CSV (condition_id,label,category,code_set,is_index)."""
    stream, owned, reader = _reader(source, CATALOG_COLUMNS, "catalog")
    try:
        conditions = []
        for row_no, row in enumerate(reader, start=2):
            conditions.append(
                Condition(
                    condition_id=row["condition_id"].strip(),
                    label=row["label"].strip(),
                    category=row["category"].strip(),
                    code_set=row["code_set"].strip(),
                    is_index=_parse_bool(row["is_index"], "catalog", row_no),
                )
            )
    finally:
        if owned:
            stream.close()
    if not conditions:
        raise SchemaError("catalog: no condition rows")
    return LtcCatalog(tuple(conditions))


def default_catalog() -> LtcCatalog:
    """The built-in 30-condition catalog (stroke is the index condition)."""
    text = resources.files("trajclust").joinpath("data/ltc30.csv").read_text()
    return load_catalog(io.StringIO(text))


def load_cohort(events, patients, catalog, population_size: int | None = None) -> Cohort:
    """Load a cohort from events and patients tables.

    Args:
        events: path or file-like, CSV with patient_id,condition_id,onset_age.
        patients: path or file-like, CSV with the patient schema columns.
        catalog: an LtcCatalog, or a path/file-like to a catalog CSV.
        population_size: optional registered-population denominator.

    Duplicate (patient, condition) events collapse to the earliest onset.
    Every patient must carry the index condition, and every onset must fall
    inside [0, follow_up_end].
    """
    if not isinstance(catalog, LtcCatalog):
        catalog = load_catalog(catalog)

    stream, owned, reader = _reader(patients, PATIENT_COLUMNS, "patients")
    records: dict[str, PatientRecord] = {}
    try:
        for row_no, row in enumerate(reader, start=2):
            pid = row["patient_id"].strip()
            if not pid:
                raise SchemaError(f"patients row {row_no}: empty patient_id")
            if pid in records:
                raise ValidationError(f"patients row {row_no}: duplicate patient_id {pid!r}")
            gender = row["gender"].strip().lower()
            gender = {"f": "female", "m": "male"}.get(gender, gender)
            if gender not in GENDERS:
                raise ValidationError(
                    f"patients row {row_no}: unknown gender {row['gender']!r}"
                )
            eth_raw = row["ethnicity"].strip().lower()
            if eth_raw not in _ETHNICITY_ALIASES:
                raise ValidationError(
                    f"patients row {row_no}: unknown ethnicity {row['ethnicity']!r}"
                )
            imd_raw = row["imd_band"].strip().lower()
            if imd_raw not in _IMD_ALIASES:
                raise ValidationError(
                    f"patients row {row_no}: unknown imd_band {row['imd_band']!r}"
                )
            end = _parse_float(row["follow_up_end"], "patients", row_no, "follow_up_end")
            if not np.isfinite(end) or end < 0:
                raise ValidationError(
                    f"patients row {row_no}: follow_up_end must be finite and >= 0"
                )
            status = row["end_status"].strip().lower()
            if status not in END_STATUSES:
                raise ValidationError(
                    f"patients row {row_no}: unknown end_status {row['end_status']!r}"
                )
            flags = {
                name: _parse_bool(row[name], "patients", row_no) for name in RISK_FLAGS
            }
            records[pid] = PatientRecord(
                patient_id=pid,
                gender=gender,
                ethnicity=_ETHNICITY_ALIASES[eth_raw],
                imd_band=_IMD_ALIASES[imd_raw],
                follow_up_end=end,
                end_status=status,
                **flags,
            )
    finally:
        if owned:
            stream.close()

    stream, owned, reader = _reader(events, EVENT_COLUMNS, "events")
    try:
        for row_no, row in enumerate(reader, start=2):
            pid = row["patient_id"].strip()
            if pid not in records:
                raise ValidationError(f"events row {row_no}: unknown patient_id {pid!r}")
            cid = row["condition_id"].strip()
            if cid not in catalog:
                raise ValidationError(f"events row {row_no}: unknown condition_id {cid!r}")
            onset = _parse_float(row["onset_age"], "events", row_no, "onset_age")
            rec = records[pid]
            if not np.isfinite(onset) or onset < 0:
                raise ValidationError(
                    f"events row {row_no}: onset_age must be finite and >= 0"
                )
            if onset > rec.follow_up_end:
                raise ValidationError(
                    f"events row {row_no}: onset_age {onset} exceeds follow_up_end "
                    f"{rec.follow_up_end} for patient {pid!r}"
                )
            # duplicates collapse to the earliest onset
            if cid not in rec.events or onset < rec.events[cid]:
                rec.events[cid] = onset
    finally:
        if owned:
            stream.close()

    index_id = catalog.index_condition.condition_id
    missing = [pid for pid, rec in records.items() if index_id not in rec.events]
    if missing:
        shown = ", ".join(repr(m) for m in missing[:5])
        raise ValidationError(
            f"{len(missing)} patient(s) lack the index condition {index_id!r}: {shown}"
        )

    patients_list = list(records.values())
    return Cohort(
        catalog=catalog,
        patients=patients_list,
        population_size=population_size or len(patients_list),
    )


def save_cohort(cohort: Cohort, out_dir) -> dict[str, str]:
    """Write patients.csv, events.csv, and catalog.csv into out_dir.

    Loading the emitted files reproduces the cohort (round-trip identity).
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "patients": os.path.join(out_dir, "patients.csv"),
        "events": os.path.join(out_dir, "events.csv"),
        "catalog": os.path.join(out_dir, "catalog.csv"),
    }
    with open(paths["patients"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PATIENT_COLUMNS)
        for p in cohort.patients:
            w.writerow(
                [
                    p.patient_id,
                    p.gender,
                    p.ethnicity,
                    p.imd_band,
                    repr(p.follow_up_end),
                    p.end_status,
                ]
                + [int(getattr(p, name)) for name in RISK_FLAGS]
            )
    with open(paths["events"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_COLUMNS)
        for p in cohort.patients:
            # catalog order keeps the file deterministic
            for cid in cohort.catalog.ids:
                if cid in p.events:
                    w.writerow([p.patient_id, cid, repr(p.events[cid])])
    with open(paths["catalog"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CATALOG_COLUMNS)
        for c in cohort.catalog:
            w.writerow([c.condition_id, c.label, c.category, c.code_set, int(c.is_index)])
    return paths


def incidence_rate(case_count: int, person_years: float) -> float:
    """Cases per 100,000 person-years."""
    if case_count < 0:
        raise ValidationError("case_count must be >= 0")
    if not person_years > 0:
        raise ValidationError("person_years must be > 0")
    return case_count / person_years * 100_000.0


@dataclass
class LtcCountSummary:
    counts: np.ndarray  # histogram over 0..len(catalog)-1 additional conditions
    median: float
    q1: float
    q3: float


def ltc_count_distribution(cohort: Cohort) -> LtcCountSummary:
    """Distribution of the number of conditions per patient beyond the index one."""
    from .stats import quantile

    if not cohort.patients:
        raise ValidationError("empty cohort")
    index_id = cohort.catalog.index_condition.condition_id
    per_patient = np.array(
        [sum(1 for c in p.events if c != index_id) for p in cohort.patients]
    )
    hist = np.bincount(per_patient, minlength=len(cohort.catalog))
    return LtcCountSummary(
        counts=hist,
        median=quantile(per_patient, 0.5),
        q1=quantile(per_patient, 0.25),
        q3=quantile(per_patient, 0.75),
    )


def clone_with_events(record: PatientRecord, events: dict[str, float]) -> PatientRecord:
    return replace(record, events=dict(events))
