"""Clustering of right-censored condition trajectories.

The package turns per-patient condition onset histories into state
timelines, measures pairwise dissimilarity with a censoring-aware Jaccard
index, builds a Ward hierarchy, picks a partition size from the
point-biserial curve, and characterizes the resulting clusters.
"""

__version__ = "0.1.0"

from .cohort import (
    Cohort,
    LtcCatalog,
    PatientRecord,
    default_catalog,
    incidence_rate,
    load_catalog,
    load_cohort,
    ltc_count_distribution,
    save_cohort,
)
from .distance import (
    CondensedDistanceMatrix,
    condensed_matrix,
    pair_index,
    read_matrix,
    write_matrix,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateTableError,
    FitError,
    SchemaError,
    SeparationError,
    TrajclustError,
    UndefinedCoefficientError,
    ValidationError,
)
from .estimators import CensoredJaccard, TrajectoryWard
from .linkage import (
    MergeTree,
    Partition,
    cut,
    naive_ward_oracle,
    read_tree,
    ward_linkage,
    write_tree,
)
from .pipeline import RunConfig, run_pipeline
from .reports import (
    age_density,
    cluster_summary,
    density_table,
    log_odds_heatmap,
    order_clusters,
    write_assignments,
)
from .selection import (
    FIRST_LOCAL_MAX,
    FIXED,
    GLOBAL_MAX_AMONG_LOCAL,
    SelectionCurve,
    point_biserial,
    scan,
    select_k,
)
from .stats import (
    association_test,
    density_curve,
    fit_logistic,
    kruskal_wallis,
    numeric_summary,
    quantile,
)
from .synth import (
    Archetype,
    ArchetypeSpec,
    ConditionMix,
    LabeledCohort,
    adjusted_rand_index,
    builtin_archetype_spec,
    generate,
    load_archetype_spec,
    read_truth,
    write_truth,
)
from .timelines import (
    StateTimeline,
    TimelineArrays,
    encode_timelines,
    jaccard,
    jaccard_grid_oracle,
    timeline,
)

__all__ = [
    "__version__",
    "Archetype",
    "ArchetypeSpec",
    "CensoredJaccard",
    "Cohort",
    "CondensedDistanceMatrix",
    "ConditionMix",
    "ConfigError",
    "ConvergenceError",
    "DegenerateTableError",
    "FIRST_LOCAL_MAX",
    "FIXED",
    "FitError",
    "GLOBAL_MAX_AMONG_LOCAL",
    "LabeledCohort",
    "LtcCatalog",
    "MergeTree",
    "Partition",
    "PatientRecord",
    "RunConfig",
    "SchemaError",
    "SelectionCurve",
    "SeparationError",
    "StateTimeline",
    "TimelineArrays",
    "TrajclustError",
    "TrajectoryWard",
    "UndefinedCoefficientError",
    "ValidationError",
    "adjusted_rand_index",
    "age_density",
    "association_test",
    "builtin_archetype_spec",
    "cluster_summary",
    "condensed_matrix",
    "cut",
    "default_catalog",
    "density_curve",
    "density_table",
    "encode_timelines",
    "fit_logistic",
    "generate",
    "incidence_rate",
    "jaccard",
    "jaccard_grid_oracle",
    "kruskal_wallis",
    "load_archetype_spec",
    "load_catalog",
    "load_cohort",
    "log_odds_heatmap",
    "ltc_count_distribution",
    "naive_ward_oracle",
    "numeric_summary",
    "order_clusters",
    "pair_index",
    "point_biserial",
    "quantile",
    "read_matrix",
    "read_tree",
    "read_truth",
    "run_pipeline",
    "save_cohort",
    "scan",
    "select_k",
    "timeline",
    "ward_linkage",
    "write_assignments",
    "write_matrix",
    "write_tree",
    "write_truth",
]
