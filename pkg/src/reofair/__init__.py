"""Fairness estimation for recommendation logs with randomized-traffic probes.

Preference labels are only observed for recommended items, so utility-based
group-fairness metrics are not identifiable from default traffic alone.
This package combines default-traffic logs with a small uniformly random
probe to estimate per-group utilities, relative utilities, and the
fairness penalty (coefficient of variation), attaches delta-method,
partition, and bootstrap confidence intervals, runs A/B significance
tests, plans traffic sizes for a target accuracy, and validates the whole
pipeline on synthetic traffic with known ground truth.
"""

from .errors import (
    BoundaryVarianceError,
    ConfigError,
    DataError,
    DegenerateGroupError,
    DegenerateGroupWarning,
    DegenerateUtilitiesError,
    FoldDegenerateError,
    InsufficientDataError,
    InsufficientRandomTrafficError,
    InvalidPilotError,
    MalformedSessionError,
    ParseError,
    ReofairError,
    SchemaError,
    UnstableBootstrapError,
    UnsupportedInputError,
)
from .ingest import (
    DEFAULT_SCHEMA,
    DatasetSchema,
    RejectedRow,
    partition_daily,
    read_logs,
    write_logs,
)
from .inference import (
    ABTestReport,
    BootstrapBias,
    TestMethod,
    VariancePropagation,
    ab_bootstrap_test,
    ab_delta_test,
    ab_partition_test,
    bootstrap_bias,
    bootstrap_report,
    delta_method_report,
)
from .metrics import (
    PENALTY_ERRATUM_NOTE,
    FairnessReport,
    Provenance,
    UtilityVector,
    estimate_pq,
    estimate_utilities,
    point_report,
    relative_utilities,
    reo_penalty,
    rsp_metrics,
    user_side_precision,
)
from .planner import PlanRequest, TrafficPlan, plan_sizes, sample_size_parameter
from .records import (
    Engagement,
    GroupTally,
    RecordArrays,
    TrafficRecord,
    TrafficSource,
    split_arrays,
    tally,
    tally_from_arrays,
)
from .synthetic import (
    IdentifiabilityPair,
    LabeledPopulation,
    MseRow,
    MseStudy,
    SimulationConfig,
    boosted_sample,
    boosted_stream,
    ground_truth_penalty,
    ground_truth_utilities,
    identifiability_pair,
    mse_study,
    records_from_arrays,
    sample_counts,
    sample_mixed_records,
    sample_records,
    sample_tally,
    study_setting,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # records
    "TrafficSource",
    "Engagement",
    "TrafficRecord",
    "RecordArrays",
    "GroupTally",
    "tally",
    "tally_from_arrays",
    "split_arrays",
    # metrics
    "Provenance",
    "UtilityVector",
    "FairnessReport",
    "estimate_pq",
    "estimate_utilities",
    "relative_utilities",
    "reo_penalty",
    "point_report",
    "rsp_metrics",
    "user_side_precision",
    "PENALTY_ERRATUM_NOTE",
    # inference
    "TestMethod",
    "VariancePropagation",
    "ABTestReport",
    "BootstrapBias",
    "delta_method_report",
    "ab_delta_test",
    "ab_partition_test",
    "ab_bootstrap_test",
    "bootstrap_report",
    "bootstrap_bias",
    # synthetic
    "SimulationConfig",
    "study_setting",
    "sample_counts",
    "sample_tally",
    "sample_records",
    "sample_mixed_records",
    "records_from_arrays",
    "ground_truth_utilities",
    "ground_truth_penalty",
    "MseRow",
    "MseStudy",
    "mse_study",
    "boosted_sample",
    "boosted_stream",
    "LabeledPopulation",
    "IdentifiabilityPair",
    "identifiability_pair",
    # ingest
    "DatasetSchema",
    "DEFAULT_SCHEMA",
    "RejectedRow",
    "read_logs",
    "write_logs",
    "partition_daily",
    # planner
    "PlanRequest",
    "TrafficPlan",
    "plan_sizes",
    "sample_size_parameter",
    # errors
    "ReofairError",
    "ConfigError",
    "DataError",
    "SchemaError",
    "ParseError",
    "InsufficientDataError",
    "DegenerateGroupError",
    "DegenerateGroupWarning",
    "DegenerateUtilitiesError",
    "BoundaryVarianceError",
    "UnsupportedInputError",
    "MalformedSessionError",
    "FoldDegenerateError",
    "UnstableBootstrapError",
    "InsufficientRandomTrafficError",
    "InvalidPilotError",
]
