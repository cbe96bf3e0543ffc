"""Snapshot radio positioning and mapping from multipath channel estimates.

One channel snapshot at a single receiver carries delays, departure angles,
and arrival angles for a handful of propagation paths. This package turns
such a snapshot into a joint estimate of planar position, heading, and clock
bias, maps the single-bounce reflection points, votes out paths the model
cannot explain, and decides whether a direct path is present. A small image
method simulator and an evaluation layer close the loop.
"""

from .dataio import (
    failure_to_dict,
    read_config,
    read_dataset,
    read_jsonl,
    read_positions,
    read_scene,
    snapshot_from_dict,
    snapshot_to_dict,
    solution_to_dict,
    write_dataset,
    write_jsonl,
    write_metrics_csv,
    write_positions,
    write_scene,
    write_sweep_csv,
)
from .detector import (
    DEFAULT_T_LOS,
    DetectionResult,
    PathLossModel,
    los_test,
    mixed_solve,
    path_loss_mean,
)
from .errors import (
    DegenerateGeometry,
    EmptyInput,
    InvalidPosition,
    MissingTruth,
    NearParallel,
    NoFeasibleSolution,
    SingularGeometry,
    SlamError,
    TooFewPaths,
)
from .estimator import (
    ConditionalEstimate,
    LandmarkEstimate,
    conditional_estimate,
    landmark_jacobian,
    landmark_refine,
    los_orientation,
    nlos_orientation_search,
    orientation_grid,
    path_cost,
)
from .evaluation import (
    MODES,
    ClassificationReport,
    ErrorRecord,
    SweepResult,
    classification_report,
    error_cdf,
    evaluate_dataset,
    is_single_bounce_consistent,
    los_sensitivity_sweep,
    make_error_record,
    rmse,
    solve_snapshot,
    strip_outliers_by_truth,
)
from .geometry import (
    SPEED_OF_LIGHT,
    NoiseModel,
    PathMeasurement,
    Pose,
    UeState,
    bounce_fraction,
    measurement_model,
    mirror_point,
    nominal_bounce_point,
    polyline_measurement,
    unit_vectors,
    wrap_angle,
)
from .robust import (
    Hypothesis,
    RobustConfig,
    SlamSolution,
    benchmark_solve,
    enumerate_combinations,
    feasibility_check,
    minimal_counts,
    robust_solve,
)
from .sim import (
    GroundTruth,
    Scene,
    SimConfig,
    Snapshot,
    TruePath,
    Wall,
    canonical_seconds,
    corrupt,
    dataset_label,
    generate_dataset,
    synthesize_gains,
    trace_paths,
)

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT",
    "DEFAULT_T_LOS",
    "SlamError",
    "DegenerateGeometry",
    "NearParallel",
    "SingularGeometry",
    "TooFewPaths",
    "NoFeasibleSolution",
    "MissingTruth",
    "EmptyInput",
    "InvalidPosition",
    "Pose",
    "UeState",
    "PathMeasurement",
    "NoiseModel",
    "wrap_angle",
    "unit_vectors",
    "measurement_model",
    "polyline_measurement",
    "mirror_point",
    "bounce_fraction",
    "nominal_bounce_point",
    "ConditionalEstimate",
    "LandmarkEstimate",
    "conditional_estimate",
    "path_cost",
    "los_orientation",
    "orientation_grid",
    "nlos_orientation_search",
    "landmark_jacobian",
    "landmark_refine",
    "Hypothesis",
    "RobustConfig",
    "SlamSolution",
    "minimal_counts",
    "enumerate_combinations",
    "feasibility_check",
    "robust_solve",
    "benchmark_solve",
    "PathLossModel",
    "DetectionResult",
    "path_loss_mean",
    "los_test",
    "mixed_solve",
    "Wall",
    "Scene",
    "TruePath",
    "GroundTruth",
    "Snapshot",
    "SimConfig",
    "canonical_seconds",
    "dataset_label",
    "trace_paths",
    "synthesize_gains",
    "corrupt",
    "generate_dataset",
    "ErrorRecord",
    "ClassificationReport",
    "SweepResult",
    "make_error_record",
    "rmse",
    "error_cdf",
    "strip_outliers_by_truth",
    "is_single_bounce_consistent",
    "classification_report",
    "solve_snapshot",
    "evaluate_dataset",
    "los_sensitivity_sweep",
    "MODES",
    "snapshot_to_dict",
    "snapshot_from_dict",
    "write_jsonl",
    "read_jsonl",
    "write_dataset",
    "read_dataset",
    "solution_to_dict",
    "failure_to_dict",
    "write_metrics_csv",
    "write_sweep_csv",
    "read_scene",
    "write_scene",
    "read_positions",
    "write_positions",
    "read_config",
]
