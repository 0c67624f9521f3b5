"""Transfer-learning benchmark engine: data pipeline, models and strategy runner."""

from ._tlbench import (
    OUTPUT_ROOT_ENV,
    ConfigError,
    DataError,
    Error,
    FormatError,
    PlanError,
    TrainingError,
    clean_csv,
    collect_reports,
    format_pct,
    gradcheck,
    improvement_pct,
    mae,
    mse,
    patch_count,
    plan_descriptors,
    run_campaign,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
