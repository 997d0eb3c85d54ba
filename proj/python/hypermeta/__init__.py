"""Hypernetwork policies for meta-RL: training, init analysis and reporting."""

from ._core import (
    ConfigError,
    RefusalError,
    analyze_init,
    code_version,
    equivalence,
    normalize_config,
    parameter_count,
    report,
    sweep,
    train,
    ttest,
    variance_probe,
)

__all__ = [
    "ConfigError",
    "RefusalError",
    "analyze_init",
    "code_version",
    "equivalence",
    "normalize_config",
    "parameter_count",
    "report",
    "sweep",
    "train",
    "ttest",
    "variance_probe",
]
