"""Template-guided prostate biopsy targeting: environment, baselines, metrics and PPO policy."""

from ._core import (
    PROTOCOL,
    AnatomyError,
    Bridge,
    Env,
    EnvError,
    FormatError,
    LabelVolume,
    Policy,
    compare,
    episode_metrics,
    load_cases,
    load_volume,
    needle_area,
    run_baseline,
    synthetic_case,
    ttest,
)

__all__ = [
    "PROTOCOL",
    "AnatomyError",
    "Bridge",
    "Env",
    "EnvError",
    "FormatError",
    "LabelVolume",
    "Policy",
    "compare",
    "episode_metrics",
    "load_cases",
    "load_volume",
    "needle_area",
    "run_baseline",
    "synthetic_case",
    "ttest",
]
