"""Data-aware model selection and scheduling for deadline-constrained inference."""
from .core import (
    SNEAKPEEK,
    AccuracySource,
    Application,
    Entry,
    LatencyMode,
    ModelProfile,
    Request,
    Schedule,
    schedule_utility,
)
from .scheduling import PRESETS, SchedulerSpec, SchedulingContext, preset, schedule
from .scoring import PenaltyKind, PenaltySpec
from .sim import EstimationConfig, run_trial
from .workload import builtin, gen_scenario

__version__ = "0.1.0"
