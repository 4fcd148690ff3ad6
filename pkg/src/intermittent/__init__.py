"""Discrete-event simulator of an intermittently powered device.

Runs a checkpoint-free task runtime (two-version concurrency control,
atomic shadow-slot commit, instant recovery) against checkpointing
baselines on the same power traces and workloads.
"""

from .baselines import CheckpointConfig, Scheme
from .engine import CostModel, MachineConfig, PowerParams, Simulator
from .errors import ConfigError, LogicError, OutOfMemory, PowerFailure
from .experiment import ExperimentConfig, MetricsReport, compare, run_experiment
from .power import PowerTrace, builtin_trace, low_voltage_threshold
from .simcore import CrashPoint
from .workloads import Workload, builtin_workloads

__all__ = [
    "CheckpointConfig", "ConfigError", "CostModel", "CrashPoint", "ExperimentConfig",
    "LogicError", "MachineConfig", "MetricsReport", "OutOfMemory", "PowerFailure",
    "PowerParams", "PowerTrace", "Scheme", "Simulator", "Workload", "builtin_trace",
    "builtin_workloads", "compare", "low_voltage_threshold", "run_experiment",
]
__version__ = "0.1.0"
