"""Lifelong learning for constructive neural routing solvers with behavior consolidation."""

from .consolidation import ReservoirBuffer, bc_loss, confidence_weight
from .lifelong import TrainingConfig, lifelong_learn
from .metrics import compute_metrics
from .policy import AttentionPolicy, PolicyConfig
from .tasks import ProblemInstance, TaskSpec, generate_instance

__version__ = "0.1.0"

__all__ = [
    "AttentionPolicy",
    "PolicyConfig",
    "ProblemInstance",
    "ReservoirBuffer",
    "TaskSpec",
    "TrainingConfig",
    "bc_loss",
    "compute_metrics",
    "confidence_weight",
    "generate_instance",
    "lifelong_learn",
]
