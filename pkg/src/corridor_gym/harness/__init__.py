"""Configuration, rollout workers, training and evaluation loops, protocol server and CLI."""

from .config import ExperimentConfig, load_config, save_config
from .evaluation import run_evaluation
from .protocol import ProtocolClient, ProtocolServer, hold_client_trajectory, serve_protocol
from .rollout import RolloutResult, RolloutTask, WorkerPool, run_rollout, worker_seed
from .training import IterationRecord, TrainingResult, best_iteration, run_training

__all__ = [
    "ExperimentConfig", "load_config", "save_config", "run_evaluation", "ProtocolClient",
    "ProtocolServer", "hold_client_trajectory", "serve_protocol", "RolloutResult", "RolloutTask",
    "WorkerPool", "run_rollout", "worker_seed", "IterationRecord", "TrainingResult",
    "best_iteration", "run_training",
]
