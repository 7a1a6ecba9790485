"""Reduced-scale nonlinear transformer replica of the in-context CoT
regression experiments, plus figure rendering from the shared CSV schema."""

from .data import TaskSpec, sample_batch
from .figures import SchemaError, render_error_curves, render_figures, render_selection_scatter
from .model import ReplicaConfig, WeightPredictor, cot_rollout, prompt_tokens
from .train import TrainResult, evaluate, sign_check, train_replica, write_records

__version__ = "0.1.0"
