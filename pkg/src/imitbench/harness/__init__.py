"""Experiment harness: configuration, training, evaluation, search, profiling, reports."""
from .config import RunConfig, load_config
from .training import (EvalPoint, EvalReport, EvalResult, TrainResult, evaluate, load_policy,
                       normalised_score, run_training, save_policy, train_expert,
                       zero_action_return)

__all__ = ["EvalPoint", "EvalReport", "EvalResult", "RunConfig", "TrainResult", "evaluate",
           "load_config", "load_policy", "normalised_score", "run_training", "save_policy",
           "train_expert", "zero_action_return"]
