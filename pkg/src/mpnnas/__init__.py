"""Evolutionary neural architecture search over stacked message-passing networks."""

from .graphs import GraphBatch, GraphRecord, load_dataset, make_synthetic, pad_and_batch, split
from .importance import analyze_log, decompose, encode_operations, fit_forest, operation_names
from .model import build
from .search import SearchConfig, run_search, trajectory
from .space import DEFAULT_TABLE, cardinality, decode, encode, mutate, sample_uniform
from .training import EvaluationRecord, TrainConfig, TrainingEvaluator, retrain_best, train

__version__ = "0.1.0"
