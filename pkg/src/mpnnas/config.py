"""Run configuration: a YAML tree with defaults for every key.

Example::

    data:
      path: null                 # JSON-lines dataset, relative to this file
      synthetic: {task: edge-count, n_graphs: 500, max_nodes: 10, seed: 0}
    split: {seed: 0, ratios: [0.8, 0.1, 0.1]}
    search: {strategy: re, population_size: 100, sample_size: 10, workers: 1,
             time_limit_s: 10800, max_evals: null, seed: 0}
    train: {epochs: 20, batch_size: 32, learning_rate: 0.001, metric: mae,
            train_fraction: 1.0, time_budget_s: 600}
    retrain: {epochs: 200, seeds: [0, 1, 2]}
    analysis: {window: 100, threshold: null, n_trees: 100, seed: 0}
    output: runs/example
"""

import copy
import math
from pathlib import Path

import yaml

from .graphs import DEFAULT_EDGE_FEATURES, DEFAULT_NODE_FEATURES, SplitSpec, TASKS
from .search import SearchConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "data": {
        "path": None,
        "synthetic": {
            "task": "edge-count",
            "n_graphs": 500,
            "max_nodes": 10,
            "seed": 0,
            "n_node_features": DEFAULT_NODE_FEATURES,
            "n_edge_features": DEFAULT_EDGE_FEATURES,
        },
    },
    "split": {"seed": 0, "ratios": [0.8, 0.1, 0.1]},
    "search": {
        "strategy": "re",
        "population_size": 100,
        "sample_size": 10,
        "workers": 1,
        "time_limit_s": 3 * 3600.0,
        "max_evals": None,
        "seed": 0,
        "memoize": False,
    },
    "train": {
        "epochs": 20,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "train_fraction": 1.0,
        "time_budget_s": 600.0,
        "metric": "mae",
    },
    "retrain": {
        "epochs": 200,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "time_budget_s": math.inf,
        "metric": None,  # defaults to train.metric
        "seeds": [0, 1, 2],
    },
    "analysis": {"window": 100, "threshold": None, "n_trees": 100, "seed": 0},
    "output": "runs/default",
}


def _merge(base, override, where=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


class RunConfig:
    def __init__(self, tree=None, base_dir="."):
        self.tree = _merge(DEFAULTS, tree)
        self.base_dir = Path(base_dir)
        self._validate()

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            tree = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from None
        if not isinstance(tree, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls(tree, path.parent)

    def dump(self, path):
        Path(path).write_text(yaml.safe_dump(self.tree, sort_keys=False), encoding="utf-8")

    def _validate(self):
        t = self.tree
        try:
            self.split_spec()
            self.search_config()
            self.train_config()
            self.retrain_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        syn = t["data"]["synthetic"]
        if t["data"]["path"] is None and (not syn or syn.get("task") not in TASKS):
            raise ConfigError("data.path or a valid data.synthetic.task is required")

    @property
    def data_path(self):
        p = self.tree["data"]["path"]
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self):
        p = Path(self.tree["output"])
        return p if p.is_absolute() else self.base_dir / p

    def split_spec(self):
        s = self.tree["split"]
        return SplitSpec(seed=int(s["seed"]), ratios=tuple(float(r) for r in s["ratios"]))

    def search_config(self):
        s = self.tree["search"]
        return SearchConfig(
            population_size=int(s["population_size"]),
            sample_size=int(s["sample_size"]),
            workers=int(s["workers"]),
            time_limit_s=float(s["time_limit_s"]),
            max_evals=None if s["max_evals"] is None else int(s["max_evals"]),
            seed=int(s["seed"]),
            strategy=s["strategy"],
            memoize=bool(s["memoize"]),
        )

    def train_config(self):
        s = self.tree["train"]
        return TrainConfig(
            epochs=int(s["epochs"]),
            batch_size=int(s["batch_size"]),
            learning_rate=float(s["learning_rate"]),
            train_fraction=float(s["train_fraction"]),
            time_budget_s=float(s["time_budget_s"]),
            metric=s["metric"],
        )

    def retrain_config(self):
        s = self.tree["retrain"]
        return TrainConfig(
            epochs=int(s["epochs"]),
            batch_size=int(s["batch_size"]),
            learning_rate=float(s["learning_rate"]),
            time_budget_s=float(s["time_budget_s"]),
            metric=s["metric"] or self.tree["train"]["metric"],
        )

    @property
    def retrain_seeds(self):
        return [int(x) for x in self.tree["retrain"]["seeds"]]

    def override(self, section, key, value):
        if value is not None:
            self.tree[section][key] = value
            self._validate()
