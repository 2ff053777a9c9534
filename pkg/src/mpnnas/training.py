"""Training, reward computation and champion retraining."""

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .graphs import SplitSpec, check_widths, pad_and_batch, padding_sizes, split
from .model import build

FAILED_REWARD = -math.inf


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    train_fraction: float = 1.0
    time_budget_s: float = 600.0
    metric: str = "mae"
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError(f"train_fraction must be in (0, 1], got {self.train_fraction}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.metric not in ("mae", "rmse"):
            raise ValueError(f"metric must be 'mae' or 'rmse', got {self.metric!r}")


@dataclass
class EvaluationRecord:
    p: tuple
    reward: float
    metrics: dict = field(default_factory=dict)
    train_losses: list = field(default_factory=list)
    valid_losses: list = field(default_factory=list)
    steps: int = 0
    t_submit: float = 0.0
    t_start: float = 0.0
    t_finish: float = 0.0
    seed: int = 0
    status: str = "ok"
    error: str = None

    @property
    def ok(self):
        return self.status == "ok" and math.isfinite(self.reward)

    def to_json(self):
        d = asdict(self)
        d["p"] = list(self.p)
        if not math.isfinite(self.reward):
            d["reward"] = None
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        d["p"] = tuple(int(x) for x in d["p"])
        d["reward"] = FAILED_REWARD if d.get("reward") is None else float(d["reward"])
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


class Adam:
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = grads[p]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def reward(predictions, targets, metric="mae"):
    """Negative MAE over all entries, or negative task-averaged RMSE."""
    pred = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if pred.shape != y.shape:
        raise ValueError(f"reward: prediction shape {pred.shape} != target shape {y.shape}")
    if pred.ndim == 1:
        pred, y = pred[:, None], y[:, None]
    return -float(np.mean(task_metrics(pred, y, metric)) if metric == "rmse"
                  else np.mean(np.abs(pred - y)))


def task_metrics(pred, y, metric):
    err = np.asarray(pred) - np.asarray(y)
    if metric == "mae":
        return np.mean(np.abs(err), axis=0)
    if metric == "rmse":
        return np.sqrt(np.mean(err * err, axis=0))
    raise ValueError(f"unknown metric {metric!r}")


def _loss(pred, target, metric):
    diff = pred - target
    return T.mean(T.abs_(diff)) if metric == "mae" else T.mean(T.square(diff))


class _Scaler:
    def __init__(self, batches, enabled):
        y = np.concatenate([b.Y for b in batches], axis=0)
        self.mean = y.mean(axis=0) if enabled else np.zeros(y.shape[1])
        std = y.std(axis=0) if enabled else np.ones(y.shape[1])
        self.std = np.where(std > 1e-12, std, 1.0)

    def scale(self, y):
        return (y - self.mean) / self.std

    def unscale(self, y):
        return y * self.std + self.mean


def _select_batches(batches, fraction, rng):
    if fraction >= 1.0:
        return list(batches)
    keep = max(1, math.ceil(fraction * len(batches)))
    return [batches[i] for i in sorted(rng.permutation(len(batches))[:keep])]


def train(model, train_batches, valid_batches, cfg, deadline=None):
    """Fit ``model`` with Adam and score it on the validation batches.

    Training stops after ``cfg.epochs`` or once ``cfg.time_budget_s`` (or the
    absolute wall-clock ``deadline``) has passed, whichever comes first.
    A non-finite loss marks the record failed with the worst reward.
    """
    if not train_batches or not valid_batches:
        raise ValueError("train: need at least one training and one validation batch")
    if train_batches[0].Y.shape[1] != model.n_targets:
        raise ValueError(f"train: model predicts {model.n_targets} targets, "
                         f"data has {train_batches[0].Y.shape[1]}")
    rng = np.random.default_rng(cfg.seed)
    stop_at = time.monotonic() + cfg.time_budget_s
    if deadline is not None:
        stop_at = min(stop_at, time.monotonic() + (deadline - time.time()))
    batches = _select_batches(train_batches, cfg.train_fraction, rng)
    scaler = _Scaler(batches, cfg.standardize)
    params = list(model.params.values())
    opt = Adam(params, lr=cfg.learning_rate)
    rec = EvaluationRecord(p=model.p, reward=FAILED_REWARD, seed=cfg.seed)
    out_of_time = False
    for _ in range(cfg.epochs):
        total, count = 0.0, 0
        for i in rng.permutation(len(batches)):
            b = batches[i]
            with T.Tape() as tape:
                loss = _loss(model(b), scaler.scale(b.Y), cfg.metric)
                grads = tape.backward(loss, params)
            value = float(loss.data)
            if not math.isfinite(value):
                rec.status, rec.error = "failed", "non-finite training loss"
                return rec
            opt.step(grads)
            rec.steps += 1
            total += value * b.size
            count += b.size
            if time.monotonic() >= stop_at:
                out_of_time = True
                break
        rec.train_losses.append(total / count)
        rec.valid_losses.append(_valid_loss(model, valid_batches, scaler, cfg.metric))
        if out_of_time:
            break
    pred, y = evaluate(model, valid_batches, scaler)
    if not np.all(np.isfinite(pred)):
        rec.status, rec.error = "failed", "non-finite validation predictions"
        return rec
    rec.reward = reward(pred, y, cfg.metric)
    rec.metrics = {cfg.metric: task_metrics(pred, y, cfg.metric).tolist()}
    return rec


def _valid_loss(model, batches, scaler, metric):
    total = n = 0
    for b in batches:
        total += float(_loss(model(b), scaler.scale(b.Y), metric).data) * b.size
        n += b.size
    return total / n


def evaluate(model, batches, scaler=None):
    """Predictions (in target units) and targets stacked over ``batches``."""
    pred = model.predict(batches)
    if scaler is not None:
        pred = scaler.unscale(pred)
    return pred, np.concatenate([b.Y for b in batches], axis=0)


class TrainingEvaluator:
    """Search-time evaluator: ``(p, seed) -> EvaluationRecord``.

    Holds pre-batched training and validation data; padding sizes are fixed
    up front so every candidate sees identical tensors.
    """

    uses_deadline = True

    def __init__(self, train_records, valid_records, cfg, n_max=None, e_max=None):
        fn, fe, k = check_widths(list(train_records) + list(valid_records))
        if n_max is None or e_max is None:
            n, e = padding_sizes(list(train_records) + list(valid_records))
            n_max = n if n_max is None else n_max
            e_max = e if e_max is None else e_max
        self.widths = (fn, fe, k)
        self.n_max, self.e_max = n_max, e_max
        self.cfg = cfg
        self.train_batches = pad_and_batch(train_records, n_max, e_max, cfg.batch_size)
        self.valid_batches = pad_and_batch(valid_records, n_max, e_max, cfg.batch_size)

    def __call__(self, p, seed, deadline=None):
        fn, fe, k = self.widths
        model = build(p, fn, fe, k, n_max=self.n_max, seed=seed)
        return train(model, self.train_batches, self.valid_batches,
                     replace(self.cfg, seed=seed), deadline=deadline)


def select_champion(log):
    """Best successful record; ties go to the earliest finish time."""
    good = [r for r in log if r.ok]
    if not good:
        raise TrainingError("no successful evaluation in the log")
    return min(good, key=lambda r: (-r.reward, r.t_finish))


def retrain_best(log, records, cfg, seeds=(0, 1, 2), ratios=(0.8, 0.1, 0.1),
                 n_max=None, e_max=None):
    """Retrain the champion from scratch once per seed and report test metrics.

    Each seed re-splits ``records`` and initialises a fresh model.
    """
    champ = select_champion(log)
    fn, fe, k = check_widths(records)
    if n_max is None or e_max is None:
        n, e = padding_sizes(records)
        n_max = n if n_max is None else n_max
        e_max = e if e_max is None else e_max
    runs = []
    for seed in seeds:
        tr, va, te = split(records, SplitSpec(seed=seed, ratios=tuple(ratios)))
        tb, vb, sb = (pad_and_batch(part, n_max, e_max, cfg.batch_size) for part in (tr, va, te))
        model = build(champ.p, fn, fe, k, n_max=n_max, seed=seed)
        run_cfg = replace(cfg, seed=seed, train_fraction=1.0)
        rec = train(model, tb, vb, run_cfg)
        scaler = _Scaler(tb, run_cfg.standardize)
        pred, y = evaluate(model, sb, scaler)
        per_task = task_metrics(pred, y, cfg.metric)
        runs.append({
            "seed": int(seed),
            "status": rec.status,
            "valid_reward": rec.reward,
            "test_metric": float(np.mean(per_task)),
            "test_metric_per_task": per_task.tolist(),
        })
    values = np.array([r["test_metric"] for r in runs])
    return {
        "p": list(champ.p),
        "search_reward": champ.reward,
        "metric": cfg.metric,
        "runs": runs,
        "mean": float(values.mean()),
        "std": float(values.std()),
    }
