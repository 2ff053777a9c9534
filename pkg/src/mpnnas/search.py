"""Asynchronous regularized evolution and random search.

A single controller owns the population and reacts to completion events;
workers only evaluate architectures. With ``workers=1`` evaluations run
in-process and a search is reproducible from its seed.
"""

import logging
import math
import time
import traceback
from collections import deque
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, replace

import numpy as np

from .space import DEFAULT_TABLE, mutate, sample_uniform
from .training import FAILED_REWARD, EvaluationRecord

logger = logging.getLogger(__name__)


@dataclass
class SearchConfig:
    population_size: int = 100
    sample_size: int = 10
    workers: int = 1
    time_limit_s: float = math.inf
    max_evals: int = None
    seed: int = 0
    strategy: str = "re"
    memoize: bool = False

    def __post_init__(self):
        if not 1 <= self.sample_size <= self.population_size:
            raise ValueError("need 1 <= sample_size <= population_size")
        if self.strategy not in ("re", "rs"):
            raise ValueError(f"strategy must be 're' or 'rs', got {self.strategy!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_evals is None and not math.isfinite(self.time_limit_s):
            raise ValueError("set max_evals or a finite time_limit_s")


class Population:
    """FIFO of ``(p, reward, age)``; adding beyond capacity drops the oldest."""

    def __init__(self, capacity):
        self.members = deque(maxlen=capacity)
        self._age = 0

    def __len__(self):
        return len(self.members)

    def add(self, p, reward):
        self.members.append((tuple(p), reward, self._age))
        self._age += 1

    def select_parent(self, rng, sample_size):
        """Tournament over ``sample_size`` draws with replacement.

        The highest reward wins; ties go to the oldest member.
        """
        picks = rng.integers(len(self.members), size=sample_size)
        best = max((self.members[i] for i in picks), key=lambda m: (m[1], -m[2]))
        return best[0]


def _as_record(result, p, seed):
    if isinstance(result, EvaluationRecord):
        result.p, result.seed = tuple(p), seed
        return result
    if isinstance(result, dict):
        return EvaluationRecord(p=tuple(p), seed=seed, **result)
    return EvaluationRecord(p=tuple(p), reward=float(result), seed=seed)


def _evaluate(evaluator, p, seed, t0, deadline):
    t_start = time.time() - t0
    try:
        if getattr(evaluator, "uses_deadline", False):
            rec = _as_record(evaluator(p, seed, deadline=deadline), p, seed)
        else:
            rec = _as_record(evaluator(p, seed), p, seed)
        if not math.isfinite(rec.reward):
            rec.reward, rec.status = FAILED_REWARD, "failed"
    except Exception as exc:
        logger.debug("evaluation of %s failed:\n%s", p, traceback.format_exc())
        rec = EvaluationRecord(p=tuple(p), reward=FAILED_REWARD, seed=seed,
                               status="failed", error=f"{type(exc).__name__}: {exc}")
    rec.t_start = t_start
    rec.t_finish = time.time() - t0
    return rec


_worker_evaluator = None


def _init_worker(evaluator):
    global _worker_evaluator
    _worker_evaluator = evaluator


def _worker_run(p, seed, t0, deadline):
    return _evaluate(_worker_evaluator, p, seed, t0, deadline)


class SearchLog(list):
    """Finished evaluations in completion order, plus the final population."""

    population = None


class _Controller:
    def __init__(self, cfg, table, on_record):
        self.cfg, self.table = cfg, table
        self.rng = np.random.default_rng(cfg.seed)
        self.population = Population(cfg.population_size)
        self.submitted = 0
        self.log = SearchLog()
        self.log.population = self.population
        self.cache = {}
        self.on_record = on_record
        self.t0 = time.time()
        self.deadline = self.t0 + cfg.time_limit_s

    def can_submit(self):
        if self.cfg.max_evals is not None and self.submitted >= self.cfg.max_evals:
            return False
        return time.time() < self.deadline

    def propose(self):
        """Next architecture and its evaluation seed."""
        cfg = self.cfg
        if cfg.strategy == "rs" or self.submitted < cfg.population_size or not self.population:
            p = sample_uniform(self.table, self.rng)
        else:
            parent = self.population.select_parent(self.rng, cfg.sample_size)
            p = mutate(parent, self.table, self.rng)
        self.submitted += 1
        return p, int(self.rng.integers(2 ** 31 - 1)), time.time() - self.t0

    def complete(self, rec):
        if self.cfg.memoize and rec.ok:
            self.cache.setdefault(rec.p, rec)
        self.population.add(rec.p, rec.reward)
        self.log.append(rec)
        if self.on_record is not None:
            self.on_record(rec)


def run_search(cfg, evaluator, table=DEFAULT_TABLE, on_record=None):
    """Run regularized evolution (``cfg.strategy='re'``) or random search.

    ``evaluator(p, seed)`` returns a reward, a dict of
    :class:`EvaluationRecord` fields, or a record. Exceptions become failed
    records. Returns a :class:`SearchLog` of finished evaluations in
    completion order.
    """
    ctl = _Controller(cfg, table, on_record)
    if cfg.workers == 1:
        while ctl.can_submit():
            p, seed, t_submit = ctl.propose()
            if cfg.memoize and p in ctl.cache:
                now = time.time() - ctl.t0
                rec = replace(ctl.cache[p], seed=seed, t_start=now, t_finish=now)
            else:
                rec = _evaluate(evaluator, p, seed, ctl.t0, ctl.deadline)
            rec.t_submit = t_submit
            ctl.complete(rec)
        return ctl.log
    with ProcessPoolExecutor(max_workers=cfg.workers, initializer=_init_worker,
                             initargs=(evaluator,)) as pool:
        pending = {}

        def submit():
            p, seed, t_submit = ctl.propose()
            fut = pool.submit(_worker_run, p, seed, ctl.t0, ctl.deadline)
            pending[fut] = t_submit

        while len(pending) < cfg.workers and ctl.can_submit():
            submit()
        while pending:
            left = ctl.deadline - time.time()
            timeout = max(0.0, left) + 1.0 if math.isfinite(left) else None
            done, _ = wait(pending, timeout=timeout, return_when=FIRST_COMPLETED)
            finished = []
            for fut in done:
                rec = fut.result()
                rec.t_submit = pending.pop(fut)
                finished.append(rec)
            for rec in sorted(finished, key=lambda r: r.t_finish):
                ctl.complete(rec)
                if ctl.can_submit():
                    submit()
    return ctl.log


def trajectory(log, window=100):
    """Running mean of reward over the last ``window`` finished evaluations.

    Failed evaluations are skipped. Returns ``[(t_finish, smoothed), ...]``.
    """
    recs = sorted((r for r in log if math.isfinite(r.reward)), key=lambda r: r.t_finish)
    rewards = np.array([r.reward for r in recs])
    return [(r.t_finish, float(np.mean(rewards[max(0, i - window + 1):i + 1])))
            for i, r in enumerate(recs)]


def count_high_performers(log, threshold):
    """Cumulative count of unique architectures whose reward beats ``threshold``."""
    seen = set()
    out = []
    for r in sorted(log, key=lambda r: r.t_finish):
        if r.reward > threshold:
            seen.add(tuple(r.p))
        out.append((r.t_finish, len(seen)))
    return out
