"""Command-line entry point: ``mpnnas {search,retrain,analyze} ...``.

Exit codes: 0 success, 2 bad config or input, 3 no usable results.
"""

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .graphs import DatasetError, load_dataset, make_synthetic, padding_sizes, split
from .importance import analyze_log, operation_names
from .search import count_high_performers, run_search, trajectory
from .space import DEFAULT_TABLE, format_vector
from .training import EvaluationRecord, TrainingError, TrainingEvaluator, retrain_best

logger = logging.getLogger("mpnnas")

EXIT_OK, EXIT_CONFIG, EXIT_EMPTY = 0, 2, 3
LOG_NAME = "evaluations.jsonl"


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


class LogError(ValueError):
    pass


def load_log(path):
    """Evaluation records from a JSON-lines log; errors carry the line number."""
    path = Path(path)
    if not path.is_file():
        raise LogError(f"log file not found: {path}")
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(EvaluationRecord.from_json(json.loads(line)))
            except (ValueError, TypeError, KeyError) as exc:
                raise LogError(f"{path}:{lineno}: malformed log line ({exc})") from None
    return out


def write_log_line(fh, rec):
    fh.write(json.dumps(rec.to_json()) + "\n")
    fh.flush()


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def load_records(cfg):
    path = cfg.data_path
    if path is None:
        return make_synthetic(**cfg.tree["data"]["synthetic"])
    if not path.is_file():
        raise CliError(f"dataset not found: {path}")
    try:
        return load_dataset(path)
    except DatasetError as exc:
        raise CliError(str(exc)) from None


def _load_config(args):
    try:
        cfg = RunConfig.load(args.config)
        for section, key, value in getattr(args, "overrides", lambda: [])():
            cfg.override(section, key, value)
    except ConfigError as exc:
        raise CliError(str(exc)) from None
    if getattr(args, "out", None):
        cfg.tree["output"] = str(Path(args.out).resolve())
    out = cfg.output_dir
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable ({exc})") from None
    return cfg


def _high_threshold(log, value):
    if value is not None:
        return float(value)
    good = [r.reward for r in log if r.ok]
    return float(np.median(good)) if good else math.inf


def write_search_outputs(out, log, window, threshold):
    traj = trajectory(log, window)
    _write_csv(out / "trajectory.csv", ["time_s", "smoothed_reward"], traj)
    thr = _high_threshold(log, threshold)
    _write_csv(out / "high_performers.csv", ["time_s", "cumulative_count"],
               count_high_performers(log, thr))
    good = [r for r in log if r.ok]
    best = max(good, key=lambda r: (r.reward, -r.t_finish)) if good else None
    summary = {
        "p": list(best.p) if best else None,
        "vector": format_vector(best.p) if best else None,
        "reward": best.reward if best else None,
        "n_evaluations": len(log),
        "n_failed": len(log) - len(good),
        "high_performer_threshold": thr,
    }
    (out / "best.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return best


def cmd_search(args):
    cfg = _load_config(args)
    out = cfg.output_dir
    records = load_records(cfg)
    n_max, e_max = padding_sizes(records)
    train_recs, valid_recs, _ = split(records, cfg.split_spec())
    evaluator = TrainingEvaluator(train_recs, valid_recs, cfg.train_config(), n_max, e_max)
    cfg.dump(out / "config.yaml")
    scfg = cfg.search_config()
    logger.info("search: strategy=%s P=%d S=%d workers=%d budget=%ss",
                scfg.strategy, scfg.population_size, scfg.sample_size,
                scfg.workers, scfg.time_limit_s)
    with open(out / LOG_NAME, "w", encoding="utf-8") as fh:
        log = run_search(scfg, evaluator, on_record=lambda r: write_log_line(fh, r))
    a = cfg.tree["analysis"]
    best = write_search_outputs(out, log, int(a["window"]), a["threshold"])
    if best is None:
        raise CliError(f"search produced no successful evaluation ({len(log)} failed)", EXIT_EMPTY)
    logger.info("search done: %d evaluations, best reward %.6g", len(log), best.reward)
    return EXIT_OK


def cmd_retrain(args):
    cfg = _load_config(args)
    out = cfg.output_dir
    log_path = Path(args.log) if args.log else out / LOG_NAME
    try:
        log = load_log(log_path)
    except LogError as exc:
        raise CliError(str(exc)) from None
    if not log:
        raise CliError(f"{log_path}: log is empty", EXIT_EMPTY)
    records = load_records(cfg)
    try:
        result = retrain_best(log, records, cfg.retrain_config(), seeds=cfg.retrain_seeds,
                              ratios=cfg.split_spec().ratios)
    except TrainingError as exc:
        raise CliError(f"{log_path}: {exc}", EXIT_EMPTY) from None
    cfg.dump(out / "config.yaml")
    (out / "final_metrics.json").write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    logger.info("retrain: test %s %.6g +/- %.6g", result["metric"], result["mean"], result["std"])
    return EXIT_OK


def format_summary(names, imp):
    lines = ["top positive operations:"]
    lines += [f"  {names[i]}  {v:+.6g}" for i, v in imp.top_positive] or ["  (none)"]
    lines.append("top negative operations:")
    lines += [f"  {names[i]}  {v:+.6g}" for i, v in imp.top_negative] or ["  (none)"]
    return "\n".join(lines) + "\n"


def cmd_analyze(args):
    try:
        log = load_log(args.log)
    except LogError as exc:
        raise CliError(str(exc)) from None
    usable = sum(r.ok for r in log)
    if usable < 10:
        raise CliError(f"{args.log}: need at least 10 usable records, got {usable}", EXIT_EMPTY)
    out = Path(args.out) if args.out else Path(args.log).parent
    out.mkdir(parents=True, exist_ok=True)
    _, imp = analyze_log(log, DEFAULT_TABLE, n_trees=args.n_trees, seed=args.seed)
    names = operation_names(DEFAULT_TABLE)
    order = np.argsort(-imp.values, kind="stable")
    _write_csv(out / "importance.csv", ["coordinate_name", "importance"],
               [(names[i], repr(float(imp.values[i]))) for i in order])
    text = format_summary(names, imp)
    (out / "importance_summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="mpnnas", description="Evolutionary search over MPNN architectures.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("search", help="run regularized evolution or random search")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--budget-s", type=float, dest="budget_s")
    s.add_argument("--max-evals", type=int, dest="max_evals")
    s.add_argument("--strategy", choices=("re", "rs"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_search)

    r = sub.add_parser("retrain", help="retrain the best logged architecture from scratch")
    r.add_argument("--config", required=True)
    r.add_argument("--log", help=f"evaluation log (default: <output>/{LOG_NAME})")
    r.add_argument("--out")
    r.set_defaults(func=cmd_retrain)

    a = sub.add_parser("analyze", help="rank operations by random-forest importance")
    a.add_argument("log")
    a.add_argument("--out")
    a.add_argument("--n-trees", type=int, default=100, dest="n_trees")
    a.add_argument("--seed", type=int, default=0)
    a.set_defaults(func=cmd_analyze)
    return ap


def _overrides(args):
    def gen():
        return [
            ("search", "seed", args.seed),
            ("search", "workers", args.workers),
            ("search", "time_limit_s", args.budget_s),
            ("search", "max_evals", args.max_evals),
            ("search", "strategy", args.strategy),
        ]
    return gen


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    if args.command == "search":
        args.overrides = _overrides(args)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"mpnnas {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
