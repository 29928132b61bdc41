"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import statistics
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_from_dict, config_to_dict, load_config, set_override, trial_config
from .data import class_histogram, load_jsonl, make_synthetic, shard_manifest, write_jsonl
from .errors import ConfigError, FedAggError
from .model_core import KINDS, run_gradcheck
from .orchestration import LOG_SCHEMA_VERSION, run_cross_validation, run_federated

log = logging.getLogger("fedagg")

MANIFEST_SCHEMA_VERSION = 1
GRADCHECK_TOL = 1e-4


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_synth(args) -> int:
    examples = make_synthetic(args.n, args.classes, args.vocab, args.positive_rate, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_jsonl(out, examples)
    print(f"wrote {len(examples)} examples to {out}")
    for label, count in class_histogram(examples).items():
        print(f"  class {label}: {count} ({count / max(len(examples), 1):.2%})")
    return 0


def cmd_partition(args) -> int:
    examples = load_jsonl(args.input)
    manifest = shard_manifest(len(examples), args.k, args.per_client, args.seed, source=str(args.input))
    Path(args.out).write_text(json.dumps(manifest) + "\n", encoding="utf-8")
    print(f"{args.k} shards of {args.per_client}; {len(manifest['leftover'])} examples held out -> {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    kinds = KINDS if args.model == "all" else (args.model,)
    ok = True
    for kind in kinds:
        result = run_gradcheck(kind, args.seed)
        passed = result.passed(GRADCHECK_TOL)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {kind:8s} params={result.num_params:4d} "
              f"max_rel_err={result.max_rel_error:.3e}")
    return 0 if ok else 1


def _config_from_args(args):
    data = {}
    if args.config:
        data = config_to_dict(load_config(args.config))
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        set_override(data, key, value)
    return config_from_dict(data)


def _run_dir(root: Path, config_dict: dict, trials: int) -> Path:
    digest = hashlib.sha256(json.dumps([config_dict, trials], sort_keys=True).encode()).hexdigest()[:10]
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    path, n = root / f"{stamp}-{digest}", 1
    while path.exists():
        path, n = root / f"{stamp}-{digest}-{n}", n + 1
    path.mkdir(parents=True)
    return path


def _mean(values):
    values = [v for v in values if v is not None]
    return statistics.fmean(values) if values else None


def cmd_run(args) -> int:
    config = _config_from_args(args)
    if args.trials < 1:
        raise ConfigError("--trials must be positive")
    config_dict = config_to_dict(config)
    run_dir = _run_dir(Path(args.out), config_dict, args.trials)
    started = _now()
    logs_per_trial, artifacts = [], {"logs": [], "models": [], "curve": "curve.csv"}

    for trial in range(args.trials):
        cfg = trial_config(config, trial)
        result = run_federated(cfg, workers=args.workers)
        log_name, model_name = f"trial-{trial:03d}.jsonl", f"model-{trial:03d}.npy"
        with open(run_dir / log_name, "w", encoding="utf-8") as fh:
            for entry in result.logs:
                fh.write(json.dumps(entry.to_json()) + "\n")
        np.save(run_dir / model_name, result.final_params)
        artifacts["logs"].append(log_name)
        artifacts["models"].append(model_name)
        logs_per_trial.append(result.logs)
        last = result.logs[-1]
        auc = "n/a" if last.test_auroc is None else f"{last.test_auroc:.4f}"
        print(f"trial {trial}: final accuracy={last.test_accuracy:.4f} auroc={auc}")

    with open(run_dir / "curve.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["schema_version", "round", "loss", "accuracy", "auroc"])
        for rows in zip(*logs_per_trial):
            cells = [_mean([r.mean_client_loss for r in rows]), _mean([r.test_accuracy for r in rows]),
                     _mean([r.test_auroc for r in rows])]
            writer.writerow([LOG_SCHEMA_VERSION, rows[0].round] + ["" if c is None else repr(c) for c in cells])

    finals = [logs[-1].test_accuracy for logs in logs_per_trial]
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "code_version": __version__,
        "config": config_dict,
        "trials": args.trials,
        "workers": args.workers,
        "artifacts": artifacts,
        "summary": {
            "final_accuracy_mean": statistics.fmean(finals),
            "final_accuracy_sd": statistics.stdev(finals) if len(finals) > 1 else 0.0,
        },
        "started_at": started,
        "finished_at": _now(),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"run directory: {run_dir}")
    return 0


def cmd_cv(args) -> int:
    config = _config_from_args(args)
    summary = run_cross_validation(config, args.folds)
    print(f"{args.folds}-fold centralized accuracy: {summary.mean:.4f} +- {summary.std:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedagg", description="Federated aggregation simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-round details")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic planted-marker JSONL dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--positive-rate", type=float, default=None, help="binary tasks only; default 0.5")
    p.add_argument("--vocab", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="write an IID shard manifest for a JSONL dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, required=True, help="number of clients")
    p.add_argument("--per-client", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("gradcheck", help="compare backprop with central finite differences")
    p.add_argument("--model", choices=KINDS + ("all",), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    for name, func, help_text in (("run", cmd_run, "run a federated experiment"),
                                  ("cv", cmd_cv, "centralized k-fold baseline")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file or a previous run's manifest.json")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field, e.g. aggregation.strategy=average")
        p.set_defaults(func=func)
    run_p = sub.choices["run"]
    run_p.add_argument("--trials", type=int, default=1)
    run_p.add_argument("--out", default="out")
    run_p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="client threads per round (results do not depend on it)")
    sub.choices["cv"].add_argument("--folds", type=int, default=10)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FedAggError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
