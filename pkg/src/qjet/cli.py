"""``qjet`` command line: ingest, synth, train, eval, sweep.

Exit codes: 0 success, 1 runtime failure, 2 input validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter

from .config import ConfigError, load_config
from .data import (
    DataFormatError,
    InsufficientDataError,
    SynthConfig,
    UnknownParticleError,
    featurize_jet,
    read_jsonl,
    select_jets,
    synth_jets,
    write_cache,
    write_jsonl,
)
from .experiment import evaluate_checkpoint, run_experiment, run_sweep

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2
INPUT_ERRORS = (ConfigError, DataFormatError, InsufficientDataError, UnknownParticleError, FileNotFoundError)


def cmd_ingest(args) -> int:
    jets = read_jsonl(args.input)
    kept = select_jets(jets, args.min_particles)
    dropped = len(jets) - len(kept)
    if dropped:
        print(f"warning: excluded {dropped} jet(s) with fewer than {args.min_particles} particles", file=sys.stderr)
    featured = [featurize_jet(j, args.n_nodes, args.wrap_phi) for j in kept]
    write_cache(featured, args.output)
    counts = Counter(j.label for j in kept)
    print(f"cached {len(kept)} jets to {args.output}: {counts[1]} quark, {counts[0]} gluon")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig.strong() if args.strong else SynthConfig()
    write_jsonl(synth_jets(args.n, args.seed, cfg), args.output)
    print(f"wrote {args.n} synthetic jets to {args.output}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    run_dir, report = run_experiment(cfg, args.output_dir)
    print(f"run directory: {run_dir}")
    print(f"best epoch {report.best_epoch}; test accuracy {report.test_accuracy:.4f}; test AUC {report.test_auc}")
    return EXIT_OK


def cmd_eval(args) -> int:
    print(json.dumps(evaluate_checkpoint(args.checkpoint, args.data), indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    rows = run_sweep(args.configs, args.output)
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"sweep finished: {len(rows) - len(failed)} ok, {len(failed)} failed")
    return EXIT_RUNTIME if failed else EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qjet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a JSONL jet file and write a QJET1 cache")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-particles", type=int, default=10)
    p.add_argument("--n-nodes", type=int, default=3)
    p.add_argument("--wrap-phi", action="store_true")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write deterministic synthetic jets as JSONL")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--strong", action="store_true", help="use the well-separated class preset")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None, help="overrides output_dir from the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a JSONL file or cache")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train every *.cfg in a directory and tabulate AUC against |Theta|")
    p.add_argument("--configs", required=True)
    p.add_argument("--output", default=None, help="CSV path (default: <configs>/auc_vs_params.csv)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "synth" and args.n <= 0:
        print("error: --n must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - top-level runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
