"""Command-line entry point: ``kgcurriculum {zcounts,train,eval,diagnose}``.

Every invocation writes into its own run directory (``<root>/<timestamp>-<command>-seed<N>``)
together with a ``manifest.json`` that lists the inputs (with sha256 hashes), the
resolved configuration and every artifact produced.

Exit status: 0 success, 1 usage or configuration error, 2 data error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import plotting
from .config import config_snapshot, load_config
from .curriculum import PACING_KINDS, ConfigError
from .difficulty import (ZPathPolicy, compute_z_counts, format_stats, load_table, save_table, z_stats)
from .evaluator import diagnose_zcount_rank, evaluate, format_table, query_auc_pr
from .models import load_checkpoint, save_checkpoint
from .store import SPLITS, DataError, TripleStore, find_split_file, load_dataset
from .trainer import NumericalError, resolve_pacing, train

logger = logging.getLogger("kgcurriculum")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# run bookkeeping


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


class Run:
    """A per-invocation output directory plus its manifest."""

    def __init__(self, command: str, args, seed: int):
        if args.run_dir:
            self.dir = Path(args.run_dir)
        else:
            stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
            base = Path(args.output_root) / f"{stamp}-{command}-seed{seed}"
            self.dir, k = base, 1
            while self.dir.exists():
                k += 1
                self.dir = base.with_name(f"{base.name}-{k}")
        self.manifest = {
            "command": command,
            "argv": args.argv,
            "seeds": {"seed": seed},
            "inputs": {},
            "artifacts": {},
            "started": _now(),
        }

    def add_input(self, label: str, path) -> None:
        path = Path(path)
        self.manifest["inputs"][label] = {"path": str(path), "sha256": sha256_file(path)}

    def path(self, name: str) -> Path:
        # created on first use, so a run that fails while loading leaves nothing behind
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / name

    def add_artifact(self, label: str, path) -> Path:
        self.manifest["artifacts"][label] = Path(path).name
        return Path(path)

    def finish(self) -> Path:
        self.manifest["finished"] = _now()
        for label, name in self.manifest["artifacts"].items():
            if not (self.dir / name).exists():
                raise RuntimeError(f"artifact {label} ({name}) was not written")
        out = self.path("manifest.json")
        tmp = out.with_name(out.name + ".tmp")
        tmp.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, out)
        return out


def _policy(args) -> ZPathPolicy:
    return ZPathPolicy(exclude_query_edge=not args.keep_query_edge,
                       require_distinct_intermediates=args.distinct_intermediates)


def _load_store(args, run: Run) -> TripleStore:
    names = {"train_name": args.train_file, "valid_name": args.valid_file, "test_name": args.test_file}
    store = load_dataset(args.dataset, **names)
    for split, path in zip(SPLITS, _split_paths(args)):
        run.add_input(f"{split}_file", path)
    run.manifest["dataset"] = {"dir": str(args.dataset), "entities": store.n_entities,
                               "relations": store.n_relations, "train": len(store.train),
                               "valid": len(store.valid), "test": len(store.test),
                               "warnings": store.warnings}
    return store


def _split_paths(args) -> list:
    given = (args.train_file, args.valid_file, args.test_file)
    return [Path(args.dataset) / name if name else find_split_file(args.dataset, split)
            for split, name in zip(SPLITS, given)]


def _check_compatible(params, store: TripleStore, checkpoint: Path) -> None:
    """Refuse checkpoints whose dictionaries do not match the dataset."""
    if (params.n_entities, params.n_relations) != (store.n_entities, store.n_relations):
        raise DataError(
            f"{checkpoint}: checkpoint was trained with {params.n_entities} entities and "
            f"{params.n_relations} relations, but the dataset has {store.n_entities} entities and "
            f"{store.n_relations} relations; ids would not line up, so evaluation is refused")
    ent_dict = checkpoint.parent / "entities.dict"
    if ent_dict.exists():
        names = [line.split("\t")[0] for line in ent_dict.read_text(encoding="utf-8").splitlines()]
        if names != store.entities.names:
            raise DataError(f"{ent_dict}: entity names differ from the dataset's; ids would not line up")


# ---------------------------------------------------------------------------
# commands


def cmd_zcounts(args) -> int:
    run = Run("zcounts", args, seed=0)
    store = _load_store(args, run)
    policy = _policy(args)
    start = time.perf_counter()
    table = compute_z_counts(store, policy, args.workers)
    elapsed = time.perf_counter() - start
    out = run.add_artifact("zcounts", run.path("zcounts.tsv"))
    save_table(table, out)
    stats = z_stats(table)
    (run.path("stats.tsv")).write_text(format_stats(stats), encoding="utf-8")
    run.add_artifact("stats", run.path("stats.tsv"))
    if not args.no_plots:
        run.add_artifact("histogram", plotting.plot_zcount_histogram(table.counts, run.path("zcounts.png")))
    run.manifest["config"] = {"policy": policy.header(), "workers": args.workers, "seconds": round(elapsed, 3)}
    run.manifest["stats"] = stats.as_dict()
    run.finish()
    sys.stdout.write(format_stats(stats))
    sys.stdout.write(f"zcounts_file\t{out}\n")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = list(args.set or [])
    if args.pacing:
        overrides.append(f"pacing={args.pacing}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.epochs is not None:
        overrides.append(f"max_epochs={args.epochs}")
    config, lambda0_auto = load_config(args.config, overrides)
    if args.no_curriculum and (args.zcounts or args.compute_zcounts):
        raise UsageError("--no-curriculum cannot be combined with a Z-count table")

    run = Run("train", args, seed=config.seed)
    if args.config:
        run.add_input("config", args.config)
    store = _load_store(args, run)
    table = None
    if args.no_curriculum:
        lambda0_auto = False
    elif args.zcounts:
        run.add_input("zcounts", args.zcounts)
        table = load_table(args.zcounts, expected_len=len(store.train))
    elif args.compute_zcounts:
        table = compute_z_counts(store, _policy(args), args.workers)
        save_table(table, run.add_artifact("zcounts", run.path("zcounts.tsv")))
    else:
        raise UsageError("train needs --zcounts FILE, --compute-zcounts or --no-curriculum")
    if table is not None:
        config = replace(config, pacing=resolve_pacing(config, table, lambda0_auto))

    log_path = run.add_artifact("epoch_log", run.path("epochs.tsv"))
    with open(log_path, "w", encoding="utf-8") as log_fh:
        log_fh.write("epoch\tlambda\tavailable\tloss\tseconds\n")

        def on_epoch(log, _params):
            log_fh.write(f"{log.epoch}\t{log.lam:.9f}\t{log.n_available}\t{log.loss:.9f}\t{log.seconds:.3f}\n")
            log_fh.flush()
            logger.info(log.line())

        result = train(store, table, None, config, on_epoch=on_epoch)

    ckpt = run.add_artifact("checkpoint", run.path("checkpoint.kgc"))
    save_checkpoint(result.params, ckpt)
    store.dump_dictionaries(run.path(""))
    run.add_artifact("entities", run.path("entities.dict"))
    run.add_artifact("relations", run.path("relations.dict"))
    if not args.no_plots and result.epochs:
        run.add_artifact("trace_plot", plotting.plot_training_trace(result.epochs, run.path("trace.png")))
    snap = config_snapshot(config, lambda0_auto)
    snap["curriculum"] = table is not None
    run.manifest["config"] = snap
    run.manifest["lambda_trace"] = result.lambda_trace
    run.finish()
    sys.stdout.write(f"run_dir\t{run.dir}\ncheckpoint\t{ckpt}\nepochs\t{len(result.epochs)}\n")
    if result.epochs:
        sys.stdout.write(f"final_loss\t{result.epochs[-1].loss:.6f}\n")
    return EXIT_OK


def _read_candidates(path, store: TripleStore) -> np.ndarray:
    names = [n.strip() for n in Path(path).read_text(encoding="utf-8").splitlines() if n.strip()]
    missing = [n for n in names if n not in store.entities]
    if missing:
        raise DataError(f"{path}: unknown candidate entities {missing[:5]}")
    return np.array([store.entities.id(n) for n in names], dtype=np.int64)


def cmd_eval(args) -> int:
    params = load_checkpoint(args.checkpoint)
    run = Run("eval", args, seed=params.seed)
    run.add_input("checkpoint", args.checkpoint)
    store = _load_store(args, run)
    _check_compatible(params, store, Path(args.checkpoint))
    triples = store.split(args.split)
    if len(triples) == 0:
        raise DataError(f"split {args.split!r} is empty")

    if args.auc_pr:
        if args.candidates:
            run.add_input("candidates", args.candidates)
            candidates = _read_candidates(args.candidates, store)
        else:
            candidates = np.unique(triples[:, 2])
        value = query_auc_pr(params, triples, candidates)
        result = {"auc_pr": value, "split": args.split, "queries": int(len(triples)),
                  "candidates": int(len(candidates))}
        out = run.add_artifact("report", run.path("auc_pr.json"))
        out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        run.manifest["results"] = result
        run.finish()
        sys.stdout.write(f"auc_pr\t{value:.6f}\n")
        return EXIT_OK

    settings = {"raw": False, "filtered": True}
    if args.protocol != "both":
        settings = {args.protocol: settings[args.protocol]}
    reports = {name: evaluate(params, store, args.split, filtered) for name, filtered in settings.items()}
    payload = {name: json.loads(r.to_json()) for name, r in reports.items()}
    run.add_artifact("report_json", run.path("report.json")).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    table = format_table(reports)
    run.add_artifact("report_table", run.path("report.txt")).write_text(table, encoding="utf-8")
    run.manifest["results"] = payload
    run.finish()
    sys.stdout.write(table)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    params = load_checkpoint(args.checkpoint)
    run = Run("diagnose", args, seed=params.seed)
    run.add_input("checkpoint", args.checkpoint)
    store = _load_store(args, run)
    _check_compatible(params, store, Path(args.checkpoint))
    policy = _policy(args)
    diag = diagnose_zcount_rank(params, store, policy, args.split, filtered=args.protocol == "filtered")
    triples = store.split(args.split)

    dump = run.add_artifact("per_triple", run.path("diagnose.csv"))
    with open(dump, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "head", "relation", "tail", "rank", "zcount"])
        for i, ((h, r, t), rank, z) in enumerate(zip(triples.tolist(), diag.ranks.tolist(), diag.zcounts.tolist())):
            writer.writerow([i, store.entities.name(h), store.relations.name(r), store.entities.name(t),
                             repr(float(rank)), int(z)])
    run.add_artifact("summary", run.path("summary.tsv")).write_text(diag.summary(), encoding="utf-8")
    if not args.no_plots:
        run.add_artifact("plot", plotting.plot_diagnosis(diag, run.path("diagnosis.png")))
    run.manifest["config"] = {"policy": policy.header(), "split": args.split, "protocol": args.protocol}
    run.manifest["results"] = {"avg_z_top10": diag.avg_z_top10, "avg_z_bottom10": diag.avg_z_bottom10,
                               "n_top10": diag.n_top10, "n_bottom10": diag.n_bottom10}
    run.finish()
    sys.stdout.write(diag.summary())
    sys.stdout.write(f"per_triple_csv\t{dump}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_dataset_args(p):
    p.add_argument("dataset", type=Path, help="directory holding train/valid/test triple files")
    p.add_argument("--train-file", help="train file name inside the dataset dir (default train.txt)")
    p.add_argument("--valid-file", help="valid file name (default valid.txt)")
    p.add_argument("--test-file", help="test file name (default test.txt)")


def _add_policy_args(p):
    p.add_argument("--keep-query-edge", action="store_true",
                   help="let the query edge itself appear inside a Z-path")
    p.add_argument("--distinct-intermediates", action="store_true",
                   help="require the four path entities to differ pairwise where they meet")


def _add_output_args(p):
    p.add_argument("--output-root", default="runs", help="parent of per-run directories (default: runs)")
    p.add_argument("--run-dir", help="write into exactly this directory instead")
    p.add_argument("--no-plots", action="store_true", help="skip rendering figures")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kgcurriculum", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("zcounts", help="count Z-paths for every train triple")
    _add_dataset_args(p)
    _add_policy_args(p)
    p.add_argument("--workers", type=int, default=None, help="worker processes (capped by KGE_WORKERS)")
    _add_output_args(p)
    p.set_defaults(func=cmd_zcounts)

    p = sub.add_parser("train", help="train an embedding model")
    _add_dataset_args(p)
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--pacing", choices=PACING_KINDS, help="pacing function kind")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int, help="shorthand for --set max_epochs=N")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--zcounts", type=Path, help="precomputed Z-count table")
    group.add_argument("--compute-zcounts", action="store_true", help="count Z-paths before training")
    p.add_argument("--no-curriculum", action="store_true", help="train on the full set every epoch")
    _add_policy_args(p)
    p.add_argument("--workers", type=int, default=None)
    _add_output_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="link-prediction metrics or AUC-PR for a checkpoint")
    p.add_argument("checkpoint", type=Path)
    _add_dataset_args(p)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--protocol", choices=("filtered", "raw", "both"), default="filtered")
    p.add_argument("--auc-pr", action="store_true", help="report pooled AUC-PR over tail candidates")
    p.add_argument("--candidates", type=Path, help="entity names to rank for --auc-pr, one per line")
    _add_output_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("diagnose", help="mean Z-count of top-10 vs. other test triples")
    p.add_argument("checkpoint", type=Path)
    _add_dataset_args(p)
    _add_policy_args(p)
    p.add_argument("--split", choices=("train", "valid", "test"), default="test")
    p.add_argument("--protocol", choices=("filtered", "raw"), default="filtered")
    _add_output_args(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = [str(a) for a in (sys.argv[1:] if argv is None else argv)]
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"kgcurriculum: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"kgcurriculum: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"kgcurriculum: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
