"""Desk-scale curriculum trend check: the same model trained with and without the curriculum.

Trains ``--seeds`` seeds per arm on DATASET with a fixed epoch budget, evaluates filtered
Hits@10 on the test split, and on the first curriculum model compares the mean Z-count
of test triples ranked inside the top 10 with the rest. Prints one tab-separated row per
run plus a summary, and optionally writes the rows to ``--out``. The runs are independent,
so ``--workers N`` trains N of them at once in separate processes.

    python scripts/desk_trend.py data/wn18rr_proxy --config configs/wn18rr-desk.conf
"""
import argparse
import json
import multiprocessing as mp
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from kgcurriculum.config import load_config
from kgcurriculum.difficulty import compute_z_counts, resolve_workers, z_stats
from kgcurriculum.evaluator import diagnose_zcount_rank, evaluate
from kgcurriculum.store import load_dataset
from kgcurriculum.trainer import resolve_pacing, train


_STATE = {}


def _one_run(job):
    arm, cfg, diagnose = job
    store, table = _STATE["store"], _STATE["table"]
    t0 = time.perf_counter()
    result = train(store, table if arm == "curriculum" else None, None, cfg)
    report = evaluate(result.params, store, "test", filtered=True)
    row = {"arm": arm, "seed": cfg.seed, "hits10": report.hits10, "mrr": report.mrr,
           "seconds": round(time.perf_counter() - t0, 1)}
    return row, diagnose_zcount_rank(result.params, store, split="test") if diagnose else None


def run_protocol(dataset, config_path=None, overrides=(), seeds=(0, 1, 2), workers=None, log=print):
    """Returns a dict with per-run rows, arm means and the diagnosis of the first curriculum run."""
    start = time.perf_counter()
    store = load_dataset(dataset)
    table = compute_z_counts(store)
    config, auto = load_config(config_path, overrides)
    config = replace(config, pacing=resolve_pacing(config, table, auto))
    log(f"# {len(store.train)} train triples, nonzero_fraction={z_stats(table).nonzero_fraction:.4f}, "
        f"lambda0={config.pacing.lambda0:.4f}")
    jobs = [(arm, replace(config, seed=seed), arm == "curriculum" and i == 0)
            for arm in ("curriculum", "baseline") for i, seed in enumerate(seeds)]
    # workers fork after this point and inherit the store without pickling it
    _STATE.update(store=store, table=table)
    workers = min(resolve_workers(workers), len(jobs))
    rows, diagnosis = [], None
    pool = ProcessPoolExecutor(workers, mp_context=mp.get_context("fork")) if workers > 1 else None
    try:
        for row, diag in (pool.map(_one_run, jobs) if pool else map(_one_run, jobs)):
            rows.append(row)
            diagnosis = diagnosis or diag
            log("\t".join(f"{k}={v}" for k, v in row.items()))
    finally:
        if pool:
            pool.shutdown()
    means = {arm: float(np.mean([r["hits10"] for r in rows if r["arm"] == arm]))
             for arm in ("curriculum", "baseline")}
    return {"rows": rows, "means": means, "diagnosis": diagnosis,
            "seconds": time.perf_counter() - start}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset")
    ap.add_argument("--config")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--workers", type=int, help="parallel training processes (capped by KGE_WORKERS)")
    ap.add_argument("--out")
    args = ap.parse_args(argv)
    out = run_protocol(args.dataset, args.config, args.set, tuple(range(args.seeds)), args.workers)
    diag = out["diagnosis"]
    print(f"mean_hits10_curriculum\t{out['means']['curriculum']:.4f}")
    print(f"mean_hits10_baseline\t{out['means']['baseline']:.4f}")
    print(diag.summary())
    print(f"seconds\t{out['seconds']:.0f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"rows": out["rows"], "means": out["means"], "seconds": out["seconds"],
                       "top10_mean_zcount": diag.avg_z_top10, "bottom10_mean_zcount": diag.avg_z_bottom10},
                      fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
