"""Z-count difficulty of training triples.

A Z-path for ``(h, r, t)`` is a pair of intermediates ``(e1, e2)`` with train edges
``h -r-> e1``, ``e2 -r-> e1`` and ``e2 -r-> t``; all three edges share relation ``r``.
The Z-count is the number of such pairs.

Three routes compute the same number:

* :func:`z_count` walks the adjacency indexes for one triple;
* :func:`z_count_oracle` brute-forces every entity pair (small graphs only);
* :func:`compute_z_counts` works per relation on sparse adjacency matrices, reading
  entries of ``A @ A.T @ A`` and applying closed-form policy corrections.
"""
from __future__ import annotations

import logging
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .store import TripleStore

logger = logging.getLogger(__name__)

# upper bound on sparse entries materialised per chunk
_CHUNK_BUDGET = 4_000_000


@dataclass(frozen=True)
class ZPathPolicy:
    exclude_query_edge: bool = True
    require_distinct_intermediates: bool = False

    def header(self) -> str:
        return (
            f"exclude_query_edge={int(self.exclude_query_edge)} "
            f"require_distinct_intermediates={int(self.require_distinct_intermediates)}"
        )


@dataclass
class ZCountTable:
    counts: np.ndarray
    policy: ZPathPolicy

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class ZStats:
    nonzero_count: int
    nonzero_fraction: float
    max: int
    mean_over_nonzero: Optional[float]  # None when every count is zero
    mean_over_all: float
    n: int

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "nonzero_count": self.nonzero_count,
            "nonzero_fraction": self.nonzero_fraction,
            "max": self.max,
            "mean_over_nonzero": self.mean_over_nonzero,
            "mean_over_all": self.mean_over_all,
        }


def z_count(store: TripleStore, triple, policy: ZPathPolicy = ZPathPolicy()) -> int:
    h, r, t = (int(x) for x in triple)
    in_t = store.in_neighbors(t, r)
    if len(in_t) == 0:
        return 0
    distinct = policy.require_distinct_intermediates
    total = 0
    for e1 in store.out_neighbors(h, r).tolist():
        if distinct and (e1 == h or e1 == t):
            continue
        common = np.intersect1d(store.in_neighbors(e1, r), in_t, assume_unique=True)
        n = len(common)
        if n == 0:
            continue
        if distinct:
            n -= sum(1 for x in {h, t, e1} if _contains(common, x))
        elif policy.exclude_query_edge:
            # e1 == t means the first edge is the query edge; e2 == h means the third is
            if e1 == t:
                n = 0
            elif _contains(common, h):
                n -= 1
        total += n
    return total


def _contains(sorted_arr: np.ndarray, x: int) -> bool:
    i = np.searchsorted(sorted_arr, x)
    return bool(i < len(sorted_arr) and sorted_arr[i] == x)


def z_count_oracle(store: TripleStore, triple, policy: ZPathPolicy = ZPathPolicy()) -> int:
    """Brute force over all ``|E|^2`` intermediate pairs. Intended for tiny graphs."""
    h, r, t = (int(x) for x in triple)
    edges = {(int(a), int(b)) for a, rel, b in store.train.tolist() if rel == r}
    query = (h, t)
    n = store.n_entities
    count = 0
    for e1 in range(n):
        if (h, e1) not in edges:
            continue
        for e2 in range(n):
            if (e2, e1) not in edges or (e2, t) not in edges:
                continue
            path = ((h, e1), (e2, e1), (e2, t))
            if policy.exclude_query_edge and query in path:
                continue
            if policy.require_distinct_intermediates and (
                e1 in (h, t) or e2 in (h, t) or e1 == e2
            ):
                continue
            count += 1
    return count


# ---------------------------------------------------------------------------
# bulk computation


def _adjacency(edges: np.ndarray, n: int) -> sp.csr_matrix:
    data = np.ones(len(edges), dtype=np.int64)
    a = sp.csr_matrix((data, (edges[:, 0], edges[:, 1])), shape=(n, n), dtype=np.int64)
    a.sum_duplicates()
    a.data[:] = 1
    return a


def _rowwise_dot(x: sp.csr_matrix, y: sp.csr_matrix) -> np.ndarray:
    return np.asarray(x.multiply(y).sum(axis=1), dtype=np.int64).ravel()


def _lookup(a: sp.csr_matrix, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.asarray(a[rows, cols], dtype=np.int64).ravel()


def _chunks(costs: np.ndarray, budget: int = _CHUNK_BUDGET):
    start, acc = 0, 0
    for i, c in enumerate(costs.tolist()):
        if acc and acc + c > budget:
            yield start, i
            start, acc = i, 0
        acc += c
    if start < len(costs):
        yield start, len(costs)


def _path_totals(a: sp.csr_matrix, at: sp.csr_matrix, heads: np.ndarray, tails: np.ndarray) -> np.ndarray:
    """Unrestricted Z-path totals ``(A A^T A)[h, t]`` for each query pair."""
    indeg = np.diff(at.indptr)
    outdeg = np.diff(a.indptr)
    # work via the head side: rows of A A^T; via the tail side: rows of A^T A
    head_cost = np.asarray(a.multiply(indeg[None, :]).sum(axis=1)).ravel()
    tail_cost = np.asarray(at.multiply(outdeg[None, :]).sum(axis=1)).ravel()
    via_head = head_cost[heads].sum() <= tail_cost[tails].sum()
    out = np.zeros(len(heads), dtype=np.int64)
    if via_head:
        order = np.argsort(heads, kind="stable")
        cost = head_cost[heads[order]] + 1
        for s, e in _chunks(cost):
            idx = order[s:e]
            uh, inv = np.unique(heads[idx], return_inverse=True)
            block = (a[uh] @ at).tocsr()  # co-child counts B[h, e2]
            out[idx] = _rowwise_dot(block[inv], at[tails[idx]])
    else:
        order = np.argsort(tails, kind="stable")
        cost = tail_cost[tails[order]] + 1
        for s, e in _chunks(cost):
            idx = order[s:e]
            ut, inv = np.unique(tails[idx], return_inverse=True)
            block = (at[ut] @ a).tocsr()  # co-parent counts C[t, e1] (symmetric)
            out[idx] = _rowwise_dot(a[heads[idx]], block[inv])
    return out


def z_counts_for_relation(edges: np.ndarray, n_entities: int, queries: np.ndarray,
                          policy: ZPathPolicy) -> np.ndarray:
    """Z-counts of ``queries`` (``(q, 2)`` head/tail pairs) against one relation's edges."""
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, 2)
    if len(edges) == 0 or len(queries) == 0:
        return np.zeros(len(queries), dtype=np.int64)
    a = _adjacency(edges, n_entities)
    at = a.T.tocsr()
    h, t = queries[:, 0], queries[:, 1]
    total = _path_totals(a, at, h, t)

    if policy.require_distinct_intermediates:
        # drop pairs with e1 in {h, t}, e2 in {h, t} or e1 == e2 (covers the query-edge rule)
        q = (h != t).astype(np.int64)
        a_ht, a_hh = _lookup(a, h, t), _lookup(a, h, h)
        a_tt, a_th = _lookup(a, t, t), _lookup(a, t, h)
        outdeg_h = np.diff(a.indptr)[h]
        indeg_t = np.diff(at.indptr)[t]
        shared_parents = _rowwise_dot(at[h], at[t])
        shared_children = _rowwise_dot(a[h], a[t])
        loops = a.diagonal().astype(np.int64)
        through_loop = _rowwise_dot(a.multiply(loops[None, :]).tocsr()[h], at[t])
        return (
            total
            - a_hh * shared_parents
            - q * a_ht * indeg_t
            - a_ht * (outdeg_h - a_hh - q * a_ht)
            - q * a_tt * (shared_children - a_hh * a_th - a_ht * a_tt)
            - (through_loop - a_hh * a_ht - q * a_ht * a_tt)
        )
    if policy.exclude_query_edge:
        a_ht = _lookup(a, h, t)
        outdeg_h = np.diff(a.indptr)[h]
        indeg_t = np.diff(at.indptr)[t]
        return total - a_ht * (indeg_t + outdeg_h - 1)
    return total


# process-pool globals; set before fork so workers inherit without pickling the store
_POOL_STATE: dict = {}


def _relation_job(r: int):
    store, policy, triples = _POOL_STATE["store"], _POOL_STATE["policy"], _POOL_STATE["triples"]
    rows = np.flatnonzero(triples[:, 1] == r)
    counts = z_counts_for_relation(store.relation_edges(r), store.n_entities,
                                   triples[rows][:, [0, 2]], policy)
    return rows, counts


def resolve_workers(workers: Optional[int] = None) -> int:
    cap = os.environ.get("KGE_WORKERS")
    n = workers if workers is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def count_triples(store: TripleStore, triples: np.ndarray, policy: ZPathPolicy = ZPathPolicy(),
                  workers: Optional[int] = None) -> np.ndarray:
    """Z-counts of arbitrary triples against the train edge set."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    counts = np.zeros(len(triples), dtype=np.int64)
    relations = np.unique(triples[:, 1]).tolist()
    workers = resolve_workers(workers)
    _POOL_STATE.update(store=store, policy=policy, triples=triples)
    try:
        if workers == 1 or len(relations) < 2:
            results = list(map(_relation_job, relations))
        else:
            with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context("fork")) as pool:
                results = list(pool.map(_relation_job, relations))
    finally:
        _POOL_STATE.clear()
    for rows, c in results:
        counts[rows] = c
    return counts


def compute_z_counts(store: TripleStore, policy: ZPathPolicy = ZPathPolicy(),
                     workers: Optional[int] = None) -> ZCountTable:
    counts = count_triples(store, store.train, policy, workers)
    if counts.size and counts.min() < 0:
        raise AssertionError("negative Z-count; policy correction is inconsistent")
    return ZCountTable(counts=counts, policy=policy)


def z_stats(table: ZCountTable) -> ZStats:
    counts = np.asarray(table.counts)
    if counts.size == 0:
        raise ValueError("empty Z-count table")
    nz = counts[counts > 0]
    return ZStats(
        nonzero_count=int(nz.size),
        nonzero_fraction=float(nz.size / counts.size),
        max=int(counts.max()),
        mean_over_nonzero=float(nz.mean()) if nz.size else None,
        mean_over_all=float(counts.mean()),
        n=int(counts.size),
    )


# ---------------------------------------------------------------------------
# persistence

_HEADER_PREFIX = "# zcounts "


def save_table(table: ZCountTable, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(f"{_HEADER_PREFIX}{table.policy.header()} n={len(table.counts)}\n")
        for i, c in enumerate(table.counts.tolist()):
            fh.write(f"{i}\t{c}\n")
    os.replace(tmp, path)


def load_table(path, expected_len: Optional[int] = None) -> ZCountTable:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith(_HEADER_PREFIX):
            raise ValueError(f"{path}: missing Z-count header line")
        fields = dict(kv.split("=", 1) for kv in header[len(_HEADER_PREFIX):].split())
        policy = ZPathPolicy(
            exclude_query_edge=fields["exclude_query_edge"] == "1",
            require_distinct_intermediates=fields["require_distinct_intermediates"] == "1",
        )
        n = int(fields["n"])
        counts = np.zeros(n, dtype=np.int64)
        seen = 0
        for line in fh:
            if not line.strip():
                continue
            i, c = line.split("\t")
            counts[int(i)] = int(c)
            seen += 1
    if seen != n:
        raise ValueError(f"{path}: header says {n} rows, found {seen}")
    if expected_len is not None and n != expected_len:
        raise ValueError(f"{path}: table has {n} rows but the train split has {expected_len}")
    return ZCountTable(counts=counts, policy=policy)


def format_stats(stats: ZStats) -> str:
    mean_nz = "-" if stats.mean_over_nonzero is None else f"{stats.mean_over_nonzero:.2f}"
    return (
        f"triples\t{stats.n}\n"
        f"nonzero_count\t{stats.nonzero_count}\n"
        f"nonzero_fraction\t{stats.nonzero_fraction:.3f}\n"
        f"max\t{stats.max}\n"
        f"mean_over_nonzero\t{mean_nz}\n"
        f"mean_over_all\t{stats.mean_over_all:.2f}\n"
    )
