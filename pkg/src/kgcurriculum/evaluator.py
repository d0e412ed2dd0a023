"""Link-prediction ranking metrics, AUC-PR and the Z-count vs. rank diagnostic."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .difficulty import ZPathPolicy, count_triples
from .models import ModelParams, score_candidates, score_rows
from .store import TripleStore

DIRECTIONS = ("head", "tail")
_QUERY_BLOCK = 256


@dataclass(frozen=True)
class RankResult:
    triple: tuple
    direction: str
    rank: float
    filtered: bool


@dataclass(frozen=True)
class EvalReport:
    mrr: float
    mr: float
    hits1: float
    hits3: float
    hits10: float
    count: int
    filtered: bool = True

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _filter_mask_pairs(store: TripleStore, triples: np.ndarray, direction: str):
    """(row, column) positions of known competitors to drop, true answers excluded."""
    rows, cols = [], []
    for i, (h, r, t) in enumerate(triples.tolist()):
        if direction == "tail":
            known, answer = store.known_out.get((h, r)), t
        else:
            known, answer = store.known_in.get((t, r)), h
        if known is None or len(known) == 0:
            continue
        known = known[known != answer]
        rows.append(np.full(len(known), i))
        cols.append(known)
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def tie_averaged_ranks(scores: np.ndarray, answers: np.ndarray) -> np.ndarray:
    """Rank of ``answers[i]`` in row ``i`` of ``scores`` (lower is better).

    ``1 + #strictly better + #ties / 2``; NaN entries are treated as removed.
    """
    true = scores[np.arange(len(answers)), answers][:, None]
    better = (scores < true).sum(axis=1)
    ties = (scores == true).sum(axis=1) - 1
    return 1.0 + better + ties / 2.0


def _transe_l2_rank_scores(params: ModelParams, block: np.ndarray, direction: str) -> np.ndarray:
    """Candidate scores that order exactly like the pointwise scores around each answer.

    Squared distances come from one matrix product, ``|q|^2 - 2 q.e + |e|^2``. Entries whose
    expanded value lies within a generous rounding bound of the answer's score are recomputed
    directly, so every comparison against the answer (better, tied or worse) is exact.
    """
    E, R = params.entity, params.relation
    h, r, t = block[:, 0], block[:, 1], block[:, 2]
    q = E[h] + R[r] if direction == "tail" else E[t] - R[r]
    e_sq = np.einsum("ij,ij->i", E, E)
    q_sq = np.einsum("ij,ij->i", q, q)
    sq = q @ E.T
    sq *= -2.0
    sq += q_sq[:, None]
    sq += e_sq[None, :]
    true = score_rows("transe-l2", E[h], R[r], E[t])
    scale = (np.sqrt(q_sq)[:, None] + np.sqrt(e_sq)[None, :]) ** 2
    near = np.abs(sq - (true * true)[:, None]) <= 1e-9 * scale + 1e-300
    np.maximum(sq, 0.0, out=sq)
    scores = np.sqrt(sq, out=sq)
    rows, cols = np.nonzero(near)
    if direction == "tail":
        scores[rows, cols] = score_rows("transe-l2", E[h[rows]], R[r[rows]], E[cols])
    else:
        scores[rows, cols] = score_rows("transe-l2", E[cols], R[r[rows]], E[t[rows]])
    return scores


def rank_queries(params: ModelParams, store: TripleStore, triples: np.ndarray, direction: str,
                 filtered: bool) -> np.ndarray:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    ranks = np.empty(len(triples))
    for s in range(0, len(triples), _QUERY_BLOCK):
        block = triples[s:s + _QUERY_BLOCK]
        answers = block[:, 2] if direction == "tail" else block[:, 0]
        if params.kind == "transe-l2":
            scores = _transe_l2_rank_scores(params, block, direction)
        elif direction == "tail":
            scores = score_candidates(params, block[:, 0], block[:, 1], "tail")
        else:
            scores = score_candidates(params, block[:, 2], block[:, 1], "head")
        if filtered:
            rows, cols = _filter_mask_pairs(store, block, direction)
            scores[rows, cols] = np.nan
        ranks[s:s + len(block)] = tie_averaged_ranks(scores, answers)
    return ranks


def rank_triple(params: ModelParams, store: TripleStore, triple, direction: str, filtered: bool) -> RankResult:
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    rank = rank_queries(params, store, np.asarray(triple)[None], direction, filtered)[0]
    return RankResult(tuple(int(x) for x in triple), direction, float(rank), filtered)


def report_from_ranks(ranks, filtered: bool = True) -> EvalReport:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("no ranks to summarise")
    return EvalReport(
        mrr=float(np.mean(1.0 / ranks)),
        mr=float(np.mean(ranks)),
        hits1=float(np.mean(ranks <= 1)),
        hits3=float(np.mean(ranks <= 3)),
        hits10=float(np.mean(ranks <= 10)),
        count=int(ranks.size),
        filtered=filtered,
    )


def split_ranks(params: ModelParams, store: TripleStore, split, filtered: bool = True) -> dict:
    triples = store.split(split) if isinstance(split, str) else np.asarray(split)
    if len(triples) == 0:
        raise ValueError("cannot evaluate an empty split")
    return {d: rank_queries(params, store, triples, d, filtered) for d in DIRECTIONS}


def evaluate(params: ModelParams, store: TripleStore, split="test", filtered: bool = True) -> EvalReport:
    """Rank every triple of ``split`` in both directions and summarise."""
    ranks = split_ranks(params, store, split, filtered)
    return report_from_ranks(np.concatenate([ranks["head"], ranks["tail"]]), filtered)


def format_table(reports: dict) -> str:
    """Aligned plain-text table, one row per named report."""
    name_w = max([len("setting")] + [len(k) for k in reports])
    head = f"{'setting':<{name_w}}  {'MRR':>7}  {'MR':>9}  {'Hits@1':>7}  {'Hits@3':>7}  {'Hits@10':>7}  {'queries':>8}"
    lines = [head, "-" * len(head)]
    for name, r in reports.items():
        lines.append(f"{name:<{name_w}}  {r.mrr:7.4f}  {r.mr:9.2f}  {r.hits1:7.4f}  {r.hits3:7.4f}  {r.hits10:7.4f}  {r.count:8d}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# AUC-PR


def auc_pr(labels, scores) -> float:
    """Area under the precision-recall curve with step interpolation.

    ``scores`` are lower-is-better. Thresholds sweep from the best score; tied scores
    enter together as one block.
    """
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AUC-PR needs at least one positive label")
    order = np.argsort(scores, kind="stable")
    s, y = scores[order], labels[order]
    block_end = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[block_end]
    predicted = block_end + 1
    precision = tp / predicted
    recall = tp / n_pos
    prev_recall = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev_recall) * precision))


def query_auc_pr(params: ModelParams, triples: np.ndarray, candidates) -> float:
    """Pooled AUC-PR for ``(head, r, ?)`` queries answered from a fixed candidate set."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    candidates = np.asarray(candidates, dtype=np.int64)
    scores = score_candidates(params, triples[:, 0], triples[:, 1], "tail")[:, candidates]
    labels = candidates[None, :] == triples[:, 2:3]
    return auc_pr(labels.ravel(), scores.ravel())


# ---------------------------------------------------------------------------
# Z-count vs. rank diagnostic


@dataclass
class Diagnosis:
    avg_z_top10: Optional[float]  # None when no triple ranks below 10
    avg_z_bottom10: Optional[float]
    n_top10: int
    n_bottom10: int
    ranks: np.ndarray  # one collapsed rank per triple
    zcounts: np.ndarray

    def summary(self) -> str:
        def fmt(x):
            return "empty" if x is None else f"{x:.4f}"
        return (
            f"top10_triples\t{self.n_top10}\n"
            f"top10_mean_zcount\t{fmt(self.avg_z_top10)}\n"
            f"bottom10_triples\t{self.n_bottom10}\n"
            f"bottom10_mean_zcount\t{fmt(self.avg_z_bottom10)}\n"
        )


def diagnose_zcount_rank(params: ModelParams, store: TripleStore, policy: ZPathPolicy = ZPathPolicy(),
                         split="test", filtered: bool = True) -> Diagnosis:
    """Mean Z-count of triples ranked below 10 versus the rest.

    A triple's rank is the mean of its filtered head and tail ranks; Z-counts are
    taken against the train edges.
    """
    triples = store.split(split) if isinstance(split, str) else np.asarray(split)
    ranks = split_ranks(params, store, triples, filtered)
    collapsed = (ranks["head"] + ranks["tail"]) / 2.0
    z = count_triples(store, triples, policy)
    top = collapsed < 10
    return Diagnosis(
        avg_z_top10=float(z[top].mean()) if top.any() else None,
        avg_z_bottom10=float(z[~top].mean()) if (~top).any() else None,
        n_top10=int(top.sum()),
        n_bottom10=int((~top).sum()),
        ranks=collapsed,
        zcounts=z,
    )
