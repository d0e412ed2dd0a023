import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import rankdata
from sklearn.metrics import average_precision_score

from kgcurriculum.difficulty import ZPathPolicy, z_count_oracle
from kgcurriculum.evaluator import (EvalReport, auc_pr, diagnose_zcount_rank, evaluate, format_table,
                                    query_auc_pr, rank_queries, rank_triple, report_from_ranks, tie_averaged_ranks)
from kgcurriculum.models import MODEL_KINDS, init_params, score
from kgcurriculum.store import build_store

from conftest import random_store


def oracle_rank(params, store, triple, direction, filtered):
    """Sort-based reference: score each surviving candidate, sort, locate the answer's tie block."""
    h, r, t = (int(x) for x in triple)
    answer = t if direction == "tail" else h
    scored = []
    for e in range(store.n_entities):
        cand = (h, r, e) if direction == "tail" else (e, r, t)
        if filtered and e != answer and store.known(*cand):
            continue
        scored.append((score(params, *cand), e))
    scored.sort()
    true = score(params, h, r, t)
    first = next(i for i, (s, _) in enumerate(scored) if s == true)
    last = max(i for i, (s, _) in enumerate(scored) if s == true)
    return 1.0 + first + (last - first) / 2.0


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_ranks_match_sort_oracle(kind):
    rng = np.random.default_rng(MODEL_KINDS.index(kind))
    for _ in range(4):
        store = random_store(rng, n_entities=int(rng.integers(4, 15)), n_relations=2, n_edges=30, n_test=6)
        params = init_params(kind, store.n_entities, store.n_relations, 3, 2.0, int(rng.integers(1000)))
        for direction in ("head", "tail"):
            for filtered in (True, False):
                got = rank_queries(params, store, store.test, direction, filtered)
                want = [oracle_rank(params, store, tr, direction, filtered) for tr in store.test]
                assert got.tolist() == want


def test_unique_best_is_rank_one():
    store = build_store([("a", "r", "b"), ("c", "r", "d")], [], [("a", "r", "b")])
    params = init_params("transe-l2", store.n_entities, 1, 2, 1.0, 0)
    params.entity[:] = [[0, 0], [1, 0], [5, 5], [-5, 5]]
    params.relation[:] = [[1, 0]]
    assert rank_triple(params, store, store.test[0], "tail", filtered=False).rank == 1.0


def test_constant_scores_average_ties():
    # five candidates, all tied: rank = 1 + 0 + 4 / 2
    store = build_store([(f"e{i}", "r", f"e{(i + 1) % 5}") for i in range(5)], [], [("e0", "r", "e1")])
    params = init_params("transe-l2", 5, 1, 3, 1.0, 0)
    params.entity[:] = 0
    params.relation[:] = 0
    assert rank_triple(params, store, store.test[0], "tail", filtered=False).rank == 3.0


def test_tie_averaging_ignores_removed_entries():
    scores = np.array([[1.0, 0.5, np.nan, 0.5, 2.0]])
    assert tie_averaged_ranks(scores, np.array([1])).tolist() == [1.5]


def test_filtered_never_worse_than_raw(rng):
    store = random_store(rng, n_entities=10, n_edges=60, n_test=10)
    params = init_params("distmult", store.n_entities, store.n_relations, 4, 2.0, 1)
    for d in ("head", "tail"):
        f = rank_queries(params, store, store.test, d, True)
        r = rank_queries(params, store, store.test, d, False)
        assert (f <= r).all()
    assert evaluate(params, store, "test", True).mrr >= evaluate(params, store, "test", False).mrr


def test_ranks_invariant_to_candidate_order(rng):
    scores = rng.integers(0, 4, size=(8, 20)).astype(float)
    answers = rng.integers(0, 20, size=8)
    base = tie_averaged_ranks(scores, answers)
    perm = rng.permutation(20)
    inv = np.argsort(perm)
    assert tie_averaged_ranks(scores[:, perm], inv[answers]).tolist() == base.tolist()


def test_report_arithmetic():
    perfect = report_from_ranks([1, 1, 1])
    assert (perfect.mrr, perfect.mr, perfect.hits1, perfect.hits10) == (1, 1, 1, 1)
    r = report_from_ranks([1, 4])
    assert (r.mrr, r.mr, r.hits1, r.hits3, r.hits10) == (0.625, 2.5, 0.5, 0.5, 1.0)
    with pytest.raises(ValueError):
        report_from_ranks([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1, 500), min_size=1, max_size=50))
def test_report_invariants(ranks):
    r = report_from_ranks(ranks)
    assert r.hits1 <= r.hits3 <= r.hits10 <= 1
    assert 0 < r.mrr <= 1 and r.mr >= 1


def test_perfect_memorisation_scores_one():
    train = [(f"e{i}", "r", f"e{i + 1}") for i in range(6)]
    store = build_store(train, [], train[:3])
    # entities on a line 100 apart, the relation is a +100 step: every chain edge is exact
    params = init_params("transe-l2", store.n_entities, 1, 2, 1.0, 0)
    params.entity[:] = 0
    params.entity[:, 0] = np.arange(7) * 100.0
    params.relation[:] = [[100.0, 0.0]]
    report = evaluate(params, store, "test", True)
    assert report.mrr == 1.0 and report.count == 6


def test_format_table_and_json():
    text = format_table({"filtered": EvalReport(0.5, 3.0, 0.25, 0.5, 0.75, 8)})
    assert "filtered" in text and "0.5000" in text
    assert '"mrr": 0.5' in EvalReport(0.5, 3.0, 0.25, 0.5, 0.75, 8).to_json()


def test_auc_pr_examples():
    assert auc_pr([1, 1, 0, 0], [0.1, 0.2, 0.3, 0.4]) == 1.0
    assert auc_pr([0, 0, 0, 1], [1.0, 2.0, 3.0, 4.0]) == 0.25
    # one tie block holding everything: precision is the base rate
    assert auc_pr([1, 0, 0, 1], [1.0, 1.0, 1.0, 1.0]) == 0.5
    with pytest.raises(ValueError):
        auc_pr([0, 0], [1.0, 2.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 6)), min_size=1, max_size=40))
def test_auc_pr_matches_sklearn(rows):
    labels = np.array([r[0] for r in rows])
    if not labels.any():
        labels[0] = True
    scores = np.array([float(r[1]) for r in rows])
    assert auc_pr(labels, scores) == pytest.approx(average_precision_score(labels, -scores), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.floats(-5, 5)), min_size=1, max_size=30))
def test_auc_pr_monotone_invariance(rows):
    labels = np.array([r[0] for r in rows])
    if not labels.any():
        labels[0] = True
    scores = np.array([r[1] for r in rows])
    base = auc_pr(labels, scores)
    # transforms that stay strictly monotone in floating point
    assert auc_pr(labels, 2.0 * scores) == pytest.approx(base, abs=1e-12)
    assert auc_pr(labels, rankdata(scores, method="dense") ** 3) == pytest.approx(base, abs=1e-12)


def test_query_auc_pr_pools_candidates():
    store = build_store([("c1", "in", "x"), ("c2", "in", "y"), ("x", "in", "y")], [], [("c1", "in", "x")])
    params = init_params("transe-l2", store.n_entities, 1, 2, 1.0, 0)
    cands = np.array([store.entities.id("x"), store.entities.id("y")])
    params.entity[store.entities.id("c1")] = [0, 0]
    params.relation[:] = 0
    params.entity[cands[0]] = [0.1, 0]
    params.entity[cands[1]] = [3, 0]
    assert query_auc_pr(params, store.test, cands) == 1.0
    params.entity[cands[0]] = [9, 0]
    assert query_auc_pr(params, store.test, cands) == 0.5


def test_diagnosis_smoke_and_consistency(rng):
    store = random_store(rng, n_entities=14, n_edges=70, n_test=12)
    params = init_params("rotate", store.n_entities, store.n_relations, 3, 2.0, 0)
    diag = diagnose_zcount_rank(params, store, ZPathPolicy(), "test")
    assert len(diag.ranks) == len(store.test)
    assert diag.zcounts.tolist() == [z_count_oracle(store, t) for t in store.test]
    top = diag.ranks < 10
    if top.any():
        assert diag.avg_z_top10 == pytest.approx(diag.zcounts[top].mean())
    assert diag.n_top10 + diag.n_bottom10 == len(store.test)
    assert "top10_mean_zcount" in diag.summary()


def test_diagnosis_empty_bucket_reported_as_empty():
    n = 40
    train = [(f"e{i}", "r", f"e{(i + 1) % n}") for i in range(n)]
    store = build_store(train, [], train[:3])
    params = init_params("transe-l2", n, 1, 2, 1.0, 0)
    params.entity[:] = 0
    params.relation[:] = 0
    # every candidate ties, so each rank is about n / 2 > 10
    diag = diagnose_zcount_rank(params, store, ZPathPolicy(), "test", filtered=False)
    assert diag.avg_z_top10 is None and diag.n_top10 == 0
    assert "top10_mean_zcount\tempty" in diag.summary()


def test_expanded_distance_path_keeps_exact_ties(rng):
    # large offsets make the expanded squared distance lose digits; duplicated rows force exact ties
    store = random_store(rng, n_entities=12, n_edges=50, n_test=8)
    params = init_params("transe-l2", store.n_entities, store.n_relations, 4, 2.0, 3)
    params.entity += 1e4
    params.entity[1::2] = params.entity[0::2]
    for direction in ("head", "tail"):
        got = rank_queries(params, store, store.test, direction, True)
        assert got.tolist() == [oracle_rank(params, store, tr, direction, True) for tr in store.test]
