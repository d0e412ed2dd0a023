import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcurriculum.difficulty import (ZCountTable, ZPathPolicy, compute_z_counts, count_triples, format_stats,
                                     load_table, resolve_workers, save_table, z_count, z_count_oracle, z_stats)
from kgcurriculum.store import build_store

from conftest import random_store

POLICIES = [ZPathPolicy(ex, di) for ex in (True, False) for di in (False, True)]


def edge_triple_count(store, triple, policy):
    """Enumerates ordered edge triples of relation r; independent of both library routes."""
    h, r, t = (int(x) for x in triple)
    edges = sorted({(a, b) for a, rel, b in store.train.tolist() if rel == r})
    count = 0
    for first, second, third in itertools.product(edges, repeat=3):
        if first[0] != h or third[1] != t or second[1] != first[1] or second[0] != third[0]:
            continue
        e1, e2 = first[1], second[0]
        if policy.exclude_query_edge and (h, t) in (first, second, third):
            continue
        if policy.require_distinct_intermediates and (e1 in (h, t) or e2 in (h, t) or e1 == e2):
            continue
        count += 1
    return count


def test_lone_edge_is_zero_when_query_excluded():
    store = build_store([("h", "r", "t")])
    assert z_count(store, store.train[0]) == 0
    assert z_count(store, store.train[0], ZPathPolicy(exclude_query_edge=False)) == 1


def test_four_edge_example():
    store = build_store([("h", "r", "a"), ("b", "r", "a"), ("b", "r", "t"), ("h", "r", "t")])
    q = store.train[3]
    assert z_count(store, q) == 1
    assert z_count_oracle(store, q) == 1
    assert edge_triple_count(store, q, ZPathPolicy()) == 1


def test_relation_without_edges_is_zero():
    store = build_store([("a", "r", "b")], [("a", "s", "b")])
    assert z_count_oracle(store, store.valid[0]) == 0
    assert z_count(store, store.valid[0]) == 0


def test_other_relations_do_not_contribute():
    store = build_store([("h", "r", "a"), ("b", "s", "a"), ("b", "r", "t"), ("h", "r", "t")])
    assert z_count(store, store.train[3]) == 0


@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: p.header())
def test_three_routes_agree_on_random_graphs(policy):
    rng = np.random.default_rng(7)
    for _ in range(15):
        store = random_store(rng, n_entities=int(rng.integers(3, 12)), n_relations=2, n_edges=int(rng.integers(5, 45)))
        bulk = count_triples(store, store.train, policy)
        for i, tr in enumerate(store.train):
            expected = edge_triple_count(store, tr, policy)
            assert z_count(store, tr, policy) == expected
            assert z_count_oracle(store, tr, policy) == expected
            assert bulk[i] == expected


@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: p.header())
def test_bulk_handles_non_train_queries(policy, rng):
    store = random_store(rng, n_entities=10, n_edges=50)
    queries = np.concatenate([store.valid, store.test])
    bulk = count_triples(store, queries, policy)
    assert bulk.tolist() == [z_count_oracle(store, q, policy) for q in queries]


edges_strategy = st.lists(
    st.tuples(st.integers(0, 7), st.integers(0, 1), st.integers(0, 7)), min_size=1, max_size=40)


def _store_from(edges):
    return build_store([(f"e{h}", f"r{r}", f"e{t}") for h, r, t in edges])


@settings(max_examples=60, deadline=None)
@given(edges_strategy, st.tuples(st.integers(0, 7), st.integers(0, 1), st.integers(0, 7)))
def test_adding_an_edge_never_lowers_counts(edges, extra):
    for policy in POLICIES:
        before = _store_from(edges)
        after = _store_from(edges + [extra])
        old = compute_z_counts(before, policy).counts
        new = count_triples(after, _reencode(before, after), policy)
        assert (new >= old).all()


def _reencode(before, after):
    rows = []
    for h, r, t in before.train.tolist():
        rows.append((after.entities.id(before.entities.name(h)), after.relations.id(before.relations.name(r)),
                     after.entities.id(before.entities.name(t))))
    return np.asarray(rows, dtype=np.int64)


@settings(max_examples=60, deadline=None)
@given(edges_strategy)
def test_counts_are_at_least_one_without_exclusion(edges):
    store = _store_from(edges)
    counts = compute_z_counts(store, ZPathPolicy(exclude_query_edge=False)).counts
    assert (counts >= 1).all()


@settings(max_examples=40, deadline=None)
@given(edges_strategy)
def test_distinct_policy_never_exceeds_plain_exclusion(edges):
    store = _store_from(edges)
    plain = compute_z_counts(store, ZPathPolicy()).counts
    distinct = compute_z_counts(store, ZPathPolicy(True, True)).counts
    keep = compute_z_counts(store, ZPathPolicy(False, False)).counts
    assert (distinct <= plain).all() and (plain <= keep).all()


def test_counts_ignore_valid_and_test(rng):
    store = random_store(rng, n_edges=40)
    bare = build_store([(store.entities.name(h), store.relations.name(r), store.entities.name(t))
                        for h, r, t in store.train.tolist()])
    assert compute_z_counts(store).counts.tolist() == compute_z_counts(bare).counts.tolist()


def test_stats_arithmetic():
    s = z_stats(ZCountTable(np.array([0, 0, 3, 1]), ZPathPolicy()))
    assert (s.nonzero_count, s.nonzero_fraction, s.max, s.mean_over_nonzero) == (2, 0.5, 3, 2.0)
    assert s.mean_over_all == 1.0
    zero = z_stats(ZCountTable(np.zeros(3, dtype=np.int64), ZPathPolicy()))
    assert zero.mean_over_nonzero is None
    assert "mean_over_nonzero\t-" in format_stats(zero)
    with pytest.raises(ValueError):
        z_stats(ZCountTable(np.zeros(0, dtype=np.int64), ZPathPolicy()))


def test_table_roundtrip(tmp_path, small_store):
    policy = ZPathPolicy(exclude_query_edge=True, require_distinct_intermediates=True)
    table = compute_z_counts(small_store, policy)
    path = tmp_path / "z.tsv"
    save_table(table, path)
    back = load_table(path, expected_len=len(small_store.train))
    assert back.policy == policy
    assert back.counts.tolist() == table.counts.tolist()
    assert back.counts.dtype == np.int64
    with pytest.raises(ValueError, match="train split"):
        load_table(path, expected_len=len(small_store.train) + 1)


def test_worker_count_does_not_change_table(tmp_path, rng):
    store = random_store(rng, n_entities=20, n_relations=4, n_edges=150)
    one, many = tmp_path / "one.tsv", tmp_path / "many.tsv"
    save_table(compute_z_counts(store, workers=1), one)
    save_table(compute_z_counts(store, workers=3), many)
    assert one.read_bytes() == many.read_bytes()


def test_workers_env_cap(monkeypatch):
    monkeypatch.setenv("KGE_WORKERS", "2")
    assert resolve_workers(8) == 2
    assert resolve_workers(None) == 2
    monkeypatch.delenv("KGE_WORKERS")
    assert resolve_workers(None) == 1
    assert resolve_workers(4) == 4


def test_counts_are_int64_on_dense_relation():
    n = 30
    raw = [(f"a{i}", "r", f"b{j}") for i in range(n) for j in range(n)]
    table = compute_z_counts(build_store(raw))
    assert table.counts.dtype == np.int64
    # complete bipartite relation: n * n (e1, e2) pairs, of which 2n - 1 use the query edge
    assert (table.counts == (n - 1) ** 2).all()
