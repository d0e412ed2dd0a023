import pytest

from kgcurriculum.datasets.countries import (LOCATED_IN, NEIGHBOR, build_splits, load_source, regions,
                                             write_splits)
from kgcurriculum.store import load_dataset


@pytest.fixture(scope="module")
def source():
    return {c.name: c for c in load_source()}


def test_source_shape(source):
    assert len(source) >= 240
    assert len(regions()) == 5
    assert len({c.subregion for c in source.values()}) >= 20


@pytest.mark.parametrize("variant", ["S1", "S2", "S3"])
def test_split_sizes_and_queries(variant):
    sp = build_splits(variant, seed=0)
    assert len(sp["valid"]) == len(sp["test"]) == 20
    held = {h for h, _, _ in sp["valid"] + sp["test"]}
    assert len(held) == 40
    region_set = set(regions())
    assert all(r == LOCATED_IN and t in region_set for _, r, t in sp["valid"] + sp["test"])
    train = set(sp["train"])
    assert not train & set(sp["valid"] + sp["test"])


@pytest.mark.parametrize("variant", ["S1", "S2", "S3"])
def test_heldout_keep_a_training_neighbour(variant):
    sp = build_splits(variant, seed=3)
    held = {h for h, _, _ in sp["valid"] + sp["test"]}
    nbrs = {}
    for h, r, t in sp["train"]:
        if r == NEIGHBOR:
            nbrs.setdefault(h, set()).add(t)
    for c in held:
        assert nbrs.get(c, set()) - held


def test_variant_removals(source):
    s1, s2, s3 = (build_splits(v, seed=0) for v in ("S1", "S2", "S3"))
    held = [h for h, _, _ in s1["valid"] + s1["test"]]
    t1, t2, t3 = set(s1["train"]), set(s2["train"]), set(s3["train"])
    for c in held:
        assert (c, LOCATED_IN, source[c].subregion) in t1
        assert (c, LOCATED_IN, source[c].subregion) not in t2
    code_to_name = {v.code: k for k, v in source.items()}
    neighbours = {code_to_name[b] for c in held for b in source[c].borders} - set(held)
    assert neighbours
    for n in neighbours:
        assert (n, LOCATED_IN, source[n].region) in t2
        assert (n, LOCATED_IN, source[n].region) not in t3
    assert t3 < t2 < t1


def test_seeded_and_written(tmp_path):
    assert build_splits("S1", 5) == build_splits("S1", 5)
    assert build_splits("S1", 5)["test"] != build_splits("S1", 6)["test"]
    store = load_dataset(write_splits(tmp_path / "s1", "S1", 0))
    assert len(store.test) == 20
    # every evaluated entity appears in training
    assert store.n_entities == len({x for h, _, t in build_splits("S1", 0)["train"] for x in (h, t)})
