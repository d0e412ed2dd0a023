import numpy as np
import pytest

from kgcurriculum.store import build_store


def random_raw_triples(rng, n_entities, n_relations, n_edges, self_loops=True):
    out = []
    for _ in range(n_edges):
        h = int(rng.integers(n_entities))
        t = int(rng.integers(n_entities))
        if not self_loops and h == t:
            continue
        out.append((f"e{h}", f"r{rng.integers(n_relations)}", f"e{t}"))
    return out


def random_store(rng, n_entities=12, n_relations=2, n_edges=40, n_valid=5, n_test=5, self_loops=True):
    raw = random_raw_triples(rng, n_entities, n_relations, n_edges + n_valid + n_test, self_loops)
    train = raw[:n_edges]
    # every entity and relation shows up in train so ids are stable across splits
    train += [(f"e{i}", "r0", f"e{(i + 1) % n_entities}") for i in range(n_entities)]
    train += [("e0", f"r{j}", "e1") for j in range(n_relations)]
    return build_store(train, raw[n_edges:n_edges + n_valid], raw[n_edges + n_valid:])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_store(rng):
    return random_store(rng)


TOY_TRAIN = [
    ("a", "likes", "b"), ("c", "likes", "b"), ("c", "likes", "d"), ("a", "likes", "d"),
    ("d", "likes", "e"), ("e", "likes", "b"), ("b", "knows", "a"), ("c", "knows", "a"),
    ("c", "knows", "e"), ("e", "knows", "e"), ("b", "knows", "e"), ("a", "knows", "c"),
]
TOY_VALID = [("e", "likes", "d"), ("b", "knows", "c")]
TOY_TEST = [("a", "knows", "e"), ("e", "likes", "a"), ("d", "knows", "b")]


def write_toy_dataset(directory):
    directory.mkdir(parents=True, exist_ok=True)
    for name, rows in (("train", TOY_TRAIN), ("valid", TOY_VALID), ("test", TOY_TEST)):
        (directory / f"{name}.txt").write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows))
    return directory


@pytest.fixture
def toy_dir(tmp_path):
    return write_toy_dataset(tmp_path / "toy")


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        ACCEPTANCE[number] = (ok, detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
