"""Triple loading, dictionary encoding and adjacency indexes."""
from __future__ import annotations

import gzip
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")


class DataError(ValueError):
    """Raised for malformed or missing triple files."""


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def load_split(path) -> list[tuple[str, str, str]]:
    """Read a 3-column tab-separated triple file, keeping file order.

    Blank lines are ignored. ``.gz`` files are decompressed transparently.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    triples = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3 or not all(fields):
                raise DataError(f"{path}:{lineno}: expected 3 non-empty tab-separated fields, got {len(fields)}")
            triples.append((fields[0], fields[1], fields[2]))
    if not triples:
        raise DataError(f"{path}: file contains no triples")
    return triples


def find_split_file(dataset_dir, split: str) -> Path:
    """Locate ``<split>.txt`` (or ``.txt.gz``) inside a dataset directory."""
    base = Path(dataset_dir)
    for name in (f"{split}.txt", f"{split}.txt.gz", f"{split}.tsv"):
        if (base / name).exists():
            return base / name
    raise DataError(f"{base}: missing {split}.txt")


class Vocab:
    """Bidirectional name <-> dense id map, ids assigned in first-seen order."""

    def __init__(self):
        self._ids: dict[str, int] = {}
        self._names: list[str] = []

    def add(self, name: str) -> int:
        idx = self._ids.get(name)
        if idx is None:
            idx = len(self._names)
            self._ids[name] = idx
            self._names.append(name)
        return idx

    def id(self, name: str) -> int:
        return self._ids[name]

    def name(self, idx: int) -> str:
        return self._names[idx]

    def __contains__(self, name) -> bool:
        return name in self._ids

    def __len__(self) -> int:
        return len(self._names)

    @property
    def names(self) -> list[str]:
        return list(self._names)


@dataclass(frozen=True, eq=False)
class TripleStore:
    """Encoded splits plus per-relation adjacency over the train split.

    ``train``/``valid``/``test`` are ``(n, 3)`` int64 arrays of (head, relation, tail).
    ``out_index[(h, r)]`` and ``in_index[(t, r)]`` are sorted int64 arrays built from
    train only; ``known_out``/``known_in`` are the same over all three splits and back
    the filtered ranking protocol.
    """

    entities: Vocab
    relations: Vocab
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    out_index: dict
    in_index: dict
    known_out: dict
    known_in: dict
    warnings: list = field(default_factory=list)
    duplicates_dropped: dict = field(default_factory=dict)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        return getattr(self, name)

    def out_neighbors(self, h: int, r: int) -> np.ndarray:
        return self.out_index.get((h, r), _EMPTY)

    def in_neighbors(self, t: int, r: int) -> np.ndarray:
        return self.in_index.get((t, r), _EMPTY)

    def known(self, h: int, r: int, t: int) -> bool:
        """True iff (h, r, t) occurs in any split."""
        tails = self.known_out.get((int(h), int(r)))
        if tails is None:
            return False
        i = np.searchsorted(tails, t)
        return bool(i < len(tails) and tails[i] == t)

    def encode(self, triples) -> np.ndarray:
        """Pack (h, r, t) rows into single int64 keys."""
        tr = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        n_e, n_r = self.n_entities, max(1, self.n_relations)
        return (tr[:, 0] * n_r + tr[:, 1]) * n_e + tr[:, 2]

    @cached_property
    def _known_keys(self) -> np.ndarray:
        return np.unique(self.encode(np.concatenate([self.train, self.valid, self.test])))

    def known_mask(self, triples) -> np.ndarray:
        """Vectorised :meth:`known` over an ``(n, 3)`` array."""
        keys = self.encode(triples)
        ref = self._known_keys
        pos = np.minimum(np.searchsorted(ref, keys), len(ref) - 1)
        return ref[pos] == keys

    def relation_edges(self, r: int) -> np.ndarray:
        """Train edges of relation ``r`` as an ``(m, 2)`` array of (head, tail)."""
        mask = self.train[:, 1] == r
        return self.train[mask][:, [0, 2]]

    def dump_dictionaries(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for fname, vocab in (("entities.dict", self.entities), ("relations.dict", self.relations)):
            with open(directory / fname, "w", encoding="utf-8") as fh:
                for i, name in enumerate(vocab.names):
                    fh.write(f"{name}\t{i}\n")


_EMPTY = np.empty(0, dtype=np.int64)
_EMPTY.setflags(write=False)


def _group_index(keys_a: np.ndarray, keys_b: np.ndarray, values: np.ndarray) -> dict:
    """Map (a, b) -> sorted unique values, vectorised via one lexsort."""
    if len(values) == 0:
        return {}
    order = np.lexsort((values, keys_b, keys_a))
    a, b, v = keys_a[order], keys_b[order], values[order]
    boundaries = np.flatnonzero((np.diff(a) != 0) | (np.diff(b) != 0)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(v)]))
    index = {}
    for s, e in zip(starts.tolist(), ends.tolist()):
        arr = np.unique(v[s:e])
        arr.setflags(write=False)
        index[(int(a[s]), int(b[s]))] = arr
    return index


def _dedupe(arr: np.ndarray) -> tuple[np.ndarray, int]:
    if len(arr) == 0:
        return arr, 0
    _, first = np.unique(arr, axis=0, return_index=True)
    keep = np.sort(first)
    return arr[keep], len(arr) - len(keep)


def build_store(train, valid=(), test=()) -> TripleStore:
    """Encode raw string triples into a :class:`TripleStore`.

    Ids follow first appearance over train, then valid, then test. Duplicate triples
    within a split are dropped (count logged). Valid/test names unseen in train are
    kept and recorded in ``store.warnings``.
    """
    entities, relations = Vocab(), Vocab()
    encoded = {}
    warnings = []
    n_train_ent = n_train_rel = None
    for split_name, raw in zip(SPLITS, (train, valid, test)):
        rows = []
        for h, r, t in raw:
            if not (h and r and t):
                raise DataError(f"{split_name}: empty name in triple {(h, r, t)!r}")
            rows.append((entities.add(h), relations.add(r), entities.add(t)))
        arr = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
        if split_name == "train":
            n_train_ent, n_train_rel = len(entities), len(relations)
            unseen = 0
        else:
            unseen = int(((arr[:, 0] >= n_train_ent) | (arr[:, 2] >= n_train_ent)
                          | (arr[:, 1] >= n_train_rel)).sum())
        if unseen:
            warnings.append(f"{split_name}: {unseen} triples mention entities or relations absent from train")
        encoded[split_name] = arr

    dropped = {}
    for split_name in SPLITS:
        encoded[split_name], n = _dedupe(encoded[split_name])
        dropped[split_name] = n
        if n:
            logger.info("%s: dropped %d duplicate triples", split_name, n)
    for w in warnings:
        logger.warning(w)

    tr = encoded["train"]
    out_index = _group_index(tr[:, 0], tr[:, 1], tr[:, 2])
    in_index = _group_index(tr[:, 2], tr[:, 1], tr[:, 0])
    everything = np.concatenate([encoded[s] for s in SPLITS])
    known_out = _group_index(everything[:, 0], everything[:, 1], everything[:, 2])
    known_in = _group_index(everything[:, 2], everything[:, 1], everything[:, 0])
    for split_name in SPLITS:
        encoded[split_name].setflags(write=False)

    return TripleStore(
        entities=entities,
        relations=relations,
        train=encoded["train"],
        valid=encoded["valid"],
        test=encoded["test"],
        out_index=out_index,
        in_index=in_index,
        known_out=known_out,
        known_in=known_in,
        warnings=warnings,
        duplicates_dropped=dropped,
    )


def load_dataset(dataset_dir, train_name=None, valid_name=None, test_name=None) -> TripleStore:
    """Load ``train/valid/test`` from a benchmark-style directory."""
    names = {"train": train_name, "valid": valid_name, "test": test_name}
    raw = {}
    for split in SPLITS:
        path = Path(dataset_dir) / names[split] if names[split] else find_split_file(dataset_dir, split)
        raw[split] = load_split(path)
    return build_store(raw["train"], raw["valid"], raw["test"])


def dataset_files(dataset_dir) -> list[Path]:
    return [find_split_file(dataset_dir, s) for s in SPLITS]
