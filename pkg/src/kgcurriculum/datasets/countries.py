"""Countries region-inference splits (S1, S2, S3) built from the bundled source table.

Entities are countries, subregions and regions; relations are ``locatedin`` and
``neighbor`` (stored in both directions). Valid and test countries are drawn so that
each keeps at least one neighbour among the training countries. Queries have the
form ``locatedin(c, ?)`` over the five regions.

* S1 drops ``locatedin(c, region)`` for valid/test countries.
* S2 additionally drops ``locatedin(c, subregion)`` for them.
* S3 additionally drops ``locatedin(n, region)`` for every neighbour ``n`` of them.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

LOCATED_IN = "locatedin"
NEIGHBOR = "neighbor"
VARIANTS = ("S1", "S2", "S3")


@dataclass(frozen=True)
class Country:
    code: str
    name: str
    region: str
    subregion: str
    borders: tuple


def load_source() -> list[Country]:
    text = resources.files(__package__).joinpath("countries_source.tsv").read_text(encoding="utf-8")
    rows = []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        code, name, region, subregion, borders = line.split("\t")
        rows.append(Country(code, name, region, subregion, tuple(b for b in borders.split(",") if b)))
    return rows


def regions(countries=None) -> list[str]:
    countries = countries or load_source()
    return sorted({c.region for c in countries})


def _pick_heldout(countries, n_heldout: int, rng: np.random.Generator) -> list[str]:
    by_code = {c.code: c for c in countries}
    candidates = [c.code for c in countries if c.borders]
    held: list[str] = []
    for code in rng.permutation(candidates).tolist():
        trial = set(held) | {code}
        # every held-out country must keep a neighbour that stays in training
        if all(any(b not in trial for b in by_code[x].borders) for x in trial):
            held.append(code)
        if len(held) == n_heldout:
            return held
    raise ValueError(f"could only place {len(held)} held-out countries")


def build_splits(variant: str = "S1", seed: int = 0, n_valid: int = 20, n_test: int = 20) -> dict:
    """Return ``{"train": [...], "valid": [...], "test": [...]}`` string triples."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    countries = load_source()
    by_code = {c.code: c for c in countries}
    held = _pick_heldout(countries, n_valid + n_test, np.random.default_rng(seed))
    valid_codes, test_codes = held[:n_valid], held[n_valid:]
    heldout = set(held)
    neighbours_of_heldout = {b for code in heldout for b in by_code[code].borders}

    train = []
    for sub, reg in sorted({(c.subregion, c.region) for c in countries}):
        train.append((sub, LOCATED_IN, reg))
    for c in countries:
        for b in c.borders:
            train.append((c.name, NEIGHBOR, by_code[b].name))
        if c.code not in heldout or variant == "S1":
            train.append((c.name, LOCATED_IN, c.subregion))
        if c.code in heldout:
            continue
        if variant == "S3" and c.code in neighbours_of_heldout:
            continue
        train.append((c.name, LOCATED_IN, c.region))
    valid = [(by_code[x].name, LOCATED_IN, by_code[x].region) for x in valid_codes]
    test = [(by_code[x].name, LOCATED_IN, by_code[x].region) for x in test_codes]
    return {"train": train, "valid": valid, "test": test}


def write_splits(directory, variant: str = "S1", seed: int = 0) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, triples in build_splits(variant, seed).items():
        with open(directory / f"{name}.txt", "w", encoding="utf-8") as fh:
            fh.writelines(f"{h}\t{r}\t{t}\n" for h, r, t in triples)
    return directory
