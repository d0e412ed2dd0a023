"""Easy-to-hard ordering and pacing of the available training prefix."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .difficulty import ZCountTable, z_stats

PACING_KINDS = ("linear", "root", "root-p", "geometric")
MIN_INITIAL_PERCENTAGE = 0.05


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PacingConfig:
    kind: str = "geometric"
    lambda0: float = 1.0
    t_grow: int = 100
    p_exponent: float = 2.0

    def __post_init__(self):
        if self.kind not in PACING_KINDS:
            raise ConfigError(f"pacing kind must be one of {PACING_KINDS}, got {self.kind!r}")
        if not 0.0 < self.lambda0 <= 1.0:
            raise ConfigError(f"lambda0 must lie in (0, 1], got {self.lambda0}")
        if int(self.t_grow) != self.t_grow or self.t_grow < 1:
            raise ConfigError(f"t_grow must be a positive integer, got {self.t_grow}")
        if self.p_exponent < 1.0:
            raise ConfigError(f"p_exponent must be >= 1, got {self.p_exponent}")


def initial_percentage(table: ZCountTable) -> float:
    """Share of zero-count triples, floored at ``MIN_INITIAL_PERCENTAGE``."""
    return max(MIN_INITIAL_PERCENTAGE, 1.0 - z_stats(table).nonzero_fraction)


def pacing(config: PacingConfig, t: int) -> float:
    """Fraction of the sorted training set available at epoch ``t`` (0-based)."""
    if t < 0:
        raise ValueError("epoch index must be >= 0")
    lam0, frac = config.lambda0, t / config.t_grow
    if frac >= 1.0:
        return 1.0
    if config.kind == "linear":
        value = lam0 + (1.0 - lam0) * frac
    elif config.kind == "root":
        value = math.sqrt(lam0 ** 2 + (1.0 - lam0 ** 2) * frac)
    elif config.kind == "root-p":
        p = config.p_exponent
        value = (lam0 ** p + (1.0 - lam0 ** p) * frac) ** (1.0 / p)
    else:
        value = lam0 ** (1.0 - frac)
    return min(1.0, value)


def sort_by_difficulty(counts, seed: int) -> np.ndarray:
    """Indices ordered by ascending count, ties shuffled by ``seed``."""
    counts = np.asarray(counts.counts if isinstance(counts, ZCountTable) else counts)
    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(len(counts))
    # lexsort: last key is primary
    return np.lexsort((tiebreak, counts)).astype(np.int64)


@dataclass(frozen=True)
class CurriculumSchedule:
    order: np.ndarray
    pacing: PacingConfig
    seed: int

    @classmethod
    def build(cls, table, pacing_config: PacingConfig, seed: int) -> "CurriculumSchedule":
        return cls(order=sort_by_difficulty(table, seed), pacing=pacing_config, seed=seed)

    def prefix_size(self, t: int) -> int:
        n = len(self.order)
        # the epsilon absorbs float error, e.g. 0.385 * 1000 = 385.00000000000006
        return min(n, max(1, math.ceil(pacing(self.pacing, t) * n - 1e-9)))

    def available_prefix(self, t: int) -> np.ndarray:
        return self.order[: self.prefix_size(t)]


def available_prefix(schedule: CurriculumSchedule, t: int) -> np.ndarray:
    return schedule.available_prefix(t)
