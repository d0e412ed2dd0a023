"""Curriculum-restricted training with self-adversarial negative sampling and Adam."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .curriculum import CurriculumSchedule, PacingConfig, initial_percentage, pacing
from .difficulty import ZCountTable
from .models import ENTITY, RELATION, ModelParams, init_params, score_batch_grad
from .store import TripleStore

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    model: str = "transe-l2"
    learning_rate: float = 5e-4
    batch_size: int = 512
    negatives: int = 64
    alpha: float = 1.0
    gamma: float = 9.0
    max_epochs: int = 100
    dim: int = 256
    seed: int = 0
    pacing: PacingConfig = field(default_factory=PacingConfig)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    filter_negatives: bool = False

    def __post_init__(self):
        for name in ("learning_rate", "gamma", "adam_epsilon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("batch_size", "negatives", "dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")


# ---------------------------------------------------------------------------
# negatives


def sample_negative_batch(n_entities: int, positives: np.ndarray, k: int, rng: np.random.Generator,
                          store: Optional[TripleStore] = None) -> np.ndarray:
    """``(B, k, 3)`` corruptions: each replaces the head or the tail (fair coin).

    A corruption equal to the positive is resampled once from the other entities. Passing
    ``store`` additionally resamples (up to 10 times) corruptions that are known facts.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    b = len(positives)
    corrupt_head = rng.random((b, k)) < 0.5
    ents = rng.integers(0, n_entities, size=(b, k))
    original = np.where(corrupt_head, positives[:, None, 0], positives[:, None, 2])
    same = ents == original
    if same.any() and n_entities > 1:
        # the one resample is drawn from the other n - 1 entities
        ents[same] = (original[same] + rng.integers(1, n_entities, size=int(same.sum()))) % n_entities
    neg = np.repeat(positives[:, None, :], k, axis=1)
    neg[..., 0] = np.where(corrupt_head, ents, neg[..., 0])
    neg[..., 2] = np.where(corrupt_head, neg[..., 2], ents)
    if store is not None:
        for _ in range(10):
            bad = store.known_mask(neg.reshape(-1, 3)).reshape(b, k)
            if not bad.any():
                break
            fresh = rng.integers(0, n_entities, size=int(bad.sum()))
            heads, tails = neg[..., 0], neg[..., 2]
            heads[bad & corrupt_head] = fresh[corrupt_head[bad]]
            tails[bad & ~corrupt_head] = fresh[~corrupt_head[bad]]
    return neg


def sample_negatives(store: TripleStore, triple, k: int, rng: np.random.Generator,
                     filtered: bool = False) -> np.ndarray:
    return sample_negative_batch(store.n_entities, np.asarray(triple)[None], k, rng,
                                 store if filtered else None)[0]


# ---------------------------------------------------------------------------
# loss


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(_log_sigmoid(x))


def self_adversarial_weights(neg_scores, alpha: float, gamma: float) -> np.ndarray:
    logits = alpha * (gamma - np.asarray(neg_scores, dtype=np.float64))
    logits = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def loss(pos_score, neg_scores, alpha: float, gamma: float):
    """Self-adversarial loss; the weights are computed from the scores but treated as constants."""
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    p = self_adversarial_weights(neg_scores, alpha, gamma)
    value = -_log_sigmoid(gamma - np.asarray(pos_score)) - (p * _log_sigmoid(neg_scores - gamma)).sum(axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def loss_score_grads(pos_score, neg_scores, alpha: float, gamma: float):
    """d loss / d score for the positive and each negative (weights frozen)."""
    p = self_adversarial_weights(neg_scores, alpha, gamma)
    return _sigmoid(np.asarray(pos_score) - gamma), -p * _sigmoid(gamma - np.asarray(neg_scores))


# examples per chunk are chosen so a chunk's negative rows hold about this many floats;
# small enough that the gradient temporaries stay in cache
_CHUNK_FLOATS = 1 << 18


class _RowSums:
    """Accumulates weighted row vectors into one row per distinct id."""

    def __init__(self, ids: np.ndarray, width: int):
        self.rows = np.unique(ids)
        self.sums = np.zeros((len(self.rows), width))

    def add(self, blocks) -> None:
        """``blocks`` is a list of ``(ids, weights, vecs)``; adds ``sum w_i * vecs_i`` per id."""
        ids = np.concatenate([b[0] for b in blocks])
        weights = np.concatenate([b[1] for b in blocks])
        vecs = np.concatenate([b[2] for b in blocks])
        local, inv = np.unique(ids, return_inverse=True)
        # sparse (distinct ids x rows) product sums rows without scaled copies
        m = sp.csr_matrix((weights, (inv, np.arange(len(ids)))), shape=(len(local), len(ids)))
        self.sums[np.searchsorted(self.rows, local)] += m @ vecs


def batch_loss_and_grads(params: ModelParams, positives: np.ndarray, negatives: np.ndarray,
                         alpha: float, gamma: float):
    """Per-example losses and row-aggregated gradients of their sum.

    Returns ``(losses, grads)`` where ``grads[slot] = (rows, summed_row_grads)``.
    """
    b, k, _ = negatives.shape
    ent = _RowSums(np.concatenate([positives[:, [0, 2]].ravel(), negatives[..., [0, 2]].ravel()]),
                   params.entity.shape[1])
    rel = _RowSums(positives[:, 1], params.relation.shape[1])
    losses = np.empty(b)
    step = max(1, _CHUNK_FLOATS // (k * params.entity.shape[1]))
    for s in range(0, b, step):
        pos, flat = positives[s:s + step], negatives[s:s + step].reshape(-1, 3)
        ps, pgh, pgr, pgt = score_batch_grad(params, pos[:, 0], pos[:, 1], pos[:, 2])
        ns, ngh, ngr, ngt = score_batch_grad(params, flat[:, 0], flat[:, 1], flat[:, 2])
        ns = ns.reshape(len(pos), k)
        losses[s:s + step] = loss(ps, ns, alpha, gamma)
        dpos, dneg = loss_score_grads(ps, ns, alpha, gamma)
        dneg = dneg.ravel()
        ent.add([(pos[:, 0], dpos, pgh), (pos[:, 2], dpos, pgt), (flat[:, 0], dneg, ngh), (flat[:, 2], dneg, ngt)])
        rel.add([(pos[:, 1], dpos, pgr), (flat[:, 1], dneg, ngr)])
    return losses, {ENTITY: (ent.rows, ent.sums), RELATION: (rel.rows, rel.sums)}


# ---------------------------------------------------------------------------
# optimiser


class AdamState:
    """Row-sparse ("lazy") Adam: only rows present in a batch gradient move.

    Moments of untouched rows are left as they are; bias correction uses the global
    step counter, which increments once per applied batch.
    """

    def __init__(self, params: ModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {ENTITY: np.zeros_like(params.entity), RELATION: np.zeros_like(params.relation)}
        self.v = {ENTITY: np.zeros_like(params.entity), RELATION: np.zeros_like(params.relation)}
        self.step_count = 0

    def step(self, params: ModelParams, grads: dict) -> None:
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for slot, (rows, g) in grads.items():
            # rows are unique, so gather / update / scatter is exact; in-place ops avoid temporaries
            m = self.m[slot].take(rows, axis=0)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v = self.v[slot].take(rows, axis=0)
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            self.m[slot][rows] = m
            self.v[slot][rows] = v
            v /= c2
            np.sqrt(v, out=v)
            v += self.eps
            step = m * (self.lr / c1)
            step /= v
            arr = params.slot(slot)
            p = arr.take(rows, axis=0)
            p -= step
            arr[rows] = p
        params.wrap_phases()


# ---------------------------------------------------------------------------
# training loop


@dataclass
class EpochLog:
    epoch: int
    lam: float
    n_available: int
    loss: float
    seconds: float

    def line(self) -> str:
        return f"epoch={self.epoch}\tlambda={self.lam:.6f}\tavailable={self.n_available}\tloss={self.loss:.6f}\tseconds={self.seconds:.3f}"


@dataclass
class TrainResult:
    params: ModelParams
    epochs: list
    schedule: CurriculumSchedule

    @property
    def lambda_trace(self) -> list:
        return [e.lam for e in self.epochs]


def resolve_pacing(config: TrainConfig, table: Optional[ZCountTable], lambda0_auto: bool = False) -> PacingConfig:
    if lambda0_auto:
        if table is None:
            raise ValueError("lambda0=auto needs a Z-count table")
        return replace(config.pacing, lambda0=initial_percentage(table))
    return config.pacing


def train(store: TripleStore, table: Optional[ZCountTable], model_kind: Optional[str],
          config: TrainConfig,
          on_batch: Optional[Callable[[int, np.ndarray], None]] = None,
          on_epoch: Optional[Callable[[EpochLog, ModelParams], None]] = None) -> TrainResult:
    """Train from scratch; ``table=None`` disables the curriculum (identity order, lambda = 1).

    ``model_kind=None`` uses ``config.model``.

    ``on_batch(epoch, train_indices)`` and ``on_epoch(log, params)`` are observation
    hooks only.
    """
    kind = model_kind or config.model
    n_train = len(store.train)
    if table is None:
        schedule = CurriculumSchedule(np.arange(n_train, dtype=np.int64),
                                      replace(config.pacing, lambda0=1.0), config.seed)
    else:
        if len(table.counts) != n_train:
            raise ValueError(f"Z-count table has {len(table.counts)} rows, train split has {n_train}")
        schedule = CurriculumSchedule.build(table, config.pacing, config.seed)

    params = init_params(kind, store.n_entities, store.n_relations, config.dim, config.gamma, config.seed)
    adam = AdamState(params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon)
    filter_store = store if config.filter_negatives else None
    logs = []
    for t in range(config.max_epochs):
        start = time.perf_counter()
        lam = pacing(schedule.pacing, t)
        # sorted first so the shuffle depends only on which triples are available
        available = np.sort(schedule.available_prefix(t))
        rng = np.random.default_rng([config.seed, t])
        order = rng.permutation(available)
        total = 0.0
        for bi, s in enumerate(range(0, len(order), config.batch_size)):
            idx = order[s:s + config.batch_size]
            if on_batch is not None:
                on_batch(t, idx)
            pos = store.train[idx]
            neg = sample_negative_batch(store.n_entities, pos, config.negatives, rng, filter_store)
            losses, grads = batch_loss_and_grads(params, pos, neg, config.alpha, config.gamma)
            batch_loss = float(losses.sum())
            if not np.isfinite(batch_loss):
                raise NumericalError(f"non-finite loss at epoch {t}, batch {bi}")
            total += batch_loss
            adam.step(params, grads)
        log = EpochLog(t, lam, len(order), total / len(order), time.perf_counter() - start)
        logs.append(log)
        logger.debug(log.line())
        if on_epoch is not None:
            on_epoch(log, params)
    return TrainResult(params, logs, schedule)
