"""Score functions and analytic gradients for TransE, DistMult, ComplEx and RotatE.

Every model follows the same convention: lower score means more plausible.
ComplEx and RotatE store an entity row as ``[real half | imaginary half]``.
RotatE relations are ``d`` phase angles kept in ``[-pi, pi)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MODEL_KINDS = ("transe-l1", "transe-l2", "distmult", "complex", "rotate")
ENTITY, RELATION = "entity", "relation"


@dataclass
class ModelParams:
    kind: str
    entity: np.ndarray
    relation: np.ndarray
    dim: int
    gamma: float
    seed: int = 0

    @property
    def n_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[0]

    def slot(self, name: str) -> np.ndarray:
        return self.entity if name == ENTITY else self.relation

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.entity.copy(), self.relation.copy(), self.dim, self.gamma, self.seed)

    def wrap_phases(self) -> None:
        if self.kind == "rotate":
            np.subtract(np.mod(self.relation + np.pi, 2 * np.pi), np.pi, out=self.relation)


@dataclass
class SparseGrad:
    """Row gradients as ``(slot, row, vector)`` entries."""

    entries: list = field(default_factory=list)

    def dense(self, params: ModelParams) -> dict:
        out = {ENTITY: np.zeros_like(params.entity), RELATION: np.zeros_like(params.relation)}
        for slot, row, vec in self.entries:
            out[slot][row] += vec
        return out


def embedding_widths(kind: str, dim: int) -> tuple[int, int]:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    if kind == "complex":
        return 2 * dim, 2 * dim
    if kind == "rotate":
        return 2 * dim, dim
    return dim, dim


def init_params(kind: str, n_entities: int, n_relations: int, dim: int, gamma: float,
                seed: int) -> ModelParams:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    ent_w, rel_w = embedding_widths(kind, dim)
    bound = (gamma + 2.0) / dim
    rng = np.random.default_rng(seed)
    entity = rng.uniform(-bound, bound, size=(n_entities, ent_w))
    if kind == "rotate":
        relation = rng.uniform(-np.pi, np.pi, size=(n_relations, rel_w))
    else:
        relation = rng.uniform(-bound, bound, size=(n_relations, rel_w))
    return ModelParams(kind, entity, relation, dim, float(gamma), seed)


# ---------------------------------------------------------------------------
# batched scores and gradients over aligned (h, r, t) index arrays


def _split(x: np.ndarray):
    d = x.shape[-1] // 2
    return x[..., :d], x[..., d:]


def score_rows(kind: str, h: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Scores from already-gathered embedding rows (any broadcastable leading shape)."""
    if kind == "transe-l1":
        return np.abs(h + r - t).sum(axis=-1)
    if kind == "transe-l2":
        return np.sqrt(np.square(h + r - t).sum(axis=-1))
    if kind == "distmult":
        return -(h * r * t).sum(axis=-1)
    if kind == "complex":
        a, b = _split(h)
        c, d = _split(r)
        e, f = _split(t)
        return -((a * c - b * d) * e + (a * d + b * c) * f).sum(axis=-1)
    if kind == "rotate":
        a, b = _split(h)
        e, f = _split(t)
        cos, sin = np.cos(r), np.sin(r)
        u = a * cos - b * sin - e
        w = a * sin + b * cos - f
        return np.sqrt(u * u + w * w).sum(axis=-1)
    raise ValueError(f"unknown model kind {kind!r}")


def score_batch(params: ModelParams, heads, rels, tails) -> np.ndarray:
    return score_rows(params.kind, params.entity[heads], params.relation[rels], params.entity[tails])


def score_batch_grad(params: ModelParams, heads, rels, tails):
    """Scores and per-triple gradients w.r.t. the head, relation and tail rows."""
    kind = params.kind
    h, r, t = params.entity[heads], params.relation[rels], params.entity[tails]
    if kind in ("transe-l1", "transe-l2"):
        v = h + r - t
        if kind == "transe-l1":
            s = np.abs(v).sum(axis=-1)
            g = np.sign(v)
        else:
            s = np.sqrt(np.square(v).sum(axis=-1))
            safe = np.where(s > 0, s, 1.0)
            g = np.where(s[:, None] > 0, v / safe[:, None], 0.0)
        return s, g, g, -g
    if kind == "distmult":
        s = -(h * r * t).sum(axis=-1)
        return s, -(r * t), -(h * t), -(h * r)
    if kind == "complex":
        a, b = _split(h)
        c, d = _split(r)
        e, f = _split(t)
        re_hr, im_hr = a * c - b * d, a * d + b * c
        s = -(re_hr * e + im_hr * f).sum(axis=-1)
        gh = np.concatenate([-(c * e + d * f), d * e - c * f], axis=-1)
        gr = np.concatenate([-(a * e + b * f), b * e - a * f], axis=-1)
        gt = np.concatenate([-re_hr, -im_hr], axis=-1)
        return s, gh, gr, gt
    if kind == "rotate":
        a, b = _split(h)
        e, f = _split(t)
        # trig per relation row, then gathered
        cos, sin = np.cos(params.relation)[rels], np.sin(params.relation)[rels]
        rot_re, rot_im = a * cos - b * sin, a * sin + b * cos
        u, w = rot_re - e, rot_im - f
        m = np.sqrt(u * u + w * w)
        inv = np.divide(1.0, m, out=np.zeros_like(m), where=m > 0)
        gu, gw = u * inv, w * inv
        s = m.sum(axis=-1)
        gh = np.concatenate([gu * cos + gw * sin, gw * cos - gu * sin], axis=-1)
        gr = gw * rot_re - gu * rot_im
        gt = np.concatenate([-gu, -gw], axis=-1)
        return s, gh, gr, gt
    raise ValueError(f"unknown model kind {kind!r}")


def score(params: ModelParams, h: int, r: int, t: int) -> float:
    return float(score_batch(params, [h], [r], [t])[0])


def score_grad(params: ModelParams, h: int, r: int, t: int) -> tuple[float, SparseGrad]:
    s, gh, gr, gt = score_batch_grad(params, [h], [r], [t])
    grad = SparseGrad([(ENTITY, int(h), gh[0]), (RELATION, int(r), gr[0]), (ENTITY, int(t), gt[0])])
    return float(s[0]), grad


# ---------------------------------------------------------------------------
# candidate scoring for ranking

_BLOCK_ELEMS = 1 << 22


def score_candidates(params: ModelParams, anchors, rels, direction: str) -> np.ndarray:
    """Scores of every entity in the open slot, shape ``(len(anchors), n_entities)``.

    ``direction="tail"`` scores ``(anchor, r, e)``; ``"head"`` scores ``(e, r, anchor)``.
    """
    anchors = np.asarray(anchors, dtype=np.int64)
    rels = np.asarray(rels, dtype=np.int64)
    E = params.entity
    kind = params.kind
    a_rows, r_rows = E[anchors], params.relation[rels]
    if kind in ("distmult", "complex"):
        return _bilinear_candidates(kind, a_rows, r_rows, E, direction)
    out = np.empty((len(anchors), E.shape[0]))
    step = max(1, _BLOCK_ELEMS // max(1, E.size))
    for s in range(0, len(anchors), step):
        sl = slice(s, s + step)
        fixed, rel = a_rows[sl][:, None, :], r_rows[sl][:, None, :]
        if direction == "tail":
            out[sl] = score_rows(kind, fixed, rel, E[None, :, :])
        else:
            out[sl] = score_rows(kind, E[None, :, :], rel, fixed)
    return out


def _bilinear_candidates(kind, a_rows, r_rows, E, direction):
    if kind == "distmult":
        return -(a_rows * r_rows) @ E.T
    a, b = _split(a_rows)
    c, d = _split(r_rows)
    if direction == "tail":
        # -Re(<h, r, conj(t)>) is linear in t = e + i f
        coef = np.concatenate([a * c - b * d, a * d + b * c], axis=-1)
    else:
        # same form, linear in the head h = x + i y with t = a + i b fixed
        coef = np.concatenate([c * a + d * b, c * b - d * a], axis=-1)
    return -coef @ E.T


# ---------------------------------------------------------------------------
# checkpoints: one ASCII header line, then little-endian float64 matrices

_MAGIC = "KGCKPT1"


def save_checkpoint(params: ModelParams, path) -> None:
    path = Path(path)
    header = {
        "kind": params.kind,
        "n_entities": params.n_entities,
        "n_relations": params.n_relations,
        "dim": params.dim,
        "gamma": params.gamma,
        "seed": params.seed,
        "entity_shape": list(params.entity.shape),
        "relation_shape": list(params.relation.shape),
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{_MAGIC} {json.dumps(header, sort_keys=True)}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(params.entity, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.relation, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        line = fh.readline().decode("ascii")
        if not line.startswith(_MAGIC + " "):
            raise ValueError(f"{path}: not a checkpoint file")
        header = json.loads(line[len(_MAGIC) + 1:])
        ent_shape, rel_shape = tuple(header["entity_shape"]), tuple(header["relation_shape"])
        ent = np.frombuffer(fh.read(8 * int(np.prod(ent_shape))), dtype="<f8").reshape(ent_shape)
        rel = np.frombuffer(fh.read(8 * int(np.prod(rel_shape))), dtype="<f8").reshape(rel_shape)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after matrices")
    return ModelParams(header["kind"], ent.astype(np.float64), rel.astype(np.float64),
                       int(header["dim"]), float(header["gamma"]), int(header["seed"]))
