"""Relational label generator: hashed entity-context encoder plus a softmax head.

Parameter flattening layout (``LAYOUT``): W row-major, then b, then, when a
hidden layer is present, V row-major and c.  For the hidden variant W has shape
``[num_labels, hidden_dim]`` and the forward map is ``softmax(W tanh(V h + c) + b)``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import E1_CLOSE, E1_OPEN, E2_CLOSE, E2_OPEN, LabelInventory, MarkedSequence
from .exceptions import CheckpointError, EmptyLabeledSet

LAYOUT = "W,b,V,c/v1"
PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class EncoderConfig:
    h_R: int = 256
    context_window: int = 3
    hash_seed: int = 0

    def __post_init__(self):
        if self.h_R < 2:
            raise ValueError(f"h_R must be >= 2, got {self.h_R}")
        if self.context_window < 0:
            raise ValueError(f"context_window must be >= 0, got {self.context_window}")

    @property
    def dim(self) -> int:
        return 2 * self.h_R


@lru_cache(maxsize=200_000)
def _bucket(feature: str, h_R: int, hash_seed: int) -> tuple[int, float]:
    digest = hashlib.blake2b(
        feature.encode("utf-8"), digest_size=8, key=hash_seed.to_bytes(8, "little")
    ).digest()
    value = int.from_bytes(digest, "little")
    return value % h_R, (1.0 if (value >> 63) & 1 else -1.0)


def _half(words, start, end, cfg, tag):
    vec = np.zeros(cfg.h_R)
    w = cfg.context_window
    feats = [f"{tag}:E:{t}" for t in words[start:end]]
    feats += [f"{tag}:L:{t}" for t in words[max(0, start - w):start]]
    feats += [f"{tag}:R:{t}" for t in words[end:end + w]]
    for f in feats:
        idx, sign = _bucket(f, cfg.h_R, cfg.hash_seed)
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def _unmarked_spans(seq: MarkedSequence):
    words, spans, opened = [], {}, {}
    for t in seq.tokens:
        if t in (E1_OPEN, E2_OPEN):
            opened[t] = len(words)
        elif t == E1_CLOSE:
            spans["e1"] = (opened[E1_OPEN], len(words))
        elif t == E2_CLOSE:
            spans["e2"] = (opened[E2_OPEN], len(words))
        else:
            words.append(t)
    return words, spans["e1"], spans["e2"]


def encode(seq: MarkedSequence, cfg: EncoderConfig) -> np.ndarray:
    """Return h = [h_E1, h_E2], each half an L2-normalised signed-hash bag of
    entity tokens and the ``context_window`` words on either side (markers are
    structural and do not count toward the window)."""
    words, e1, e2 = _unmarked_spans(seq)
    return np.concatenate([_half(words, *e1, cfg, "1"), _half(words, *e2, cfg, "2")])


def encode_all(seqs: Sequence[MarkedSequence], cfg: EncoderConfig) -> np.ndarray:
    if len(seqs) == 0:
        return np.zeros((0, cfg.dim))
    return np.stack([encode(s, cfg) for s in seqs])


# -- parameters ---------------------------------------------------------------

@dataclass(frozen=True)
class PolicyParameters:
    W: np.ndarray
    b: np.ndarray
    V: np.ndarray | None = None
    c: np.ndarray | None = None

    @property
    def hidden_dim(self) -> int:
        return 0 if self.V is None else self.V.shape[0]

    @property
    def num_labels(self) -> int:
        return self.W.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] if self.V is None else self.V.shape[1]

    @property
    def size(self) -> int:
        n = self.W.size + self.b.size
        if self.V is not None:
            n += self.V.size + self.c.size
        return n

    def flatten(self) -> np.ndarray:
        parts = [self.W.ravel(), self.b]
        if self.V is not None:
            parts += [self.V.ravel(), self.c]
        return np.concatenate(parts)

    def unflatten(self, theta: np.ndarray, copy: bool = True) -> "PolicyParameters":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ValueError(f"expected flat vector of length {self.size}, got {theta.shape}")
        out, pos = [], 0
        for block in (self.W, self.b, self.V, self.c):
            if block is None:
                out.append(None)
                continue
            piece = theta[pos:pos + block.size].reshape(block.shape)
            out.append(piece.copy() if copy else piece)
            pos += block.size
        return PolicyParameters(*out)


def init_params(num_labels: int, input_dim: int, hidden_dim: int = 0, seed: int = 0) -> PolicyParameters:
    """Zero linear head, or a small random one-hidden-layer head when hidden_dim > 0."""
    if hidden_dim <= 0:
        return PolicyParameters(np.zeros((num_labels, input_dim)), np.zeros(num_labels))
    rng = np.random.default_rng(seed)
    V = rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(hidden_dim, input_dim))
    W = rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(num_labels, hidden_dim))
    return PolicyParameters(W, np.zeros(num_labels), V, np.zeros(hidden_dim))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _hidden(params, H):
    return np.tanh(H @ params.V.T + params.c)


def forward(params: PolicyParameters, h: np.ndarray) -> np.ndarray:
    """Class probabilities for one encoding (1-D) or a batch (2-D)."""
    h = np.asarray(h, dtype=float)
    x = h if params.V is None else _hidden(params, h)
    return _softmax(x @ params.W.T + params.b)


def cross_entropy(probs: np.ndarray, target) -> np.ndarray | float:
    probs = np.asarray(probs)
    if probs.ndim == 1:
        return float(-np.log(max(probs[target], PROB_FLOOR)))
    picked = probs[np.arange(len(probs)), np.asarray(target)]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def weighted_loss_grad(params: PolicyParameters, H: np.ndarray, targets, weights) -> np.ndarray:
    """Gradient of sum_i weights[i] * CE(forward(H[i]), targets[i]) as a flat vector.

    The floor inside cross_entropy is treated as inactive: below it the loss is
    constant and its true gradient vanishes, which only matters for
    probabilities under 1e-12.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    targets = np.asarray(targets).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    P = forward(params, H)
    delta = P.copy()
    delta[np.arange(len(H)), targets] -= 1.0
    delta *= weights[:, None]
    if params.V is None:
        return np.concatenate([(delta.T @ H).ravel(), delta.sum(axis=0)])
    A = _hidden(params, H)
    back = (delta @ params.W) * (1.0 - A ** 2)
    return np.concatenate([
        (delta.T @ A).ravel(), delta.sum(axis=0), (back.T @ H).ravel(), back.sum(axis=0),
    ])


def grad_batch(params: PolicyParameters, H: np.ndarray, targets) -> np.ndarray:
    """Per-sample gradients, one flattened row per sample."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    targets = np.asarray(targets).reshape(-1)
    n = len(H)
    P = forward(params, H)
    delta = P.copy()
    delta[np.arange(n), targets] -= 1.0
    if params.V is None:
        gW = delta[:, :, None] * H[:, None, :]
        return np.concatenate([gW.reshape(n, -1), delta], axis=1)
    A = _hidden(params, H)
    back = (delta @ params.W) * (1.0 - A ** 2)
    gW = delta[:, :, None] * A[:, None, :]
    gV = back[:, :, None] * H[:, None, :]
    return np.concatenate([gW.reshape(n, -1), delta, gV.reshape(n, -1), back], axis=1)


def grad_sample(params: PolicyParameters, h: np.ndarray, target: int) -> np.ndarray:
    return grad_batch(params, np.asarray(h)[None, :], [target])[0]


def mean_labeled_gradient(params: PolicyParameters, H: np.ndarray, targets) -> np.ndarray:
    """Arithmetic mean of per-sample gradients over the labeled set."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or len(H) == 0:
        raise EmptyLabeledSet("standard gradient direction needs at least one labeled sample")
    n = len(H)
    return weighted_loss_grad(params, H, targets, np.full(n, 1.0 / n))


@dataclass(frozen=True)
class SGDConfig:
    step_size: float = 0.1
    epochs: int = 400
    batch_size: int = 16
    seed: int = 0


def mean_loss(params: PolicyParameters, H, targets) -> float:
    return float(np.mean(cross_entropy(forward(params, H), targets)))


def pretrain(params: PolicyParameters, H: np.ndarray, targets, sgd: SGDConfig,
             history: list | None = None) -> PolicyParameters:
    """Mini-batch SGD on mean cross-entropy.  Appends per-epoch training loss to
    ``history`` when given (entry 0 is the loss before training)."""
    H = np.asarray(H, dtype=float)
    targets = np.asarray(targets)
    if len(H) == 0:
        raise EmptyLabeledSet("pretraining needs labeled data")
    rng = np.random.default_rng(sgd.seed)
    theta = params.flatten()
    if history is not None:
        history.append(mean_loss(params, H, targets))
    for _ in range(sgd.epochs):
        order = rng.permutation(len(H))
        for start in range(0, len(H), sgd.batch_size):
            idx = order[start:start + sgd.batch_size]
            cur = params.unflatten(theta, copy=False)
            g = weighted_loss_grad(cur, H[idx], targets[idx], np.full(len(idx), 1.0 / len(idx)))
            theta -= sgd.step_size * g
        if history is not None:
            history.append(mean_loss(params.unflatten(theta, copy=False), H, targets))
    return params.unflatten(theta)


def predict(params: PolicyParameters, H: np.ndarray) -> np.ndarray:
    """Argmax labels; ``np.argmax`` resolves ties toward the lowest label id."""
    return np.argmax(forward(params, H), axis=-1)


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_FORMAT = "gradlre-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: PolicyParameters, encoder: EncoderConfig,
                    inventory: LabelInventory) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "layout": LAYOUT,
        "encoder": asdict(encoder),
        "labels": list(inventory.names),
        "no_relation": inventory.no_relation,
        "num_labels": params.num_labels,
        "input_dim": params.input_dim,
        "hidden_dim": params.hidden_dim,
        "theta": params.flatten().tolist(),
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path) -> tuple[PolicyParameters, EncoderConfig, LabelInventory]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    if doc.get("layout") != LAYOUT:
        raise CheckpointError(f"{path}: unsupported parameter layout {doc.get('layout')!r}")
    encoder = EncoderConfig(**doc["encoder"])
    inventory = LabelInventory.from_names(doc["labels"], doc["no_relation"])
    like = init_params(doc["num_labels"], doc["input_dim"], doc["hidden_dim"])
    return like.unflatten(np.array(doc["theta"], dtype=float)), encoder, inventory
