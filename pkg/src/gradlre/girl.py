"""Gradient imitation reinforcement learning over pseudo-labeled data.

The policy is the relation classifier.  A pseudo-labeled sample earns the
cosine similarity between its loss gradient and the mean labeled-data gradient
as reward; samples scoring above ``lam`` join the labeled set and fold their
gradient into the running mean.  Each episode of ``episode_len`` steps ends in
one SGD step on the reward-weighted cross-entropy, with rewards held constant.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import Corpus, mark_entities
from .evaluation import pseudo_label_f1, score_arrays
from .exceptions import EmptyBatch, EmptyLabeledSet, EmptyPredictionSet, LengthMismatch, RejectedSample
from .model import (
    EncoderConfig,
    PolicyParameters,
    SGDConfig,
    cross_entropy,
    encode_all,
    forward,
    grad_sample,
    init_params,
    mean_labeled_gradient,
    predict,
    pretrain,
    weighted_loss_grad,
)

ZERO_NORM = 1e-15
GL_RECOMPUTE = ("per-episode", "per-segment", "never")
LOSS_SCOPES = ("all", "accepted")


@dataclass(frozen=True)
class GirlConfig:
    lam: float = 0.5
    episode_len: int = 16
    segments: int = 10
    rl_step_size: float = 0.01
    gl_recompute: str = "per-episode"
    loss_scope: str = "all"
    seed: int = 0

    def __post_init__(self):
        if not -1.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [-1, 1], got {self.lam}")
        if self.episode_len < 1 or self.segments < 1:
            raise ValueError("episode_len and segments must be >= 1")
        if self.gl_recompute not in GL_RECOMPUTE:
            raise ValueError(f"gl_recompute must be one of {GL_RECOMPUTE}")
        if self.loss_scope not in LOSS_SCOPES:
            raise ValueError(f"loss_scope must be one of {LOSS_SCOPES}")


@dataclass(frozen=True)
class GirlState:
    labeled: tuple[tuple[np.ndarray, int], ...]
    n_effective: int
    g_l: np.ndarray
    params: PolicyParameters

    @classmethod
    def initial(cls, params: PolicyParameters, H: np.ndarray, y) -> "GirlState":
        if len(H) == 0:
            raise EmptyLabeledSet("GIRL needs a non-empty labeled set")
        pairs = tuple((h, int(t)) for h, t in zip(np.asarray(H, dtype=float), y))
        return cls(pairs, len(pairs), mean_labeled_gradient(params, H, y), params)

    def labeled_arrays(self):
        H = np.stack([h for h, _ in self.labeled])
        y = np.array([t for _, t in self.labeled], dtype=np.int64)
        return H, y


@dataclass(frozen=True)
class PseudoSample:
    h: np.ndarray
    y_tilde: int
    reward: float
    accepted: bool
    index: int = -1     # position in the unlabeled pool, for scoring against hidden gold


@dataclass
class EpisodeReport:
    rewards: list[float]
    accepted: list[bool]
    labels: list[int]
    indices: list[int]
    losses: list[float]
    rl_loss: float

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.rewards))

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))


def act(state: GirlState, h: np.ndarray) -> int:
    """Pseudo-label: the most probable relation, lowest id on ties."""
    return int(np.argmax(forward(state.params, h)))


def reward(g_l: np.ndarray, g_p: np.ndarray) -> float:
    """Cosine similarity of the two gradients; 0 if either is (numerically) zero."""
    g_l = np.asarray(g_l, dtype=float)
    g_p = np.asarray(g_p, dtype=float)
    if g_l.shape != g_p.shape:
        raise LengthMismatch(f"gradient lengths differ: {g_l.shape} vs {g_p.shape}")
    nl, np_ = np.linalg.norm(g_l), np.linalg.norm(g_p)
    if nl < ZERO_NORM or np_ < ZERO_NORM:
        return 0.0
    r = float(g_l @ g_p) / (nl * np_)
    return min(1.0, max(-1.0, r))


def _fold_in(state: GirlState, sample: PseudoSample, g_p: np.ndarray) -> GirlState:
    n = state.n_effective
    return replace(
        state,
        labeled=state.labeled + ((sample.h, sample.y_tilde),),
        n_effective=n + 1,
        g_l=(n * state.g_l + g_p) / (n + 1),
    )


def correct_state(state: GirlState, sample: PseudoSample, g_p: np.ndarray, lam: float = 0.5) -> GirlState:
    """Add an accepted sample to the labeled set and update the running-mean direction."""
    if not sample.reward > lam:
        raise RejectedSample(f"reward {sample.reward:.4f} does not exceed threshold {lam}")
    return _fold_in(state, sample, g_p)


def recompute_gl(state: GirlState) -> GirlState:
    """Recompute the standard direction over the current labeled set at current params."""
    H, y = state.labeled_arrays()
    return replace(state, g_l=mean_labeled_gradient(state.params, H, y), n_effective=len(y))


def run_episode(state: GirlState, batch: Sequence[np.ndarray], cfg: GirlConfig,
                indices: Sequence[int] | None = None,
                recompute: bool | None = None) -> tuple[GirlState, EpisodeReport]:
    """One REINFORCE episode over ``batch`` (encodings of unlabeled mentions)."""
    if len(batch) == 0:
        raise EmptyBatch("episode needs at least one unlabeled sample")
    if indices is None:
        indices = range(len(batch))
    if recompute if recompute is not None else cfg.gl_recompute == "per-episode":
        state = recompute_gl(state)
    theta_params = state.params
    H = np.asarray(batch, dtype=float)
    rewards, accepted, labels, losses = [], [], [], []
    for h, idx in zip(H, indices):
        y = act(state, h)
        g_p = grad_sample(theta_params, h, y)
        r = reward(state.g_l, g_p)
        ok = r > cfg.lam
        if ok:
            state = correct_state(state, PseudoSample(h, y, r, True, int(idx)), g_p, cfg.lam)
        rewards.append(r)
        accepted.append(ok)
        labels.append(y)
        losses.append(cross_entropy(forward(theta_params, h), y))

    weights = np.array(rewards)
    if cfg.loss_scope == "accepted":
        weights = weights * np.array(accepted, dtype=float)
    rl_loss = float(np.dot(losses, weights))
    grad = weighted_loss_grad(theta_params, H, labels, weights)
    new_params = theta_params.unflatten(theta_params.flatten() - cfg.rl_step_size * grad)
    report = EpisodeReport(rewards, accepted, labels, [int(i) for i in indices], losses, rl_loss)
    return replace(state, params=new_params), report


def run_self_training_episode(state: GirlState, batch: Sequence[np.ndarray], cfg: GirlConfig,
                              indices: Sequence[int] | None = None) -> tuple[GirlState, EpisodeReport]:
    """Ablation: accept every pseudo-label and take a plain cross-entropy step."""
    if len(batch) == 0:
        raise EmptyBatch("episode needs at least one unlabeled sample")
    if indices is None:
        indices = range(len(batch))
    theta_params = state.params
    H = np.asarray(batch, dtype=float)
    labels = [int(v) for v in predict(theta_params, H)]
    losses = [float(v) for v in cross_entropy(forward(theta_params, H), labels)]
    pairs = tuple((h, y) for h, y in zip(H, labels))
    state = replace(state, labeled=state.labeled + pairs, n_effective=state.n_effective + len(pairs))
    ones = np.ones(len(H))
    grad = weighted_loss_grad(theta_params, H, labels, ones)
    new_params = theta_params.unflatten(theta_params.flatten() - cfg.rl_step_size * grad)
    report = EpisodeReport([1.0] * len(H), [True] * len(H), labels,
                           [int(i) for i in indices], losses, float(np.sum(losses)))
    return replace(state, params=new_params), report


# -- training loop ------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    segment: int
    episode: int
    mean_reward: float
    acceptance_rate: float
    labeled_size: int
    rl_loss: float
    test_f1: float | None
    pseudo_f1: float | None


@dataclass
class RunLog:
    mode: str
    records: list[EpisodeRecord] = field(default_factory=list)
    snapshot_keys: list[tuple[int, int]] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    accepted: list[tuple[int, int]] = field(default_factory=list)   # (pool index, pseudo-label)
    pretrain_losses: list[float] = field(default_factory=list)
    pretrained_test_f1: float | None = None

    @property
    def final_test_f1(self) -> float | None:
        if self.records:
            return self.records[-1].test_f1
        return self.pretrained_test_f1

    @property
    def final_pseudo_f1(self) -> float | None:
        return self.records[-1].pseudo_f1 if self.records else None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)

    def write(self, directory) -> None:
        """Episode records plus the parameter snapshots sidecar (a .npy matrix
        whose rows are keyed by the accompanying index file)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "runlog.jsonl").write_text(self.to_jsonl(), encoding="utf-8")
        keys = "".join(json.dumps({"row": i, "segment": s, "episode": e}) + "\n"
                       for i, (s, e) in enumerate(self.snapshot_keys))
        (directory / "theta_index.jsonl").write_text(keys, encoding="utf-8")
        if self.snapshots:
            with open(directory / "theta_snapshots.npy", "wb") as fh:
                np.save(fh, np.stack(self.snapshots), allow_pickle=False)


def read_runlog(path) -> list[EpisodeRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [EpisodeRecord(**json.loads(line)) for line in lines if line.strip()]


def _encode(corpus: Corpus, encoder_cfg: EncoderConfig) -> np.ndarray:
    return encode_all([mark_entities(m) for m in corpus.mentions], encoder_cfg)


def _segments(n: int, cfg: GirlConfig) -> list[np.ndarray]:
    order = np.random.default_rng(cfg.seed).permutation(n)
    return [seg for seg in np.array_split(order, cfg.segments) if len(seg)]


def fit_arrays(H_lab: np.ndarray, y_lab, H_pool: np.ndarray, num_labels: int, cfg: GirlConfig,
               sgd: SGDConfig, hidden_dim: int = 0, mode: str = "gradlre",
               test_f1: Callable = lambda p: None,
               pseudo_f1: Callable = lambda accepted: None) -> tuple[PolicyParameters, RunLog]:
    """Pretrain on ``(H_lab, y_lab)`` then consume ``H_pool`` segment by segment.

    ``mode`` picks the episode: ``gradlre`` (reward gated) or ``self-train``
    (every pseudo-label kept).  The two callbacks fill the per-episode
    evaluation columns of the log.
    """
    episode_fn = {"gradlre": run_episode, "self-train": run_self_training_episode}[mode]
    y_lab = np.asarray(y_lab, dtype=np.int64)
    if len(H_lab) == 0:
        raise EmptyLabeledSet("training needs labeled data")
    if (y_lab < 0).any():
        raise EmptyLabeledSet("every labeled mention must carry a gold label")
    log = RunLog(mode)
    params = init_params(num_labels, H_lab.shape[1], hidden_dim, seed=sgd.seed)
    params = pretrain(params, H_lab, y_lab, sgd, history=log.pretrain_losses)
    log.pretrained_test_f1 = test_f1(params)
    log.snapshot_keys.append((0, 0))
    log.snapshots.append(params.flatten())
    if len(H_pool) == 0:
        return params, log

    state = GirlState.initial(params, H_lab, y_lab)
    for s, seg in enumerate(_segments(len(H_pool), cfg), start=1):
        if s > 1 and cfg.gl_recompute == "per-segment":
            state = recompute_gl(state)
        for e, start in enumerate(range(0, len(seg), cfg.episode_len), start=1):
            idx = seg[start:start + cfg.episode_len]
            state, rep = episode_fn(state, H_pool[idx], cfg, idx)
            log.accepted.extend((i, y) for i, y, a in zip(rep.indices, rep.labels, rep.accepted) if a)
            log.records.append(EpisodeRecord(
                s, e, rep.mean_reward, rep.acceptance_rate, len(state.labeled),
                rep.rl_loss, test_f1(state.params), pseudo_f1(log.accepted),
            ))
            log.snapshot_keys.append((s, e))
            log.snapshots.append(state.params.flatten())
    return state.params, log


def _fit(labeled: Corpus, unlabeled: Corpus, cfg: GirlConfig, sgd: SGDConfig,
         encoder_cfg: EncoderConfig, mode: str, hidden_dim: int,
         test: Corpus | None) -> tuple[PolicyParameters, RunLog]:
    inventory = labeled.inventory
    pool_gold = unlabeled.labels()
    # augmented pools have no gold at all; pseudo-label F1 is then not tracked
    hidden_gold = {i: int(g) for i, g in enumerate(pool_gold)} if (pool_gold >= 0).all() else None
    has_test = test is not None and len(test) > 0
    if has_test:
        H_test, y_test = _encode(test, encoder_cfg), test.labels()

    def test_f1(p):
        if not has_test:
            return None
        return score_arrays(y_test, predict(p, H_test), inventory.no_relation_id).f1

    def pseudo_f1(accepted):
        if hidden_gold is None:
            return None
        try:
            return pseudo_label_f1(accepted, hidden_gold, inventory).f1
        except EmptyPredictionSet:
            return None

    return fit_arrays(
        _encode(labeled, encoder_cfg), labeled.labels(), _encode(unlabeled.hidden(), encoder_cfg),
        len(inventory), cfg, sgd, hidden_dim, mode, test_f1, pseudo_f1,
    )


def train(labeled: Corpus, unlabeled: Corpus, cfg: GirlConfig, sgd: SGDConfig,
          encoder_cfg: EncoderConfig, hidden_dim: int = 0,
          test: Corpus | None = None) -> tuple[PolicyParameters, RunLog]:
    """Pretrain on labeled data, then run GIRL over the unlabeled pool segment by segment.

    Gold labels on ``unlabeled`` are never shown to the policy; they only feed
    the pseudo-label F1 column of the run log.
    """
    return _fit(labeled, unlabeled, cfg, sgd, encoder_cfg, "gradlre", hidden_dim, test)


def train_self_training_ablation(labeled: Corpus, unlabeled: Corpus, cfg: GirlConfig,
                                 sgd: SGDConfig, encoder_cfg: EncoderConfig,
                                 hidden_dim: int = 0,
                                 test: Corpus | None = None) -> tuple[PolicyParameters, RunLog]:
    """Same schedule as ``train`` without the reward: every pseudo-label is kept."""
    return _fit(labeled, unlabeled, cfg, sgd, encoder_cfg, "self-train", hidden_dim, test)
