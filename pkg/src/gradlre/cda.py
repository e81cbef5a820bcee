"""Contextualized data augmentation: mask word spans outside the entities and refill them.

The fill model is pluggable.  ``NgramFillModel`` is the bundled reference: an
interpolated add-k bigram/unigram sampler trained on a corpus.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, replace
from typing import Protocol, Sequence

import numpy as np

from .data import MARKERS, Corpus, RelationMention
from .exceptions import FillLengthMismatch, NothingMaskable

MASK = "[MASK]"
BOS = "<s>"
CONTINUATION_PREFIX = "##"


@dataclass(frozen=True)
class SpanSamplerConfig:
    budget_fraction: float = 0.15
    geo_p: float = 0.2
    min_len: int = 1
    max_len: int = 10
    max_attempts: int = 30
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.budget_fraction < 1.0:
            raise ValueError(f"budget_fraction must be in (0, 1), got {self.budget_fraction}")
        if not 0.0 < self.geo_p < 1.0:
            raise ValueError(f"geo_p must be in (0, 1), got {self.geo_p}")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def span_length_pmf(cfg: SpanSamplerConfig) -> np.ndarray:
    """P(l = k) for k = min_len..max_len: a geometric law truncated and renormalised."""
    k = np.arange(cfg.min_len, cfg.max_len + 1)
    w = cfg.geo_p * (1.0 - cfg.geo_p) ** (k - 1)
    return w / w.sum()


def span_length_mean(cfg: SpanSamplerConfig) -> float:
    """Closed-form mean of the truncated geometric on [1, max_len]."""
    if cfg.min_len != 1:
        k = np.arange(cfg.min_len, cfg.max_len + 1)
        return float(k @ span_length_pmf(cfg))
    p, q, n = cfg.geo_p, 1.0 - cfg.geo_p, cfg.max_len
    return (1.0 / p - q ** n * (n + 1.0 / p)) / (1.0 - q ** n)


def sample_span_lengths(cfg: SpanSamplerConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF draws; consumes one uniform per length."""
    cdf = np.cumsum(span_length_pmf(cfg))
    i = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return cfg.min_len + np.minimum(i, len(cdf) - 1)


def sample_span_length(cfg: SpanSamplerConfig, rng: np.random.Generator) -> int:
    return int(sample_span_lengths(cfg, rng, 1)[0])


@dataclass(frozen=True)
class AugmentationPlan:
    source: RelationMention
    mask_spans: tuple[tuple[int, int], ...]
    filled_tokens: tuple[str, ...] | None = None

    @property
    def masked_positions(self) -> list[int]:
        return [i for s, e in self.mask_spans for i in range(s, e)]

    def masked_tokens(self) -> list[str]:
        tokens = list(self.source.tokens)
        for i in self.masked_positions:
            tokens[i] = MASK
        return tokens


def masking_budget(mention: RelationMention, cfg: SpanSamplerConfig) -> int:
    maskable = int((~mention.entity_mask()).sum())
    # guard against 0.15 * 20 landing a hair above 3.0
    return math.ceil(cfg.budget_fraction * maskable - 1e-9)


def _word_starts(tokens) -> np.ndarray:
    return np.array([not t.startswith(CONTINUATION_PREFIX) for t in tokens], dtype=bool)


def plan_masks(mention: RelationMention, cfg: SpanSamplerConfig, seed=None) -> AugmentationPlan:
    """Sample disjoint spans outside both entities until the budget is spent.

    Span starts must be word beginnings (tokens not prefixed with ``##``); a
    span longer than the remaining budget is clipped.  After ``max_attempts``
    placements fail the length drops to one for a final try.
    """
    free = ~mention.entity_mask()
    if not free.any():
        raise NothingMaskable("every token lies inside an entity span")
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    starts_ok = _word_starts(mention.tokens)
    n = len(mention.tokens)
    remaining = masking_budget(mention, cfg)
    spans = []

    def place(length):
        if length > n:
            return None
        # window sums give, for each start, whether [start, start+length) is all free
        csum = np.concatenate([[0], np.cumsum(free)])
        ok = (csum[length:] - csum[:-length]) == length
        ok &= starts_ok[: n - length + 1]
        cands = np.flatnonzero(ok)
        if len(cands) == 0:
            return None
        return int(cands[rng.integers(len(cands))])

    while remaining > 0:
        placed = False
        for _ in range(cfg.max_attempts):
            length = min(sample_span_length(cfg, rng), remaining)
            start = place(length)
            if start is not None:
                placed = True
                break
        if not placed:
            length = 1
            start = place(1)
            if start is None:
                break
        spans.append((start, start + length))
        free[start:start + length] = False
        remaining -= length
    return AugmentationPlan(mention, tuple(sorted(spans)))


class FillModel(Protocol):
    def fill(self, tokens: Sequence[str], positions: Sequence[int], seed) -> list[str]:
        """Return one replacement token per masked position."""
        ...


class NgramFillModel:
    """Left-to-right sampler from an interpolated add-k bigram/unigram model.

    Each masked position is filled conditioned on the previous token, which may
    itself be a fresh fill.  Contexts never seen in training fall back to the
    unigram distribution.
    """

    def __init__(self, sentences: Sequence[Sequence[str]], k: float = 0.1, interpolation: float = 0.9):
        self.k = k
        self.interpolation = interpolation
        unigrams: Counter = Counter()
        bigrams: Counter = Counter()
        for sent in sentences:
            words = [t for t in sent if t not in MARKERS and t != MASK]
            unigrams.update(words)
            bigrams.update(zip([BOS] + words[:-1], words))
        if not unigrams:
            raise ValueError("fill model needs a non-empty corpus")
        self.vocab = sorted(unigrams)
        self._index = {w: i for i, w in enumerate(self.vocab)}
        V = len(self.vocab)
        counts = np.array([unigrams[w] for w in self.vocab], dtype=float)
        self.unigram = (counts + k) / (counts.sum() + k * V)
        self._bigram_counts: dict[str, np.ndarray] = {}
        for (prev, word), c in bigrams.items():
            row = self._bigram_counts.setdefault(prev, np.zeros(V))
            row[self._index[word]] += c

    def distribution(self, prev: str) -> np.ndarray:
        row = self._bigram_counts.get(prev)
        if row is None:
            return self.unigram
        V = len(self.vocab)
        bigram = (row + self.k) / (row.sum() + self.k * V)
        lam = self.interpolation
        return lam * bigram + (1.0 - lam) * self.unigram

    def fill(self, tokens, positions, seed) -> list[str]:
        rng = np.random.default_rng(seed)
        tokens = list(tokens)
        out = []
        for pos in sorted(positions):
            prev = tokens[pos - 1] if pos > 0 else BOS
            cdf = np.cumsum(self.distribution(prev))
            i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)
            tokens[pos] = self.vocab[i]
            out.append(self.vocab[i])
        return out


def build_ngram_fill_model(corpus: Corpus, order: int = 2, k: float = 0.1) -> NgramFillModel:
    if order != 2:
        raise ValueError("only bigram fill models are supported")
    if len(corpus) == 0:
        raise ValueError("fill model needs a non-empty corpus")
    return NgramFillModel([m.tokens for m in corpus.mentions], k=k)


def fill(plan: AugmentationPlan, model: FillModel, seed) -> RelationMention:
    """Substitute the masked positions; the result is unlabeled."""
    positions = plan.masked_positions
    if not positions:
        return plan.source.without_label()
    new = model.fill(plan.masked_tokens(), positions, seed)
    if len(new) != len(positions):
        raise FillLengthMismatch(f"fill model returned {len(new)} tokens for {len(positions)} masks")
    tokens = list(plan.source.tokens)
    for pos, tok in zip(sorted(positions), new):
        tokens[pos] = tok
    return replace(plan.source, tokens=tuple(tokens), gold_label=None)


def augment_pool(labeled: Corpus, n_out: int, cfg: SpanSamplerConfig, model: FillModel) -> Corpus:
    """Cycle over the (seed-shuffled) labeled mentions producing ``n_out`` unlabeled variants."""
    if len(labeled) == 0:
        raise ValueError("augmentation needs labeled mentions")
    order = np.random.default_rng(cfg.seed).permutation(len(labeled))
    out = []
    for i in range(n_out):
        source = labeled.mentions[order[i % len(labeled)]]
        plan = plan_masks(source, cfg, seed=[cfg.seed, i, 0])
        out.append(fill(plan, model, seed=[cfg.seed, i, 1]))
    return Corpus(labeled.inventory, tuple(out))
