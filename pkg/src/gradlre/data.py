"""Relation mentions, entity marking, stratified splits and the corpus file format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    InsufficientClassCount,
    InvalidInventory,
    InvalidMention,
    InvalidSplit,
    ParseError,
    SpanOutOfBounds,
)

E1_OPEN, E1_CLOSE, E2_OPEN, E2_CLOSE = "[E1]", "[/E1]", "[E2]", "[/E2]"
MARKERS = (E1_OPEN, E1_CLOSE, E2_OPEN, E2_CLOSE)


@dataclass(frozen=True)
class LabelInventory:
    names: tuple[str, ...]
    no_relation_id: int

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise InvalidInventory("relation names must be unique")
        if not 0 <= self.no_relation_id < len(self.names):
            raise InvalidInventory(
                f"no_relation_id {self.no_relation_id} outside inventory of size {len(self.names)}"
            )

    def __len__(self):
        return len(self.names)

    @property
    def no_relation(self) -> str:
        return self.names[self.no_relation_id]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidInventory(f"unknown relation {name!r}") from None

    @classmethod
    def from_names(cls, names: Sequence[str], no_relation: str) -> "LabelInventory":
        names = tuple(names)
        if no_relation not in names:
            raise InvalidInventory(f"no_relation label {no_relation!r} not among labels")
        return cls(names, names.index(no_relation))


def _check_span(span, n_tokens, which):
    start, end = span
    if not (0 <= start < end <= n_tokens):
        raise SpanOutOfBounds(f"{which} span {list(span)} invalid for {n_tokens} tokens")


@dataclass(frozen=True)
class RelationMention:
    """A sentence with two entity spans (half-open token intervals) and an optional label."""

    tokens: tuple[str, ...]
    e1_span: tuple[int, int]
    e2_span: tuple[int, int]
    gold_label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "e1_span", (int(self.e1_span[0]), int(self.e1_span[1])))
        object.__setattr__(self, "e2_span", (int(self.e2_span[0]), int(self.e2_span[1])))
        _check_span(self.e1_span, len(self.tokens), "e1")
        _check_span(self.e2_span, len(self.tokens), "e2")
        (a, b), (c, d) = self.e1_span, self.e2_span
        if a < d and c < b:
            raise InvalidMention(f"entity spans {list(self.e1_span)} and {list(self.e2_span)} overlap")

    def entity_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.tokens), dtype=bool)
        mask[self.e1_span[0]:self.e1_span[1]] = True
        mask[self.e2_span[0]:self.e2_span[1]] = True
        return mask

    def without_label(self) -> "RelationMention":
        return replace(self, gold_label=None)


@dataclass(frozen=True)
class MarkedSequence:
    tokens: tuple[str, ...]
    e1_marker_pos: int
    e2_marker_pos: int


@dataclass(frozen=True)
class Corpus:
    inventory: LabelInventory
    mentions: tuple[RelationMention, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "mentions", tuple(self.mentions))
        k = len(self.inventory)
        for i, m in enumerate(self.mentions):
            if m.gold_label is not None and not 0 <= m.gold_label < k:
                raise InvalidMention(f"mention {i}: label id {m.gold_label} outside inventory")

    def __len__(self):
        return len(self.mentions)

    def __iter__(self):
        return iter(self.mentions)

    def labels(self) -> np.ndarray:
        """Gold label ids; -1 where a mention is unlabeled."""
        return np.array(
            [-1 if m.gold_label is None else m.gold_label for m in self.mentions], dtype=np.int64
        )

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus(self.inventory, tuple(self.mentions[i] for i in indices))

    def hidden(self) -> "Corpus":
        """Training-time view with every gold label removed."""
        return Corpus(self.inventory, tuple(m.without_label() for m in self.mentions))


@dataclass(frozen=True)
class SplitSpec:
    labeled_fraction: float
    unlabeled_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise InvalidSplit(f"labeled_fraction must be in (0, 1], got {self.labeled_fraction}")
        if not 0.0 <= self.unlabeled_fraction < 1.0:
            raise InvalidSplit(f"unlabeled_fraction must be in [0, 1), got {self.unlabeled_fraction}")
        if self.labeled_fraction + self.unlabeled_fraction > 1.0 + 1e-12:
            raise InvalidSplit(
                f"labeled ({self.labeled_fraction}) + unlabeled ({self.unlabeled_fraction}) exceeds 1"
            )


def mark_entities(mention: RelationMention) -> MarkedSequence:
    """Insert the four reserved marker tokens around the entity spans."""
    inserts = {
        mention.e1_span[0]: [E1_OPEN],
        mention.e2_span[0]: [E2_OPEN],
    }
    closes = {mention.e1_span[1]: E1_CLOSE, mention.e2_span[1]: E2_CLOSE}
    out: list[str] = []
    e1_pos = e2_pos = -1
    n = len(mention.tokens)
    for i in range(n + 1):
        # a closing marker at i precedes an opening marker at i (adjacent entities)
        if i in closes:
            out.append(closes[i])
        if i in inserts:
            if i == mention.e1_span[0]:
                e1_pos = len(out)
            else:
                e2_pos = len(out)
            out.extend(inserts[i])
        if i < n:
            out.append(mention.tokens[i])
    return MarkedSequence(tuple(out), e1_pos, e2_pos)


def strip_markers(seq: MarkedSequence | Sequence[str]) -> tuple[str, ...]:
    tokens = seq.tokens if isinstance(seq, MarkedSequence) else seq
    return tuple(t for t in tokens if t not in MARKERS)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def stratified_split(corpus: Corpus, split: SplitSpec) -> tuple[Corpus, Corpus, Corpus]:
    """Split into (labeled, unlabeled, rest), preserving per-class proportions.

    The unlabeled part keeps its gold labels so that pseudo-label quality can be
    scored later; use ``Corpus.hidden`` for the training-time view.
    """
    labels = corpus.labels()
    if len(labels) and (labels < 0).any():
        raise InvalidSplit("stratified_split requires every mention to carry a gold label")
    rng = np.random.default_rng(split.seed)
    lab_idx, unl_idx, rest_idx = [], [], []
    for cls in range(len(corpus.inventory)):
        members = np.flatnonzero(labels == cls)
        if len(members) == 0:
            continue
        members = members[rng.permutation(len(members))]
        n_lab = min(len(members), _round_half_up(split.labeled_fraction * len(members)))
        if n_lab == 0:
            raise InsufficientClassCount(
                f"class {corpus.inventory.names[cls]!r} has {len(members)} mentions; "
                f"labeled_fraction {split.labeled_fraction} would leave it with none"
            )
        n_unl = min(len(members) - n_lab, _round_half_up(split.unlabeled_fraction * len(members)))
        lab_idx.extend(members[:n_lab].tolist())
        unl_idx.extend(members[n_lab:n_lab + n_unl].tolist())
        rest_idx.extend(members[n_lab + n_unl:].tolist())
    return (
        corpus.subset(sorted(lab_idx)),
        corpus.subset(sorted(unl_idx)),
        corpus.subset(sorted(rest_idx)),
    )


# -- corpus file format -----------------------------------------------------

def _mention_record(m: RelationMention, inventory: LabelInventory) -> dict:
    return {
        "tokens": list(m.tokens),
        "e1": list(m.e1_span),
        "e2": list(m.e2_span),
        "relation": None if m.gold_label is None else inventory.names[m.gold_label],
    }


def dumps_corpus(corpus: Corpus) -> str:
    lines = [json.dumps({"labels": list(corpus.inventory.names),
                         "no_relation": corpus.inventory.no_relation}, ensure_ascii=False)]
    for m in corpus.mentions:
        lines.append(json.dumps(_mention_record(m, corpus.inventory), ensure_ascii=False))
    return "\n".join(lines) + "\n"


def write_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def _expect_span(value, lineno, key):
    if (not isinstance(value, list) or len(value) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
        raise ParseError(f"field {key!r} must be a [start, end] integer pair", lineno)
    return tuple(value)


def loads_corpus(text: str) -> Corpus:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing inventory header", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", 1) from None
    if not isinstance(header, dict) or "labels" not in header or "no_relation" not in header:
        raise ParseError("header must be an object with 'labels' and 'no_relation'", 1)
    try:
        inventory = LabelInventory.from_names(header["labels"], header["no_relation"])
    except InvalidInventory as exc:
        raise ParseError(str(exc), 1) from None

    mentions = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
        if not isinstance(rec, dict):
            raise ParseError("record must be a JSON object", lineno)
        for key in ("tokens", "e1", "e2"):
            if key not in rec:
                raise ParseError(f"missing field {key!r}", lineno)
        tokens = rec["tokens"]
        if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
            raise ParseError("'tokens' must be a list of strings", lineno)
        reserved = [t for t in tokens if t in MARKERS]
        if reserved:
            raise ParseError(f"reserved marker token {reserved[0]!r} in sentence", lineno)
        e1 = _expect_span(rec["e1"], lineno, "e1")
        e2 = _expect_span(rec["e2"], lineno, "e2")
        rel = rec.get("relation")
        if rel is None:
            label = None
        elif rel in inventory.names:
            label = inventory.names.index(rel)
        else:
            raise ParseError(f"relation {rel!r} not in inventory header", lineno)
        try:
            mentions.append(RelationMention(tuple(tokens), e1, e2, label))
        except SpanOutOfBounds as exc:
            raise SpanOutOfBounds(str(exc), index=len(mentions)) from None
        except InvalidMention as exc:
            raise ParseError(str(exc), lineno) from None
    return Corpus(inventory, tuple(mentions))


def read_corpus(path) -> Corpus:
    return loads_corpus(Path(path).read_text(encoding="utf-8"))
