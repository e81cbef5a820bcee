"""Template-based synthetic relation corpora.

Each preset defines a fixed artificial "language": entity words, a Zipfian
distractor vocabulary, connector words and, per relation class, three trigger
families (a layout plus two trigger phrases).  The user seed only drives
sampling, so two corpora drawn from the same preset share the language.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Corpus, LabelInventory, RelationMention, _round_half_up
from .exceptions import InvalidSplit, UnknownPreset

NO_RELATION = "no_relation"

_SEMEVAL_BASE = [
    "Cause-Effect", "Component-Whole", "Content-Container", "Entity-Destination",
    "Entity-Origin", "Instrument-Agency", "Member-Collection", "Message-Topic",
    "Product-Producer",
]

_TACRED = [
    "org:alternate_names", "org:city_of_headquarters", "org:country_of_headquarters",
    "org:dissolved", "org:founded", "org:founded_by", "org:member_of", "org:members",
    "org:number_of_employees/members", "org:parents", "org:political/religious_affiliation",
    "org:shareholders", "org:stateorprovince_of_headquarters", "org:subsidiaries",
    "org:top_members/employees", "org:website",
    "per:age", "per:alternate_names", "per:cause_of_death", "per:charges", "per:children",
    "per:cities_of_residence", "per:city_of_birth", "per:city_of_death",
    "per:countries_of_residence", "per:country_of_birth", "per:country_of_death",
    "per:date_of_birth", "per:date_of_death", "per:employee_of", "per:origin",
    "per:other_family", "per:parents", "per:religion", "per:schools_attended",
    "per:siblings", "per:spouse", "per:stateorprovince_of_birth",
    "per:stateorprovince_of_death", "per:stateorprovinces_of_residence", "per:title",
]


@dataclass(frozen=True)
class Preset:
    name: str
    relations: tuple[str, ...]   # excludes no_relation
    no_relation_share: float
    directional_pairs: bool
    language_seed: int


PRESETS = {
    "semeval-like": Preset(
        "semeval-like",
        tuple(f"{r}({a},{b})" for r in _SEMEVAL_BASE for a, b in (("e1", "e2"), ("e2", "e1"))),
        0.174, True, 2010_08,
    ),
    "tacred-like": Preset("tacred-like", tuple(_TACRED), 0.787, False, 2017_42),
}

DISTRACTOR_SHARE = 0.30
CONFUSION_RATE = 0.08       # relation mention carries another class's trigger
HARD_NEGATIVE_RATE = 0.12   # no_relation mention with a trigger next to an entity
FAR_TRIGGER_RATE = 0.30     # no_relation mention with a trigger outside the context window
N_CONNECTORS = 12
N_DISTRACTORS = 160
N_ENTITY_TYPES = 10
N_WORDS_PER_TYPE = 30
TYPED_ARGUMENT_RATE = 0.8   # argument drawn from the relation's entity type, else any type

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "dr", "gl", "kr", "pl", "st", "tr", "sh", "ch", "th"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou", "ea"]
_CODAS = ["", "", "n", "r", "s", "l", "t", "m", "nd", "st"]


class _Language:
    def __init__(self, preset: Preset):
        rng = np.random.default_rng(preset.language_seed)
        used: set[str] = set()

        def words(n, syllables):
            out = []
            while len(out) < n:
                k = int(rng.integers(syllables[0], syllables[1] + 1))
                w = "".join(
                    _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(k)
                ) + _CODAS[rng.integers(len(_CODAS))]
                if w not in used:
                    used.add(w)
                    out.append(w)
            return out

        self.connectors = words(N_CONNECTORS, (1, 1))
        self.distractors = words(N_DISTRACTORS, (1, 2))
        ranks = np.arange(1, len(self.distractors) + 1, dtype=float)
        self.distractor_p = ranks ** -0.9 / np.sum(ranks ** -0.9)
        self.entity_types = [words(N_WORDS_PER_TYPE, (2, 3)) for _ in range(N_ENTITY_TYPES)]

        n_fam = 3
        base = preset.relations[::2] if preset.directional_pairs else preset.relations
        base_families = []
        base_types = []
        for _ in base:
            base_types.append(tuple(int(t) for t in rng.choice(N_ENTITY_TYPES, 2, replace=False)))
            fams = []
            for layout in ("mid", "pre", "post"):
                phrases = []
                for _ in range(2):
                    head = words(1, (2, 3))[0]
                    if rng.random() < 0.5:
                        phrases.append((head,))
                    else:
                        phrases.append((head, self.connectors[rng.integers(len(self.connectors))]))
                fams.append((layout, tuple(phrases)))
            base_families.append(fams[:n_fam])
        # directional pairs share triggers and differ by argument order
        self.families: list[list[tuple[str, tuple]]] = []
        self.reversed: list[bool] = []
        self.arg_types: list[tuple[int, int]] = []
        for i, _ in enumerate(preset.relations):
            j = i // 2 if preset.directional_pairs else i
            self.families.append(base_families[j])
            self.arg_types.append(base_types[j])
            self.reversed.append(preset.directional_pairs and i % 2 == 1)


_LANGUAGES: dict[str, _Language] = {}


def _language(preset: Preset) -> _Language:
    if preset.name not in _LANGUAGES:
        _LANGUAGES[preset.name] = _Language(preset)
    return _LANGUAGES[preset.name]


def _entity(lang, rng, etype=None):
    if etype is None or rng.random() >= TYPED_ARGUMENT_RATE:
        etype = int(rng.integers(len(lang.entity_types)))
    pool = lang.entity_types[etype]
    n = 1 if rng.random() < 0.6 else 2
    return [pool[rng.integers(len(pool))] for _ in range(n)]


def _distractor(lang, rng):
    return lang.distractors[rng.choice(len(lang.distractors), p=lang.distractor_p)]


def _assemble(core, lang, rng):
    """Pad a core segment list with distractors so that roughly 30% of tokens are noise.

    ``core`` is a list of (kind, tokens) with kind in {"e1", "e2", "w"}.  Returns
    tokens plus the e1/e2 spans.
    """
    core_len = sum(len(toks) for _, toks in core)
    n_noise = max(1, _round_half_up(core_len * DISTRACTOR_SHARE / (1 - DISTRACTOR_SHARE))
                  + int(rng.integers(-1, 2)))
    n_inside = int(rng.random() < 0.15)
    n_left = int(rng.integers(0, n_noise - n_inside + 1))
    n_right = n_noise - n_inside - n_left
    if n_inside and len(core) > 2:
        gap = int(rng.integers(1, len(core)))
        core = core[:gap] + [("w", [_distractor(lang, rng)])] + core[gap:]
    segments = ([("w", [_distractor(lang, rng) for _ in range(n_left)])] + core
                + [("w", [_distractor(lang, rng) for _ in range(n_right)])])
    tokens: list[str] = []
    spans = {}
    for kind, toks in segments:
        if kind in ("e1", "e2"):
            spans[kind] = (len(tokens), len(tokens) + len(toks))
        tokens.extend(toks)
    return tokens, spans["e1"], spans["e2"]


def _relation_mention(cls, lang, rng, n_classes):
    trigger_cls = cls
    if rng.random() < CONFUSION_RATE:
        trigger_cls = int(rng.integers(n_classes))
    layout, phrases = lang.families[trigger_cls][int(rng.integers(3))]
    phrase = list(phrases[int(rng.integers(2))])
    first, second = ("e2", "e1") if lang.reversed[cls] else ("e1", "e2")
    # the argument types follow the relation's arguments, so reversed classes swap positions
    a, b = _entity(lang, rng, lang.arg_types[cls][0]), _entity(lang, rng, lang.arg_types[cls][1])
    conn = [lang.connectors[rng.integers(len(lang.connectors))]]
    if layout == "mid":
        core = [(first, a), ("w", phrase), (second, b)]
    elif layout == "pre":
        core = [("w", phrase), (first, a), ("w", conn), (second, b)]
    else:
        core = [(first, a), ("w", conn), (second, b), ("w", phrase)]
    return _assemble(core, lang, rng)


def _no_relation_mention(lang, rng, n_classes):
    a, b = _entity(lang, rng), _entity(lang, rng)
    filler = [_distractor(lang, rng) for _ in range(int(rng.integers(1, 4)))]
    order = ("e1", "e2") if rng.random() < 0.5 else ("e2", "e1")
    core = [(order[0], a), ("w", filler), (order[1], b)]
    u = rng.random()
    if u < HARD_NEGATIVE_RATE:
        layout, phrases = lang.families[int(rng.integers(n_classes))][int(rng.integers(3))]
        core.insert(1, ("w", list(phrases[int(rng.integers(2))])))
    elif u < HARD_NEGATIVE_RATE + FAR_TRIGGER_RATE:
        layout, phrases = lang.families[int(rng.integers(n_classes))][int(rng.integers(3))]
        far = [_distractor(lang, rng) for _ in range(4)]
        core = core + [("w", far + list(phrases[int(rng.integers(2))]))]
    return _assemble(core, lang, rng)


def preset_inventory(name: str) -> LabelInventory:
    preset = _preset(name)
    return LabelInventory((NO_RELATION,) + preset.relations, 0)


def _preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def class_counts(name: str, n_mentions: int) -> np.ndarray:
    """Exact per-class mention counts: the no_relation share is hit to the nearest mention."""
    preset = _preset(name)
    k = len(preset.relations) + 1
    counts = np.zeros(k, dtype=np.int64)
    counts[0] = _round_half_up(preset.no_relation_share * n_mentions)
    others = n_mentions - counts[0]
    counts[1:] = others // (k - 1)
    counts[1:1 + others % (k - 1)] += 1
    return counts


def generate_synthetic(preset: str, n_mentions: int, seed: int) -> Corpus:
    p = _preset(preset)
    inventory = preset_inventory(preset)
    k = len(inventory)
    if n_mentions < 10 * k:
        raise InvalidSplit(f"preset {preset!r} needs at least {10 * k} mentions, got {n_mentions}")
    lang = _language(p)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), class_counts(preset, n_mentions))
    labels = labels[rng.permutation(len(labels))]
    n_rel = k - 1
    mentions = []
    for label in labels.tolist():
        if label == inventory.no_relation_id:
            tokens, e1, e2 = _no_relation_mention(lang, rng, n_rel)
        else:
            tokens, e1, e2 = _relation_mention(label - 1, lang, rng, n_rel)
        mentions.append(RelationMention(tuple(tokens), e1, e2, label))
    return Corpus(inventory, tuple(mentions))
