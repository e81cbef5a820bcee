"""Scoring, pseudo-label tracking, PCA of parameter trajectories and run tables."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import LabelInventory
from .exceptions import (
    DegenerateTrajectory,
    EmptyPredictionSet,
    IncompatibleRuns,
    LengthMismatch,
    MissingGold,
)


@dataclass(frozen=True)
class PredictionSet:
    pairs: tuple[tuple[int, int], ...]
    inventory: LabelInventory

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(g), int(p)) for g, p in self.pairs))
        k = len(self.inventory)
        for g, p in self.pairs:
            if not (0 <= g < k and 0 <= p < k):
                raise ValueError(f"label pair ({g}, {p}) outside inventory of size {k}")


@dataclass(frozen=True)
class F1Report:
    precision: float
    recall: float
    f1: float
    tp: int
    pred_pos: int
    gold_pos: int

    def as_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "tp": self.tp, "pred_pos": self.pred_pos, "gold_pos": self.gold_pos}


def _report(tp: int, pred_pos: int, gold_pos: int) -> F1Report:
    precision = tp / pred_pos if pred_pos else 0.0
    recall = tp / gold_pos if gold_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return F1Report(precision, recall, f1, tp, pred_pos, gold_pos)


def score_arrays(gold, pred, no_relation_id: int) -> F1Report:
    """Micro F1 in which correct no_relation predictions count nowhere."""
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    if gold.shape != pred.shape:
        raise LengthMismatch(f"{gold.shape} gold labels vs {pred.shape} predictions")
    if gold.size == 0:
        raise EmptyPredictionSet("no predictions to score")
    nr = no_relation_id
    tp = int(np.sum((pred == gold) & (gold != nr)))
    return _report(tp, int(np.sum(pred != nr)), int(np.sum(gold != nr)))


def score(preds: PredictionSet) -> F1Report:
    if not preds.pairs:
        raise EmptyPredictionSet("no predictions to score")
    gold, pred = zip(*preds.pairs)
    return score_arrays(gold, pred, preds.inventory.no_relation_id)


def pseudo_label_f1(accepted: Sequence, hidden_gold: Mapping[int, int],
                    inventory: LabelInventory) -> F1Report:
    """Score accepted pseudo-labels against the gold labels hidden during training.

    ``accepted`` holds objects with ``index`` (key into ``hidden_gold``) and
    ``y_tilde`` attributes, or plain ``(index, label)`` pairs.
    """
    pairs = []
    for s in accepted:
        index, label = (s.index, s.y_tilde) if hasattr(s, "y_tilde") else s
        if index not in hidden_gold or hidden_gold[index] is None:
            raise MissingGold(f"no hidden gold label for unlabeled mention {index}")
        pairs.append((hidden_gold[index], label))
    if not pairs:
        raise EmptyPredictionSet("no accepted pseudo-labels yet")
    return score(PredictionSet(tuple(pairs), inventory))


# -- PCA ----------------------------------------------------------------------

@dataclass(frozen=True)
class PCAResult:
    points: np.ndarray          # [n_snapshots, 2]
    components: np.ndarray      # [2, dim], orthonormal rows
    explained_variance: np.ndarray
    total_variance: float


def _canonical_sign(v):
    return v if v[np.argmax(np.abs(v))] >= 0 else -v


def _top_direction(X, exclude, rng, tol, max_iter):
    """Leading eigenvector of X^T X restricted to the complement of ``exclude``.

    Works with matrix-vector products only, so the dim x dim covariance is never
    formed.
    """
    dim = X.shape[1]

    def deflate(v):
        for u in exclude:
            v = v - (u @ v) * u
        return v

    v = deflate(rng.standard_normal(dim))
    if np.linalg.norm(v) == 0:
        v = deflate(np.ones(dim))
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = deflate(X.T @ (X @ v))
        norm = np.linalg.norm(w)
        if norm < 1e-300:
            return v  # no variance left: any unit vector orthogonal to ``exclude`` will do
        w /= norm
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
    return v


def pca2(snapshots: Sequence[np.ndarray], tol: float = 1e-10, max_iter: int = 10_000) -> PCAResult:
    """Project flattened-parameter snapshots onto their top two principal directions.

    Power iteration with deflation; each component's largest-magnitude entry is
    made positive so plots are stable across runs.
    """
    if len(snapshots) < 3:
        raise DegenerateTrajectory(
            f"PCA needs at least 3 parameter snapshots, got {len(snapshots)}; "
            "train with more unlabeled data or more segments"
        )
    lengths = {len(s) for s in snapshots}
    if len(lengths) != 1:
        raise LengthMismatch(f"snapshots have differing lengths {sorted(lengths)}")
    X = np.asarray(snapshots, dtype=float)
    X = X - X.mean(axis=0)
    total = float(np.sum(X * X)) / len(X)
    if total < 1e-20:
        raise DegenerateTrajectory(f"total variance {total:.3g} is too small for PCA")
    # scale so convergence tolerance is relative to the data
    scale = math.sqrt(total)
    Xs = X / scale
    rng = np.random.default_rng(0)
    comps = []
    for _ in range(2):
        c = _top_direction(Xs, comps, rng, tol, max_iter)
        comps.append(c / np.linalg.norm(c))
    # re-orthogonalise the second component against the first to machine precision
    comps[1] = comps[1] - (comps[0] @ comps[1]) * comps[0]
    comps[1] /= np.linalg.norm(comps[1])
    comps = [_canonical_sign(c) for c in comps]
    C = np.stack(comps)
    points = X @ C.T
    explained = np.sum(points ** 2, axis=0) / len(X)
    return PCAResult(points, C, explained, total)


# -- run tables -----------------------------------------------------------------

@dataclass(frozen=True)
class RunSummary:
    mode: str
    seed: int
    preset: str
    split: tuple
    final_test_f1: float
    final_pseudo_f1: float | None = None


@dataclass(frozen=True)
class ComparisonRow:
    mode: str
    n_runs: int
    mean_f1: float
    std_f1: float
    mean_pseudo_f1: float | None
    std_pseudo_f1: float | None


@dataclass(frozen=True)
class ComparisonTable:
    preset: str
    split: tuple
    rows: tuple[ComparisonRow, ...]

    def to_text(self, delimiter: str = ",") -> str:
        head = ["mode", "n_runs", "mean_f1", "std_f1", "mean_pseudo_f1", "std_pseudo_f1", "f1"]
        lines = [delimiter.join(head)]
        for r in self.rows:
            fmt = lambda x: "" if x is None else f"{x:.6f}"  # noqa: E731
            lines.append(delimiter.join([
                r.mode, str(r.n_runs), fmt(r.mean_f1), fmt(r.std_f1),
                fmt(r.mean_pseudo_f1), fmt(r.std_pseudo_f1),
                f"{100 * r.mean_f1:.2f}±{100 * r.std_f1:.2f}",
            ]))
        return "\n".join(lines) + "\n"


def _mean_std(values):
    """Single-pass (Welford) mean and population standard deviation."""
    mean, m2 = 0.0, 0.0
    for i, x in enumerate(values, start=1):
        d = x - mean
        mean += d / i
        m2 += d * (x - mean)
    n = len(values)
    return mean, math.sqrt(max(m2, 0.0) / n)


MODE_ORDER = ("supervised", "self-train", "gradlre", "gradlre-cda", "gold-upper-bound")


def assemble_report(runs: Sequence[RunSummary]) -> ComparisonTable:
    if not runs:
        raise IncompatibleRuns("no runs to report")
    presets = {r.preset for r in runs}
    splits = {tuple(r.split) for r in runs}
    if len(presets) > 1 or len(splits) > 1:
        raise IncompatibleRuns(
            f"runs disagree on preset {sorted(presets)} or split {sorted(splits)}"
        )
    by_mode: dict[str, list[RunSummary]] = {}
    for r in runs:
        by_mode.setdefault(r.mode, []).append(r)
    order = [m for m in MODE_ORDER if m in by_mode] + sorted(set(by_mode) - set(MODE_ORDER))
    rows = []
    for mode in order:
        group = sorted(by_mode[mode], key=lambda r: r.seed)
        mean, std = _mean_std([r.final_test_f1 for r in group])
        pseudo = [r.final_pseudo_f1 for r in group if r.final_pseudo_f1 is not None]
        pmean, pstd = _mean_std(pseudo) if pseudo else (None, None)
        rows.append(ComparisonRow(mode, len(group), mean, std, pmean, pstd))
    return ComparisonTable(presets.pop(), splits.pop(), tuple(rows))
