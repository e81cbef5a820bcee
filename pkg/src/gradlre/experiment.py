"""Seeded experiment runner: one directory of artifacts per (mode, seed)."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cda import augment_pool, build_ngram_fill_model
from .config import ExperimentConfig
from .data import Corpus, SplitSpec, read_corpus, stratified_split
from .evaluation import RunSummary, pca2, score_arrays
from .exceptions import ConfigError, DegenerateTrajectory
from .girl import RunLog, _encode, train, train_self_training_ablation
from .model import SGDConfig, init_params, predict, pretrain, save_checkpoint
from .synthetic import generate_synthetic

log = logging.getLogger(__name__)


@dataclass
class SeedResult:
    summary: RunSummary
    run_log: RunLog
    out_dir: Path


def load_splits(cfg: ExperimentConfig, seed: int) -> tuple[Corpus, Corpus, Corpus]:
    d = cfg.data
    if d.labeled is not None:
        labeled = read_corpus(d.labeled)
        unlabeled = read_corpus(d.unlabeled) if d.unlabeled else Corpus(labeled.inventory)
        test = read_corpus(d.test) if d.test else Corpus(labeled.inventory)
        return labeled, unlabeled, test
    corpus = read_corpus(d.corpus) if d.corpus else generate_synthetic(d.preset, d.n_mentions, d.corpus_seed)
    return stratified_split(corpus, SplitSpec(d.labeled_fraction, d.unlabeled_fraction, seed))


def split_key(cfg: ExperimentConfig) -> tuple:
    d = cfg.data
    source = d.corpus or f"{d.preset}:{d.n_mentions}:{d.corpus_seed}"
    if d.labeled is not None:
        source = f"files:{d.labeled}"
    return (source, d.labeled_fraction, d.unlabeled_fraction)


def write_pca(path: Path, run_log: RunLog) -> None:
    res = pca2(run_log.snapshots)
    lines = ["step,segment,episode,pc1,pc2"]
    for step, ((s, e), (x, y)) in enumerate(zip(run_log.snapshot_keys, res.points)):
        lines.append(f"{step},{s},{e},{float(x)!r},{float(y)!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_seed(cfg: ExperimentConfig, seed: int, out_root: Path | None = None) -> SeedResult:
    labeled, unlabeled, test = load_splits(cfg, seed)
    enc = cfg.encoder_config()
    sgd = SGDConfig(cfg.sgd.step_size, cfg.sgd.epochs, cfg.sgd.batch_size, seed)
    girl_cfg = cfg.girl_config(seed)
    hidden = cfg.model.hidden_dim
    mode = cfg.mode

    if mode == "gradlre":
        params, run_log = train(labeled, unlabeled, girl_cfg, sgd, enc, hidden, test)
    elif mode == "self-train":
        params, run_log = train_self_training_ablation(labeled, unlabeled, girl_cfg, sgd, enc, hidden, test)
    elif mode == "gradlre-cda":
        span_cfg = cfg.span_config(seed)
        n_out = cfg.cda.n_out if cfg.cda.n_out is not None else len(unlabeled)
        pool = augment_pool(labeled, n_out, span_cfg, build_ngram_fill_model(labeled))
        params, run_log = train(labeled, pool, girl_cfg, sgd, enc, hidden, test)
    else:
        train_set = labeled
        if mode == "gold-upper-bound":
            if (unlabeled.labels() < 0).any():
                raise ConfigError("gold-upper-bound needs gold labels on the unlabeled split")
            train_set = Corpus(labeled.inventory, labeled.mentions + unlabeled.mentions)
        run_log = RunLog(mode)
        H = _encode(train_set, enc)
        params = pretrain(init_params(len(labeled.inventory), enc.dim, hidden, seed=seed),
                          H, train_set.labels(), sgd, history=run_log.pretrain_losses)
        if len(test):
            run_log.pretrained_test_f1 = score_arrays(
                test.labels(), predict(params, _encode(test, enc)), test.inventory.no_relation_id
            ).f1
        run_log.snapshot_keys.append((0, 0))
        run_log.snapshots.append(params.flatten())

    summary = RunSummary(
        mode=mode, seed=seed, preset=cfg.data.preset, split=split_key(cfg),
        final_test_f1=run_log.final_test_f1 if run_log.final_test_f1 is not None else float("nan"),
        final_pseudo_f1=run_log.final_pseudo_f1,
    )
    out = Path(out_root if out_root is not None else cfg.out_dir) / f"seed-{seed}"
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.json", params, enc, labeled.inventory)
    run_log.write(out)
    if len(run_log.snapshots) >= 3:
        write_pca(out / "pca.csv", run_log)
    (out / "summary.json").write_text(json.dumps({
        "mode": mode, "seed": seed, "preset": cfg.data.preset, "split": list(summary.split),
        "final_test_f1": summary.final_test_f1, "final_pseudo_f1": summary.final_pseudo_f1,
        "pretrained_test_f1": run_log.pretrained_test_f1, "episodes": len(run_log.records),
        "accepted": len(run_log.accepted), "labeled": len(labeled), "unlabeled": len(unlabeled),
        "test": len(test),
    }, indent=1) + "\n", encoding="utf-8")
    log.info("%s seed %d: test F1 %.4f", mode, seed, summary.final_test_f1)
    return SeedResult(summary, run_log, out)


def run_experiment(cfg: ExperimentConfig) -> list[SeedResult]:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.yaml").write_text(cfg.to_yaml(), encoding="utf-8")
    return [run_seed(cfg, seed, out) for seed in cfg.seeds]


def read_summary(path) -> RunSummary:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunSummary(doc["mode"], doc["seed"], doc["preset"], tuple(doc["split"]),
                      doc["final_test_f1"], doc["final_pseudo_f1"])


def trajectory_pca(run_dir: Path):
    """PCA of a finished run's parameter snapshots (raises DegenerateTrajectory below 3)."""
    snaps_path = run_dir / "theta_snapshots.npy"
    snaps = np.load(snaps_path) if snaps_path.exists() else np.zeros((0, 0))
    if len(snaps) < 3:
        raise DegenerateTrajectory(
            f"{run_dir}: {len(snaps)} parameter snapshot(s); PCA needs at least 3 "
            "(run a GIRL mode with more unlabeled data or segments)"
        )
    return pca2(list(snaps))
