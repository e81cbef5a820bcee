"""Command line: gen-corpus, split, augment, train, eval, report, default-config.

On failure every command prints ``error: <ErrorClass>: <message>`` on stderr
and exits with status 1.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .cda import SpanSamplerConfig, augment_pool, build_ngram_fill_model
from .config import DEFAULT_CONFIG_TEXT, MODES, load_config, config_from_dict
from .data import SplitSpec, read_corpus, stratified_split, write_corpus
from .evaluation import assemble_report, score_arrays
from .exceptions import ConfigError, DegenerateTrajectory, GradLREError, InvalidSplit, IncompatibleRuns
from .experiment import read_summary, run_experiment, trajectory_pca
from .girl import _encode
from .model import load_checkpoint, predict
from .synthetic import generate_synthetic


def _seeds(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


def cmd_gen_corpus(args) -> None:
    corpus = generate_synthetic(args.preset, args.n, args.seed)
    write_corpus(corpus, args.out)
    counts = Counter(corpus.labels().tolist())
    nr = corpus.inventory.no_relation_id
    print(f"wrote {len(corpus)} mentions to {args.out}")
    print(f"labels: {len(corpus.inventory)} (no_relation = {corpus.inventory.no_relation!r}, "
          f"{counts[nr]} mentions, {100 * counts[nr] / len(corpus):.1f}%)")


def cmd_split(args) -> None:
    if args.labeled + args.unlabeled > 1.0 + 1e-12:
        raise InvalidSplit(f"--labeled {args.labeled} plus --unlabeled {args.unlabeled} exceeds 1")
    corpus = read_corpus(args.corpus)
    lab, unl, rest = stratified_split(corpus, SplitSpec(args.labeled, args.unlabeled, args.seed))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("labeled", lab), ("unlabeled", unl), ("test", rest)):
        write_corpus(part, out / f"{name}.jsonl")
        print(f"{name}: {len(part)} mentions ({100 * len(part) / max(1, len(corpus)):.1f}%)")


def cmd_augment(args) -> None:
    labeled = read_corpus(args.labeled)
    cfg = SpanSamplerConfig(budget_fraction=args.budget, geo_p=args.geo_p, seed=args.seed)
    pool = augment_pool(labeled, args.n_out, cfg, build_ngram_fill_model(labeled))
    write_corpus(pool, args.out)
    print(f"wrote {len(pool)} augmented unlabeled mentions to {args.out}")


def cmd_train(args) -> None:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict({})
    if args.mode:
        cfg.mode = args.mode
    if args.seeds:
        cfg.seeds = _seeds(args.seeds)
    if args.out_dir:
        cfg.out_dir = args.out_dir
    cfg.validate()
    try:
        results = run_experiment(cfg)
    except GradLREError as exc:
        raise type(exc)(f"{args.config or '<defaults>'}: {exc}") from None
    for r in results:
        pseudo = "" if r.summary.final_pseudo_f1 is None else f"  pseudo-label F1 {r.summary.final_pseudo_f1:.4f}"
        print(f"{cfg.mode} seed {r.summary.seed}: test F1 {r.summary.final_test_f1:.4f}{pseudo}  -> {r.out_dir}")


def cmd_eval(args) -> None:
    params, enc, inventory = load_checkpoint(args.checkpoint)
    corpus = read_corpus(args.corpus)
    if corpus.inventory.names != inventory.names:
        raise IncompatibleRuns("corpus label inventory differs from the checkpoint's")
    pred = predict(params, _encode(corpus, enc))
    report = score_arrays(corpus.labels(), pred, inventory.no_relation_id)
    text = json.dumps(report.as_dict(), indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def cmd_report(args) -> None:
    run_dirs = sorted({p.parent for root in args.runs for p in Path(root).rglob("summary.json")})
    if not run_dirs:
        raise IncompatibleRuns(f"no runs (summary.json) found under {args.runs}")
    summaries = [read_summary(d / "summary.json") for d in run_dirs]
    table = assemble_report(summaries)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table.to_text(), encoding="utf-8")

    series = ["mode,seed,segment,episode,mean_reward,acceptance_rate,labeled_size,rl_loss,test_f1,pseudo_f1"]
    fmt = lambda v: "" if v is None else repr(v)  # noqa: E731
    for d, s in zip(run_dirs, summaries):
        runlog = d / "runlog.jsonl"
        if not runlog.exists():
            continue
        for line in runlog.read_text(encoding="utf-8").splitlines():
            r = json.loads(line)
            series.append(",".join([s.mode, str(s.seed)] + [fmt(r[k]) for k in (
                "segment", "episode", "mean_reward", "acceptance_rate", "labeled_size",
                "rl_loss", "test_f1", "pseudo_f1")]))
    (out / "series.csv").write_text("\n".join(series) + "\n", encoding="utf-8")

    pca_dir = out / "pca"
    for d, s in zip(run_dirs, summaries):
        try:
            res = trajectory_pca(d)
        except DegenerateTrajectory as exc:
            print(f"skipping PCA: DegenerateTrajectory: {exc}", file=sys.stderr)
            continue
        pca_dir.mkdir(exist_ok=True)
        rows = ["step,pc1,pc2"] + [f"{i},{float(x)!r},{float(y)!r}" for i, (x, y) in enumerate(res.points)]
        (pca_dir / f"{s.mode}-seed-{s.seed}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    print(f"preset: {table.preset}")
    sys.stdout.write(table.to_text())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gradlre", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic corpus")
    p.add_argument("--preset", default="semeval-like")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("split", help="stratified labeled/unlabeled/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--labeled", type=float, default=0.05)
    p.add_argument("--unlabeled", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="build an unlabeled pool by span masking and refilling")
    p.add_argument("--labeled", required=True)
    p.add_argument("--n-out", type=int, required=True)
    p.add_argument("--budget", type=float, default=0.15)
    p.add_argument("--geo-p", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="run an experiment config, one run per seed")
    p.add_argument("--config")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seeds", help="comma-separated, overrides the config")
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a labeled corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="comparison table, episode series and PCA trajectories")
    p.add_argument("runs", nargs="+", help="run directories (searched for summary.json)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("default-config", help="print the commented default experiment config")
    p.set_defaults(func=lambda args: sys.stdout.write(DEFAULT_CONFIG_TEXT))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except GradLREError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, ValueError) as exc:
        kind = "ConfigError" if isinstance(exc, ValueError) else type(exc).__name__
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
