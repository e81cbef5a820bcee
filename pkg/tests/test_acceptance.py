"""Acceptance criteria 1-11.  Each test prints one ``criterion N: PASS|FAIL`` line.

Criteria 8 and 9 share one set of desk-scale runs (semeval-like, 4000 mentions,
5% labeled, 50% unlabeled, seeds 1-5) built once per session.
"""
import itertools
import math
import time

import numpy as np
import pytest

from gradlre.cda import (
    SpanSamplerConfig,
    build_ngram_fill_model,
    fill,
    masking_budget,
    plan_masks,
    sample_span_lengths,
    span_length_mean,
    span_length_pmf,
)
from gradlre.cli import main
from gradlre.config import config_from_dict
from gradlre.data import LabelInventory, RelationMention
from gradlre.evaluation import PredictionSet, _canonical_sign, pca2, score
from gradlre.experiment import run_seed
from gradlre.girl import GirlConfig, GirlState, PseudoSample, correct_state, reward, run_episode
from gradlre.model import cross_entropy, forward, grad_batch, grad_sample, init_params
from gradlre.synthetic import generate_synthetic

SEEDS = (1, 2, 3, 4, 5)
TIE = 0.005     # 0.5 F1 points


def _random_params(rng, k, d, hidden):
    p = init_params(k, d, hidden)
    return p.unflatten(rng.normal(scale=0.7, size=p.size))


# -- 1 ------------------------------------------------------------------------------

def test_criterion_01_gradient_check(verdict):
    rng = np.random.default_rng(20240101)
    start = time.perf_counter()
    worst = 0.0
    eps = 1e-5
    for draw in range(100):
        k, d = int(rng.integers(2, 6)), int(rng.integers(2, 8))
        hidden = 0 if draw % 2 == 0 else int(rng.integers(2, 5))
        params = _random_params(rng, k, d, hidden)
        h = rng.normal(size=d)
        y = int(rng.integers(k))
        theta = params.flatten()
        fd = np.empty_like(theta)
        for i in range(len(theta)):
            up, dn = theta.copy(), theta.copy()
            up[i] += eps
            dn[i] -= eps
            fd[i] = (cross_entropy(forward(params.unflatten(up), h), y)
                     - cross_entropy(forward(params.unflatten(dn), h), y)) / (2 * eps)
        an = grad_sample(params, h, y)
        rel = np.linalg.norm(an - fd) / max(np.linalg.norm(an), np.linalg.norm(fd), 1e-300)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 5.0
    verdict(1, ok, f"max relative error {worst:.2e} (< 1e-6), {elapsed:.2f}s (< 5s)")
    assert ok


# -- 2 ------------------------------------------------------------------------------

def test_criterion_02_reward_algebra(verdict):
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(10_000):
        dim = int(rng.integers(1, 40))
        g = rng.normal(size=dim) * 10.0 ** rng.uniform(-6, 6)
        other = rng.normal(size=dim)
        c = rng.normal() * 10.0 ** rng.uniform(-3, 3)
        r = reward(g, other)
        checks = [
            -1.0 <= r <= 1.0,
            abs(reward(g, g) - 1.0) <= 1e-12,
            abs(reward(g, -g) + 1.0) <= 1e-12,
            c == 0 or abs(reward(g, c * g) - math.copysign(1.0, c)) <= 1e-12,
            reward(np.zeros(dim), other) == 0.0,
            reward(g, np.zeros(dim)) == 0.0,
        ]
        bad += not all(checks)
    verdict(2, bad == 0, f"{bad} of 10000 random pairs violate the reward identities")
    assert bad == 0


# -- 3 ------------------------------------------------------------------------------

def test_criterion_03_running_mean_identity(verdict):
    rng = np.random.default_rng(3)
    worst = 0.0
    for trial in range(20):
        k, d, n = 4, 6, int(rng.integers(1, 12))
        params = _random_params(rng, k, d, 0 if trial % 2 else 3)
        H, y = rng.normal(size=(n, d)), rng.integers(k, size=n)
        state = GirlState.initial(params, H, y)
        contributions = list(grad_batch(params, H, y))
        cfg = GirlConfig(lam=float(rng.uniform(-0.3, 0.1)), gl_recompute="never", rl_step_size=0.05)
        for _ in range(int(rng.integers(1, 5))):
            batch = rng.normal(size=(int(rng.integers(1, 17)), d))
            before = state.params
            state, rep = run_episode(state, batch, cfg)
            for h, label, ok in zip(batch, rep.labels, rep.accepted):
                if ok:
                    contributions.append(grad_sample(before, h, label))
        # a hand-driven sequence through correct_state as well
        for _ in range(int(rng.integers(0, 6))):
            g_p = rng.normal(size=state.g_l.shape)
            state = correct_state(state, PseudoSample(rng.normal(size=d), 1, 1.0, True), g_p, lam=0.5)
            contributions.append(g_p)
        direct = np.mean(contributions, axis=0)
        assert state.n_effective == len(contributions)
        worst = max(worst, float(np.max(np.abs(state.g_l - direct))))
    ok = worst <= 1e-12
    verdict(3, ok, f"max |g_l - direct mean| {worst:.2e} (<= 1e-12) over 20 seeded sequences")
    assert ok


# -- 4 ------------------------------------------------------------------------------

def test_criterion_04_reinforce_identity(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    for trial in range(30):
        k, d = 5, 7
        params = _random_params(rng, k, d, 0 if trial % 2 else 4)
        state = GirlState.initial(params, rng.normal(size=(8, d)), rng.integers(k, size=8))
        batch = rng.normal(size=(16, d))
        step = float(rng.uniform(0.001, 0.5))
        cfg = GirlConfig(lam=float(rng.uniform(-0.5, 0.5)), rl_step_size=step)
        new, rep = run_episode(state, batch, cfg)
        expected = -step * sum(r * grad_sample(params, h, y) for r, h, y in zip(rep.rewards, batch, rep.labels))
        delta = new.params.flatten() - params.flatten()
        worst = max(worst, float(np.max(np.abs(delta - expected))))
    ok = worst <= 1e-10
    verdict(4, ok, f"max |update - (-step * sum R_t grad_t)| {worst:.2e} (<= 1e-10)")
    assert ok


# -- 5 ------------------------------------------------------------------------------

def test_criterion_05_truncated_geometric(verdict):
    cfg = SpanSamplerConfig(geo_p=0.2, min_len=1, max_len=10)
    closed = span_length_mean(cfg)
    brute = math.fsum(k * 0.2 * 0.8 ** (k - 1) for k in range(1, 11)) / math.fsum(
        0.2 * 0.8 ** (k - 1) for k in range(1, 11))
    mean = float(sample_span_lengths(cfg, np.random.default_rng(5), 100_000).mean())
    draws = sample_span_lengths(cfg, np.random.default_rng(55), 1_000_000)
    freq = np.bincount(draws, minlength=11)[1:] / len(draws)
    bin_err = float(np.max(np.abs(freq - span_length_pmf(cfg))))
    ok = (abs(closed - brute) < 1e-12 and abs(closed - 3.797) < 5e-4 and abs(closed - 3.8) < 0.005
          and abs(mean - closed) <= 0.05 and bin_err <= 0.003 and draws.min() >= 1 and draws.max() <= 10)
    verdict(5, ok, f"closed form {closed:.6f}, empirical mean {mean:.4f} (+-0.05), "
                   f"max PMF bin error {bin_err:.5f} (<= 0.003)")
    assert ok


# -- 6 ------------------------------------------------------------------------------

def _fuzz_mentions(rng, count):
    words = ["a", "b", "c", "##d", "##e", "f", "g.", ","]
    out = []
    while len(out) < count:
        n = int(rng.integers(2, 40))
        la, lb = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        if la + lb >= n:    # nothing left to mask; covered by the NothingMaskable unit test
            continue
        s1 = int(rng.integers(0, n - la - lb + 1))
        s2 = int(rng.integers(s1 + la, n - lb + 1))
        spans = [(s1, s1 + la), (s2, s2 + lb)]
        if rng.random() < 0.5:
            spans.reverse()
        tokens = tuple(words[i] for i in rng.integers(len(words), size=n))
        out.append(RelationMention(tokens, spans[0], spans[1]))
    return out


def test_criterion_06_cda_invariants(verdict):
    rng = np.random.default_rng(6)
    corpus = generate_synthetic("semeval-like", 400, seed=6)
    mentions = [m for m in corpus.mentions if not m.entity_mask().all()] + _fuzz_mentions(rng, 600)
    model = build_ngram_fill_model(corpus)
    violations = 0
    plans = 0
    for i in range(10_000):
        m = mentions[i % len(mentions)]
        cfg = SpanSamplerConfig(budget_fraction=float(rng.choice([0.15, 0.15, 0.3, 0.6])), seed=i)
        plan = plan_masks(m, cfg)
        plans += 1
        masked = plan.masked_positions
        mask = m.entity_mask()
        ok = (
            not any(mask[p] for p in masked)
            and len(masked) <= masking_budget(m, cfg)
            and len(set(masked)) == len(masked)
            and all(1 <= e - s <= 10 for s, e in plan.mask_spans)
        )
        out = fill(plan, model, seed=[i, 1])
        ok = ok and len(out.tokens) == len(m.tokens) and out.e1_span == m.e1_span and out.e2_span == m.e2_span
        ok = ok and all(out.tokens[j] == m.tokens[j] for j in range(len(m.tokens)) if j not in set(masked))
        violations += not ok
    verdict(6, violations == 0 and plans == 10_000,
            f"{violations} violations over {plans} seeded augmentation plans")
    assert violations == 0 and plans == 10_000


# -- 7 ------------------------------------------------------------------------------

def _confusion_oracle(pairs, k, nr):
    conf = [[0] * k for _ in range(k)]
    for g, p in pairs:
        conf[g][p] += 1
    tp = sum(conf[c][c] for c in range(k) if c != nr)
    pred_pos = sum(conf[g][p] for g, p in itertools.product(range(k), range(k)) if p != nr)
    gold_pos = sum(conf[g][p] for g, p in itertools.product(range(k), range(k)) if g != nr)
    prec = tp / pred_pos if pred_pos else 0.0
    rec = tp / gold_pos if gold_pos else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return tp, pred_pos, gold_pos, prec, rec, f1


def test_criterion_07_scorer_oracle(verdict):
    rng = np.random.default_rng(7)
    mismatches = metamorphic = 0
    for _ in range(1000):
        k = int(rng.integers(2, 6))
        nr = int(rng.integers(k))
        inv = LabelInventory(tuple(f"r{i}" for i in range(k)), nr)
        n = int(rng.integers(1, 25))
        pairs = [(int(g), int(p)) for g, p in rng.integers(k, size=(n, 2))]
        rep = score(PredictionSet(tuple(pairs), inv))
        got = (rep.tp, rep.pred_pos, rep.gold_pos, rep.precision, rep.recall, rep.f1)
        mismatches += got != _confusion_oracle(pairs, k, nr)
        pos = int(rng.integers(n + 1))
        grown = pairs[:pos] + [(nr, nr)] + pairs[pos:]
        metamorphic += score(PredictionSet(tuple(grown), inv)) != rep
    ok = mismatches == 0 and metamorphic == 0
    verdict(7, ok, f"{mismatches} oracle mismatches, {metamorphic} metamorphic violations in 1000 sets")
    assert ok


# -- 8 / 9 ----------------------------------------------------------------------------

def _config(mode):
    return config_from_dict({
        "mode": mode, "seeds": list(SEEDS),
        "data": {"preset": "semeval-like", "n_mentions": 4000, "labeled_fraction": 0.05,
                 "unlabeled_fraction": 0.5},
    })


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    runs, seconds = {}, {}
    for mode in ("gradlre", "self-train", "supervised", "gradlre-cda", "gold-upper-bound"):
        cfg = _config(mode)
        start = time.perf_counter()
        runs[mode] = [run_seed(cfg, s, root / mode) for s in SEEDS]
        seconds[mode] = time.perf_counter() - start
    return runs, seconds


def _mean_f1(results):
    return float(np.mean([r.summary.final_test_f1 for r in results]))


def test_criterion_08_gradlre_beats_self_training(desk_runs, verdict):
    runs, seconds = desk_runs
    g, s = runs["gradlre"], runs["self-train"]
    g_f1, s_f1 = _mean_f1(g), _mean_f1(s)
    wins = 0
    pseudo = []
    for a, b in zip(g, s):
        pa, pb = a.summary.final_pseudo_f1, b.summary.final_pseudo_f1
        pseudo.append(f"{'n/a' if pa is None else f'{pa:.3f}'}/{pb:.3f}")
        wins += pa is not None and pa > pb
    runtime = seconds["gradlre"] + seconds["self-train"]
    accepted = sum(len(r.run_log.accepted) for r in g)
    ok = g_f1 > s_f1 and wins >= 4 and runtime < 120
    verdict(8, ok, f"test F1 gradlre {g_f1:.4f} vs self-train {s_f1:.4f}; pseudo-label F1 "
                   f"(gradlre/self-train) {', '.join(pseudo)}: gradlre ahead on {wins}/5 (need 4); "
                   f"gradlre accepted {accepted} pseudo-labels; {runtime:.1f}s (< 120s)")
    assert ok


def test_criterion_09_scenario_ordering(desk_runs, verdict):
    runs, _ = desk_runs
    m = {mode: _mean_f1(r) for mode, r in runs.items()}
    ok = (m["gold-upper-bound"] >= m["gradlre"] - TIE
          and m["gradlre"] >= m["supervised"] - TIE
          and m["gradlre-cda"] >= m["supervised"] - TIE)
    verdict(9, ok, f"mean F1 gold {m['gold-upper-bound']:.4f} >= gradlre {m['gradlre']:.4f} >= "
                   f"supervised {m['supervised']:.4f}; gradlre-cda {m['gradlre-cda']:.4f} >= supervised "
                   f"(ties within 0.005)")
    assert ok


# -- 10 -----------------------------------------------------------------------------

def test_criterion_10_pca(desk_runs, verdict):
    rng = np.random.default_rng(10)
    worst_orth = worst_proj = 0.0
    for _ in range(200):
        dim = int(rng.integers(2, 6))
        n = int(rng.integers(3, 30))
        scales = np.sort(rng.uniform(0.1, 3.0, size=dim))[::-1] * np.linspace(1.0, 0.3, dim)
        basis = np.linalg.qr(rng.normal(size=(dim, dim)))[0]
        X = (rng.normal(size=(n, dim)) * scales) @ basis.T + rng.normal(size=dim)
        res = pca2(list(X))
        C = res.components
        worst_orth = max(worst_orth, float(np.max(np.abs(C @ C.T - np.eye(2)))))
        Xc = X - X.mean(axis=0)
        vals, vecs = np.linalg.eigh(Xc.T @ Xc)
        order = np.argsort(vals)[::-1]
        if dim > 2 and (vals[order[1]] - vals[order[2]]) < 1e-6 * vals[order[0]]:
            continue
        if (vals[order[0]] - vals[order[1]]) < 1e-6 * vals[order[0]]:
            continue
        oracle = np.stack([_canonical_sign(vecs[:, order[j]]) for j in range(2)])
        worst_proj = max(worst_proj, float(np.max(np.abs(Xc @ oracle.T - res.points))))
    runs, _ = desk_runs
    files = [r.out_dir / "pca.csv" for r in runs["gradlre"] + runs["gradlre-cda"]]
    emitted = all(f.exists() and {"step", "pc1", "pc2"} <= set(f.read_text().splitlines()[0].split(","))
                  for f in files)
    ok = worst_orth <= 1e-8 and worst_proj <= 1e-6 and emitted
    verdict(10, ok, f"orthonormality error {worst_orth:.1e} (<= 1e-8), projection error vs eigh "
                    f"{worst_proj:.1e} (<= 1e-6), step/pc1/pc2 file for {len(files)} GIRL runs: {emitted}")
    assert ok


# -- 11 -----------------------------------------------------------------------------

CFG = """\
seeds: [1, 2]
data: {n_mentions: 760, labeled_fraction: 0.1, unlabeled_fraction: 0.4}
encoder: {h_R: 64}
sgd: {epochs: 40}
girl: {segments: 4}
out_dir: runs/default
"""


def _all_commands(root, monkeypatch):
    root.mkdir()
    monkeypatch.chdir(root)
    (root / "cfg.yaml").write_text(CFG)
    cmds = [
        ["gen-corpus", "--n", "760", "--seed", "11", "--out", "c.jsonl"],
        ["split", "--corpus", "c.jsonl", "--labeled", "0.1", "--unlabeled", "0.4", "--seed", "3",
         "--out-dir", "split"],
        ["augment", "--labeled", "split/labeled.jsonl", "--n-out", "80", "--out", "aug.jsonl"],
    ]
    cmds += [["train", "--config", "cfg.yaml", "--mode", m, "--out-dir", f"runs/{m}"]
             for m in ("supervised", "self-train", "gradlre", "gradlre-cda", "gold-upper-bound")]
    cmds += [
        ["eval", "--checkpoint", "runs/gradlre/seed-2/checkpoint.json", "--corpus", "split/test.jsonl",
         "--out", "eval.json"],
        ["report", "runs", "--out", "report"],
    ]
    for argv in cmds:
        assert main(argv) == 0, argv
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_determinism(tmp_path, monkeypatch, capsys, verdict):
    first = _all_commands(tmp_path / "first", monkeypatch)
    out1 = capsys.readouterr().out
    second = _all_commands(tmp_path / "second", monkeypatch)
    out2 = capsys.readouterr().out
    differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    ok = not differing and out1 == out2
    verdict(11, ok, f"{len(first)} files from gen-corpus/split/augment/train x5 modes/eval/report; "
                    f"{len(differing)} differ between identical re-runs")
    assert ok
