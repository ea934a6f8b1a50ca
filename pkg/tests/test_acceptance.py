"""Acceptance gate: end-to-end checks with pinned tolerances and runtime budgets.

One check is known to fail: transition recovery at default training settings
(test_03). The training signal that survives attention pooling at d=128 is too
weak to pull the transition estimate away from its initialization; the test
states the bar and reports the measured miss rather than lowering it. See
README "Known limitations".
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest

from tempora.cli import cli_dispatch
from tempora.config import AppConfig
from tempora.corpus import TimeSliceIndex, slice_by_time
from tempora.embed import LocalProjectionEmbedder, embed_corpus
from tempora.harness import (
    SyntheticSpec,
    default_transition,
    generate_synthetic,
    recovery_score,
    run_pipeline,
)
from tempora.metrics import (
    perplexity,
    topic_coherence_npmi,
    topic_diversity,
    topic_stability,
)
from tempora.model import (
    ModelParams,
    forecast,
    gradients,
    joint_loss,
    slice_topic_state,
    topic_distribution,
)
from tempora.temporal import DecayConfig, attention_weights

RECOVERY_SPEC = SyntheticSpec(
    k=3, v=50, num_slices=40, docs_per_slice=20, doc_length=30,
    sigma=0.01, a_true=default_transition(3, off_mass=0.2),
)


def _random_slices(rng, n):
    cuts = np.sort(rng.integers(0, 4, size=n))
    slice_of = (cuts - cuts[0]).astype(np.int64)
    # compact labels: make them consecutive starting at 0
    _, slice_of = np.unique(slice_of, return_inverse=True)
    t = int(slice_of.max()) + 1
    return TimeSliceIndex(num_slices=t, slice_of=slice_of,
                          boundaries=np.linspace(0.0, float(t), t + 1))


def _unit_rows(rng, n, d):
    h = rng.standard_normal((n, d))
    return h / np.linalg.norm(h, axis=1, keepdims=True)


def _dense_reference(H, slices, window):
    """Decay-free windowed scaled-dot-product attention, plain loops."""
    n, d = H.shape
    out = np.zeros((n, n))
    for i in range(n):
        t_i = slices.slice_of[i]
        idx = [
            j for j in range(n)
            if window < 0 or abs(int(slices.slice_of[j]) - int(t_i)) <= window
        ]
        scores = np.array([H[i] @ H[j] / np.sqrt(d) for j in idx])
        scores -= scores.max()
        w = np.exp(scores)
        out[i, idx] = w / w.sum()
    return out


def test_01_attention_rows_normalized_and_match_reference():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    for case in range(1000):
        n = int(rng.integers(2, 25))
        d = int(rng.integers(2, 17))
        lam = 0.0 if case % 2 == 0 else float(rng.uniform(0.01, 2.0))
        window = int(rng.choice([-1, 0, 1, 2, 3, 5]))
        H = _unit_rows(rng, n, d)
        slices = _random_slices(rng, n)
        attn = attention_weights(H, slices, DecayConfig(lam=lam, window=window))
        sums = attn.row_sums()
        assert np.max(np.abs(sums - 1.0)) < 1e-9, f"case {case}: row sums off"
        if lam == 0.0:
            dense = attn.to_dense()
            ref = _dense_reference(H, slices, window)
            assert np.max(np.abs(dense - ref)) < 1e-12, f"case {case}: reference mismatch"
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"attention fuzz took {elapsed:.1f}s (budget 10s)"


def test_02_gradients_match_finite_differences():
    rng = np.random.default_rng(77)
    step = 1e-5
    worst = 0.0
    started = time.perf_counter()
    for case in range(102):
        k = int(rng.integers(2, 6))
        d = int(rng.integers(2, 17))
        n = int(rng.integers(4, 31))
        v = int(rng.integers(6, 13))
        beta = (0.0, 0.5, 2.0)[case % 3]
        supervised = case % 2 == 1

        pooled = rng.standard_normal((n, d))
        slices = _random_slices(rng, n)
        params = ModelParams(
            W=rng.standard_normal((k, d)) * 0.3,
            b=rng.standard_normal(k) * 0.3,
            A=np.eye(k) + 0.1 * rng.standard_normal((k, k)),
            phi=rng.dirichlet(np.ones(v), size=k),
            beta=beta,
        )
        if supervised:
            kwargs = {"targets": np.eye(k)[rng.integers(0, k, size=n)]}
        else:
            kwargs = {"counts": rng.integers(1, 5, size=(n, v)).astype(float)}

        def total(W, b, A):
            p = ModelParams(W=W, b=b, A=A, phi=params.phi, beta=beta)
            th = topic_distribution(pooled, W, b)
            ts = slice_topic_state(th, slices)
            return joint_loss(th, ts, p, **kwargs).total

        theta_doc = topic_distribution(pooled, params.W, params.b)
        theta_slice = slice_topic_state(theta_doc, slices)
        gw, gb, ga = gradients(pooled, slices, theta_doc, theta_slice, params, **kwargs)

        for grad, base, name in ((gw, params.W, "W"), (gb, params.b, "b"), (ga, params.A, "A")):
            flat = base.ravel()
            for j in range(flat.size):
                e = np.zeros_like(flat)
                e[j] = step
                pert = e.reshape(base.shape)
                args = {"W": params.W, "b": params.b, "A": params.A}
                args[name] = base + pert
                up = total(**args)
                args[name] = base - pert
                down = total(**args)
                fd = (up - down) / (2 * step)
                an = grad.ravel()[j]
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
                worst = max(worst, rel)
    elapsed = time.perf_counter() - started
    assert worst < 1e-4, f"max relative gradient error {worst:.3e}"
    assert elapsed < 60.0, f"gradient check took {elapsed:.1f}s (budget 60s)"


def test_03_transition_recovery_across_seeds():
    cfg = AppConfig(num_slices=40, k=3)
    started = time.perf_counter()
    wins = 0
    outcomes = []
    for seed in range(10):
        corpus, truth = generate_synthetic(replace(RECOVERY_SPEC, seed=seed))
        res = run_pipeline(corpus, cfg)
        score = recovery_score(
            res.result.params.A, res.result.params.phi, truth.a_true, truth.phi_true
        )
        ok = score.frobenius_error < 0.15 and score.phi_match > 0.9
        wins += ok
        outcomes.append(
            f"seed {seed}: frob={score.frobenius_error:.4f} phi={score.phi_match:.4f}"
            f" {'pass' if ok else 'miss'}"
        )
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0, f"recovery runs took {elapsed:.1f}s (budget 120s)"
    assert wins >= 8, (
        f"transition recovery met the bar in {wins}/10 seeds (need 8):\n"
        + "\n".join(outcomes)
    )


def test_04_consistency_term_improves_stability():
    spec = replace(RECOVERY_SPEC, sigma=0.05)
    cfg = AppConfig(num_slices=40, k=3)
    started = time.perf_counter()
    wins = 0
    pairs = []
    for seed in range(10):
        corpus, _ = generate_synthetic(replace(spec, seed=100 + seed))
        with_term = run_pipeline(corpus, replace(cfg, beta=1.0)).report.stability
        without = run_pipeline(corpus, replace(cfg, beta=0.0)).report.stability
        wins += with_term >= without
        pairs.append(f"seed {seed}: beta1={with_term:.8f} beta0={without:.8f}")
    elapsed = time.perf_counter() - started
    assert elapsed < 240.0, f"stability runs took {elapsed:.1f}s (budget 240s)"
    assert wins >= 8, (
        f"beta=1 matched or beat beta=0 stability in only {wins}/10 paired seeds:\n"
        + "\n".join(pairs)
    )


def test_05_metric_anchors():
    rng = np.random.default_rng(3)

    # uniform topic-word rows: every token is equally surprising
    for v in (7, 20, 33):
        counts = rng.integers(0, 4, size=(5, v)).astype(float)
        counts[0, 0] += 1
        theta = rng.dirichlet(np.ones(4), size=5)
        phi = np.full((4, v), 1.0 / v)
        assert round(perplexity(counts, theta, phi) - v, 9) == 0

    for k in (2, 5, 9):
        full_overlap = np.tile(np.arange(6), (k, 1))
        assert abs(topic_diversity(full_overlap) - 1.0 / k) < 1e-12
        disjoint = np.arange(6 * k).reshape(k, 6)
        assert topic_diversity(disjoint) == 1.0

    presence = np.array([[True, True], [False, False]])
    scores, _ = topic_coherence_npmi(np.array([[0, 1]]), presence, n=2)
    assert abs(scores[0] - 1.0) < 1e-12

    presence = np.array([[True, True], [True, False], [False, True], [False, False]])
    scores, _ = topic_coherence_npmi(np.array([[0, 1]]), presence, n=2)
    assert abs(scores[0]) < 1e-12


def test_06_end_to_end_determinism(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "k": 3, "v": 40, "num_slices": 10, "docs_per_slice": 8,
        "doc_length": 12, "sigma": 0.01, "seed": 21,
    }))
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("k = 3\nnum_slices = 10\nepochs = 60\nembed_dim = 32\n")

    def run(tag):
        d = tmp_path / tag
        d.mkdir()
        files = {
            "jsonl": d / "synth.jsonl", "truth": d / "truth.json",
            "corpus": d / "corpus.bin", "ckpt": d / "model.ckpt",
            "report": d / "report.json", "csv": d / "topics.csv",
        }
        assert cli_dispatch(["synth", "--spec", str(spec_path),
                             "--out", str(files["jsonl"]), "--truth", str(files["truth"])]) == 0
        assert cli_dispatch(["ingest", str(files["jsonl"]), "--out", str(files["corpus"]),
                             "--config", str(cfg_path)]) == 0
        assert cli_dispatch(["train", "--corpus", str(files["corpus"]),
                             "--config", str(cfg_path), "--out", str(files["ckpt"])]) == 0
        assert cli_dispatch(["evaluate", "--corpus", str(files["corpus"]),
                             "--ckpt", str(files["ckpt"]), "--out", str(files["report"]),
                             "--csv", str(files["csv"])]) == 0
        return files

    first = run("a")
    second = run("b")
    for key in ("ckpt", "report", "csv"):
        assert first[key].read_bytes() == second[key].read_bytes(), f"{key} differs"


def test_07_simplex_safety():
    rng = np.random.default_rng(9)

    for seed, mode in ((0, "unsupervised"), (1, "supervised")):
        spec = SyntheticSpec(k=2, v=20, num_slices=5, docs_per_slice=4,
                             doc_length=10, sigma=0.05, seed=seed)
        corpus, _ = generate_synthetic(spec)
        cfg = AppConfig(num_slices=5, embed_dim=16, k=2, epochs=20, mode=mode)
        res = run_pipeline(corpus, cfg)
        for arr in (res.result.assignments.theta_doc, res.result.assignments.theta_slice):
            assert np.max(np.abs(arr.sum(axis=1) - 1.0)) < 1e-9
            assert np.all(arr >= 0)
        rolled = forecast(res.result.assignments.theta_slice[-1], res.result.params.A, 10)
        assert np.max(np.abs(rolled.sum(axis=1) - 1.0)) < 1e-9

    for _ in range(200):
        k = int(rng.integers(2, 7))
        a = rng.standard_normal((k, k))  # negative entries almost surely
        theta = rng.dirichlet(np.ones(k))
        rolled = forecast(theta, a, steps=7)
        assert np.max(np.abs(rolled.sum(axis=1) - 1.0)) < 1e-9
        assert np.all(rolled >= 0)


def test_08_sweep_harness_smoke(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "k": 3, "v": 50, "num_slices": 40, "docs_per_slice": 20,
        "doc_length": 30, "sigma": 0.01, "seed": 0,
    }))
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("k = 3\nnum_slices = 40\n")
    cfg = AppConfig(num_slices=40, k=3)
    dim_csv = tmp_path / "dim.csv"
    len_csv = tmp_path / "len.csv"

    started = time.perf_counter()
    assert cli_dispatch(["sweep-dim", "--spec", str(spec_path), "--config", str(cfg_path),
                         "--values", "32,64,128", "--out", str(dim_csv)]) == 0
    assert cli_dispatch(["sweep-seqlen", "--spec", str(spec_path), "--config", str(cfg_path),
                         "--values", "10,20,40", "--out", str(len_csv)]) == 0
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0, f"sweeps took {elapsed:.1f}s (budget 300s)"

    corpus, _ = generate_synthetic(SyntheticSpec(
        k=3, v=50, num_slices=40, docs_per_slice=20, doc_length=30, sigma=0.01, seed=0))

    lines = dim_csv.read_text().splitlines()
    assert lines[0] == "embed_dim,coherence,diversity"
    assert len(lines) == 4
    for line, d in zip(lines[1:], (32, 64, 128)):
        solo = run_pipeline(corpus, replace(cfg, embed_dim=d)).report
        assert line == f"{d},{solo.coherence:.6f},{solo.diversity:.6f}"

    lines = len_csv.read_text().splitlines()
    assert lines[0] == "num_slices,perplexity,diversity,coherence,stability"
    assert len(lines) == 4
    for line, t in zip(lines[1:], (10, 20, 40)):
        sub, _ = generate_synthetic(SyntheticSpec(
            k=3, v=50, num_slices=t, docs_per_slice=20, doc_length=30, sigma=0.01, seed=0))
        solo = run_pipeline(sub, replace(cfg, num_slices=t)).report
        assert line == (
            f"{t},{solo.perplexity:.6f},{solo.diversity:.6f},"
            f"{solo.coherence:.6f},{solo.stability:.6f}"
        )
