"""Synthetic generator, recovery scoring, pipeline driver, and sweeps."""

import json
from dataclasses import replace

import numpy as np
import pytest

from tempora.config import AppConfig
from tempora.harness import (
    HarnessError,
    SyntheticSpec,
    align_vocab_columns,
    default_transition,
    generate_synthetic,
    greedy_topic_match,
    recovery_score,
    run_pipeline,
    spec_from_json,
    sweep_dim,
    sweep_seqlen,
    write_csv,
    write_synthetic_jsonl,
)

SMALL = SyntheticSpec(k=2, v=16, num_slices=4, docs_per_slice=3, doc_length=8, seed=5)
SMALL_CFG = AppConfig(num_slices=4, embed_dim=8, k=2, epochs=8)


# --- spec validation and defaults --------------------------------------------------

def test_spec_rejects_bad_dimensions():
    with pytest.raises(HarnessError):
        SyntheticSpec(k=0)
    with pytest.raises(HarnessError):
        SyntheticSpec(num_slices=1)
    with pytest.raises(HarnessError):
        SyntheticSpec(sigma=-0.1)
    with pytest.raises(HarnessError):
        SyntheticSpec(k=5, v=3)


def test_spec_validates_supplied_matrices():
    with pytest.raises(HarnessError):
        SyntheticSpec(k=2, v=4, a_true=np.eye(3))
    with pytest.raises(HarnessError):
        SyntheticSpec(k=2, v=4, phi_true=np.full((2, 4), 0.3))


def test_default_transition_rows_and_mass():
    a = default_transition(4, off_mass=0.2)
    assert np.allclose(a.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(np.diag(a), 0.8, atol=1e-12)
    off = a[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 0.2 / 3, atol=1e-12)


def test_default_transition_single_topic():
    assert np.array_equal(default_transition(1), np.eye(1))


# --- generate_synthetic --------------------------------------------------------------

def test_generated_corpus_shape():
    corpus, truth = generate_synthetic(SMALL)
    assert len(corpus) == SMALL.num_slices * SMALL.docs_per_slice
    assert len(corpus.vocabulary.terms) == SMALL.v
    assert truth.theta.shape == (SMALL.num_slices, SMALL.k)
    assert truth.phi_true.shape == (SMALL.k, SMALL.v)
    for doc in corpus.documents:
        assert len(doc.tokens) == SMALL.doc_length
        assert doc.label in {"topic0", "topic1"}
        assert 0 <= doc.timestamp < SMALL.num_slices


def test_identity_dynamics_hold_theta_constant():
    spec = replace(SMALL, sigma=0.0, a_true=np.eye(2))
    _, truth = generate_synthetic(spec)
    for t in range(1, spec.num_slices):
        assert np.allclose(truth.theta[t], truth.theta[0], atol=1e-12)


def test_permutation_dynamics_alternate():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    spec = replace(SMALL, sigma=0.0, a_true=P)
    _, truth = generate_synthetic(spec)
    assert np.allclose(truth.theta[2], truth.theta[0], atol=1e-12)
    assert np.allclose(truth.theta[1], truth.theta[0][::-1], atol=1e-12)


def test_generation_deterministic():
    c1, t1 = generate_synthetic(SMALL)
    c2, t2 = generate_synthetic(SMALL)
    assert np.array_equal(t1.theta, t2.theta)
    assert np.array_equal(t1.phi_true, t2.phi_true)
    assert [d.tokens for d in c1.documents] == [d.tokens for d in c2.documents]
    assert [d.id for d in c1.documents] == [d.id for d in c2.documents]


def test_true_trajectory_on_simplex():
    spec = replace(SMALL, k=3, v=18, sigma=0.3, num_slices=30)
    _, truth = generate_synthetic(spec)
    assert np.allclose(truth.theta.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(truth.theta >= 0)


def test_document_frequencies_match_tokens():
    corpus, _ = generate_synthetic(SMALL)
    df = np.zeros(SMALL.v, dtype=np.int64)
    for doc in corpus.documents:
        df[list(set(doc.tokens))] += 1
    assert np.array_equal(corpus.vocabulary.df, df)


# --- recovery_score -------------------------------------------------------------------

def _truth(k=3, v=12, seed=6):
    rng = np.random.default_rng(seed)
    a = default_transition(k)
    phi = rng.random((k, v)) + 0.05
    phi /= phi.sum(axis=1, keepdims=True)
    return a, phi


def test_recovery_of_truth_is_exact():
    a, phi = _truth()
    score = recovery_score(a, phi, a, phi)
    assert score.frobenius_error < 1e-12
    assert abs(score.phi_match - 1.0) < 1e-12
    assert score.permutation == (0, 1, 2)


def test_recovery_undoes_permutation():
    a, phi = _truth()
    perm = np.array([2, 0, 1])
    a_est = a[np.ix_(perm, perm)]
    phi_est = phi[perm]
    score = recovery_score(a_est, phi_est, a, phi)
    assert score.frobenius_error < 1e-12
    assert abs(score.phi_match - 1.0) < 1e-12
    # permutation[t] is the estimated row holding true topic t
    assert tuple(perm[list(score.permutation)]) == (0, 1, 2)


def test_recovery_measures_perturbation_norm():
    a, phi = _truth(k=2, v=8)
    E = np.array([[0.05, -0.05], [-0.05, 0.05]])
    P = np.array([1, 0])
    a_est = (a + E)[np.ix_(P, P)]
    phi_est = phi[P]
    score = recovery_score(a_est, phi_est, a, phi)
    assert abs(score.frobenius_error - 0.1) < 1e-9
    assert abs(score.phi_match - 1.0) < 1e-12


def test_recovery_shape_mismatch():
    a, phi = _truth(k=2, v=8)
    with pytest.raises(HarnessError):
        recovery_score(a, phi, a, phi[:, :6])
    with pytest.raises(HarnessError):
        recovery_score(np.eye(3), phi, a, phi)


def test_greedy_match_identity_on_self():
    _, phi = _truth()
    assert np.array_equal(greedy_topic_match(phi, phi), np.arange(3))


def test_align_vocab_columns_reorders_and_zero_fills():
    phi = np.array([[0.5, 0.3, 0.2]])
    out = align_vocab_columns(phi, ("b", "c", "a"), ("a", "b", "c", "d"))
    assert np.allclose(out, [[0.2, 0.5, 0.3, 0.0]], atol=1e-15)


# --- spec_from_json --------------------------------------------------------------------

def test_spec_json_round_trip(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({
        "k": 2, "v": 10, "num_slices": 3, "docs_per_slice": 2,
        "doc_length": 5, "sigma": 0.0, "seed": 4,
        "a_true": [[1.0, 0.0], [0.0, 1.0]],
    }))
    spec = spec_from_json(path)
    assert spec.k == 2 and spec.v == 10 and spec.seed == 4
    assert np.array_equal(spec.a_true, np.eye(2))
    assert spec.phi_true is None


def test_spec_json_unknown_field(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text('{"k": 2, "v": 10, "topics": 3}')
    with pytest.raises(HarnessError, match="topics"):
        spec_from_json(path)


def test_spec_json_missing_file(tmp_path):
    with pytest.raises(HarnessError, match="not found"):
        spec_from_json(tmp_path / "absent.json")


def test_spec_json_not_an_object(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text("[1, 2]")
    with pytest.raises(HarnessError):
        spec_from_json(path)


# --- run_pipeline and sweeps -------------------------------------------------------------

def test_pipeline_shapes():
    corpus, _ = generate_synthetic(SMALL)
    res = run_pipeline(corpus, SMALL_CFG)
    n, k = len(corpus), SMALL_CFG.k
    assert res.embeddings.rows.shape == (n, SMALL_CFG.embed_dim)
    assert res.result.assignments.theta_doc.shape == (n, k)
    assert res.result.assignments.theta_slice.shape == (SMALL_CFG.num_slices, k)
    assert res.result.params.phi.shape == (k, SMALL.v)
    assert len(res.result.history) == SMALL_CFG.epochs
    assert res.report.perplexity > 0


def test_pipeline_deterministic():
    corpus, _ = generate_synthetic(SMALL)
    r1 = run_pipeline(corpus, SMALL_CFG)
    r2 = run_pipeline(corpus, SMALL_CFG)
    assert np.array_equal(r1.result.params.W, r2.result.params.W)
    assert r1.report.perplexity == r2.report.perplexity


def test_sweep_dim_rows_match_standalone_runs(tmp_path):
    corpus, _ = generate_synthetic(SMALL)
    rows = sweep_dim(corpus, SMALL_CFG, [4, 8])
    assert [r[0] for r in rows] == [4, 8]
    for d, coherence, diversity in rows:
        solo = run_pipeline(corpus, replace(SMALL_CFG, embed_dim=d))
        assert coherence == solo.report.coherence
        assert diversity == solo.report.diversity

    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    header = ["embed_dim", "coherence", "diversity"]
    write_csv(p1, header, rows)
    write_csv(p2, header, sweep_dim(corpus, SMALL_CFG, [4, 8]))
    assert p1.read_bytes() == p2.read_bytes()


def test_sweep_seqlen_rows_match_standalone_runs():
    rows = sweep_seqlen(SMALL, SMALL_CFG, [3, 4])
    assert [r[0] for r in rows] == [3, 4]
    for length, ppl, diversity, coherence, stability in rows:
        corpus, _ = generate_synthetic(replace(SMALL, num_slices=length))
        solo = run_pipeline(corpus, replace(SMALL_CFG, num_slices=length))
        assert ppl == solo.report.perplexity
        assert diversity == solo.report.diversity
        assert coherence == solo.report.coherence
        assert stability == solo.report.stability


def test_write_csv_fixed_precision(tmp_path):
    path = tmp_path / "out.csv"
    write_csv(path, ["a", "b"], [(1, 0.123456789), (2, 3.0)])
    assert path.read_text() == "a,b\n1,0.123457\n2,3.000000\n"


def test_synthetic_jsonl_is_loadable(tmp_path):
    from tempora.corpus import load_corpus

    corpus, _ = generate_synthetic(SMALL)
    path = tmp_path / "synth.jsonl"
    write_synthetic_jsonl(corpus, path)
    loaded, report = load_corpus(path)
    assert report.documents_loaded == len(corpus)
    assert [d.id for d in loaded.documents] == [d.id for d in corpus.documents]
    assert [d.label for d in loaded.documents] == [d.label for d in corpus.documents]
