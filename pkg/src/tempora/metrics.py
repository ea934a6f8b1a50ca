"""Evaluation metrics: perplexity, diversity, coherence, stability.

Adopted conventions, also echoed in every report's ``definitions`` map:

- perplexity: token-level, exp(-sum_dw c_dw log p(w|d) / total tokens) with
  p(w|d) = sum_k theta_dk phi_kw.
- top words: per-topic argsort of phi descending, ties broken toward the
  lower term index.
- diversity: unique terms among the top-n of every topic divided by K * n,
  n = 25.
- coherence: NPMI = log(p_ij / (p_i p_j)) / (-log p_ij) averaged over all
  top-10 word pairs per topic, probabilities measured as document frequency
  fractions; a zero joint count is replaced by eps = 1/N. Words absent from
  the corpus are excluded; a topic left with fewer than two present words
  scores 0 and is flagged in the report notes.
- stability: mean cosine similarity of adjacent slice topic states.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, counts_matrix
from .errors import TemporaError

DEFINITIONS = {
    "perplexity": "exp(-sum c_dw log(theta_d . phi_w) / sum c_dw), token-level mixture likelihood",
    "diversity": "unique terms among top-25 words per topic / (K * 25)",
    "coherence": "mean NPMI log(p_ij/(p_i p_j))/(-log p_ij) over top-10 word pairs; "
    "document co-occurrence fractions, eps = 1/N replaces a zero joint count",
    "stability": "mean cosine similarity of adjacent slice topic states",
}


class MetricsError(TemporaError):
    """Degenerate inputs: no tokens, too few slices, shape mismatches."""


@dataclass(frozen=True)
class MetricsReport:
    perplexity: float
    diversity: float
    coherence: float
    stability: float
    per_topic_coherence: list[float]
    top_words: list[list[str]]
    definitions: dict[str, str]
    notes: list[str]


def perplexity(counts: np.ndarray, theta_doc: np.ndarray, phi: np.ndarray) -> float:
    """Token-level perplexity of the bag-of-words under the topic mixture."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise MetricsError("perplexity needs a corpus with at least one token")
    mix = theta_doc @ phi
    observed = counts > 0  # zero counts contribute nothing, even at mix == 0
    log_lik = float(np.sum(counts[observed] * np.log(mix[observed])))
    return float(np.exp(-log_lik / total))


def top_words(phi: np.ndarray, n: int) -> np.ndarray:
    """(K, n) term indices of the n largest phi entries per topic.

    Stable argsort on -phi, so tied probabilities resolve to the lower
    term index.
    """
    if n < 1 or n > phi.shape[1]:
        raise MetricsError(f"top_words needs 1 <= n <= V, got n={n}, V={phi.shape[1]}")
    order = np.argsort(-phi, axis=1, kind="stable")
    return order[:, :n]


def topic_diversity(top: np.ndarray, n: int | None = None) -> float:
    """Fraction of unique terms across every topic's top-n list."""
    top = np.asarray(top)
    n = top.shape[1] if n is None else n
    return len(np.unique(top[:, :n])) / (top.shape[0] * n)


def _npmi(p_i: float, p_j: float, p_ij: float) -> float:
    denom = -math.log(p_ij)
    if denom == 0.0:
        # p_ij = 1 forces p_i = p_j = 1; the limit of the ratio is 1
        return 1.0
    return math.log(p_ij / (p_i * p_j)) / denom


def topic_coherence_npmi(
    top: np.ndarray, presence: np.ndarray, n: int = 10
) -> tuple[list[float], list[int]]:
    """Per-topic NPMI coherence from a boolean (N, V) document-term presence matrix.

    Returns (per-topic scores, indices of topics flagged for having fewer
    than two corpus-present top words; those score 0).
    """
    presence = np.asarray(presence, dtype=bool)
    n_docs = presence.shape[0]
    if n_docs == 0:
        raise MetricsError("coherence needs a non-empty corpus")
    eps = 1.0 / n_docs
    df = presence.sum(axis=0)
    scores: list[float] = []
    flagged: list[int] = []
    for t in range(top.shape[0]):
        words = [int(w) for w in top[t, :n] if df[w] > 0]
        if len(words) < 2:
            flagged.append(t)
            scores.append(0.0)
            continue
        cols = presence[:, words]
        joint = (cols[:, :, None] & cols[:, None, :]).sum(axis=0)
        marginals = df[words] / n_docs
        vals = []
        for a in range(len(words)):
            for b_ in range(a + 1, len(words)):
                p_ij = joint[a, b_] / n_docs if joint[a, b_] > 0 else eps
                vals.append(_npmi(marginals[a], marginals[b_], p_ij))
        scores.append(float(np.mean(vals)))
    return scores, flagged


def topic_stability(theta_slice: np.ndarray) -> float:
    """Mean cosine similarity between consecutive slice topic states."""
    theta_slice = np.asarray(theta_slice, dtype=np.float64)
    if theta_slice.shape[0] < 2:
        raise MetricsError("stability needs at least two slices")
    a = theta_slice[:-1]
    b = theta_slice[1:]
    dots = np.sum(a * b, axis=1)
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    if np.any(norms == 0.0):
        raise MetricsError("stability is undefined for zero slice states")
    return float(np.mean(dots / norms))


def evaluation_report(
    corpus: Corpus,
    theta_doc: np.ndarray,
    theta_slice: np.ndarray,
    phi: np.ndarray,
    diversity_n: int = 25,
    coherence_n: int = 10,
) -> MetricsReport:
    """Compose the four corpus-level metrics plus per-topic detail."""
    counts = counts_matrix(corpus)
    v = phi.shape[1]
    if counts.shape[1] != v:
        raise MetricsError(
            f"phi covers {v} terms but the corpus vocabulary has {counts.shape[1]}"
        )
    div_n = min(diversity_n, v)
    coh_n = min(coherence_n, v)
    top_div = top_words(phi, div_n)
    top_coh = top_words(phi, coh_n)
    per_topic, flagged = topic_coherence_npmi(top_coh, counts > 0, coh_n)
    notes = [
        f"topic {t}: fewer than two top words present in the corpus; coherence set to 0"
        for t in flagged
    ]
    if div_n < diversity_n:
        notes.append(f"diversity uses top-{div_n}: vocabulary smaller than {diversity_n}")
    terms = corpus.vocabulary.terms
    return MetricsReport(
        perplexity=perplexity(counts, theta_doc, phi),
        diversity=topic_diversity(top_div, div_n),
        coherence=float(np.mean(per_topic)),
        stability=topic_stability(theta_slice),
        per_topic_coherence=[float(x) for x in per_topic],
        top_words=[[terms[w] for w in row] for row in top_coh],
        definitions=dict(DEFINITIONS),
        notes=notes,
    )


def report_to_json(report: MetricsReport) -> str:
    """Deterministic JSON rendering (sorted keys, trailing newline)."""
    payload = {
        "perplexity": report.perplexity,
        "diversity": report.diversity,
        "coherence": report.coherence,
        "stability": report.stability,
        "per_topic_coherence": report.per_topic_coherence,
        "top_words": report.top_words,
        "definitions": report.definitions,
        "notes": report.notes,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_report(report: MetricsReport, path: str | Path, csv_path: str | Path | None = None) -> None:
    """Write the JSON report and, optionally, the per-topic coherence CSV."""
    Path(path).write_text(report_to_json(report), encoding="utf-8")
    if csv_path is not None:
        with Path(csv_path).open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["topic", "coherence", "top_words"])
            for t, score in enumerate(report.per_topic_coherence):
                writer.writerow([t, f"{score:.6f}", " ".join(report.top_words[t])])
