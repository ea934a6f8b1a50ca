"""Synthetic-data harness: generation with known dynamics, recovery scoring,
pipeline composition, and parameter sweeps.

The generator draws a topic trajectory theta_{t+1} = project(A_true theta_t
+ eps_t), then for every document in slice t samples a single topic from
theta_t and doc_length tokens i.i.d. from that topic's word distribution.
Single-topic documents keep the topic-word recovery oracle sharp. Everything
is driven by one seeded generator, so a spec reproduces bitwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import AppConfig
from .corpus import Corpus, Document, TimeSliceIndex, Vocabulary, slice_by_time
from .embed import EmbeddingMatrix, embed_corpus, make_provider
from .errors import TemporaError
from .metrics import MetricsReport, evaluation_report
from .model import (
    ModelParams,
    TrainConfig,
    TrainResult,
    simplex_project,
    topic_distribution,
    slice_topic_state,
    train,
)
from .temporal import DecayConfig, attention_weights, temporal_pool


class HarnessError(TemporaError):
    """Invalid synthetic specs or recovery inputs."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth description of a generated corpus.

    a_true / phi_true default to a near-diagonal transition (off-diagonal
    mass 0.2) and block-disjoint topic-word rows drawn from the same seed.
    """

    k: int = 3
    v: int = 50
    num_slices: int = 40
    docs_per_slice: int = 20
    doc_length: int = 30
    sigma: float = 0.01
    seed: int = 0
    a_true: np.ndarray | None = None
    phi_true: np.ndarray | None = None

    def __post_init__(self) -> None:
        if min(self.k, self.v, self.num_slices, self.docs_per_slice, self.doc_length) < 1:
            raise HarnessError("synthetic spec dimensions must all be >= 1")
        if self.num_slices < 2:
            raise HarnessError("synthetic spec needs num_slices >= 2")
        if self.sigma < 0:
            raise HarnessError("sigma must be >= 0")
        if self.v < self.k:
            raise HarnessError("need at least one word per topic (v >= k)")
        if self.a_true is not None:
            a = np.asarray(self.a_true, dtype=np.float64)
            if a.shape != (self.k, self.k) or not np.all(np.isfinite(a)):
                raise HarnessError("a_true must be a finite (k, k) matrix")
            object.__setattr__(self, "a_true", a)
        if self.phi_true is not None:
            p = np.asarray(self.phi_true, dtype=np.float64)
            if p.shape != (self.k, self.v) or np.any(p < 0):
                raise HarnessError("phi_true must be a nonnegative (k, v) matrix")
            if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9:
                raise HarnessError("phi_true rows must sum to 1")
            object.__setattr__(self, "phi_true", p)


@dataclass(frozen=True)
class GroundTruth:
    theta: np.ndarray  # (T_s, K) trajectory
    a_true: np.ndarray
    phi_true: np.ndarray
    terms: tuple[str, ...]


@dataclass(frozen=True)
class RecoveryScore:
    frobenius_error: float
    phi_match: float
    permutation: tuple[int, ...]


def default_transition(k: int, off_mass: float = 0.2) -> np.ndarray:
    """Row-stochastic near-diagonal transition with the given off-diagonal mass."""
    if k == 1:
        return np.eye(1)
    a = np.full((k, k), off_mass / (k - 1))
    np.fill_diagonal(a, 1.0 - off_mass)
    return a


def default_topic_word(k: int, v: int, rng: np.random.Generator) -> np.ndarray:
    """Block-disjoint topic-word rows: topic i owns an equal share of the
    vocabulary, with Dirichlet(1) weights inside its block."""
    phi = np.zeros((k, v))
    edges = np.linspace(0, v, k + 1).astype(int)
    for i in range(k):
        block = slice(edges[i], edges[i + 1])
        phi[i, block] = rng.dirichlet(np.ones(edges[i + 1] - edges[i]))
    return phi


def generate_synthetic(spec: SyntheticSpec) -> tuple[Corpus, GroundTruth]:
    """Build a corpus with known dynamics. Timestamps are slice indices; ids
    and labels are zero-padded so lexicographic order matches generation
    order and label sorting matches topic index order."""
    rng = np.random.default_rng(spec.seed)
    a_true = spec.a_true if spec.a_true is not None else default_transition(spec.k)
    phi_true = spec.phi_true if spec.phi_true is not None else default_topic_word(spec.k, spec.v, rng)

    theta = np.empty((spec.num_slices, spec.k))
    theta[0] = rng.dirichlet(np.ones(spec.k))
    for t in range(spec.num_slices - 1):
        eps = rng.standard_normal(spec.k) * spec.sigma
        theta[t + 1] = simplex_project(a_true @ theta[t] + eps)

    width = max(3, len(str(spec.v - 1)))
    terms = tuple(f"w{w:0{width}d}" for w in range(spec.v))
    label_width = len(str(spec.k - 1))
    id_width = len(str(spec.docs_per_slice - 1))
    t_width = len(str(spec.num_slices - 1))

    documents = []
    df = np.zeros(spec.v, dtype=np.int64)
    for t in range(spec.num_slices):
        for j in range(spec.docs_per_slice):
            z = int(rng.choice(spec.k, p=theta[t]))
            tokens = rng.choice(spec.v, size=spec.doc_length, p=phi_true[z])
            tokens = tuple(int(w) for w in tokens)
            df[np.unique(tokens)] += 1
            documents.append(
                Document(
                    id=f"d{t:0{t_width}d}-{j:0{id_width}d}",
                    timestamp=t,
                    tokens=tokens,
                    raw_text=" ".join(terms[w] for w in tokens),
                    label=f"topic{z:0{label_width}d}",
                )
            )
    corpus = Corpus(tuple(documents), Vocabulary(terms, df))
    return corpus, GroundTruth(theta=theta, a_true=a_true, phi_true=phi_true, terms=terms)


def greedy_topic_match(phi_est: np.ndarray, phi_true: np.ndarray) -> np.ndarray:
    """perm[k_true] = estimated row matched greedily by descending cosine."""
    k = phi_true.shape[0]
    est = phi_est / np.linalg.norm(phi_est, axis=1, keepdims=True)
    tru = phi_true / np.linalg.norm(phi_true, axis=1, keepdims=True)
    cos = est @ tru.T  # [est, true]
    perm = np.full(k, -1, dtype=np.int64)
    used_est: set[int] = set()
    used_true: set[int] = set()
    masked = cos.copy()
    for _ in range(k):
        flat = int(np.argmax(masked))
        e, t = divmod(flat, k)
        perm[t] = e
        used_est.add(e)
        used_true.add(t)
        masked[e, :] = -np.inf
        masked[:, t] = -np.inf
    return perm


def recovery_score(
    a_est: np.ndarray, phi_est: np.ndarray, a_true: np.ndarray, phi_true: np.ndarray
) -> RecoveryScore:
    """Align estimated topics to the truth, then score transition and
    topic-word recovery."""
    a_est = np.asarray(a_est, dtype=np.float64)
    phi_est = np.asarray(phi_est, dtype=np.float64)
    a_true = np.asarray(a_true, dtype=np.float64)
    phi_true = np.asarray(phi_true, dtype=np.float64)
    if phi_est.shape != phi_true.shape:
        raise HarnessError(
            f"phi shape mismatch: estimated {phi_est.shape} vs truth {phi_true.shape}"
        )
    k = phi_true.shape[0]
    if a_est.shape != (k, k) or a_true.shape != (k, k):
        raise HarnessError("transition matrices must both be (k, k)")

    perm = greedy_topic_match(phi_est, phi_true)
    a_aligned = a_est[np.ix_(perm, perm)]
    frob = float(np.linalg.norm(a_aligned - a_true))
    cos = [
        float(
            np.dot(phi_est[perm[t]], phi_true[t])
            / (np.linalg.norm(phi_est[perm[t]]) * np.linalg.norm(phi_true[t]))
        )
        for t in range(k)
    ]
    return RecoveryScore(
        frobenius_error=frob, phi_match=float(np.mean(cos)), permutation=tuple(int(p) for p in perm)
    )


def align_vocab_columns(
    phi_est: np.ndarray, est_terms: tuple[str, ...], true_terms: tuple[str, ...]
) -> np.ndarray:
    """Reorder phi columns from an ingested vocabulary to the generator's
    term order; terms the ingested vocabulary dropped become zero columns."""
    index = {t: i for i, t in enumerate(est_terms)}
    out = np.zeros((phi_est.shape[0], len(true_terms)))
    for j, term in enumerate(true_terms):
        if term in index:
            out[:, j] = phi_est[:, index[term]]
    return out


@dataclass
class PipelineResult:
    slices: TimeSliceIndex
    embeddings: EmbeddingMatrix
    result: TrainResult
    report: MetricsReport


def train_config_from(cfg: AppConfig) -> TrainConfig:
    return TrainConfig(
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
        mode=cfg.mode,
        init_scale=cfg.init_scale,
        beta=cfg.beta,
        k=cfg.k,
        smoothing_eta=cfg.smoothing_eta,
        sigma=cfg.sigma,
    )


def run_pipeline(corpus: Corpus, cfg: AppConfig) -> PipelineResult:
    """slice -> embed -> train -> evaluate, all driven by one AppConfig."""
    slices = slice_by_time(corpus, cfg.num_slices)
    embeddings = embed_corpus(corpus, make_provider(cfg, corpus))
    decay_cfg = DecayConfig(lam=cfg.decay_lambda, window=cfg.attention_window)
    result = train(corpus, embeddings, slices, train_config_from(cfg), decay_cfg)
    report = evaluation_report(
        corpus,
        result.assignments.theta_doc,
        result.assignments.theta_slice,
        result.params.phi,
    )
    return PipelineResult(slices=slices, embeddings=embeddings, result=result, report=report)


def evaluate_checkpoint(
    corpus: Corpus, params: ModelParams, echo: dict[str, object]
) -> tuple[MetricsReport, np.ndarray, np.ndarray]:
    """Recompute document topics for a corpus under a checkpoint's settings.

    The corpus must share the training vocabulary (phi column count is
    checked). Returns (report, theta_doc, theta_slice).
    """
    from .config import config_from_echo

    cfg = config_from_echo(echo)
    if len(corpus.vocabulary) != params.v:
        raise HarnessError(
            f"checkpoint was trained over {params.v} terms but this corpus has "
            f"{len(corpus.vocabulary)}"
        )
    slices = slice_by_time(corpus, cfg.num_slices)
    embeddings = embed_corpus(corpus, make_provider(cfg, corpus))
    decay_cfg = DecayConfig(lam=cfg.decay_lambda, window=cfg.attention_window)
    pooled = temporal_pool(embeddings, attention_weights(embeddings, slices, decay_cfg))
    theta_doc = topic_distribution(pooled, params.W, params.b)
    theta_slice = slice_topic_state(theta_doc, slices)
    report = evaluation_report(corpus, theta_doc, theta_slice, params.phi)
    return report, theta_doc, theta_slice


def spec_from_json(path: str | Path) -> SyntheticSpec:
    """Read a synthetic spec from JSON (matrices as nested lists)."""
    path = Path(path)
    if not path.exists():
        raise HarnessError(f"synthetic spec file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise HarnessError(f"{path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise HarnessError(f"{path} must hold a JSON object")
    known = {"k", "v", "num_slices", "docs_per_slice", "doc_length", "sigma", "seed",
             "a_true", "phi_true"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise HarnessError(f"synthetic spec has unknown fields: {', '.join(unknown)}")
    for key in ("a_true", "phi_true"):
        if raw.get(key) is not None:
            raw[key] = np.asarray(raw[key], dtype=np.float64)
    return SyntheticSpec(**raw)


def write_synthetic_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Emit generator output in the loadable line-delimited corpus format."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            rec = {"id": doc.id, "timestamp": doc.timestamp, "label": doc.label,
                   "text": doc.raw_text}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    payload = {
        "theta": truth.theta.tolist(),
        "a_true": truth.a_true.tolist(),
        "phi_true": truth.phi_true.tolist(),
        "terms": list(truth.terms),
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def _fmt(value: object) -> str:
    return f"{value:.6f}" if isinstance(value, float) else str(value)


def write_csv(path: str | Path, header: list[str], rows: list[tuple]) -> None:
    """Plot-data CSV: header row, floats at fixed .6f precision."""
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sweep_dim(corpus: Corpus, cfg: AppConfig, dims: list[int]) -> list[tuple[int, float, float]]:
    """Run the full pipeline once per embedding dimension, fixed seeds.

    Rows are (embed_dim, coherence, diversity) in input order; each row is
    exactly what a standalone run at that dimension produces.
    """
    rows = []
    for d in dims:
        res = run_pipeline(corpus, replace(cfg, embed_dim=d))
        rows.append((d, res.report.coherence, res.report.diversity))
    return rows


def sweep_seqlen(
    spec: SyntheticSpec, cfg: AppConfig, lengths: list[int]
) -> list[tuple[int, float, float, float, float]]:
    """Regenerate the corpus at each slice count and run the full pipeline.

    Rows are (num_slices, perplexity, diversity, coherence, stability); the
    sweep variable is the number of time slices, as the CSV header states.
    """
    rows = []
    for length in lengths:
        corpus, _ = generate_synthetic(replace(spec, num_slices=length))
        res = run_pipeline(corpus, replace(cfg, num_slices=length))
        rows.append(
            (
                length,
                res.report.perplexity,
                res.report.diversity,
                res.report.coherence,
                res.report.stability,
            )
        )
    return rows
