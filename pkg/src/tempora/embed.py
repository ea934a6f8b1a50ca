"""Document embedding providers.

The local provider is a seeded random projection of tf-idf weighted counts:

    v = normalize(P @ x),   x_w = log(1 + c_w) * log(1 + N / df_w)

where P is a d x V matrix of i.i.d. standard normals drawn row-major from
numpy's seeded default generator. It is a deterministic, vocabulary-grounded
stand-in for a contextual encoder: no training, no network, bitwise
reproducible for a fixed (vocabulary, seed, d).

The remote provider POSTs raw text to ``{endpoint}/embed`` as
``{"texts": [...]}`` and expects ``{"embeddings": [[...], ...]}`` back, one
vector per text in order. Returned vectors are renormalized to unit L2 on
receipt so downstream attention always sees unit rows.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.request

import numpy as np

from .corpus import Corpus, Document, Vocabulary, bow_counts
from .errors import TemporaError


class EmbeddingError(TemporaError):
    """Bad counts, unreachable or misbehaving embedding service."""


class EmbeddingMatrix:
    """(N, d) float64 matrix of unit-norm document embeddings, corpus order."""

    def __init__(self, rows: np.ndarray, provider_tag: str):
        rows = np.ascontiguousarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise EmbeddingError("embedding matrix must be 2-D")
        norms = np.linalg.norm(rows, axis=1)
        if rows.size and np.max(np.abs(norms - 1.0)) > 1e-9:
            raise EmbeddingError("embedding rows must be unit-norm")
        self.rows = rows
        self.provider_tag = provider_tag

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]


def projection_matrix(seed: int, d: int, v: int) -> np.ndarray:
    """The d x V projection: standard normals drawn row-major from default_rng(seed)."""
    return np.random.default_rng(seed).standard_normal((d, v))


def idf_weights(df: np.ndarray, num_docs: int) -> np.ndarray:
    """log(1 + N/df) per term; terms never seen in the corpus (df=0) get 0."""
    df = np.asarray(df, dtype=np.float64)
    out = np.zeros_like(df)
    seen = df > 0
    out[seen] = np.log1p(num_docs / df[seen])
    return out


def tfidf_vector(counts: np.ndarray, idf: np.ndarray) -> np.ndarray:
    return np.log1p(np.asarray(counts, dtype=np.float64)) * idf


def _embed_counts(P: np.ndarray, counts: np.ndarray, idf: np.ndarray) -> np.ndarray:
    # project only the nonzero columns: same values as the dense product, and
    # one documented accumulation path shared by every local embedding call
    x = tfidf_vector(counts, idf)
    nz = np.flatnonzero(x)
    if nz.size == 0:
        raise EmbeddingError("cannot embed a document with all-zero counts")
    v = P[:, nz] @ x[nz]
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise EmbeddingError("projected embedding collapsed to the zero vector")
    return v / norm


def local_embed(counts: np.ndarray, seed: int, d: int, df: np.ndarray, num_docs: int) -> np.ndarray:
    """Embed one bag-of-words count vector with the local projection provider."""
    counts = np.asarray(counts)
    if counts.ndim != 1:
        raise EmbeddingError("counts must be a 1-D vector over the vocabulary")
    if d < 2:
        raise EmbeddingError("embedding dimension must be >= 2")
    P = projection_matrix(seed, d, counts.shape[0])
    return _embed_counts(P, counts, idf_weights(df, num_docs))


class EmbeddingProvider:
    """Interface: a name tag, an output dimension, and a batch embed call."""

    name: str = "?"
    d: int = 0

    def embed_documents(self, documents: tuple[Document, ...]) -> np.ndarray:
        raise NotImplementedError


class LocalProjectionEmbedder(EmbeddingProvider):
    name = "local"

    def __init__(self, vocabulary: Vocabulary, num_docs: int, d: int = 128, seed: int = 13):
        if d < 2:
            raise EmbeddingError("embedding dimension must be >= 2")
        self.d = d
        self.seed = seed
        self.vocabulary = vocabulary
        self._idf = idf_weights(vocabulary.df, num_docs)
        self._P = projection_matrix(seed, d, len(vocabulary))

    def embed_documents(self, documents: tuple[Document, ...]) -> np.ndarray:
        out = np.empty((len(documents), self.d), dtype=np.float64)
        for i, doc in enumerate(documents):
            counts = bow_counts(doc, self.vocabulary)
            try:
                out[i] = _embed_counts(self._P, counts, self._idf)
            except EmbeddingError as exc:
                raise EmbeddingError(f"document {doc.id!r}: {exc}") from exc
        return out


def remote_embed_batch(
    texts: list[str], endpoint: str, timeout_s: float, expected_dim: int
) -> np.ndarray:
    """POST one batch to the embedding service and renormalize the reply."""
    body = json.dumps({"texts": list(texts)}).encode("utf-8")
    request = urllib.request.Request(
        endpoint.rstrip("/") + "/embed",
        data=body,
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout_s) as response:
            raw = response.read()
    except urllib.error.HTTPError as exc:
        raise EmbeddingError(f"embedding service returned status {exc.code}") from exc
    except urllib.error.URLError as exc:
        raise EmbeddingError(f"embedding service unreachable: {exc.reason}") from exc

    try:
        payload = json.loads(raw)
        vectors = payload["embeddings"]
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise EmbeddingError("embedding service reply is not {'embeddings': [[...]]}") from exc
    if len(vectors) != len(texts):
        raise EmbeddingError(
            f"embedding service returned {len(vectors)} vectors for {len(texts)} texts"
        )
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != expected_dim:
        got = arr.shape[1] if arr.ndim == 2 else "ragged"
        raise EmbeddingError(
            f"embedding service returned dimension {got}, expected {expected_dim}"
        )
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0.0):
        raise EmbeddingError("embedding service returned a zero vector")
    return arr / norms[:, None]


class RemoteEmbedder(EmbeddingProvider):
    name = "remote"

    def __init__(self, endpoint: str, d: int, batch_size: int = 32, timeout_ms: int = 10000):
        if not endpoint:
            raise EmbeddingError("remote provider requires an endpoint")
        self.endpoint = endpoint
        self.d = d
        self.batch_size = batch_size
        self.timeout_s = timeout_ms / 1000.0

    def embed_documents(self, documents: tuple[Document, ...]) -> np.ndarray:
        chunks = []
        for start in range(0, len(documents), self.batch_size):
            batch = documents[start : start + self.batch_size]
            try:
                chunks.append(
                    remote_embed_batch(
                        [d.raw_text for d in batch], self.endpoint, self.timeout_s, self.d
                    )
                )
            except EmbeddingError as exc:
                raise EmbeddingError(
                    f"documents {batch[0].id!r}..{batch[-1].id!r}: {exc}"
                ) from exc
        return np.vstack(chunks)


def make_provider(cfg, corpus: Corpus) -> EmbeddingProvider:
    """Build the provider named by an AppConfig for the given corpus."""
    if cfg.provider == "local":
        return LocalProjectionEmbedder(
            corpus.vocabulary, len(corpus), d=cfg.embed_dim, seed=cfg.embed_seed
        )
    if cfg.provider == "remote":
        if cfg.endpoint is None:
            raise EmbeddingError("provider 'remote' requires the endpoint config key")
        return RemoteEmbedder(
            cfg.endpoint, cfg.embed_dim, cfg.embed_batch_size, cfg.embed_timeout_ms
        )
    raise EmbeddingError(f"unknown provider {cfg.provider!r}")


def embed_corpus(corpus: Corpus, provider: EmbeddingProvider) -> EmbeddingMatrix:
    """Embed every document in corpus order; one row per document."""
    if len(corpus) == 0:
        raise EmbeddingError("cannot embed an empty corpus")
    rows = provider.embed_documents(corpus.documents)
    if rows.shape[0] != len(corpus):
        raise EmbeddingError(
            f"provider returned {rows.shape[0]} rows for {len(corpus)} documents"
        )
    return EmbeddingMatrix(rows, provider.name)
