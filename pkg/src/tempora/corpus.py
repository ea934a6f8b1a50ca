"""Corpus ingestion: tokenization, vocabulary construction, and time slicing.

Corpora arrive as line-delimited JSON records with fields ``id`` (string),
``timestamp`` (integer ticks, or an ISO-8601 string converted to epoch
seconds at load), optional ``label``, and ``text``. Timestamps are treated
as abstract integer ticks everywhere past the loader; nothing else in the
package knows about calendars.

Documents are kept sorted ascending by ``(timestamp, id)`` so that time
slices are contiguous index ranges, which the attention and pooling code
relies on.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import TemporaError

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

CORPUS_FORMAT = "tempora-corpus-v1"


class CorpusError(TemporaError):
    """Unreadable records, empty corpora, or bad slicing parameters."""


@dataclass(frozen=True)
class TokenizerConfig:
    min_token_len: int = 2
    stopwords: frozenset[str] = frozenset()

    @classmethod
    def from_files(
        cls, min_token_len: int = 2, stopword_file: str | None = None
    ) -> "TokenizerConfig":
        """Build a tokenizer config, reading the optional stopword list.

        The stopword file holds one word per line; entries are lowercased on
        read so matching stays case-insensitive.
        """
        stopwords: frozenset[str] = frozenset()
        if stopword_file is not None:
            path = Path(stopword_file)
            if not path.exists():
                raise CorpusError(f"stopword file not found: {path}")
            lines = path.read_text(encoding="utf-8").splitlines()
            stopwords = frozenset(line.strip().lower() for line in lines if line.strip())
        return cls(min_token_len=min_token_len, stopwords=stopwords)


def tokenize(raw_text: str, cfg: TokenizerConfig | None = None) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop short tokens and stopwords."""
    cfg = cfg or TokenizerConfig()
    tokens = _TOKEN_RE.findall(raw_text.lower())
    return [t for t in tokens if len(t) >= cfg.min_token_len and t not in cfg.stopwords]


@dataclass(frozen=True)
class Document:
    """One timestamped text with vocabulary-mapped token ids."""

    id: str
    timestamp: int
    tokens: tuple[int, ...]
    raw_text: str
    label: str | None = None


@dataclass(frozen=True)
class Vocabulary:
    """Term list with per-term document frequencies.

    Term order is the build ranking: document frequency descending, ties
    broken by term ascending. Token ids index into ``terms``.
    """

    terms: tuple[str, ...]
    df: np.ndarray

    def __post_init__(self) -> None:
        if len(self.terms) == 0:
            raise CorpusError("vocabulary is empty")
        if len(self.terms) != len(set(self.terms)):
            raise CorpusError("vocabulary terms must be unique")
        df = np.asarray(self.df, dtype=np.int64)
        if df.shape != (len(self.terms),):
            raise CorpusError("vocabulary df must have one entry per term")
        object.__setattr__(self, "df", df)
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self._index

    def index_of(self, term: str) -> int:
        return self._index[term]


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    vocabulary: Vocabulary

    def __post_init__(self) -> None:
        v = len(self.vocabulary)
        prev: tuple[int, str] | None = None
        for doc in self.documents:
            if not doc.tokens:
                raise CorpusError(f"document {doc.id!r} has no tokens")
            if max(doc.tokens) >= v or min(doc.tokens) < 0:
                raise CorpusError(f"document {doc.id!r} has token ids outside the vocabulary")
            key = (doc.timestamp, doc.id)
            if prev is not None and key < prev:
                raise CorpusError("documents must be sorted by (timestamp, id)")
            prev = key

    def __len__(self) -> int:
        return len(self.documents)

    def timestamps(self) -> np.ndarray:
        return np.array([d.timestamp for d in self.documents], dtype=np.int64)

    def labels(self) -> list[str | None]:
        return [d.label for d in self.documents]


@dataclass(frozen=True)
class LoadReport:
    records_total: int
    documents_loaded: int
    dropped_empty: int


@dataclass(frozen=True)
class TimeSliceIndex:
    """Partition of a corpus into equal-width timestamp intervals.

    ``boundaries`` has ``num_slices + 1`` ascending tick values; a document
    with timestamp ts belongs to slice s iff boundaries[s] <= ts <
    boundaries[s+1], with the final slice closed on the right.
    """

    num_slices: int
    slice_of: np.ndarray
    boundaries: np.ndarray

    def __post_init__(self) -> None:
        slice_of = np.asarray(self.slice_of, dtype=np.int64)
        boundaries = np.asarray(self.boundaries, dtype=np.float64)
        if boundaries.shape != (self.num_slices + 1,):
            raise CorpusError("boundaries must have num_slices + 1 entries")
        if np.any(np.diff(boundaries) <= 0):
            raise CorpusError("slice boundaries must be strictly ascending")
        if slice_of.size and (slice_of.min() < 0 or slice_of.max() >= self.num_slices):
            raise CorpusError("slice assignments out of range")
        if np.any(np.diff(slice_of) < 0):
            raise CorpusError("slice assignments must be nondecreasing in document order")
        object.__setattr__(self, "slice_of", slice_of)
        object.__setattr__(self, "boundaries", boundaries)

    def populations(self) -> np.ndarray:
        return np.bincount(self.slice_of, minlength=self.num_slices)

    def ranges(self) -> list[tuple[int, int]]:
        """Per-slice contiguous document index range [start, stop)."""
        starts = np.searchsorted(self.slice_of, np.arange(self.num_slices), side="left")
        stops = np.searchsorted(self.slice_of, np.arange(self.num_slices), side="right")
        return [(int(a), int(b)) for a, b in zip(starts, stops)]


def _ticks_from_timestamp(value: object, line_no: int) -> int:
    if isinstance(value, bool):
        raise CorpusError(f"line {line_no}: field 'timestamp' must be an integer or ISO-8601 string")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        text = value[:-1] + "+00:00" if value.endswith("Z") else value
        try:
            dt = datetime.fromisoformat(text)
        except ValueError:
            raise CorpusError(
                f"line {line_no}: timestamp {value!r} is neither an integer nor ISO-8601"
            ) from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise CorpusError(f"line {line_no}: field 'timestamp' must be an integer or ISO-8601 string")


def _parse_record(rec: dict, line_no: int) -> tuple[str, int, str | None, str]:
    for name in ("id", "timestamp", "text"):
        if name not in rec:
            raise CorpusError(f"line {line_no}: missing required field {name!r}")
    doc_id = rec["id"]
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusError(f"line {line_no}: field 'id' must be a non-empty string")
    text = rec["text"]
    if not isinstance(text, str):
        raise CorpusError(f"line {line_no}: field 'text' must be a string")
    label = rec.get("label")
    if label is not None and not isinstance(label, str):
        raise CorpusError(f"line {line_no}: field 'label' must be a string when present")
    ticks = _ticks_from_timestamp(rec["timestamp"], line_no)
    return doc_id, ticks, label, text


def _ranked_terms(
    df_counts: dict[str, int], n_docs: int, min_df: int, max_df_frac: float, max_size: int
) -> list[str]:
    # strict upper cut: df > max_df_frac * N is removed, equality survives
    limit = max_df_frac * n_docs
    kept = [(t, c) for t, c in df_counts.items() if c >= min_df and c <= limit]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    if max_size and max_size > 0:
        kept = kept[:max_size]
    return [t for t, _ in kept]


def load_corpus(
    path: str | Path, tokenizer_cfg: TokenizerConfig | None = None
) -> tuple[Corpus, LoadReport]:
    """Read a line-delimited corpus file.

    Records whose text tokenizes to nothing are dropped and counted in the
    returned LoadReport; structurally bad records raise CorpusError naming
    the offending line. The initial vocabulary keeps every surviving token
    (equivalent to build_vocabulary with min_df=1, max_df_frac=1.0).
    """
    tokenizer_cfg = tokenizer_cfg or TokenizerConfig()
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")

    parsed: list[tuple[int, str, str | None, list[str], str]] = []
    records = 0
    dropped = 0
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records += 1
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: malformed record: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise CorpusError(f"line {line_no}: record must be a JSON object")
            doc_id, ticks, label, text = _parse_record(rec, line_no)
            tokens = tokenize(text, tokenizer_cfg)
            if not tokens:
                dropped += 1
                continue
            parsed.append((ticks, doc_id, label, tokens, text))

    if not parsed:
        raise CorpusError(f"no documents survived loading from {path}")
    parsed.sort(key=lambda r: (r[0], r[1]))

    df_counts: dict[str, int] = {}
    for _, _, _, tokens, _ in parsed:
        for term in set(tokens):
            df_counts[term] = df_counts.get(term, 0) + 1
    terms = _ranked_terms(df_counts, len(parsed), 1, 1.0, 0)
    vocabulary = Vocabulary(tuple(terms), np.array([df_counts[t] for t in terms]))

    index = {t: i for i, t in enumerate(terms)}
    documents = tuple(
        Document(doc_id, ticks, tuple(index[t] for t in tokens), text, label)
        for ticks, doc_id, label, tokens, text in parsed
    )
    report = LoadReport(records, len(documents), dropped)
    if dropped:
        logger.info("dropped %d empty documents out of %d records", dropped, records)
    return Corpus(documents, vocabulary), report


def build_vocabulary(
    corpus: Corpus, min_df: int = 1, max_df_frac: float = 1.0, max_size: int = 0
) -> Corpus:
    """Refilter the vocabulary and remap every document's token ids.

    Terms with df < min_df or df > max_df_frac * N are removed; survivors are
    ranked by (df descending, term ascending) and truncated to max_size when
    max_size > 0. Documents left with no tokens are dropped (logged).
    Returns a new Corpus; the input is untouched.
    """
    n_docs = len(corpus)
    df_counts: dict[str, int] = {}
    for doc in corpus.documents:
        for tid in set(doc.tokens):
            term = corpus.vocabulary.terms[tid]
            df_counts[term] = df_counts.get(term, 0) + 1

    terms = _ranked_terms(df_counts, n_docs, min_df, max_df_frac, max_size)
    if not terms:
        raise CorpusError(
            f"vocabulary is empty after filtering (min_df={min_df}, max_df_frac={max_df_frac})"
        )
    vocabulary = Vocabulary(tuple(terms), np.array([df_counts[t] for t in terms]))

    index = {t: i for i, t in enumerate(terms)}
    documents = []
    emptied = 0
    for doc in corpus.documents:
        kept = tuple(
            index[corpus.vocabulary.terms[tid]]
            for tid in doc.tokens
            if corpus.vocabulary.terms[tid] in index
        )
        if not kept:
            emptied += 1
            continue
        documents.append(
            Document(doc.id, doc.timestamp, kept, doc.raw_text, doc.label)
        )
    if not documents:
        raise CorpusError("vocabulary filtering emptied every document")
    if emptied:
        logger.info("vocabulary filtering emptied %d documents; they were dropped", emptied)
    return Corpus(tuple(documents), vocabulary)


def slice_by_time(corpus: Corpus, num_slices: int) -> TimeSliceIndex:
    """Partition documents into equal-width timestamp intervals.

    Every slice must receive at least one document; an empty slice raises
    with its index so the caller can pick a coarser slicing.
    """
    if num_slices < 2:
        raise CorpusError("num_slices must be >= 2")
    ts = corpus.timestamps()
    t_min, t_max = int(ts[0]), int(ts[-1])
    if t_min == t_max:
        raise CorpusError(
            f"cannot slice a corpus whose documents share the single timestamp {t_min}"
        )
    boundaries = np.linspace(float(t_min), float(t_max), num_slices + 1)
    slice_of = np.searchsorted(boundaries, ts.astype(np.float64), side="right") - 1
    slice_of = np.clip(slice_of, 0, num_slices - 1).astype(np.int64)
    populations = np.bincount(slice_of, minlength=num_slices)
    empty = np.flatnonzero(populations == 0)
    if empty.size:
        raise CorpusError(
            f"time slice {int(empty[0])} of {num_slices} contains no documents; "
            "use fewer slices"
        )
    return TimeSliceIndex(num_slices=num_slices, slice_of=slice_of, boundaries=boundaries)


def bow_counts(document: Document, vocabulary: Vocabulary) -> np.ndarray:
    """Bag-of-words count vector over the vocabulary (int64, length V)."""
    ids = np.asarray(document.tokens, dtype=np.int64)
    return np.bincount(ids, minlength=len(vocabulary)).astype(np.int64)


def counts_matrix(corpus: Corpus) -> np.ndarray:
    """(N, V) int64 matrix stacking bow_counts for every document in order."""
    out = np.zeros((len(corpus), len(corpus.vocabulary)), dtype=np.int64)
    for i, doc in enumerate(corpus.documents):
        out[i] = bow_counts(doc, corpus.vocabulary)
    return out


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Serialize an ingested corpus deterministically (sorted-key JSON)."""
    payload = {
        "format": CORPUS_FORMAT,
        "vocabulary": {
            "terms": list(corpus.vocabulary.terms),
            "df": corpus.vocabulary.df.tolist(),
        },
        "documents": [
            {
                "id": d.id,
                "timestamp": d.timestamp,
                "label": d.label,
                "tokens": list(d.tokens),
                "raw_text": d.raw_text,
            }
            for d in corpus.documents
        ],
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def read_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path} is not a serialized corpus: {exc.msg}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CORPUS_FORMAT:
        raise CorpusError(f"{path} is not a serialized corpus (expected format {CORPUS_FORMAT})")
    vocab = Vocabulary(
        tuple(payload["vocabulary"]["terms"]),
        np.array(payload["vocabulary"]["df"], dtype=np.int64),
    )
    documents = tuple(
        Document(d["id"], d["timestamp"], tuple(d["tokens"]), d["raw_text"], d.get("label"))
        for d in payload["documents"]
    )
    return Corpus(documents, vocab)
