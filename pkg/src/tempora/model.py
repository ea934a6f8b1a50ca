"""Topic head, state transitions, joint objective, and training.

Per document i with pooled representation ph_i, the topic distribution is
theta_i = softmax(W ph_i + b). Slice states are arithmetic means of their
documents' theta rows, and consecutive states are tied by a learned K x K
transition A through the consistency penalty. The joint objective is

    L = L_lik + beta * sum_t || theta_{t+1} - A theta_t ||^2

where L_lik is cross-entropy against one-hot labels (supervised) or the
bag-of-words negative log-likelihood -sum_d sum_w c_dw log(theta_d . phi_-w)
(unsupervised), with phi the K x V topic-word table re-estimated in closed
form each epoch. Gradients for W, b, A are hand-derived (phi is a constant
inside each gradient step):

    dL/dtheta_i  = likelihood term + (2 beta / n_t) (r_{t-1} - A^T r_t),
                   r_t = theta_{t+1} - A theta_t
    dL/dlogits_i = theta_i * (g_i - g_i . theta_i)        (softmax backprop)
    dL/dW        = sum_i dL/dlogits_i ph_i^T,   dL/db = sum_i dL/dlogits_i
    dL/dA        = -2 beta sum_t r_t theta_t^T

Training is full-batch gradient descent; all randomness flows from the
config seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, TimeSliceIndex, counts_matrix
from .embed import EmbeddingMatrix
from .errors import TemporaError
from .temporal import DecayConfig, attention_weights, temporal_pool

CHECKPOINT_MAGIC = b"TEMPORA-CKPT\x00\x00\x00\x00"
CHECKPOINT_VERSION = 1


class ModelError(TemporaError):
    """Invalid parameters, shapes, or label sets."""


class TrainingDivergedError(ModelError):
    """Loss became non-finite; carries the offending epoch."""

    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


class CheckpointError(TemporaError):
    """Unreadable, corrupt, or incompatible checkpoint files."""


@dataclass
class ModelParams:
    """Learned parameters. W: (K, d), b: (K,), A: (K, K), phi: (K, V) row-stochastic."""

    W: np.ndarray
    b: np.ndarray
    A: np.ndarray
    phi: np.ndarray
    beta: float = 1.0
    sigma: float = 0.0

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @property
    def v(self) -> int:
        return self.phi.shape[1]


@dataclass(frozen=True)
class TopicAssignments:
    """theta_doc: (N, K) rows on the simplex; theta_slice: (T_s, K) slice means."""

    theta_doc: np.ndarray
    theta_slice: np.ndarray


@dataclass(frozen=True)
class LossComponents:
    likelihood: float
    consistency: float
    total: float


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    seed: int = 7
    mode: str = "unsupervised"
    init_scale: float = 0.01
    beta: float = 1.0
    k: int = 20
    smoothing_eta: float = 0.01
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("unsupervised", "supervised"):
            raise ModelError(f"mode must be 'unsupervised' or 'supervised', got {self.mode!r}")
        if self.epochs < 1 or self.learning_rate <= 0 or self.k < 1:
            raise ModelError("epochs must be >= 1, learning_rate > 0, k >= 1")
        if self.beta < 0 or self.init_scale <= 0 or self.smoothing_eta <= 0:
            raise ModelError("beta >= 0, init_scale > 0, smoothing_eta > 0 required")


@dataclass
class TrainResult:
    params: ModelParams
    assignments: TopicAssignments
    history: list[LossComponents]


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def topic_distribution(pooled: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """theta = softmax(W h + b) for one pooled vector or a stack of them."""
    pooled = np.asarray(pooled, dtype=np.float64)
    if not np.all(np.isfinite(pooled)):
        raise ModelError("pooled representations must be finite")
    logits = pooled @ W.T + b
    return softmax_rows(np.atleast_2d(logits))[0] if pooled.ndim == 1 else softmax_rows(logits)


def slice_topic_state(theta_doc: np.ndarray, slices: TimeSliceIndex) -> np.ndarray:
    """(T_s, K) arithmetic mean of theta_doc rows per slice."""
    if theta_doc.shape[0] != slices.slice_of.shape[0]:
        raise ModelError("theta_doc rows must match the slice index")
    out = np.empty((slices.num_slices, theta_doc.shape[1]))
    for s, (a, b) in enumerate(slices.ranges()):
        if a == b:
            raise ModelError(f"slice {s} has no documents")
        out[s] = theta_doc[a:b].mean(axis=0)
    return out


def transition_step(
    theta: np.ndarray, A: np.ndarray, sigma: float = 0.0, rng: np.random.Generator | None = None
) -> np.ndarray:
    """One raw state-space step: A theta + eps, eps ~ N(0, sigma^2 I).

    The result is not projected; callers deciding to stay on the simplex
    apply simplex_project themselves.
    """
    theta = np.asarray(theta, dtype=np.float64)
    out = A @ theta
    if sigma > 0.0:
        if rng is None:
            raise ModelError("sigma > 0 requires an rng")
        out = out + rng.normal(0.0, sigma, size=out.shape)
    return out


def simplex_project(v: np.ndarray) -> np.ndarray:
    """Clip negatives to zero and renormalize; an all-nonpositive input
    becomes the uniform distribution."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ModelError("cannot project a non-finite vector")
    clipped = np.maximum(v, 0.0)
    total = clipped.sum()
    if total <= 0.0:
        return np.full(v.shape, 1.0 / v.shape[-1])
    return clipped / total


def estimate_topic_word(
    theta_doc: np.ndarray, counts: np.ndarray, eta: float = 0.01
) -> np.ndarray:
    """Closed-form topic-word table: phi_kw proportional to eta + sum_d theta_dk c_dw."""
    if eta <= 0:
        raise ModelError("smoothing eta must be > 0")
    phi = eta + theta_doc.T @ np.asarray(counts, dtype=np.float64)
    phi /= phi.sum(axis=1, keepdims=True)
    return phi


def _consistency_residuals(theta_slice: np.ndarray, A: np.ndarray) -> np.ndarray:
    """r_t = theta_{t+1} - A theta_t, rows t = 0 .. T_s - 2."""
    return theta_slice[1:] - theta_slice[:-1] @ A.T


def joint_loss(
    theta_doc: np.ndarray,
    theta_slice: np.ndarray,
    params: ModelParams,
    targets: np.ndarray | None = None,
    counts: np.ndarray | None = None,
) -> LossComponents:
    """Likelihood plus beta-weighted temporal consistency.

    Pass one-hot ``targets`` (N, K) for the supervised objective or bag-of-
    words ``counts`` (N, V) for the unsupervised one.
    """
    if (targets is None) == (counts is None):
        raise ModelError("joint_loss needs exactly one of targets or counts")
    if targets is not None:
        likelihood = -float(np.sum(targets * np.log(theta_doc)))
    else:
        mix = theta_doc @ params.phi
        likelihood = -float(np.sum(np.asarray(counts, dtype=np.float64) * np.log(mix)))
    residuals = _consistency_residuals(theta_slice, params.A)
    consistency = params.beta * float(np.sum(residuals * residuals))
    return LossComponents(likelihood, consistency, likelihood + consistency)


def gradients(
    pooled: np.ndarray,
    slices: TimeSliceIndex,
    theta_doc: np.ndarray,
    theta_slice: np.ndarray,
    params: ModelParams,
    targets: np.ndarray | None = None,
    counts: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic (dW, db, dA) for joint_loss at the given batch state."""
    if (targets is None) == (counts is None):
        raise ModelError("gradients needs exactly one of targets or counts")

    if targets is not None:
        g_theta = -targets / theta_doc
    else:
        mix = theta_doc @ params.phi
        g_theta = -(np.asarray(counts, dtype=np.float64) / mix) @ params.phi.T

    residuals = _consistency_residuals(theta_slice, params.A)
    t_s = theta_slice.shape[0]
    g_slice = np.zeros_like(theta_slice)
    if t_s > 1 and params.beta != 0.0:
        g_slice[1:] += 2.0 * params.beta * residuals
        g_slice[:-1] -= 2.0 * params.beta * (residuals @ params.A)
    populations = slices.populations().astype(np.float64)
    g_theta = g_theta + g_slice[slices.slice_of] / populations[slices.slice_of][:, None]

    # backprop through the row softmax
    g_logits = theta_doc * (g_theta - np.sum(g_theta * theta_doc, axis=1, keepdims=True))
    grad_w = g_logits.T @ pooled
    grad_b = g_logits.sum(axis=0)
    grad_a = -2.0 * params.beta * residuals.T @ theta_slice[:-1]
    return grad_w, grad_b, grad_a


def _one_hot_targets(corpus: Corpus, k: int) -> np.ndarray:
    labels = corpus.labels()
    missing = [d.id for d, lab in zip(corpus.documents, labels) if lab is None]
    if missing:
        raise ModelError(
            f"supervised mode requires labels on every document; missing on {missing[0]!r}"
            + (f" and {len(missing) - 1} more" if len(missing) > 1 else "")
        )
    classes = sorted(set(labels))
    if len(classes) != k:
        raise ModelError(
            f"supervised mode: k={k} does not match the {len(classes)} distinct labels"
        )
    index = {c: i for i, c in enumerate(classes)}
    targets = np.zeros((len(corpus), k))
    for i, lab in enumerate(labels):
        targets[i, index[lab]] = 1.0
    return targets


def train(
    corpus: Corpus,
    embeddings: EmbeddingMatrix,
    slices: TimeSliceIndex,
    cfg: TrainConfig,
    decay_cfg: DecayConfig | None = None,
) -> TrainResult:
    """Full-batch gradient descent on the joint objective.

    The attention pool is computed once up front (it depends only on the
    embeddings and the decay config, not on trainable parameters). W and b
    start from seeded Gaussians scaled by init_scale, A from the identity.
    In unsupervised mode phi is re-estimated in closed form each epoch
    before the gradient step; in supervised mode phi is estimated the same
    way but only for reporting, the loss never reads it.

    Updates use the batch-averaged gradient (summed gradient divided by the
    document count) so learning_rate stays corpus-size independent; the loss
    history still records the summed objective.
    """
    decay_cfg = decay_cfg or DecayConfig()
    if len(corpus) != len(embeddings):
        raise ModelError("corpus and embeddings disagree on document count")
    pooled = temporal_pool(embeddings, attention_weights(embeddings, slices, decay_cfg))

    k, d = cfg.k, embeddings.d
    counts = counts_matrix(corpus).astype(np.float64)
    targets = _one_hot_targets(corpus, k) if cfg.mode == "supervised" else None

    rng = np.random.default_rng(cfg.seed)
    W = rng.standard_normal((k, d)) * cfg.init_scale
    b = rng.standard_normal(k) * cfg.init_scale
    A = np.eye(k)
    params = ModelParams(W=W, b=b, A=A, phi=np.full((k, counts.shape[1]), 1.0 / counts.shape[1]),
                         beta=cfg.beta, sigma=cfg.sigma)

    lik_kwargs = {"targets": targets} if targets is not None else {}
    history: list[LossComponents] = []
    for epoch in range(cfg.epochs):
        theta_doc = topic_distribution(pooled, params.W, params.b)
        theta_slice = slice_topic_state(theta_doc, slices)
        params.phi = estimate_topic_word(theta_doc, counts, cfg.smoothing_eta)
        kwargs = lik_kwargs or {"counts": counts}
        loss = joint_loss(theta_doc, theta_slice, params, **kwargs)
        if not np.isfinite(loss.total):
            raise TrainingDivergedError(epoch)
        history.append(loss)
        grad_w, grad_b, grad_a = gradients(
            pooled, slices, theta_doc, theta_slice, params, **kwargs
        )
        step = cfg.learning_rate / len(corpus)
        params.W = params.W - step * grad_w
        params.b = params.b - step * grad_b
        params.A = params.A - step * grad_a

    theta_doc = topic_distribution(pooled, params.W, params.b)
    theta_slice = slice_topic_state(theta_doc, slices)
    params.phi = estimate_topic_word(theta_doc, counts, cfg.smoothing_eta)
    return TrainResult(
        params=params,
        assignments=TopicAssignments(theta_doc=theta_doc, theta_slice=theta_slice),
        history=history,
    )


def forecast(theta_last: np.ndarray, A: np.ndarray, steps: int) -> np.ndarray:
    """Iterate theta <- simplex_project(A theta) for ``steps`` noiseless steps."""
    if steps < 1:
        raise ModelError("steps must be >= 1")
    theta = np.asarray(theta_last, dtype=np.float64)
    out = np.empty((steps, theta.shape[0]))
    for i in range(steps):
        theta = simplex_project(A @ theta)
        out[i] = theta
    return out


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    config_echo: dict[str, object],
    theta_slice: np.ndarray,
) -> None:
    """Serialize a trained model.

    Layout: 16-byte magic, then little-endian u32s (version, K, d, V, T_s),
    a length-prefixed sorted-key JSON config echo, then W, b, A, phi and the
    trained slice trajectory as little-endian float64 in row-major order.
    The trajectory rides along so `forecast` can start from the final slice
    state without re-reading the corpus.
    """
    k, d, v = params.k, params.d, params.v
    theta_slice = np.asarray(theta_slice, dtype=np.float64)
    echo_bytes = json.dumps(config_echo, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<5I", CHECKPOINT_VERSION, k, d, v, theta_slice.shape[0]))
        fh.write(struct.pack("<I", len(echo_bytes)))
        fh.write(echo_bytes)
        for arr in (params.W, params.b, params.A, params.phi, theta_slice):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict[str, object], np.ndarray]:
    """Read a checkpoint; returns (params, config echo, slice trajectory)."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint file not found: {path}")
    blob = path.read_bytes()
    if len(blob) < len(CHECKPOINT_MAGIC) or blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise CheckpointError(f"{path} is truncated")
        piece = blob[offset : offset + n]
        offset += n
        return piece

    version, k, d, v, t_s = struct.unpack("<5I", take(20))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path} has checkpoint format version {version}, expected {CHECKPOINT_VERSION}"
        )
    (echo_len,) = struct.unpack("<I", take(4))
    try:
        echo = json.loads(take(echo_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt config echo") from exc

    def matrix(rows: int, cols: int) -> np.ndarray:
        flat = np.frombuffer(take(rows * cols * 8), dtype="<f8")
        return flat.reshape(rows, cols).astype(np.float64)

    W = matrix(k, d)
    b = matrix(1, k)[0]
    A = matrix(k, k)
    phi = matrix(k, v)
    theta_slice = matrix(t_s, k)
    if offset != len(blob):
        raise CheckpointError(f"{path} has {len(blob) - offset} trailing bytes")
    params = ModelParams(
        W=W, b=b, A=A, phi=phi,
        beta=float(echo.get("beta", 1.0)), sigma=float(echo.get("sigma", 0.0)),
    )
    return params, echo, theta_slice
