"""Time-aware topic trajectories from timestamped corpora.

The pipeline: load and slice a corpus (tempora.corpus), embed documents
(tempora.embed), pool each document over its temporal neighborhood with
decayed attention (tempora.temporal), fit a topic head plus a topic state
transition (tempora.model), and score the result (tempora.metrics).
tempora.harness adds a synthetic-dynamics test bench and parameter sweeps;
tempora.cli wires everything into subcommands.
"""

__version__ = "0.1.0"

from .config import AppConfig, load_config, parse_config
from .corpus import (
    Corpus,
    Document,
    TimeSliceIndex,
    TokenizerConfig,
    Vocabulary,
    bow_counts,
    build_vocabulary,
    counts_matrix,
    load_corpus,
    read_corpus,
    slice_by_time,
    tokenize,
    write_corpus,
)
from .embed import (
    EmbeddingMatrix,
    LocalProjectionEmbedder,
    RemoteEmbedder,
    embed_corpus,
    local_embed,
    make_provider,
    remote_embed_batch,
)
from .errors import TemporaError, UsageError
from .harness import (
    GroundTruth,
    RecoveryScore,
    SyntheticSpec,
    generate_synthetic,
    recovery_score,
    run_pipeline,
    sweep_dim,
    sweep_seqlen,
)
from .metrics import (
    MetricsReport,
    evaluation_report,
    perplexity,
    top_words,
    topic_coherence_npmi,
    topic_diversity,
    topic_stability,
)
from .model import (
    LossComponents,
    ModelParams,
    TopicAssignments,
    TrainConfig,
    TrainResult,
    estimate_topic_word,
    forecast,
    gradients,
    joint_loss,
    load_checkpoint,
    save_checkpoint,
    simplex_project,
    slice_topic_state,
    topic_distribution,
    train,
    transition_step,
)
from .temporal import (
    KERNEL_BACKEND,
    AttentionMatrix,
    DecayConfig,
    attention_weights,
    decay,
    temporal_pool,
)

__all__ = [name for name in dir() if not name.startswith("_")]
