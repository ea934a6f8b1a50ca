"""Run configuration.

Config files are flat ``key = value`` text. Blank lines and lines starting
with ``#`` are ignored. Unknown keys fail fast with a UsageError so that a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import UsageError


class ConfigError(UsageError):
    """Malformed config file, unknown key, or unparseable value."""


@dataclass(frozen=True)
class AppConfig:
    """Every tunable of the pipeline with its default value.

    ``decay_lambda`` is spelled ``lambda`` in config files; the rest of the
    keys match the field names exactly.
    """

    # tokenizer / vocabulary
    min_token_len: int = 2
    stopword_file: str | None = None
    min_df: int = 1
    max_df_frac: float = 1.0
    max_vocab: int = 0  # 0 = unlimited
    num_slices: int = 10

    # embedding
    provider: str = "local"  # local | remote
    embed_dim: int = 128
    embed_seed: int = 13
    endpoint: str | None = None
    embed_batch_size: int = 32
    embed_timeout_ms: int = 10000

    # temporal attention
    decay_lambda: float = 0.5
    attention_window: int = 3  # slice distance; 0 = same slice only, -1 = unlimited

    # model / training
    k: int = 20
    beta: float = 1.0
    epochs: int = 200
    learning_rate: float = 0.05
    seed: int = 7
    mode: str = "unsupervised"  # unsupervised | supervised
    init_scale: float = 0.01
    smoothing_eta: float = 0.01
    sigma: float = 0.0

    def __post_init__(self) -> None:
        _validate(self)


# config-file key -> dataclass field (identity except for the keyword clash)
_KEY_TO_FIELD = {f.name: f.name for f in fields(AppConfig)}
_KEY_TO_FIELD["lambda"] = "decay_lambda"
del _KEY_TO_FIELD["decay_lambda"]
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}

_OPTIONAL_STR_FIELDS = {"stopword_file", "endpoint"}


def _validate(cfg: AppConfig) -> None:
    if cfg.min_token_len < 1:
        raise ConfigError("min_token_len must be >= 1")
    if cfg.min_df < 1:
        raise ConfigError("min_df must be >= 1")
    if not 0.0 < cfg.max_df_frac <= 1.0:
        raise ConfigError("max_df_frac must be in (0, 1]")
    if cfg.max_vocab < 0:
        raise ConfigError("max_vocab must be >= 0 (0 = unlimited)")
    if cfg.num_slices < 2:
        raise ConfigError("num_slices must be >= 2")
    if cfg.provider not in ("local", "remote"):
        raise ConfigError(f"provider must be 'local' or 'remote', got {cfg.provider!r}")
    if cfg.embed_dim < 2:
        raise ConfigError("embed_dim must be >= 2")
    if cfg.embed_batch_size < 1:
        raise ConfigError("embed_batch_size must be >= 1")
    if cfg.embed_timeout_ms < 1:
        raise ConfigError("embed_timeout_ms must be >= 1")
    if cfg.decay_lambda < 0:
        raise ConfigError("lambda must be >= 0")
    if cfg.attention_window < -1:
        raise ConfigError("attention_window must be >= 0, or -1 for unlimited")
    if cfg.k < 1:
        raise ConfigError("k must be >= 1")
    if cfg.beta < 0:
        raise ConfigError("beta must be >= 0")
    if cfg.epochs < 1:
        raise ConfigError("epochs must be >= 1")
    if cfg.learning_rate <= 0:
        raise ConfigError("learning_rate must be > 0")
    if cfg.mode not in ("unsupervised", "supervised"):
        raise ConfigError(f"mode must be 'unsupervised' or 'supervised', got {cfg.mode!r}")
    if cfg.init_scale <= 0:
        raise ConfigError("init_scale must be > 0")
    if cfg.smoothing_eta <= 0:
        raise ConfigError("smoothing_eta must be > 0")
    if cfg.sigma < 0:
        raise ConfigError("sigma must be >= 0")


def _coerce(key: str, field_name: str, raw: str) -> object:
    raw = raw.strip()
    typ = AppConfig.__dataclass_fields__[field_name].type
    if field_name in _OPTIONAL_STR_FIELDS:
        return None if raw.lower() in ("", "none") else raw
    if typ == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects an integer, got {raw!r}") from None
    if typ == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"config key {key!r} expects a number, got {raw!r}") from None
    return raw


def parse_config(text: str, base: AppConfig | None = None) -> AppConfig:
    """Parse flat ``key = value`` text on top of ``base`` (default AppConfig())."""
    overrides: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {line_no}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _KEY_TO_FIELD:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
        field_name = _KEY_TO_FIELD[key]
        if field_name in overrides:
            raise ConfigError(f"config line {line_no}: duplicate key {key!r}")
        overrides[field_name] = _coerce(key, field_name, raw)
    return replace(base or AppConfig(), **overrides)


def load_config(path: str | Path, base: AppConfig | None = None) -> AppConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), base=base)


def config_echo(cfg: AppConfig) -> dict[str, object]:
    """Flat dict of the effective configuration, using config-file key names."""
    return {_FIELD_TO_KEY[f.name]: getattr(cfg, f.name) for f in fields(cfg)}


def config_from_echo(echo: dict[str, object]) -> AppConfig:
    """Rebuild an AppConfig from a checkpoint's config echo."""
    unknown = sorted(set(echo) - set(_KEY_TO_FIELD))
    if unknown:
        raise ConfigError(f"config echo contains unknown keys: {', '.join(unknown)}")
    return replace(AppConfig(), **{_KEY_TO_FIELD[k]: v for k, v in echo.items()})
