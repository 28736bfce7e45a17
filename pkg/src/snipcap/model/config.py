"""Model hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..datamodel.records import DEFAULT_MAX_FRAMES, DEFAULT_MAX_SNIPPETS, KNOWLEDGE_DIM
from ..datamodel.vocab import MAX_SENTENCE_TOKENS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    feature_dim: int = 4096
    context_dim: int = KNOWLEDGE_DIM
    d_model: int = 512
    heads: int = 8
    enc_layers: int = 3
    dec_layers: int = 3
    ffn_dim: int | None = None  # None -> 4 * d_model
    actobj_dim: int = 677
    max_frames: int = DEFAULT_MAX_FRAMES
    max_snippets: int = DEFAULT_MAX_SNIPPETS
    max_sentence_len: int = MAX_SENTENCE_TOKENS
    token_stride: int = 1
    memory_slots: int | None = None  # None -> encoded token count
    dropout: float = 0.1

    @property
    def ffn_width(self) -> int:
        return 4 * self.d_model if self.ffn_dim is None else self.ffn_dim

    def validate(self) -> None:
        positive = {
            "vocab_size": self.vocab_size,
            "feature_dim": self.feature_dim,
            "context_dim": self.context_dim,
            "d_model": self.d_model,
            "heads": self.heads,
            "enc_layers": self.enc_layers,
            "dec_layers": self.dec_layers,
            "actobj_dim": self.actobj_dim,
            "max_frames": self.max_frames,
            "max_snippets": self.max_snippets,
            "max_sentence_len": self.max_sentence_len,
            "token_stride": self.token_stride,
            "ffn_width": self.ffn_width,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.d_model % self.heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg
