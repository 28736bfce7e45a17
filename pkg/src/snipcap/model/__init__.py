"""Model: config, parameters, checkpoints, and forward passes."""

from .config import ConfigError, ModelConfig
from .net import CaptionModel, SnippetMemoryState, apply_snippet_mask, downsample_mask, memory_write
from .params import init_params, load_checkpoint, save_checkpoint, sinusoidal_positions

__all__ = [
    "CaptionModel",
    "ConfigError",
    "ModelConfig",
    "SnippetMemoryState",
    "apply_snippet_mask",
    "downsample_mask",
    "init_params",
    "load_checkpoint",
    "memory_write",
    "save_checkpoint",
    "sinusoidal_positions",
]
