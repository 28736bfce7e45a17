"""Dataset schema, on-disk formats, tokenizer, and synthetic data."""

from .records import (
    DEFAULT_MAX_FRAMES,
    DEFAULT_MAX_SNIPPETS,
    KNOWLEDGE_DIM,
    DataError,
    DatasetSplit,
    SnippetAnnotation,
    VideoRecord,
    validate_record,
)
from .vocab import (
    BOS_ID,
    EOS_ID,
    MAX_SENTENCE_TOKENS,
    NUM_RESERVED,
    PAD_ID,
    RESERVED,
    UNK_ID,
    VocabError,
    Vocabulary,
    build_vocab,
    detokenize,
    normalize,
    tokenize,
)
from .manifest import load_manifest, save_manifest
from .synth import SynthConfig, synth_generate
from . import grammar

__all__ = [
    "BOS_ID",
    "DEFAULT_MAX_FRAMES",
    "DEFAULT_MAX_SNIPPETS",
    "DataError",
    "DatasetSplit",
    "EOS_ID",
    "KNOWLEDGE_DIM",
    "MAX_SENTENCE_TOKENS",
    "NUM_RESERVED",
    "PAD_ID",
    "RESERVED",
    "SnippetAnnotation",
    "SynthConfig",
    "UNK_ID",
    "VideoRecord",
    "VocabError",
    "Vocabulary",
    "build_vocab",
    "detokenize",
    "grammar",
    "load_manifest",
    "normalize",
    "save_manifest",
    "synth_generate",
    "tokenize",
    "validate_record",
]
