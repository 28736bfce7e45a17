"""Extraction job file: what to run, with which models, over which inputs.

Model identifiers are pinned in the job for provenance. "stub:*" ids
select deterministic hash-based backends that need no downloads; real
ids (torchvision:/clip:/sbert:) require the optional heavy deps and
pretrained weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

EMBEDDING_DIM = 384
OUTPUT_KINDS = ("features", "pseudo_labels", "explicit", "implicit", "embeddings")

DEFAULT_MODELS = {
    "features": "stub:features",
    "pseudo_labels": "stub:pseudo",
    "knowledge": "stub:knowledge",
    "embeddings": "stub:embed",
}


class BridgeError(ValueError):
    pass


@dataclass
class ExtractionJob:
    outputs: list[str]
    out_dir: str
    frames_dir: str | None = None  # one subdirectory per video, one image per second
    sentences: list[str] = field(default_factory=list)
    class_prompts: list[str] = field(default_factory=list)
    segments: dict[str, list[list[int]]] = field(default_factory=dict)  # video -> [start, end) frames
    feature_dim: int = 4096
    embedding_dim: int = EMBEDDING_DIM
    dataset: str = "bridge"
    split: str = "extracted"
    models: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_MODELS))

    def validate(self) -> None:
        if not self.outputs:
            raise BridgeError("job requests no outputs")
        unknown = set(self.outputs) - set(OUTPUT_KINDS)
        if unknown:
            raise BridgeError(f"unknown outputs: {sorted(unknown)}")
        if self.embedding_dim != EMBEDDING_DIM:
            raise BridgeError(f"embedding width must be {EMBEDDING_DIM}, got {self.embedding_dim}")
        needs_frames = {"features", "pseudo_labels"} & set(self.outputs)
        if needs_frames and self.frames_dir is None:
            raise BridgeError(f"{sorted(needs_frames)} need frames_dir")
        needs_sentences = {"explicit", "implicit", "embeddings"} & set(self.outputs)
        if needs_sentences and not self.sentences:
            raise BridgeError(f"{sorted(needs_sentences)} need a sentence list")
        if "pseudo_labels" in self.outputs and not self.class_prompts:
            raise BridgeError("pseudo_labels needs a nonempty class prompt list")
        if self.feature_dim <= 0:
            raise BridgeError("feature_dim must be positive")
        unknown_models = set(self.models) - set(DEFAULT_MODELS)
        if unknown_models:
            raise BridgeError(f"unknown model roles: {sorted(unknown_models)}")

    @classmethod
    def load(cls, path: str | Path) -> "ExtractionJob":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise BridgeError(f"unknown job keys: {sorted(unknown)}")
        models = dict(DEFAULT_MODELS)
        models.update(doc.pop("models", {}))
        job = cls(models=models, **doc)
        job.validate()
        return job
