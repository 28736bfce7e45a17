"""Batch extraction of frame features, pseudo labels, knowledge texts, and embeddings."""

from .job import EMBEDDING_DIM, BridgeError, ExtractionJob
from .extract import (
    extract_frame_features,
    extract_knowledge,
    extract_pseudo_labels,
    pseudo_vectors_for_video,
    run_job,
)

__all__ = [
    "BridgeError",
    "EMBEDDING_DIM",
    "ExtractionJob",
    "extract_frame_features",
    "extract_knowledge",
    "extract_pseudo_labels",
    "pseudo_vectors_for_video",
    "run_job",
]
