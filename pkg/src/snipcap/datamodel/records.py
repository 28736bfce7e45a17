"""Dataset records and validation.

Frame-rate convention: one feature row is one second of video, so frame
indices and durations agree across features, masks, and annotations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vocab import Vocabulary

DEFAULT_MAX_FRAMES = 150
DEFAULT_MAX_SNIPPETS = 20
KNOWLEDGE_DIM = 384


class DataError(ValueError):
    pass


@dataclass
class SnippetAnnotation:
    start_frame: int  # inclusive
    end_frame: int  # exclusive
    caption: str
    action_labels: np.ndarray  # binary, length A
    object_labels: np.ndarray  # binary, length O
    pseudo_labels: np.ndarray  # binary, length P
    knowledge: np.ndarray | None = None  # float32 (384,), prior for the NEXT snippet

    @property
    def label_vector(self) -> np.ndarray:
        return np.concatenate([self.action_labels, self.object_labels, self.pseudo_labels])

    def frame_mask(self, num_frames: int) -> np.ndarray:
        mask = np.zeros(num_frames, dtype=np.float32)
        mask[self.start_frame : self.end_frame] = 1.0
        return mask


@dataclass
class VideoRecord:
    id: str
    num_frames: int
    features: np.ndarray  # float32 (T, feature_dim)
    snippets: list[SnippetAnnotation] = field(default_factory=list)


@dataclass
class DatasetSplit:
    dataset: str
    split: str
    feature_dim: int
    records: list[VideoRecord]
    vocab: Vocabulary
    action_names: tuple[str, ...]
    object_names: tuple[str, ...]
    pseudo_names: tuple[str, ...]
    max_frames: int = DEFAULT_MAX_FRAMES
    max_snippets: int = DEFAULT_MAX_SNIPPETS

    @property
    def actobj_dim(self) -> int:
        return len(self.action_names) + len(self.object_names) + len(self.pseudo_names)

    def record_by_id(self, video_id: str) -> VideoRecord:
        for r in self.records:
            if r.id == video_id:
                return r
        raise DataError(f"unknown video id {video_id!r}")

    def validate(self) -> None:
        for r in self.records:
            validate_record(r, self.feature_dim, self.actobj_dim_tuple(), self.max_frames, self.max_snippets)

    def actobj_dim_tuple(self) -> tuple[int, int, int]:
        return (len(self.action_names), len(self.object_names), len(self.pseudo_names))


def _check_binary(vec: np.ndarray, what: str, video_id: str) -> None:
    if not np.all(np.isin(vec, (0, 1))):
        raise DataError(f"video {video_id}: {what} is not a 0/1 vector")


def validate_record(
    record: VideoRecord,
    feature_dim: int,
    label_widths: tuple[int, int, int],
    max_frames: int = DEFAULT_MAX_FRAMES,
    max_snippets: int = DEFAULT_MAX_SNIPPETS,
) -> None:
    vid = record.id
    t = record.num_frames
    if not 0 < t <= max_frames:
        raise DataError(f"video {vid}: num_frames {t} outside (0, {max_frames}]")
    if record.features.shape != (t, feature_dim):
        raise DataError(
            f"video {vid}: features shape {record.features.shape} != ({t}, {feature_dim})"
        )
    if len(record.snippets) > max_snippets:
        raise DataError(f"video {vid}: {len(record.snippets)} snippets exceed cap {max_snippets}")
    a_w, o_w, p_w = label_widths
    for i, s in enumerate(record.snippets):
        if not 0 <= s.start_frame < s.end_frame <= t:
            raise DataError(
                f"video {vid}: snippet {i} range [{s.start_frame}, {s.end_frame}) outside [0, {t})"
            )
        if len(s.action_labels) != a_w or len(s.object_labels) != o_w or len(s.pseudo_labels) != p_w:
            raise DataError(
                f"video {vid}: snippet {i} label widths "
                f"({len(s.action_labels)},{len(s.object_labels)},{len(s.pseudo_labels)}) != ({a_w},{o_w},{p_w})"
            )
        _check_binary(s.action_labels, f"snippet {i} action_labels", vid)
        _check_binary(s.object_labels, f"snippet {i} object_labels", vid)
        _check_binary(s.pseudo_labels, f"snippet {i} pseudo_labels", vid)
        if s.knowledge is not None and s.knowledge.shape != (KNOWLEDGE_DIM,):
            raise DataError(
                f"video {vid}: snippet {i} knowledge vector has shape {s.knowledge.shape}, want ({KNOWLEDGE_DIM},)"
            )
