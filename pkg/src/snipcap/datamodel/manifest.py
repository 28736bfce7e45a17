"""On-disk dataset format.

A split lives in a directory: manifest.json (human-readable key/value
document), vocab.txt, and raw feature blobs. Blobs are headerless
little-endian float32, row-major [T x feature_dim]; per-snippet
knowledge blobs are 4*384 bytes each. All dimensions live in the
manifest, so loading validates byte lengths exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .records import (
    DEFAULT_MAX_FRAMES,
    DEFAULT_MAX_SNIPPETS,
    KNOWLEDGE_DIM,
    DataError,
    DatasetSplit,
    SnippetAnnotation,
    VideoRecord,
)
from .vocab import Vocabulary

MANIFEST_NAME = "manifest.json"
VOCAB_NAME = "vocab.txt"


def _write_blob(path: Path, arr: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_blob(path: Path, shape: tuple[int, ...], video_id: str) -> np.ndarray:
    if not path.exists():
        raise DataError(f"video {video_id}: missing blob {path}")
    raw = path.read_bytes()
    expected = 4 * int(np.prod(shape))
    if len(raw) != expected:
        raise DataError(
            f"video {video_id}: blob {path.name} is {len(raw)} bytes, expected {expected}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def save_manifest(split: DatasetSplit, out_dir: str | Path) -> Path:
    """Write manifest.json, vocab.txt, and all blobs; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split.vocab.save(out / VOCAB_NAME)

    videos = []
    for r in split.records:
        feat_rel = f"features/{r.id}.bin"
        _write_blob(out / feat_rel, r.features)
        snippets = []
        for i, s in enumerate(r.snippets):
            entry = {
                "start_frame": int(s.start_frame),
                "end_frame": int(s.end_frame),
                "caption": s.caption,
                "action_labels": [int(x) for x in s.action_labels],
                "object_labels": [int(x) for x in s.object_labels],
                "pseudo_labels": [int(x) for x in s.pseudo_labels],
            }
            if s.knowledge is not None:
                know_rel = f"knowledge/{r.id}_{i}.bin"
                _write_blob(out / know_rel, s.knowledge)
                entry["knowledge_path"] = know_rel
            snippets.append(entry)
        videos.append(
            {
                "id": r.id,
                "num_frames": int(r.num_frames),
                "features_path": feat_rel,
                "snippets": snippets,
            }
        )

    doc = {
        "dataset": split.dataset,
        "split": split.split,
        "feature_dim": int(split.feature_dim),
        "max_frames": int(split.max_frames),
        "max_snippets": int(split.max_snippets),
        "action_names": list(split.action_names),
        "object_names": list(split.object_names),
        "pseudo_names": list(split.pseudo_names),
        "vocab_path": VOCAB_NAME,
        "videos": videos,
    }
    manifest_path = out / MANIFEST_NAME
    manifest_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def load_manifest(path: str | Path) -> DatasetSplit:
    """Load and validate a split; `path` is the manifest file or its directory."""
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.exists():
        raise DataError(f"manifest not found at {p}")
    doc = json.loads(p.read_text(encoding="utf-8"))
    base = p.parent

    vocab = Vocabulary.load(base / doc["vocab_path"])
    records = []
    for v in doc["videos"]:
        vid = v["id"]
        t = int(v["num_frames"])
        features = _read_blob(base / v["features_path"], (t, int(doc["feature_dim"])), vid)
        snippets = []
        for i, s in enumerate(v["snippets"]):
            knowledge = None
            if "knowledge_path" in s:
                knowledge = _read_blob(base / s["knowledge_path"], (KNOWLEDGE_DIM,), vid)
            snippets.append(
                SnippetAnnotation(
                    start_frame=int(s["start_frame"]),
                    end_frame=int(s["end_frame"]),
                    caption=s["caption"],
                    action_labels=np.asarray(s["action_labels"], dtype=np.int8),
                    object_labels=np.asarray(s["object_labels"], dtype=np.int8),
                    pseudo_labels=np.asarray(s["pseudo_labels"], dtype=np.int8),
                    knowledge=knowledge,
                )
            )
        records.append(VideoRecord(id=vid, num_frames=t, features=features, snippets=snippets))

    split = DatasetSplit(
        dataset=doc["dataset"],
        split=doc["split"],
        feature_dim=int(doc["feature_dim"]),
        records=records,
        vocab=vocab,
        action_names=tuple(doc["action_names"]),
        object_names=tuple(doc["object_names"]),
        pseudo_names=tuple(doc["pseudo_names"]),
        max_frames=int(doc.get("max_frames", DEFAULT_MAX_FRAMES)),
        max_snippets=int(doc.get("max_snippets", DEFAULT_MAX_SNIPPETS)),
    )
    split.validate()
    return split
