"""The three extraction passes and their on-disk outputs.

Everything is written atomically (temp + rename) in the core package's
formats: headerless little-endian float32 blobs, a manifest.json naming
every blob with its dimensions, sentence-keyed JSON knowledge files, and
content-hashed embedding blobs of exactly 4*384 bytes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .backends import (
    RELATIONS,
    load_embedding_backend,
    load_feature_backend,
    load_knowledge_backend,
    load_pseudo_backend,
    sentence_key,
)
from .job import EMBEDDING_DIM, BridgeError, ExtractionJob

log = logging.getLogger("extractor_bridge")

TOP_K = 3
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: Path, doc) -> None:
    _atomic_write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _blob_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def load_video_frames(video_dir: Path) -> list[np.ndarray]:
    """One image per second, sorted by filename; .npy stacks also accepted."""
    npys = sorted(video_dir.glob("*.npy"))
    if npys:
        stack = np.load(npys[0])
        return [np.asarray(f) for f in stack]
    frames = []
    for p in sorted(video_dir.iterdir()):
        if p.suffix.lower() in IMAGE_SUFFIXES:
            with Image.open(p) as img:
                frames.append(np.asarray(img.convert("RGB")))
    return frames


def _video_dirs(frames_dir: Path) -> list[Path]:
    if not frames_dir.is_dir():
        raise BridgeError(f"frames_dir {frames_dir} is not a directory")
    return sorted(p for p in frames_dir.iterdir() if p.is_dir())


# ---------------------------------------------------------------------------
# frame features -> blobs + manifest
# ---------------------------------------------------------------------------


def extract_frame_features(job: ExtractionJob) -> Path:
    """Write one feature blob per decodable video and a core-format manifest."""
    backend = load_feature_backend(job.models["features"], job.feature_dim)
    out = Path(job.out_dir)
    videos = []
    for video_dir in _video_dirs(Path(job.frames_dir)):
        vid = video_dir.name
        try:
            frames = load_video_frames(video_dir)
            if not frames:
                raise BridgeError("no decodable frames")
            feats = backend(frames)
        except Exception as exc:
            log.warning("skipping video %s: %s", vid, exc)
            continue
        rel = f"features/{vid}.bin"
        _atomic_write_bytes(out / rel, _blob_bytes(feats))
        videos.append({"id": vid, "num_frames": len(frames), "features_path": rel, "snippets": []})

    _atomic_write_bytes(out / "vocab.txt", b"")
    manifest = {
        "dataset": job.dataset,
        "split": job.split,
        "feature_dim": job.feature_dim,
        "max_frames": max((v["num_frames"] for v in videos), default=1),
        "max_snippets": 20,
        "action_names": [],
        "object_names": [],
        "pseudo_names": list(job.class_prompts),
        "vocab_path": "vocab.txt",
        "videos": videos,
    }
    path = out / "manifest.json"
    _atomic_write_json(path, manifest)
    return path


# ---------------------------------------------------------------------------
# knowledge texts + embeddings
# ---------------------------------------------------------------------------


def extract_knowledge(job: ExtractionJob) -> dict[str, Path]:
    """Explicit inference strings, completions, and 4*384-byte embedding blobs.

    Embedding blobs are keyed by a hash of the normalized sentence;
    existing blobs are reused (content-hash cache). Blank input lines are
    skipped with a warning.
    """
    out = Path(job.out_dir)
    wanted = set(job.outputs)
    results: dict[str, Path] = {}

    sentences = []
    for s in job.sentences:
        if not s.strip():
            log.warning("skipping blank sentence")
            continue
        sentences.append(s)

    if {"explicit", "implicit"} & wanted:
        knowledge = load_knowledge_backend(job.models["knowledge"])
        if "explicit" in wanted:
            doc = {sentence_key(s): knowledge.infer(s) for s in sentences}
            results["explicit"] = out / "knowledge" / "explicit.json"
            _atomic_write_json(results["explicit"], doc)
        if "implicit" in wanted:
            doc = {sentence_key(s): knowledge.complete(s) for s in sentences}
            results["implicit"] = out / "knowledge" / "implicit.json"
            _atomic_write_json(results["implicit"], doc)

    if "embeddings" in wanted:
        embedder = load_embedding_backend(job.models["embeddings"])
        emb_dir = out / "embeddings"
        index = {}
        for s in sentences:
            key = hashlib.sha1(sentence_key(s).encode("utf-8")).hexdigest()[:16]
            blob = emb_dir / f"{key}.bin"
            if not blob.exists():
                vec = embedder(s)
                if vec.shape != (EMBEDDING_DIM,):
                    raise BridgeError(f"embedding width {vec.shape} != ({EMBEDDING_DIM},)")
                _atomic_write_bytes(blob, _blob_bytes(vec))
            index[key] = sentence_key(s)
        results["embeddings"] = emb_dir / "index.json"
        _atomic_write_json(results["embeddings"], index)
    return results


# ---------------------------------------------------------------------------
# pseudo labels: per-frame top-3, unioned per segment
# ---------------------------------------------------------------------------


def pseudo_vectors_for_video(
    frames: list[np.ndarray], prompts: list[str], segments: list[list[int]], backend
) -> np.ndarray:
    """Binary (num_segments, num_prompts): class present in any frame's top-3."""
    if not prompts:
        raise BridgeError("pseudo labels need a nonempty prompt list")
    k = min(TOP_K, len(prompts))
    per_frame_top = []
    for frame in frames:
        scores = np.asarray(backend(frame, prompts))
        per_frame_top.append(set(np.argsort(-scores, kind="stable")[:k].tolist()))
    vectors = np.zeros((len(segments), len(prompts)), dtype=np.int8)
    for si, (lo, hi) in enumerate(segments):
        if not 0 <= lo < hi <= len(frames):
            raise BridgeError(f"segment [{lo}, {hi}) outside video of {len(frames)} frames")
        present = set()
        for t in range(lo, hi):
            present |= per_frame_top[t]
        vectors[si, sorted(present)] = 1
    return vectors


def extract_pseudo_labels(job: ExtractionJob) -> Path:
    backend = load_pseudo_backend(job.models["pseudo_labels"])
    out = Path(job.out_dir)
    doc = {"prompts": list(job.class_prompts), "videos": {}}
    for video_dir in _video_dirs(Path(job.frames_dir)):
        vid = video_dir.name
        try:
            frames = load_video_frames(video_dir)
            if not frames:
                raise BridgeError("no decodable frames")
        except Exception as exc:
            log.warning("skipping video %s: %s", vid, exc)
            continue
        segments = job.segments.get(vid, [[0, len(frames)]])
        vectors = pseudo_vectors_for_video(frames, job.class_prompts, segments, backend)
        doc["videos"][vid] = {
            "segments": [list(map(int, s)) for s in segments],
            "vectors": vectors.tolist(),
        }
    path = out / "pseudo_labels.json"
    _atomic_write_json(path, doc)
    return path


def run_job(job: ExtractionJob) -> dict[str, Path]:
    job.validate()
    produced: dict[str, Path] = {}
    if "features" in job.outputs:
        produced["features"] = extract_frame_features(job)
    knowledge = extract_knowledge(job)
    produced.update(knowledge)
    if "pseudo_labels" in job.outputs:
        produced["pseudo_labels"] = extract_pseudo_labels(job)
    return produced
