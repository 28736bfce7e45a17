"""Model backends.

Stub backends ("stub:*") are deterministic functions of the input bytes:
they exist so the pipeline and its file formats can be exercised without
downloading weights. Real backends wrap torchvision / CLIP / SBERT and
are loaded lazily; they raise a clear error when the optional deps or
weights are unavailable.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

from .job import EMBEDDING_DIM, BridgeError


def _seed_from(*parts: bytes) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(p)
    return int.from_bytes(h.digest(), "little")


# ---------------------------------------------------------------------------
# frame features
# ---------------------------------------------------------------------------


class StubFeatureBackend:
    """Deterministic per-frame vectors derived from the image bytes."""

    def __init__(self, feature_dim: int):
        self.feature_dim = feature_dim

    def __call__(self, frames: list[np.ndarray]) -> np.ndarray:
        rows = []
        for img in frames:
            rng = np.random.default_rng(_seed_from(b"features", np.ascontiguousarray(img).tobytes()))
            rows.append(rng.normal(0.0, 1.0, size=self.feature_dim))
        return np.asarray(rows, dtype=np.float32)


class TorchvisionFeatureBackend:
    """Pooled CNN features, zero-padded or truncated to feature_dim."""

    def __init__(self, model_id: str, feature_dim: int):
        self.feature_dim = feature_dim
        try:
            import torch
            import torchvision.models as tvm
        except ImportError as exc:
            raise BridgeError(f"{model_id} needs torch/torchvision installed") from exc
        name = model_id.split(":", 1)[1]
        factory = getattr(tvm, name, None)
        if factory is None:
            raise BridgeError(f"unknown torchvision model {name!r}")
        try:
            model = factory(weights="DEFAULT")
        except Exception as exc:  # weight download unavailable
            raise BridgeError(f"could not load pretrained weights for {name!r}: {exc}") from exc
        self._torch = torch
        self.model = torch.nn.Sequential(*list(model.children())[:-1]).eval()

    def __call__(self, frames: list[np.ndarray]) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            batch = torch.stack(
                [torch.from_numpy(f).permute(2, 0, 1).float() / 255.0 for f in frames]
            )
            feats = self.model(batch).flatten(1).numpy()
        out = np.zeros((len(frames), self.feature_dim), dtype=np.float32)
        keep = min(self.feature_dim, feats.shape[1])
        out[:, :keep] = feats[:, :keep]
        return out


def load_feature_backend(model_id: str, feature_dim: int):
    if model_id.startswith("stub:"):
        return StubFeatureBackend(feature_dim)
    if model_id.startswith("torchvision:"):
        return TorchvisionFeatureBackend(model_id, feature_dim)
    raise BridgeError(f"unknown feature backend {model_id!r}")


# ---------------------------------------------------------------------------
# zero-shot pseudo labels
# ---------------------------------------------------------------------------


class StubPseudoBackend:
    """Deterministic per-(frame, prompt) scores."""

    def __call__(self, frame: np.ndarray, prompts: list[str]) -> np.ndarray:
        img_bytes = np.ascontiguousarray(frame).tobytes()
        scores = [
            np.random.default_rng(_seed_from(b"pseudo", img_bytes, p.encode("utf-8"))).random()
            for p in prompts
        ]
        return np.asarray(scores)


class ClipPseudoBackend:
    def __init__(self, model_id: str):
        try:
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise BridgeError(f"{model_id} needs transformers installed") from exc
        name = model_id.split(":", 1)[1]
        try:
            self.model = CLIPModel.from_pretrained(name)
            self.processor = CLIPProcessor.from_pretrained(name)
        except Exception as exc:
            raise BridgeError(f"could not load CLIP weights {name!r}: {exc}") from exc

    def __call__(self, frame: np.ndarray, prompts: list[str]) -> np.ndarray:
        import torch

        inputs = self.processor(text=prompts, images=frame, return_tensors="pt", padding=True)
        with torch.no_grad():
            logits = self.model(**inputs).logits_per_image[0]
        return logits.numpy()


def load_pseudo_backend(model_id: str):
    if model_id.startswith("stub:"):
        return StubPseudoBackend()
    if model_id.startswith("clip:"):
        return ClipPseudoBackend(model_id)
    raise BridgeError(f"unknown pseudo-label backend {model_id!r}")


# ---------------------------------------------------------------------------
# knowledge texts (relation inferences + sentence completion)
# ---------------------------------------------------------------------------

RELATIONS = (
    "AtLocation",
    "ObjectUse",
    "xNeed",
    "xEffect",
    "xWant",
    "xIntent",
    "isAfter",
    "isBefore",
    "HasSubEvent",
    "Causes",
    "oEffect",
    "oWant",
)

_WORD_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)*|[^\sa-z0-9]")


def sentence_key(text: str) -> str:
    return " ".join(_WORD_RE.findall(text.lower()))


# Canonical illustration pairs, served verbatim by the stub backend.
_CANNED_EXPLICIT = {
    sentence_key("walk to the coffee maker on the right"): {
        "AtLocation": "kitchen",
        "xEffect": "gets coffee",
        "isAfter": "walk to kitchen",
    }
}
_CANNED_IMPLICIT = {
    sentence_key("Pick the dark rag up from the tub."): "Pour the water from the bowl onto it."
}


class StubKnowledgeBackend:
    """Canned fixtures plus deterministic hash-derived filler texts."""

    _FILLER = ("nearby", "soon", "carefully", "again", "right away", "at home")

    def _filler(self, sentence: str, relation: str) -> str:
        idx = _seed_from(b"knowledge", sentence.encode("utf-8"), relation.encode("utf-8"))
        return self._FILLER[idx % len(self._FILLER)]

    def infer(self, sentence: str) -> dict[str, str]:
        key = sentence_key(sentence)
        canned = _CANNED_EXPLICIT.get(key, {})
        return {r: canned.get(r, self._filler(sentence, r)) for r in RELATIONS}

    def complete(self, sentence: str) -> str:
        key = sentence_key(sentence)
        if key in _CANNED_IMPLICIT:
            return _CANNED_IMPLICIT[key]
        return f"then wait {self._filler(sentence, 'next')} ."


def load_knowledge_backend(model_id: str):
    if model_id.startswith("stub:"):
        return StubKnowledgeBackend()
    raise BridgeError(
        f"unknown knowledge backend {model_id!r} (relation/completion models must be "
        "exported offline and provided as stub fixtures or precomputed files)"
    )


# ---------------------------------------------------------------------------
# sentence embeddings
# ---------------------------------------------------------------------------


class StubEmbeddingBackend:
    """Hashed bag-of-words with a fixed projection; unit norm, 384 wide."""

    def __init__(self, dim: int = EMBEDDING_DIM, buckets: int = 4096, seed: int = 1234):
        self.dim = dim
        self.buckets = buckets
        self.projection = np.random.default_rng(seed).standard_normal((buckets, dim))

    def __call__(self, sentence: str) -> np.ndarray:
        words = _WORD_RE.findall(sentence.lower())
        if not words:
            return np.zeros(self.dim, dtype=np.float32)
        bag = np.zeros(self.buckets)
        for w in words:
            bag[_seed_from(b"embed", w.encode("utf-8")) % self.buckets] += 1.0
        vec = bag @ self.projection
        return (vec / np.linalg.norm(vec)).astype(np.float32)


class SbertEmbeddingBackend:
    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise BridgeError(f"{model_id} needs sentence-transformers installed") from exc
        name = model_id.split(":", 1)[1]
        try:
            self.model = SentenceTransformer(name)
        except Exception as exc:
            raise BridgeError(f"could not load sentence encoder {name!r}: {exc}") from exc

    def __call__(self, sentence: str) -> np.ndarray:
        vec = np.asarray(self.model.encode([sentence])[0], dtype=np.float32)
        if vec.shape != (EMBEDDING_DIM,):
            raise BridgeError(f"encoder returned width {vec.shape}, need ({EMBEDDING_DIM},)")
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec


def load_embedding_backend(model_id: str):
    if model_id.startswith("stub:"):
        return StubEmbeddingBackend()
    if model_id.startswith("sbert:"):
        return SbertEmbeddingBackend(model_id)
    raise BridgeError(f"unknown embedding backend {model_id!r}")
