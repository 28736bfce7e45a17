"""Per-step conditioning vectors from the previous sentence.

Three signals feed each captioning step: an embedding of relation-typed
inferences about the previous sentence (m), an embedding of a scripted
or precomputed completion of it (g), and an embedding of the previous
generated sentence itself (h). Providers are pluggable so any signal
can be swapped for a null stand-in (ablations) or for precomputed
vectors stored next to the dataset.

The embedder is a deterministic stand-in for a pretrained sentence
encoder: hashed bag-of-words projected to 384 dims with a fixed seeded
matrix, L2-normalized. Same dimensionality, no model downloads.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datamodel import grammar
from .datamodel.records import KNOWLEDGE_DIM, DatasetSplit
from .datamodel.vocab import normalize

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

PAD_SEPARATOR = "<PAD>"


class ProviderError(KeyError):
    pass


@dataclass(frozen=True)
class RelationInference:
    relation: str
    text: str


def natural_relation_name(relation: str) -> str:
    """Spell a relation name as words: AtLocation -> "At Location", xEffect -> "Effect"."""
    name = relation
    if len(name) > 1 and name[0] in "xo" and name[1].isupper():
        name = name[1:]
    words = re.findall(r"[A-Za-z][a-z]*", name)
    return " ".join(w.capitalize() for w in words)


def sentence_key(text: str) -> str:
    return " ".join(normalize(text))


# ---------------------------------------------------------------------------
# explicit providers: sentence -> one inference per relation
# ---------------------------------------------------------------------------


class NullExplicit:
    def infer(self, sentence: str, relations: tuple[str, ...] = RELATIONS) -> list[RelationInference]:
        return [RelationInference(r, "") for r in relations]


class ToyKBExplicit:
    """Template knowledge table keyed on the synthetic grammar's verb/object."""

    def __init__(self, table: dict[str, dict[str, str]]):
        self.table = table

    def infer(self, sentence: str, relations: tuple[str, ...] = RELATIONS) -> list[RelationInference]:
        parsed = grammar.parse_caption(sentence)
        entry: dict[str, str] = {}
        if parsed is not None:
            ai, oi = parsed
            entry = self.table.get(f"{grammar.ACTIONS[ai]}|{grammar.OBJECTS[oi]}", {})
        return [RelationInference(r, entry.get(r, "")) for r in relations]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.table, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ToyKBExplicit":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


class FileExplicit:
    """Precomputed inferences keyed by normalized sentence."""

    def __init__(self, entries: dict[str, dict[str, str]]):
        self.entries = entries

    def infer(self, sentence: str, relations: tuple[str, ...] = RELATIONS) -> list[RelationInference]:
        key = sentence_key(sentence)
        if key not in self.entries:
            raise ProviderError(f"no precomputed inferences for sentence {key!r}")
        entry = self.entries[key]
        return [RelationInference(r, entry.get(r, "")) for r in relations]

    @classmethod
    def load(cls, path: str | Path) -> "FileExplicit":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


_VERB_NEED = {
    "pick up": "to reach for it",
    "wash": "to turn on the water",
    "put down": "to hold it",
    "walk to": "to stand up",
    "open": "to grab the handle",
    "close": "to hold the door",
    "heat": "to turn it on",
    "slice": "to hold a knife",
}
_VERB_EFFECT = {
    "pick up": "holds it",
    "wash": "it gets clean",
    "put down": "frees the hands",
    "walk to": "arrives there",
    "open": "it is open",
    "close": "it is closed",
    "heat": "it gets hot",
    "slice": "it is in pieces",
}
_OBJECT_USE = {
    "mug": "drink coffee",
    "apple": "eat a snack",
    "knife": "cut things",
    "rag": "wipe surfaces",
    "plate": "serve food",
    "pan": "cook food",
    "lamp": "light the room",
    "fridge": "keep food cold",
    "coffee maker": "make coffee",
    "sink": "rinse things",
    "tub": "take a bath",
}


def build_default_toy_kb() -> ToyKBExplicit:
    table: dict[str, dict[str, str]] = {}
    n = len(grammar.ACTIONS)
    for ai, verb in enumerate(grammar.ACTIONS):
        prev_verb = grammar.ACTIONS[(ai - 1) % n]
        next_verb = grammar.ACTIONS[(ai + 1) % n]
        for obj in grammar.OBJECTS:
            table[f"{verb}|{obj}"] = {
                "AtLocation": grammar.room_of(obj),
                "ObjectUse": _OBJECT_USE[obj],
                "xNeed": _VERB_NEED[verb],
                "xEffect": _VERB_EFFECT[verb],
                "xWant": f"to {next_verb} the {obj}",
                "xIntent": f"to use the {obj}",
                "isAfter": f"{prev_verb} the {obj}",
                "isBefore": f"{next_verb} the {obj}",
                "HasSubEvent": f"look at the {obj}",
                "Causes": _VERB_EFFECT[verb],
                "oEffect": "",
                "oWant": "",
            }
    # Walking to the coffee maker is the canonical illustration: the agent
    # ends up in the kitchen and gets coffee.
    table["walk to|coffee maker"]["xEffect"] = "gets coffee"
    table["walk to|coffee maker"]["isAfter"] = "walk to kitchen"
    return ToyKBExplicit(table)


def explicit_inferences(
    sentence: str, provider, relations: tuple[str, ...] = RELATIONS
) -> list[RelationInference]:
    """Top-1 inference per configured relation for a nonempty sentence."""
    if not sentence.strip():
        raise ValueError("explicit_inferences needs a nonempty sentence")
    return provider.infer(sentence, relations)


def render_inference_string(
    inferences: list[RelationInference], relations: tuple[str, ...] = RELATIONS
) -> str:
    """One sentence per relation in configured order, separated by <PAD> tokens."""
    by_rel = {inf.relation: inf.text for inf in inferences}
    parts = []
    for rel in relations:
        if rel in by_rel:
            parts.append(f"{natural_relation_name(rel)} {by_rel[rel]}".strip())
    return f" {PAD_SEPARATOR} ".join(parts)


# ---------------------------------------------------------------------------
# implicit providers: sentence -> one completion sentence
# ---------------------------------------------------------------------------


class NullImplicit:
    def complete(self, sentence: str) -> str:
        return ""


class ToyCompleter:
    """Scripted next template of the synthetic grammar (same object, next action)."""

    def complete(self, sentence: str) -> str:
        parsed = grammar.parse_caption(sentence)
        if parsed is None:
            return ""
        ai, oi = parsed
        return grammar.caption_text(grammar.next_action(ai), oi)


class FileImplicit:
    """Precomputed completions keyed by normalized sentence."""

    def __init__(self, entries: dict[str, str]):
        self.entries = entries

    def complete(self, sentence: str) -> str:
        key = sentence_key(sentence)
        if key not in self.entries:
            raise ProviderError(f"no precomputed completion for sentence {key!r}")
        return self.entries[key]

    @classmethod
    def load(cls, path: str | Path) -> "FileImplicit":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))


def implicit_completion(sentence: str, provider) -> str:
    if not sentence.strip():
        raise ValueError("implicit_completion needs a nonempty sentence")
    return provider.complete(sentence)


# ---------------------------------------------------------------------------
# precomputed vectors stored with the dataset
# ---------------------------------------------------------------------------


class OracleVectorProvider:
    """Serves the per-snippet knowledge blobs from a dataset split.

    The blob stored at snippet j is the conditioning vector consumed at
    step j+1, so step i reads the entry keyed (video_id, i-1).
    """

    def __init__(self, table: dict[tuple[str, int], np.ndarray]):
        self.table = table

    @classmethod
    def from_split(cls, split: DatasetSplit) -> "OracleVectorProvider":
        table = {}
        for r in split.records:
            for j, s in enumerate(r.snippets):
                if s.knowledge is not None:
                    table[(r.id, j)] = s.knowledge
        return cls(table)

    def vector(self, key: tuple[str, int]) -> np.ndarray:
        video_id, step = key
        entry = self.table.get((video_id, step - 1))
        if entry is None:
            raise ProviderError(f"no stored knowledge vector for video {video_id!r} step {step}")
        return entry


# ---------------------------------------------------------------------------
# sentence embedder
# ---------------------------------------------------------------------------


class SentenceEmbedder:
    """Hashed bag-of-words -> fixed seeded random projection -> L2 norm."""

    def __init__(self, dim: int = KNOWLEDGE_DIM, seed: int = 0, buckets: int = 4096):
        self.dim = dim
        self.seed = seed
        self.buckets = buckets
        self._projection: np.ndarray | None = None
        self._cache: dict[str, np.ndarray] = {}

    def _proj(self) -> np.ndarray:
        if self._projection is None:
            rng = np.random.default_rng(self.seed)
            self._projection = rng.standard_normal((self.buckets, self.dim))
        return self._projection

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.buckets

    def __call__(self, text: str) -> np.ndarray:
        cached = self._cache.get(text)
        if cached is not None:
            return cached
        tokens = normalize(text)
        if not tokens:
            vec = np.zeros(self.dim, dtype=np.float32)
        else:
            bag = np.zeros(self.buckets)
            for tok in tokens:
                bag[self._bucket(tok)] += 1.0
            raw = bag @ self._proj()
            vec = (raw / np.linalg.norm(raw)).astype(np.float32)
        if len(self._cache) < 65536:
            self._cache[text] = vec
        return vec


# ---------------------------------------------------------------------------
# per-step context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnowledgeContext:
    m: np.ndarray  # explicit, (384,) float32
    g: np.ndarray  # implicit, (384,) float32
    h: np.ndarray  # previous-sentence embedding, (384,) float32

    def __post_init__(self):
        for name, v in (("m", self.m), ("g", self.g), ("h", self.h)):
            if v.shape != (KNOWLEDGE_DIM,):
                raise ValueError(f"context {name} has shape {v.shape}, want ({KNOWLEDGE_DIM},)")
            if not np.all(np.isfinite(v)):
                raise ValueError(f"context {name} contains non-finite values")

    @classmethod
    def zeros(cls) -> "KnowledgeContext":
        z = np.zeros(KNOWLEDGE_DIM, dtype=np.float32)
        return cls(z, z.copy(), z.copy())


@dataclass(frozen=True)
class Providers:
    explicit: object = field(default_factory=NullExplicit)
    implicit: object = field(default_factory=NullImplicit)
    hidden: str = "embed"  # "embed" | "null"
    embedder: SentenceEmbedder = field(default_factory=SentenceEmbedder)
    relations: tuple[str, ...] = RELATIONS


def context_for_step(
    prev_sentence: str | None,
    providers: Providers,
    key: tuple[str, int] | None = None,
) -> KnowledgeContext:
    """Conditioning triple for one step; zero vectors before the first sentence.

    `key` = (video_id, step_index) routes vector-backed providers to the
    stored blob for that step.
    """
    if prev_sentence is None or not prev_sentence.strip():
        return KnowledgeContext.zeros()

    if hasattr(providers.explicit, "vector"):
        if key is None:
            raise ProviderError("vector-backed explicit provider needs a (video_id, step) key")
        m = np.asarray(providers.explicit.vector(key), dtype=np.float32)
    else:
        inferences = explicit_inferences(prev_sentence, providers.explicit, providers.relations)
        m = providers.embedder(render_inference_string(inferences, providers.relations))

    if hasattr(providers.implicit, "vector"):
        if key is None:
            raise ProviderError("vector-backed implicit provider needs a (video_id, step) key")
        g = np.asarray(providers.implicit.vector(key), dtype=np.float32)
    else:
        g = providers.embedder(implicit_completion(prev_sentence, providers.implicit))

    if providers.hidden == "embed":
        h = providers.embedder(prev_sentence)
    else:
        h = np.zeros(KNOWLEDGE_DIM, dtype=np.float32)

    return KnowledgeContext(m=m, g=g, h=h)
