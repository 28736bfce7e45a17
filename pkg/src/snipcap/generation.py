"""Autoregressive multi-sentence inference.

Each step selects a snippet, predicts its actions/objects, decodes one
sentence greedily, then refreshes the knowledge context from that
sentence for the next step. Stopping: the snippet cap, a selector
confidence floor (free mode), or exactly the annotated segments
(gt_proposals mode, the standard evaluation protocol).

Free mode pulls features with the soft predicted mask, matching
training; thresholded ranges are emitted separately for scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as N
from .datamodel import DatasetSplit, VideoRecord, detokenize
from .datamodel.vocab import BOS_ID, EOS_ID
from .knowledge import KnowledgeContext, Providers, context_for_step
from .model import CaptionModel, SnippetMemoryState, apply_snippet_mask

TAU_STOP_DEFAULT = 0.5
TOP_K_LABELS = 3

MODES = ("free", "gt_proposals")


class GenerationError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class GenerationOutput:
    video_id: str
    sentences: list[list[int]] = field(default_factory=list)  # token ids, no BOS/EOS
    texts: list[str] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)  # soft selector output, (T,)
    actobj: list[np.ndarray] = field(default_factory=list)
    contexts: list[KnowledgeContext] = field(default_factory=list)

    def __post_init__(self):
        lengths = {len(self.sentences), len(self.texts), len(self.masks), len(self.actobj), len(self.contexts)}
        if len(lengths) > 1:
            raise ValueError("generation output lists must stay aligned")


def generate_sentence(
    model: CaptionModel, memory: SnippetMemoryState, max_len: int | None = None
) -> tuple[list[int], SnippetMemoryState]:
    """Greedy decode from BOS; argmax ties go to the lowest token id."""
    cap = model.config.max_sentence_len if max_len is None else max_len
    prefix = [BOS_ID]
    out: list[int] = []
    while len(out) < cap:
        dist, memory = model.decoder_step(prefix, memory)
        token = int(np.argmax(dist.data))
        if token == EOS_ID:
            break
        out.append(token)
        prefix.append(token)
    return out, memory


def thresholded_range(mask: np.ndarray, tau: float = 0.5) -> tuple[int, int] | None:
    on = np.flatnonzero(mask >= tau)
    if on.size == 0:
        return None
    return int(on[0]), int(on[-1] + 1)


def generate_paragraph(
    model: CaptionModel,
    record: VideoRecord,
    providers: Providers,
    vocab,
    mode: str = "free",
    tau_stop: float = TAU_STOP_DEFAULT,
) -> GenerationOutput:
    """Caption a video snippet by snippet; see module docstring for stop rules."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    t = record.num_frames
    if t > model.config.max_frames:
        raise ValueError(f"{t} frames exceed max_frames {model.config.max_frames}")

    V = N.constant(np.asarray(record.features, dtype=model.dtype))
    out = GenerationOutput(video_id=record.id)
    prev_text: str | None = None

    step = 0
    while True:
        if mode == "gt_proposals":
            if step >= len(record.snippets):
                break
        elif step >= model.config.max_snippets:
            break

        try:
            ctx = context_for_step(prev_text, providers, key=(record.id, step))
        except Exception as exc:  # provider failures abort with the step index
            raise GenerationError(str(exc), step) from exc

        n = model.snippet_selector(V, ctx)
        if mode == "free":
            if float(n.data.max()) < tau_stop:
                break
            pull_mask = n
        else:
            pull_mask = N.constant(
                record.snippets[step].frame_mask(t).astype(model.dtype)
            )

        V_masked = apply_snippet_mask(V, pull_mask)
        a = model.action_object(V_masked, ctx)
        encoded = model.encode(V_masked, a, ctx)
        memory = model.memory_init(encoded)
        sentence, _ = generate_sentence(model, memory)
        text = detokenize(sentence, vocab)

        out.sentences.append(sentence)
        out.texts.append(text)
        out.masks.append(n.data.astype(np.float32))
        out.actobj.append(a.data.astype(np.float32))
        out.contexts.append(ctx)
        prev_text = text
        step += 1

    return out


# ---------------------------------------------------------------------------
# output documents (consumed by evaluation)
# ---------------------------------------------------------------------------


def _top_k_names(scores: np.ndarray, names: tuple[str, ...], k: int = TOP_K_LABELS) -> list[str]:
    order = np.argsort(-scores, kind="stable")[: min(k, len(names))]
    return [names[i] for i in order]


def build_document(split: DatasetSplit, outputs: list[GenerationOutput], mode: str) -> dict:
    a_w = len(split.action_names)
    o_w = len(split.object_names)
    videos = []
    for out in outputs:
        snippets = []
        for i, text in enumerate(out.texts):
            mask = out.masks[i]
            scores = out.actobj[i]
            frame_range = thresholded_range(mask)
            snippets.append(
                {
                    "frame_range": None if frame_range is None else list(frame_range),
                    "caption": text,
                    "tokens": [int(x) for x in out.sentences[i]],
                    "mask": [float(x) for x in mask],
                    "actobj": [float(x) for x in scores],
                    "top_actions": _top_k_names(scores[:a_w], split.action_names),
                    "top_objects": _top_k_names(scores[a_w : a_w + o_w], split.object_names),
                }
            )
        videos.append({"id": out.video_id, "snippets": snippets})
    return {"dataset": split.dataset, "split": split.split, "mode": mode, "videos": videos}


def write_document(doc: dict, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_document(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
