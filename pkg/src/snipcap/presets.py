"""Canned experiment setups shared by the CLI, the scripts, and the acceptance suite."""

from __future__ import annotations

import numpy as np

from . import numerics as N
from .datamodel import SnippetAnnotation, SynthConfig, VideoRecord, Vocabulary
from .knowledge import Providers, SentenceEmbedder
from .model import CaptionModel, ModelConfig
from .objective import TrainConfig

# ---------------------------------------------------------------------------
# gradient-check probe: tiny 64-bit model + one fixed two-snippet video
# ---------------------------------------------------------------------------

GRADCHECK_MODEL = ModelConfig(
    vocab_size=20,
    feature_dim=12,
    d_model=16,
    heads=2,
    enc_layers=1,
    dec_layers=1,
    ffn_dim=24,
    actobj_dim=6,
    max_frames=8,
    max_sentence_len=8,
    dropout=0.0,
)


class _FixedVectorProvider:
    """Deterministic stand-in for precomputed knowledge vectors."""

    def __init__(self, table: dict[tuple[str, int], np.ndarray]):
        self.table = table

    def vector(self, key):
        return self.table[key]


def gradcheck_probe(seed: int = 0):
    """Returns (record, vocab, providers) exercising every parameter block."""
    rng = np.random.default_rng([seed, 99])
    t, dv = 8, GRADCHECK_MODEL.feature_dim
    features = rng.normal(0.0, 0.5, size=(t, dv)).astype(np.float64)
    vocab = Vocabulary(tuple(f"t{i}" for i in range(16)))  # size 20 with reserved ids

    def labels(bits):
        return np.asarray(bits, dtype=np.int8)

    snippets = [
        SnippetAnnotation(0, 4, "t0 t1 t2", labels([1, 0]), labels([0, 1]), labels([1, 0])),
        SnippetAnnotation(4, 8, "t3 t1 t4 t1", labels([0, 1]), labels([1, 0]), labels([0, 1])),
    ]
    record = VideoRecord(id="probe", num_frames=t, features=features, snippets=snippets)

    def unit(v):
        return (v / np.linalg.norm(v)).astype(np.float32)

    table = {("probe", i): unit(rng.normal(size=384)) for i in range(len(snippets))}
    providers = Providers(
        explicit=_FixedVectorProvider(table),
        implicit=_FixedVectorProvider(table),
        hidden="embed",
        embedder=SentenceEmbedder(),
    )
    return record, vocab, providers


def gradcheck_closure(model: CaptionModel, seed: int = 0):
    """Full weighted training loss over the probe video as a reusable closure."""
    from .objective import TrainConfig, snippet_forward

    record, vocab, providers = gradcheck_probe(seed)
    cfg = TrainConfig()

    def closure():
        total = None
        for i in range(len(record.snippets)):
            l_snip, l_act, l_sen, _ = snippet_forward(
                model, record, i, providers, vocab, cfg.label_smoothing, rng=None
            )
            part = N.add(
                N.add(
                    N.mul(l_snip, N.as_tensor(cfg.lambda_snippet, like=l_snip)),
                    N.mul(l_act, N.as_tensor(cfg.lambda_actobj, like=l_act)),
                ),
                N.mul(l_sen, N.as_tensor(cfg.lambda_sentence, like=l_sen)),
            )
            total = part if total is None else N.add(total, part)
        return total

    return closure


# ---------------------------------------------------------------------------
# desk-scale experiment presets
# ---------------------------------------------------------------------------


def small_model_config(split, max_sentence_len: int = 12, dropout: float = 0.1) -> ModelConfig:
    return ModelConfig(
        vocab_size=split.vocab.size,
        feature_dim=split.feature_dim,
        d_model=64,
        heads=4,
        enc_layers=2,
        dec_layers=2,
        ffn_dim=128,
        actobj_dim=split.actobj_dim,
        max_frames=split.max_frames,
        max_snippets=split.max_snippets,
        max_sentence_len=max_sentence_len,
        dropout=dropout,
    )


OVERFIT_SYNTH = SynthConfig(seed=7, num_videos=8, frames_per_snippet=4, snippets_per_video=3, feature_dim=64)

OVERFIT_TRAIN = TrainConfig(
    lambda_snippet=10.0,
    lambda_actobj=10.0,
    lambda_sentence=1.0,
    label_smoothing=0.1,
    batch_size=4,
    max_steps=2000,
    warmup_steps=300,
    base_lr_scale=0.5,
    seed=7,
    early_stop_frac=0.05,
    early_stop_check_every=25,
)


def overfit_model_config(split) -> ModelConfig:
    # memorization benchmark: no regularization wanted
    return small_model_config(split, dropout=0.0)


def ablation_synth(seed: int) -> SynthConfig:
    return SynthConfig(
        seed=seed,
        num_videos=64,
        val_videos=16,
        frames_per_snippet=4,
        snippets_per_video=3,
        feature_dim=64,
        alias_actions=True,
    )


def ablation_train(seed: int) -> TrainConfig:
    return TrainConfig(
        lambda_snippet=10.0,
        lambda_actobj=10.0,
        lambda_sentence=1.0,
        label_smoothing=0.1,
        batch_size=4,
        max_steps=600,
        warmup_steps=300,
        base_lr_scale=0.5,
        seed=seed,
    )
