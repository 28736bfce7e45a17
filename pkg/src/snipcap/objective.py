"""Training objectives and the teacher-forced training loop.

Four pieces: per-frame BCE on the snippet selector, per-class BCE on
the action-object head, a label-smoothed cross-entropy on the decoder
with an unlikelihood penalty on tokens already emitted in the current
sentence, and their weighted sum. The printed form of the repetition
term rewards repeated-token mass if taken literally; it is implemented
as the standard penalty sum(-log(1 - p(c))), which is what decreasing
the probability of high-frequency wrong candidates requires.

Contexts are teacher-forced during training: each step conditions on
the ground-truth previous caption. Generation conditions on generated
sentences instead; that exposure gap is inherent to the setup.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as N
from .datamodel import DatasetSplit, VideoRecord, tokenize
from .knowledge import Providers, context_for_step
from .model import CaptionModel, apply_snippet_mask
from .model.params import save_checkpoint


class ObjectiveError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lambda_snippet: float = 10.0
    lambda_actobj: float = 10.0
    lambda_sentence: float = 1.0
    warmup_steps: int = 2000
    base_lr_scale: float = 1.0
    batch_size: int = 4
    label_smoothing: float = 0.1
    max_steps: int = 2000
    seed: int = 0
    grad_clip: float = 1.0
    detach_actobj: bool = False  # ablation: stop gradient where the encoder consumes a_i
    checkpoint_every: int = 0  # 0 = final only
    log_every: int = 1
    early_stop_frac: float | None = None  # stop when total < frac * first-step total
    early_stop_check_every: int = 25

    def validate(self) -> None:
        if min(self.lambda_snippet, self.lambda_actobj, self.lambda_sentence) < 0:
            raise ObjectiveError("loss weights must be >= 0")
        if self.warmup_steps < 1:
            raise ObjectiveError("warmup_steps must be >= 1")
        if self.batch_size < 1 or self.max_steps < 1:
            raise ObjectiveError("batch_size and max_steps must be positive")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ObjectiveError("label_smoothing must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ObjectiveError(f"unknown train config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class LossBreakdown:
    snippet_loss: float
    actobj_loss: float
    sentence_loss: float
    total: float
    clamped_candidates: int = 0

    def as_log_line(self, step: int, lr: float) -> str:
        return json.dumps(
            {
                "step": step,
                "lr": lr,
                "snippet": self.snippet_loss,
                "actobj": self.actobj_loss,
                "sentence": self.sentence_loss,
                "total": self.total,
            }
        )


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def binary_cross_entropy(pred: N.Tensor, target: np.ndarray) -> N.Tensor:
    """Mean BCE over all entries; target must be 0/1."""
    target = np.asarray(target)
    if pred.data.shape != target.shape:
        raise N.ShapeMismatch(f"BCE shapes differ: {pred.data.shape} vs {target.shape}")
    if not np.all(np.isin(target, (0, 1))):
        raise ObjectiveError("BCE target is not a 0/1 vector")
    y = N.constant(target.astype(pred.data.dtype))
    one = N.constant(np.ones_like(y.data))
    p = N.clip(pred, 1e-7, 1.0 - 1e-7)
    return N.neg(N.mean(N.add(N.mul(y, N.log(p)), N.mul(N.sub(one, y), N.log(N.sub(one, p))))))


loss_snippet = binary_cross_entropy
loss_actobj = binary_cross_entropy


def smoothed_target(gold: int, vocab_size: int, eps: float, dtype=np.float64) -> np.ndarray:
    """1 - eps on gold, eps / (vocab - 1) elsewhere; sums to one."""
    q = np.full(vocab_size, eps / (vocab_size - 1), dtype=dtype)
    q[gold] = 1.0 - eps
    return q


def loss_sentence(
    step_distributions: list[N.Tensor],
    target_tokens: list[int],
    eps: float,
    vocab_size: int,
) -> tuple[N.Tensor, int]:
    """Label-smoothed NLL (mean over positions) plus the repetition penalty.

    The candidate set at position j is the set of tokens already emitted
    in this sentence minus the current gold token. Candidate
    probabilities at 1 - 1e-9 or above are clamped; the count of clamped
    entries is returned for diagnostics.
    """
    if len(step_distributions) != len(target_tokens):
        raise ObjectiveError(
            f"{len(step_distributions)} distributions for {len(target_tokens)} target positions"
        )
    if not target_tokens:
        raise ObjectiveError("empty target sentence")
    dtype = step_distributions[0].data.dtype
    ce_terms: list[N.Tensor] = []
    ul_terms: list[N.Tensor] = []
    clamped = 0
    for j, (dist, gold) in enumerate(zip(step_distributions, target_tokens)):
        if dist.data.shape != (vocab_size,):
            raise N.ShapeMismatch(f"distribution {j} has shape {dist.data.shape}, want ({vocab_size},)")
        q = N.constant(smoothed_target(gold, vocab_size, eps, dtype))
        logp = N.log(N.clip(dist, 1e-12, 1.0))
        ce_terms.append(N.neg(N.sum_(N.mul(q, logp))))
        candidates = set(target_tokens[:j]) - {gold}
        if candidates:
            mask = np.zeros(vocab_size, dtype=dtype)
            mask[sorted(candidates)] = 1.0
            clamped += int(np.sum((dist.data >= 1.0 - 1e-9) & (mask > 0)))
            one = N.constant(np.ones(vocab_size, dtype=dtype))
            log_rest = N.log(N.clip(N.sub(one, dist), 1e-9, 1.0))
            ul_terms.append(N.neg(N.sum_(N.mul(N.constant(mask), log_rest))))
    total = _mean_scalars(ce_terms)
    for t in ul_terms:
        total = N.add(total, t)
    return total, clamped


def loss_total(snippet: float, actobj: float, sentence: float, cfg: TrainConfig) -> LossBreakdown:
    total = cfg.lambda_snippet * snippet + cfg.lambda_actobj * actobj + cfg.lambda_sentence * sentence
    return LossBreakdown(snippet_loss=snippet, actobj_loss=actobj, sentence_loss=sentence, total=total)


def lr_schedule(step: int, warmup: int, d_model: int) -> float:
    """Inverse-square-root schedule with linear warmup."""
    if step < 1:
        raise ObjectiveError(f"schedule step must be >= 1, got {step}")
    return d_model**-0.5 * min(step**-0.5, step * warmup**-1.5)


def _mean_scalars(terms: list[N.Tensor]) -> N.Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = N.add(acc, t)
    return N.mul(acc, N.constant(np.asarray(1.0 / len(terms), dtype=acc.data.dtype)))


# ---------------------------------------------------------------------------
# one teacher-forced snippet
# ---------------------------------------------------------------------------


def snippet_forward(
    model: CaptionModel,
    record: VideoRecord,
    snippet_idx: int,
    providers: Providers,
    vocab,
    label_smoothing: float,
    rng=None,
    detach_actobj: bool = False,
) -> tuple[N.Tensor, N.Tensor, N.Tensor, int]:
    """Losses for one snippet conditioned on the ground-truth previous caption."""
    snip = record.snippets[snippet_idx]
    prev = record.snippets[snippet_idx - 1].caption if snippet_idx > 0 else None
    ctx = context_for_step(prev, providers, key=(record.id, snippet_idx))

    V = N.constant(np.asarray(record.features, dtype=model.dtype))
    n = model.snippet_selector(V, ctx, rng)
    l_snip = loss_snippet(n, snip.frame_mask(record.num_frames))

    V_masked = apply_snippet_mask(V, n)
    a = model.action_object(V_masked, ctx, rng)
    l_act = loss_actobj(a, snip.label_vector)

    a_for_encoder = a.detach() if detach_actobj else a
    encoded = model.encode(V_masked, a_for_encoder, ctx, rng)
    memory = model.memory_init(encoded)

    ids = tokenize(snip.caption, vocab, max_len=model.config.max_sentence_len)
    targets = ids[1:]
    dists: list[N.Tensor] = []
    for j in range(len(targets)):
        dist, memory = model.decoder_step(ids[: j + 1], memory, rng)
        dists.append(dist)
    l_sen, clamped = loss_sentence(dists, targets, label_smoothing, model.config.vocab_size)
    return l_snip, l_act, l_sen, clamped


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def pick_batch(records: list[VideoRecord], batch_size: int, seed: int, step: int) -> list[VideoRecord]:
    rng = np.random.default_rng([seed, step, 0])
    replace = len(records) < batch_size
    idx = rng.choice(len(records), size=batch_size, replace=replace)
    return [records[i] for i in idx]


def train_step(
    model: CaptionModel,
    batch: list[VideoRecord],
    providers: Providers,
    adam: N.AdamState,
    cfg: TrainConfig,
    step: int,
    vocab,
) -> LossBreakdown:
    """Forward all snippets of the batch, one optimizer step; deterministic in (seed, step)."""
    rng = np.random.default_rng([cfg.seed, step, 1]) if model.config.dropout > 0 else None
    N.zero_grads(model.params)

    snip_terms: list[N.Tensor] = []
    act_terms: list[N.Tensor] = []
    sen_terms: list[N.Tensor] = []
    clamped = 0
    for record in batch:
        for i in range(len(record.snippets)):
            l_snip, l_act, l_sen, c = snippet_forward(
                model,
                record,
                i,
                providers,
                vocab,
                cfg.label_smoothing,
                rng=rng,
                detach_actobj=cfg.detach_actobj,
            )
            snip_terms.append(l_snip)
            act_terms.append(l_act)
            sen_terms.append(l_sen)
            clamped += c

    snip_mean = _mean_scalars(snip_terms)
    act_mean = _mean_scalars(act_terms)
    sen_mean = _mean_scalars(sen_terms)
    total = N.add(
        N.add(N.mul(snip_mean, N.as_tensor(cfg.lambda_snippet, like=snip_mean)),
              N.mul(act_mean, N.as_tensor(cfg.lambda_actobj, like=act_mean))),
        N.mul(sen_mean, N.as_tensor(cfg.lambda_sentence, like=sen_mean)),
    )
    N.backward(total)
    N.clip_global_norm(model.params, cfg.grad_clip)
    lr = cfg.base_lr_scale * lr_schedule(step, cfg.warmup_steps, model.config.d_model)
    N.adam_step(model.params, adam, lr)

    return LossBreakdown(
        snippet_loss=float(snip_mean.data),
        actobj_loss=float(act_mean.data),
        sentence_loss=float(sen_mean.data),
        total=float(total.data),
        clamped_candidates=clamped,
    )


def train_loop(
    model: CaptionModel,
    split: DatasetSplit,
    providers: Providers,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    adam: N.AdamState | None = None,
    start_step: int = 1,
    log_lines: list[str] | None = None,
    eval_callback=None,
    eval_every: int = 0,
) -> list[LossBreakdown]:
    """Run steps [start_step, max_steps]; returns the loss trace.

    With out_dir set, writes train_log.jsonl and checkpoints (cadence +
    final). Resuming from a checkpoint saved after step k continues at
    k+1 with a bit-identical trace. eval_callback(step, model) fires
    every eval_every steps; it must not mutate the model.
    """
    cfg.validate()
    adam = adam if adam is not None else N.AdamState.for_params(model.params)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    history: list[LossBreakdown] = []
    first_total: float | None = None
    log_path = out / "train_log.jsonl" if out is not None else None

    for step in range(start_step, cfg.max_steps + 1):
        batch = pick_batch(split.records, cfg.batch_size, cfg.seed, step)
        breakdown = train_step(model, batch, providers, adam, cfg, step, split.vocab)
        history.append(breakdown)
        lr = cfg.base_lr_scale * lr_schedule(step, cfg.warmup_steps, model.config.d_model)
        line = breakdown.as_log_line(step, lr)
        if log_lines is not None:
            log_lines.append(line)
        if log_path is not None and step % cfg.log_every == 0:
            with log_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
        if first_total is None:
            first_total = breakdown.total
        if out is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"ckpt_step{step}", model.config, model.params, cfg.seed, step, adam)
        if eval_callback is not None and eval_every and step % eval_every == 0:
            eval_callback(step, model)
        if (
            cfg.early_stop_frac is not None
            and step % cfg.early_stop_check_every == 0
            and breakdown.total < cfg.early_stop_frac * first_total
        ):
            break

    if out is not None:
        last_step = start_step + len(history) - 1
        save_checkpoint(out / "ckpt_final", model.config, model.params, cfg.seed, last_step, adam)
    return history
