"""End-to-end desk-scale experiments: overfit reproduction and the knowledge ablation.

These are the scaled-down counterparts of full-dataset training runs:
small synthetic splits, the small model preset, and fixed seeds. The
ablation trains matched models whose only difference is the knowledge
providers (stored oracle vectors vs nothing) and compares held-out
caption quality.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as N
from .datamodel import DatasetSplit, normalize, synth_generate
from .generation import build_document, generate_paragraph
from .knowledge import OracleVectorProvider, Providers, ToyCompleter, build_default_toy_kb
from .metrics import EvalReport, bleu_n, evaluate_generation
from .model import CaptionModel
from .objective import LossBreakdown, train_loop
from .presets import (
    OVERFIT_SYNTH,
    OVERFIT_TRAIN,
    ablation_synth,
    ablation_train,
    overfit_model_config,
    small_model_config,
)

ABLATION_SEEDS = (101, 202, 303)


def toy_providers() -> Providers:
    return Providers(explicit=build_default_toy_kb(), implicit=ToyCompleter())


def null_providers() -> Providers:
    return Providers(hidden="null")


def oracle_providers(*splits: DatasetSplit) -> Providers:
    oracle = OracleVectorProvider({})
    for split in splits:
        oracle.table.update(OracleVectorProvider.from_split(split).table)
    return Providers(explicit=oracle, implicit=oracle, hidden="embed")


def evaluate_gt_proposals(model: CaptionModel, split: DatasetSplit, providers: Providers) -> EvalReport:
    outs = [generate_paragraph(model, r, providers, split.vocab, mode="gt_proposals") for r in split.records]
    return evaluate_generation(build_document(split, outs, mode="gt_proposals"), split)


# ---------------------------------------------------------------------------
# overfit reproduction
# ---------------------------------------------------------------------------


@dataclass
class OverfitResult:
    history: list[LossBreakdown]
    first_total: float
    final_total: float
    exact_match_fraction: float
    train_bleu4: float
    report: EvalReport
    seconds: float
    model: CaptionModel = field(repr=False)
    split: DatasetSplit = field(repr=False)
    providers: Providers = field(repr=False)

    @property
    def loss_fraction(self) -> float:
        return self.final_total / self.first_total

    @property
    def steps_run(self) -> int:
        return len(self.history)


def run_overfit(out_dir: str | Path | None = None) -> OverfitResult:
    """Train the 8-video memorization benchmark and score caption reproduction."""
    t0 = time.time()
    train, _ = synth_generate(OVERFIT_SYNTH)
    model = CaptionModel(overfit_model_config(train), seed=OVERFIT_TRAIN.seed)
    providers = toy_providers()
    history = train_loop(model, train, providers, OVERFIT_TRAIN, out_dir=out_dir)

    outs = [generate_paragraph(model, r, providers, train.vocab, mode="gt_proposals") for r in train.records]
    exact = 0
    total = 0
    cands: list[list[str]] = []
    refs: list[list[list[str]]] = []
    for record, out in zip(train.records, outs):
        for i, snip in enumerate(record.snippets):
            total += 1
            got = normalize(out.texts[i])
            want = normalize(snip.caption)
            exact += got == want
            cands.append(got)
            refs.append([want])
    report = evaluate_generation(build_document(train, outs, mode="gt_proposals"), train)
    return OverfitResult(
        history=history,
        first_total=history[0].total,
        final_total=history[-1].total,
        exact_match_fraction=exact / total,
        train_bleu4=bleu_n(cands, refs, 4),
        report=report,
        seconds=time.time() - t0,
        model=model,
        split=train,
        providers=providers,
    )


# ---------------------------------------------------------------------------
# knowledge ablation
# ---------------------------------------------------------------------------


@dataclass
class AblationResult:
    reports: dict[int, dict[str, EvalReport]]  # seed -> arm -> held-out report
    seconds: float

    def mean_bleu4(self, arm: str) -> float:
        return float(np.mean([self.reports[s][arm].bleu4 for s in self.reports]))

    @property
    def mean_gap(self) -> float:
        return self.mean_bleu4("oracle") - self.mean_bleu4("null")

    def mean_metric(self, arm: str, name: str) -> float:
        return float(np.mean([getattr(self.reports[s][arm], name) for s in self.reports]))


def run_ablation_arm(train: DatasetSplit, val: DatasetSplit, arm: str, seed: int) -> EvalReport:
    if arm == "oracle":
        providers = oracle_providers(train, val)
    elif arm == "null":
        providers = null_providers()
    else:
        raise ValueError(f"unknown ablation arm {arm!r}")
    model = CaptionModel(small_model_config(train), seed=seed)
    train_loop(model, train, providers, ablation_train(seed))
    return evaluate_gt_proposals(model, val, providers)


def run_ablation(seeds: tuple[int, ...] = ABLATION_SEEDS) -> AblationResult:
    """Oracle-vs-null held-out comparison over matched seeds."""
    t0 = time.time()
    reports: dict[int, dict[str, EvalReport]] = {}
    for seed in seeds:
        train, val = synth_generate(ablation_synth(seed))
        reports[seed] = {
            "oracle": run_ablation_arm(train, val, "oracle", seed),
            "null": run_ablation_arm(train, val, "null", seed),
        }
    return AblationResult(reports=reports, seconds=time.time() - t0)
