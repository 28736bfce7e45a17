"""Command-line entry point.

Subcommands: synth | train | generate | eval | gradcheck. Every command
takes an optional JSON config file plus --set key.path=value overrides;
the merged effective config is written next to the outputs. Exit codes:
0 success, 1 validation error, 2 runtime error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import numerics as N
from .datamodel import DataError, DatasetSplit, SynthConfig, load_manifest, save_manifest, synth_generate
from .generation import (
    GenerationError,
    build_document,
    generate_paragraph,
    read_document,
    write_document,
)
from .knowledge import (
    FileExplicit,
    FileImplicit,
    NullExplicit,
    NullImplicit,
    OracleVectorProvider,
    Providers,
    ToyCompleter,
    ToyKBExplicit,
    build_default_toy_kb,
)
from .metrics import EvalReport, MetricsError, evaluate_generation, render_ablation_table
from .model import CaptionModel, ConfigError, ModelConfig, load_checkpoint, save_checkpoint
from .model.params import init_params
from .objective import ObjectiveError, TrainConfig, train_loop
from .presets import GRADCHECK_MODEL, gradcheck_closure

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3

PROVIDER_KINDS = ("explicit", "implicit", "hidden")


class CliError(ValueError):
    pass


# ---------------------------------------------------------------------------
# run config
# ---------------------------------------------------------------------------

DEFAULT_PROVIDERS = {"explicit": "toy", "implicit": "toy", "hidden": "embed"}
RUN_CONFIG_KEYS = {"seed", "out_dir", "dataset_dir", "model", "train", "synth", "providers"}


@dataclasses.dataclass
class RunConfig:
    seed: int = 7
    out_dir: str = "runs/run"
    dataset_dir: str | None = None
    model: dict = dataclasses.field(default_factory=dict)
    train: dict = dataclasses.field(default_factory=dict)
    synth: dict = dataclasses.field(default_factory=dict)
    providers: dict = dataclasses.field(default_factory=lambda: dict(DEFAULT_PROVIDERS))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _parse_set(value: str) -> tuple[list[str], object]:
    if "=" not in value:
        raise CliError(f"--set needs key.path=value, got {value!r}")
    key, raw = value.split("=", 1)
    try:
        parsed = json.loads(raw)
    except json.JSONDecodeError:
        parsed = raw
    return key.split("."), parsed


def load_run_config(path: str | None, overrides: list[str]) -> RunConfig:
    doc: dict = {}
    if path is not None:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise CliError("config file must hold a JSON object")
    for item in overrides or []:
        keys, value = _parse_set(item)
        cursor = doc
        for k in keys[:-1]:
            cursor = cursor.setdefault(k, {})
            if not isinstance(cursor, dict):
                raise CliError(f"--set path {'.'.join(keys)} crosses a non-object value")
        cursor[keys[-1]] = value

    unknown = set(doc) - RUN_CONFIG_KEYS
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig(**{k: doc[k] for k in doc})
    bad_provider_keys = set(cfg.providers) - set(PROVIDER_KINDS)
    if bad_provider_keys:
        raise CliError(f"unknown provider keys: {sorted(bad_provider_keys)}")
    return cfg


def _write_effective_config(cfg: RunConfig, out_dir: Path, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **cfg.to_dict()}
    (out_dir / "effective_config.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------


def build_providers(selection: dict, splits: list[DatasetSplit]) -> Providers:
    selection = {**DEFAULT_PROVIDERS, **(selection or {})}

    def oracle():
        provider = OracleVectorProvider({})
        for split in splits:
            provider.table.update(OracleVectorProvider.from_split(split).table)
        if not provider.table:
            raise CliError("providers=oracle needs datasets with knowledge blobs")
        return provider

    def explicit(name: str):
        if name == "toy":
            return build_default_toy_kb()
        if name == "null":
            return NullExplicit()
        if name == "oracle":
            return oracle()
        if name.startswith("file:"):
            return FileExplicit.load(name[5:])
        raise CliError(f"unknown explicit provider {name!r}")

    def implicit(name: str):
        if name == "toy":
            return ToyCompleter()
        if name == "null":
            return NullImplicit()
        if name == "oracle":
            return oracle()
        if name.startswith("file:"):
            return FileImplicit.load(name[5:])
        raise CliError(f"unknown implicit provider {name!r}")

    hidden = selection["hidden"]
    if hidden not in ("embed", "null"):
        raise CliError(f"unknown hidden provider {hidden!r}")
    return Providers(explicit=explicit(selection["explicit"]), implicit=implicit(selection["implicit"]), hidden=hidden)


def model_config_for_split(split: DatasetSplit, overrides: dict) -> ModelConfig:
    derived = {
        "vocab_size": split.vocab.size,
        "feature_dim": split.feature_dim,
        "actobj_dim": split.actobj_dim,
        "max_frames": split.max_frames,
        "max_snippets": split.max_snippets,
    }
    merged = dict(overrides)
    for key, value in derived.items():
        if key in merged and merged[key] != value:
            raise ConfigError(
                f"model.{key}={merged[key]} contradicts the dataset ({key}={value})"
            )
        merged[key] = value
    return ModelConfig.from_dict(merged)


def _dataset_dirs(cfg: RunConfig) -> Path:
    if cfg.dataset_dir is None:
        raise CliError("dataset_dir is required (config key or --dataset)")
    return Path(cfg.dataset_dir)


def _load_split(base: Path, split: str) -> DatasetSplit:
    return load_manifest(base / split)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, force: bool = False) -> int:
    out = Path(cfg.dataset_dir) if cfg.dataset_dir else Path(cfg.out_dir) / "data"
    if out.exists() and any(out.iterdir()) and not force:
        raise CliError(f"output dir {out} is not empty (use --force to overwrite)")
    synth_keys = dict(cfg.synth)
    synth_keys.setdefault("seed", cfg.seed)
    unknown = set(synth_keys) - set(SynthConfig.__dataclass_fields__)
    if unknown:
        raise CliError(f"unknown synth config keys: {sorted(unknown)}")
    synth_cfg = SynthConfig(**synth_keys)
    train, val = synth_generate(synth_cfg)
    save_manifest(train, out / "train")
    if val is not None:
        save_manifest(val, out / "val")
    build_default_toy_kb().save(out / "toy_kb.json")
    _write_effective_config(cfg, out, "synth")
    n_snips = sum(len(r.snippets) for r in train.records)
    print(f"wrote {len(train.records)} train videos ({n_snips} snippets) to {out / 'train'}")
    if val is not None:
        print(f"wrote {len(val.records)} val videos to {out / 'val'}")
    print(f"vocab size {train.vocab.size}, feature dim {train.feature_dim}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, resume: str | None = None) -> int:
    base = _dataset_dirs(cfg)
    train_split = _load_split(base, "train")
    val_split = None
    if (base / "val").exists():
        val_split = _load_split(base, "val")

    train_keys = dict(cfg.train)
    train_keys.setdefault("seed", cfg.seed)
    eval_every = int(train_keys.pop("eval_every", 0))
    tcfg = TrainConfig.from_dict(train_keys)

    splits = [train_split] + ([val_split] if val_split else [])
    providers = build_providers(cfg.providers, splits)
    out = Path(cfg.out_dir)

    if resume is not None:
        mcfg, params, seed, step, adam = load_checkpoint(resume)
        model = CaptionModel(mcfg, params=params)
        if adam is None:
            adam = N.AdamState.for_params(model.params)
        start_step = step + 1
    else:
        mcfg = model_config_for_split(train_split, cfg.model)
        model = CaptionModel(mcfg, seed=cfg.seed)
        adam = N.AdamState.for_params(model.params)
        start_step = 1

    _write_effective_config(cfg, out, "train")

    eval_callback = None
    if val_split is not None and eval_every:
        eval_log = out / "eval_log.jsonl"

        def eval_callback(step: int, m: CaptionModel) -> None:
            report = _evaluate_model(m, val_split, providers)
            with eval_log.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"step": step, **report.to_dict()}) + "\n")

    history = train_loop(
        model,
        train_split,
        providers,
        tcfg,
        out_dir=out,
        adam=adam,
        start_step=start_step,
        eval_callback=eval_callback,
        eval_every=eval_every,
    )
    last = history[-1]
    print(f"trained {len(history)} steps; final total loss {last.total:.4f}")
    print(f"checkpoint: {out / 'ckpt_final'}")
    if val_split is not None:
        report = _evaluate_model(model, val_split, providers)
        (out / "val_report.txt").write_text(report.render() + "\n", encoding="utf-8")
        print(report.render())
    return EXIT_OK


def _evaluate_model(model: CaptionModel, split: DatasetSplit, providers: Providers) -> EvalReport:
    outs = [generate_paragraph(model, r, providers, split.vocab, mode="gt_proposals") for r in split.records]
    return evaluate_generation(build_document(split, outs, mode="gt_proposals"), split)


def cmd_generate(cfg: RunConfig, checkpoint: str, split_name: str, mode: str, video_ids: list[str] | None) -> int:
    base = _dataset_dirs(cfg)
    split = _load_split(base, split_name)
    mcfg, params, _seed, _step, _adam = load_checkpoint(checkpoint)
    model = CaptionModel(mcfg, params=params)
    providers = build_providers(cfg.providers, [split])

    records = split.records
    if video_ids:
        records = [split.record_by_id(v) for v in video_ids]

    outs = [generate_paragraph(model, r, providers, split.vocab, mode=mode) for r in records]
    doc = build_document(split, outs, mode=mode)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"generation_{split_name}_{mode}.json"
    write_document(doc, path)
    _write_effective_config(cfg, out, "generate")
    print(f"wrote {sum(len(v['snippets']) for v in doc['videos'])} captions for {len(records)} videos to {path}")
    return EXIT_OK


def cmd_eval(cfg: RunConfig, docs: list[str], split_name: str) -> int:
    base = _dataset_dirs(cfg)
    split = _load_split(base, split_name)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    named: dict[str, EvalReport] = {}
    for item in docs:
        name, _, path = item.rpartition("=")
        if not name:
            name = Path(path).stem
        named[name] = evaluate_generation(read_document(path), split)

    _write_effective_config(cfg, out, "eval")
    if len(named) == 1:
        report = next(iter(named.values()))
        (out / "eval_report.txt").write_text(report.render() + "\n", encoding="utf-8")
        print(report.render())
    else:
        table = render_ablation_table(named)
        (out / "ablation_table.txt").write_text(table + "\n", encoding="utf-8")
        print(table)
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, rel_tol: float, samples: int, corrupt_block: str | None) -> int:
    model_overrides = dict(cfg.model)
    merged = {**GRADCHECK_MODEL.to_dict(), **model_overrides}
    mcfg = ModelConfig.from_dict(merged)
    if mcfg.dropout > 0:
        raise CliError("gradcheck requires dropout=0 (stochastic closures are rejected)")
    params = init_params(mcfg, seed=cfg.seed, dtype=np.float64)
    model = CaptionModel(mcfg, params=params)
    closure = gradcheck_closure(model, seed=cfg.seed)
    report = N.grad_check(
        closure,
        model.params,
        rel_tol=rel_tol,
        samples_per_block=samples,
        seed=cfg.seed,
        corrupt_block=corrupt_block,
    )
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE", help="override a config value")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--dataset", help="dataset directory (overrides dataset_dir)")
    p.add_argument("--seed", type=int, help="seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snipcap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--force", action="store_true", help="overwrite a non-empty output dir")

    p = sub.add_parser("train", help="train a captioning model")
    _add_common(p)
    p.add_argument("--resume", help="checkpoint dir to resume from")

    p = sub.add_parser("generate", help="caption videos with a trained model")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="val", choices=("train", "val"))
    p.add_argument("--mode", default="gt_proposals", choices=("free", "gt_proposals"))
    p.add_argument("--videos", help="comma-separated video ids (default: all)")

    p = sub.add_parser("eval", help="score generation documents")
    _add_common(p)
    p.add_argument("--doc", action="append", required=True, metavar="[NAME=]PATH", help="generation document (repeat for an ablation table)")
    p.add_argument("--split", default="val", choices=("train", "val"))

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    _add_common(p)
    p.add_argument("--rel-tol", type=float, default=1e-5)
    p.add_argument("--samples", type=int, default=24, help="elements sampled per parameter block")
    p.add_argument("--corrupt-block", help="test hook: perturb this block's analytic gradient")

    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(args.config, args.set)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "dataset", None):
        cfg.dataset_dir = args.dataset
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "synth":
            return cmd_synth(cfg, force=args.force)
        if args.command == "train":
            return cmd_train(cfg, resume=args.resume)
        if args.command == "generate":
            videos = args.videos.split(",") if args.videos else None
            return cmd_generate(cfg, args.checkpoint, args.split, args.mode, videos)
        if args.command == "eval":
            return cmd_eval(cfg, args.doc, args.split)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args.rel_tol, args.samples, args.corrupt_block)
        raise CliError(f"unknown command {args.command!r}")
    except (CliError, ConfigError, ObjectiveError, DataError, MetricsError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (N.NonFiniteError, N.ShapeMismatch, GenerationError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
