"""Parameter initialization and checkpoint io.

All weight matrices are Xavier-uniform, biases and layer-norm shifts
zero, layer-norm gains one. A checkpoint directory holds
checkpoint.json (config, seed, step, tensor table, optimizer scalars)
plus params.bin with raw little-endian float32 blobs in table order;
optimizer moments ride along so training resumes bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..numerics import AdamState, Tensor
from .config import ModelConfig


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> dict[str, Tensor]:
    config.validate()
    rng = np.random.default_rng([seed, 17])
    d = config.d_model
    ctx_w = 3 * config.context_dim
    ffn = config.ffn_width
    out: dict[str, np.ndarray] = {}

    def linear(prefix: str, fan_in: int, fan_out: int) -> None:
        out[f"{prefix}.w"] = _xavier(rng, fan_in, fan_out, dtype)
        out[f"{prefix}.b"] = np.zeros(fan_out, dtype=dtype)

    def layer_norm(prefix: str) -> None:
        out[f"{prefix}.g"] = np.ones(d, dtype=dtype)
        out[f"{prefix}.b"] = np.zeros(d, dtype=dtype)

    def attention_block(prefix: str) -> None:
        for part in ("q", "k", "v", "o"):
            linear(f"{prefix}.{part}", d, d)

    # snippet selector: per-frame features + tiled context -> scalar prob
    linear("sel.l1", config.feature_dim + ctx_w, d)
    linear("sel.l2", d, d)
    linear("sel.l3", d, 1)
    # action-object head: pooled masked features + context -> class probs
    linear("act.l1", config.feature_dim + ctx_w, d)
    linear("act.l2", d, d)
    linear("act.l3", d, config.actobj_dim)
    # encoder input embeddings
    linear("emb.vis", config.feature_dim, d)
    linear("emb.ctx", config.actobj_dim + ctx_w, d)
    for i in range(config.enc_layers):
        layer_norm(f"enc{i}.ln1")
        attention_block(f"enc{i}.attn")
        layer_norm(f"enc{i}.ln2")
        linear(f"enc{i}.ffn.l1", d, ffn)
        linear(f"enc{i}.ffn.l2", ffn, d)
    # snippet memory gates (no biases: gates are pure projections of the query)
    out["mem.wq"] = _xavier(rng, d, d, dtype)
    out["mem.we"] = _xavier(rng, d, d, dtype)
    out["mem.wa"] = _xavier(rng, d, d, dtype)
    # decoder
    out["tok.emb"] = _xavier(rng, config.vocab_size, d, dtype)
    for i in range(config.dec_layers):
        layer_norm(f"dec{i}.ln1")
        attention_block(f"dec{i}.self")
        layer_norm(f"dec{i}.ln2")
        attention_block(f"dec{i}.cross")
        layer_norm(f"dec{i}.ln3")
        linear(f"dec{i}.ffn.l1", d, ffn)
        linear(f"dec{i}.ffn.l2", ffn, d)
    linear("out", d, config.vocab_size)

    return {name: Tensor(arr, requires_grad=True) for name, arr in out.items()}


def sinusoidal_positions(n: int, d: int, dtype=np.float32) -> np.ndarray:
    """Fixed sinusoidal position table, (n, d)."""
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(d)[None, :].astype(np.float64)
    angles = pos / np.power(10000.0, (2.0 * (i // 2)) / d)
    table = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return table.astype(dtype)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_JSON = "checkpoint.json"
CHECKPOINT_BIN = "params.bin"


def save_checkpoint(
    out_dir: str | Path,
    config: ModelConfig,
    params: dict[str, Tensor],
    seed: int,
    step: int,
    adam: AdamState | None = None,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    blobs = []
    offset = 0

    def push(name: str, arr: np.ndarray) -> None:
        nonlocal offset
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        table.append({"name": name, "shape": list(arr.shape), "offset": offset, "bytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)

    for name, p in params.items():
        push(name, p.data)
    if adam is not None:
        for name in params:
            push(f"adam.m.{name}", adam.first_moment[name])
            push(f"adam.v.{name}", adam.second_moment[name])

    doc = {
        "config": config.to_dict(),
        "seed": seed,
        "step": step,
        "tensors": table,
        "adam": None
        if adam is None
        else {"beta1": adam.beta1, "beta2": adam.beta2, "epsilon": adam.epsilon, "step_count": adam.step_count},
    }
    (out / CHECKPOINT_BIN).write_bytes(b"".join(blobs))
    (out / CHECKPOINT_JSON).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return out


def load_checkpoint(path: str | Path):
    """Returns (config, params, seed, step, adam_state_or_None)."""
    base = Path(path)
    doc = json.loads((base / CHECKPOINT_JSON).read_text(encoding="utf-8"))
    raw = (base / CHECKPOINT_BIN).read_bytes()
    arrays: dict[str, np.ndarray] = {}
    for entry in doc["tensors"]:
        chunk = raw[entry["offset"] : entry["offset"] + entry["bytes"]]
        arrays[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(entry["shape"]).copy()

    config = ModelConfig.from_dict(doc["config"])
    params = {
        name: Tensor(arr, requires_grad=True)
        for name, arr in arrays.items()
        if not name.startswith("adam.")
    }
    adam = None
    if doc["adam"] is not None:
        meta = doc["adam"]
        adam = AdamState(beta1=meta["beta1"], beta2=meta["beta2"], epsilon=meta["epsilon"], step_count=meta["step_count"])
        for name in params:
            adam.first_moment[name] = arrays[f"adam.m.{name}"]
            adam.second_moment[name] = arrays[f"adam.v.{name}"]
    return config, params, doc["seed"], doc["step"], adam
