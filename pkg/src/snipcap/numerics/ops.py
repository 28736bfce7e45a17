"""Forward ops with hand-written reverse-mode backward closures.

Op set: matmul, add, multiply (elementwise with broadcasting), concat,
narrow (slice), tile_rows, mean / sum reductions (mean over the frame
axis is the mean-pool contract), sigmoid, tanh, log, clip, softmax
(last axis, optional additive mask), layer_norm, embedding lookup,
dropout (train-only), reshape, and a fused multi-head attention.

All backward closures operate on raw numpy arrays; only forward values
live on the tape.
"""

from __future__ import annotations

import numpy as np

from .tensor import ShapeMismatch, Tensor, node


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def constant(x, dtype=None) -> Tensor:
    if dtype is None:
        dtype = x.dtype if isinstance(x, np.ndarray) else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None
    return node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data - b.data
    except ValueError:
        raise ShapeMismatch(f"sub: shapes {a.shape} and {b.shape} do not broadcast") from None
    return node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def neg(a: Tensor) -> Tensor:
    return node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None
    return node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeMismatch(f"matmul supports 1-D/2-D operands, got {a.shape} @ {b.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeMismatch(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = ad @ bd

    def bwd(g: np.ndarray):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g * bd, g * ad  # 1-D dot

    return node(out, (a, b), bwd, "matmul")


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat of zero tensors")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch(f"concat: shapes {[t.shape for t in tensors]} on axis {axis}") from None
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g: np.ndarray):
        return tuple(np.split(g, splits, axis=axis))

    return node(out, tuple(tensors), bwd, "concat")


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    if not (0 <= start and start + length <= a.data.shape[axis]):
        raise ShapeMismatch(f"narrow: [{start}:{start + length}) outside axis {axis} of {a.shape}")
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx]

    def bwd(g: np.ndarray):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return node(out, (a,), bwd, "narrow")


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = a.data.reshape(shape)
    return node(out, (a,), lambda g: (g.reshape(a.data.shape),), "reshape")


def tile_rows(v: Tensor, n: int) -> Tensor:
    """(d,) -> (n, d): the row vector repeated n times."""
    if v.data.ndim != 1:
        raise ShapeMismatch(f"tile_rows needs a vector, got {v.shape}")
    out = np.broadcast_to(v.data, (n, v.data.shape[0])).copy()
    return node(out, (v,), lambda g: (g.sum(axis=0),), "tile_rows")


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.mean(axis=axis)
    count = a.data.size if axis is None else a.data.shape[axis]

    def bwd(g: np.ndarray):
        if axis is None:
            return (np.full_like(a.data, 1.0 / count) * g,)
        return (np.expand_dims(g, axis).repeat(count, axis=axis) / count,)

    return node(out, (a,), bwd, "mean")


def mean_pool(a: Tensor) -> Tensor:
    """Average over the leading (frame) axis."""
    return mean(a, axis=0)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    out = a.data.sum(axis=axis)

    def bwd(g: np.ndarray):
        if axis is None:
            return (np.full_like(a.data, 1.0) * g,)
        return (np.expand_dims(g, axis).repeat(a.data.shape[axis], axis=axis),)

    return node(out, (a,), bwd, "sum")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    # Keep outputs strictly inside (0,1) even where rounding saturates.
    fi = np.finfo(x.dtype)
    out = np.clip(out.astype(x.dtype, copy=False), fi.tiny, 1.0 - fi.epsneg)
    return node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return node(out, (a,), lambda g: (g / a.data,), "log")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient flows only through unclamped entries."""
    out = np.clip(a.data, lo, hi)
    inside = ((a.data > lo) & (a.data < hi)).astype(a.data.dtype)
    return node(out, (a,), lambda g: (g * inside,), "clip")


def softmax(a: Tensor, additive_mask: np.ndarray | None = None) -> Tensor:
    """Row-stable softmax over the last axis; mask is added to the logits."""
    x = a.data if additive_mask is None else a.data + additive_mask
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g: np.ndarray):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return node(out, (a,), bwd, "softmax")


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    if gamma.data.shape != a.data.shape[-1:] or beta.data.shape != a.data.shape[-1:]:
        raise ShapeMismatch(
            f"layer_norm: gamma/beta {gamma.shape}/{beta.shape} vs features {a.shape[-1:]}"
        )
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    out = xhat * gamma.data + beta.data

    def bwd(g: np.ndarray):
        gxhat = g * gamma.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return node(out, (a, gamma, beta), bwd, "layer_norm")


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of `table` by integer ids; backward scatter-adds."""
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeMismatch(f"embedding ids must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ShapeMismatch(f"embedding ids out of range [0, {table.data.shape[0]})")
    out = table.data[idx]

    def bwd(g: np.ndarray):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return node(out, (table,), bwd, "embedding")


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when rng is None (inference) or rate 0."""
    if rng is None or rate <= 0.0:
        return a
    if not 0.0 < rate < 1.0:
        raise ShapeMismatch(f"dropout rate must be in [0,1), got {rate}")
    mask = (rng.random(a.data.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    out = a.data * mask
    return node(out, (a,), lambda g: (g * mask,), "dropout")


def attention(q: Tensor, k: Tensor, v: Tensor, heads: int, causal: bool = False) -> Tensor:
    """Fused scaled dot-product multi-head attention.

    q: (Lq, d), k/v: (Lk, d); d must divide evenly into heads. Causal
    masking (requires Lq == Lk) blocks attention to later positions.
    """
    lq, d = q.data.shape
    lk, dk_ = k.data.shape
    if d != dk_ or v.data.shape != (lk, d):
        raise ShapeMismatch(f"attention: q {q.shape}, k {k.shape}, v {v.shape}")
    if d % heads != 0:
        raise ShapeMismatch(f"attention: width {d} not divisible by {heads} heads")
    hd = d // heads
    scale = 1.0 / np.sqrt(hd)

    qh = q.data.reshape(lq, heads, hd)
    kh = k.data.reshape(lk, heads, hd)
    vh = v.data.reshape(lk, heads, hd)
    scores = np.einsum("qhd,khd->hqk", qh, kh) * scale
    if causal:
        if lq != lk:
            raise ShapeMismatch(f"causal attention needs square scores, got {lq}x{lk}")
        scores = scores + np.triu(np.full((lq, lk), -1e30, dtype=scores.dtype), k=1)
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    w = e / e.sum(axis=-1, keepdims=True)
    out = np.einsum("hqk,khd->qhd", w, vh).reshape(lq, d)

    def bwd(g: np.ndarray):
        gh = g.reshape(lq, heads, hd)
        gw = np.einsum("qhd,khd->hqk", gh, vh)
        gs = w * (gw - (w * gw).sum(axis=-1, keepdims=True))
        gq = np.einsum("hqk,khd->qhd", gs, kh).reshape(lq, d) * scale
        gk = np.einsum("hqk,qhd->khd", gs, qh).reshape(lk, d) * scale
        gv = np.einsum("hqk,qhd->khd", w, gh).reshape(lk, d)
        return gq, gk, gv

    return node(out, (q, k, v), bwd, "attention")
