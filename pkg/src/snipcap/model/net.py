"""Forward passes: snippet selector, action-object head, encoder, snippet memory, decoder.

Layout decisions that the tests pin down:
  - The selector sees each frame row concatenated with the tiled
    (m, g, h) context and maps it through two tanh layers to a scalar
    sigmoid probability per frame.
  - The action-object head mean-pools the masked frames first, then
    concatenates the context and runs the same 3-layer shape to
    per-class sigmoids.
  - Encoder/decoder blocks are pre-layer-norm residual sublayers
    (x + Sublayer(LN(x))), so zeroing the sublayer output projections
    makes the stack an identity. Hidden activations are tanh: smooth
    everywhere, which keeps finite-difference gradient checks clean.
  - The action probabilities and context enter the encoder as one
    prepended token so frame tokens keep their positions.
  - The snippet memory is initialized with the encoded tokens and,
    once per emitted token, each slot is written as
    M_j <- M_j * (1 - w_j * e) + w_j * u with write attention w,
    erase gate e = sigmoid(q We), add vector u = tanh(q Wa).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import numerics as N
from ..datamodel.vocab import BOS_ID
from ..knowledge import KnowledgeContext
from .config import ModelConfig
from .params import init_params, sinusoidal_positions


@dataclass
class SnippetMemoryState:
    M: N.Tensor  # (slots, d_model)
    step: int = 0


def apply_snippet_mask(V: N.Tensor, n: N.Tensor) -> N.Tensor:
    """Scale frame row t by membership probability n[t]."""
    t = V.data.shape[0]
    if n.data.shape != (t,):
        raise N.ShapeMismatch(f"mask shape {n.data.shape} does not match {t} frames")
    return N.mul(V, N.reshape(n, (t, 1)))


def memory_write(M: N.Tensor, w: N.Tensor, e: N.Tensor, u: N.Tensor) -> N.Tensor:
    """Gated erase/add: M_j * (1 - w_j e) + w_j u, slot weights w, gates e/u."""
    slots = M.data.shape[0]
    d = M.data.shape[1]
    w_col = N.reshape(w, (slots, 1))
    erase = N.mul(w_col, N.reshape(e, (1, d)))
    keep = N.sub(N.constant(np.ones((slots, d), dtype=M.data.dtype)), erase)
    add = N.mul(w_col, N.reshape(u, (1, d)))
    return N.add(N.mul(M, keep), add)


def downsample_mask(mask: np.ndarray, stride: int) -> np.ndarray:
    """Majority-vote a frame mask down to token resolution; ties round to 1."""
    if stride <= 1:
        return mask.astype(np.float32)
    groups = [mask[i : i + stride] for i in range(0, len(mask), stride)]
    return np.array([1.0 if g.mean() >= 0.5 else 0.0 for g in groups], dtype=np.float32)


class CaptionModel:
    """Bundles config + params; every method builds onto the shared tape."""

    def __init__(self, config: ModelConfig, params: dict[str, N.Tensor] | None = None, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.params = params if params is not None else init_params(config, seed=seed, dtype=dtype)
        self.dtype = next(iter(self.params.values())).data.dtype
        self._positions = sinusoidal_positions(
            max(config.max_frames + 1, config.max_sentence_len + 1), config.d_model, self.dtype
        )

    # -- small helpers ------------------------------------------------------

    def _const(self, arr: np.ndarray) -> N.Tensor:
        return N.constant(np.asarray(arr, dtype=self.dtype))

    def _ctx_vec(self, ctx: KnowledgeContext) -> N.Tensor:
        return self._const(np.concatenate([ctx.m, ctx.g, ctx.h]))

    def _linear(self, x: N.Tensor, prefix: str) -> N.Tensor:
        return N.add(N.matmul(x, self.params[f"{prefix}.w"]), self.params[f"{prefix}.b"])

    def _ln(self, x: N.Tensor, prefix: str) -> N.Tensor:
        return N.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _drop(self, x: N.Tensor, rng) -> N.Tensor:
        return N.dropout(x, self.config.dropout, rng)

    def _head_mlp(self, x: N.Tensor, group: str, rng) -> N.Tensor:
        h = N.tanh(self._linear(x, f"{group}.l1"))
        h = self._drop(h, rng)
        h = N.tanh(self._linear(h, f"{group}.l2"))
        h = self._drop(h, rng)
        return N.sigmoid(self._linear(h, f"{group}.l3"))

    # -- snippet selector ----------------------------------------------------

    def snippet_selector(self, V: N.Tensor, ctx: KnowledgeContext, rng=None) -> N.Tensor:
        """Per-frame membership probabilities for the next snippet, (T,) in (0,1)."""
        t, dv = V.data.shape
        if t > self.config.max_frames:
            raise N.ShapeMismatch(f"{t} frames exceed max_frames {self.config.max_frames}")
        if dv != self.config.feature_dim:
            raise N.ShapeMismatch(f"feature dim {dv} != configured {self.config.feature_dim}")
        x = N.concat([V, N.tile_rows(self._ctx_vec(ctx), t)], axis=1)
        probs = self._head_mlp(x, "sel", rng)  # (T, 1)
        return N.reshape(probs, (t,))

    # -- action-object head ---------------------------------------------------

    def action_object(self, V_masked: N.Tensor, ctx: KnowledgeContext, rng=None) -> N.Tensor:
        """Per-class probabilities over actions, objects, and pseudo classes."""
        if V_masked.data.shape[1] != self.config.feature_dim:
            raise N.ShapeMismatch(
                f"feature dim {V_masked.data.shape[1]} != configured {self.config.feature_dim}"
            )
        pooled = N.mean_pool(V_masked)  # (Dv,)
        x = N.concat([pooled, self._ctx_vec(ctx)], axis=0)
        return self._head_mlp(x, "act", rng)  # (actobj,)

    # -- encoder ---------------------------------------------------------------

    def _pool_frames(self, V: N.Tensor) -> N.Tensor:
        stride = self.config.token_stride
        if stride <= 1:
            return V
        t = V.data.shape[0]
        groups = []
        for lo in range(0, t, stride):
            length = min(stride, t - lo)
            group = N.narrow(V, 0, lo, length)
            groups.append(N.reshape(N.mean_pool(group), (1, V.data.shape[1])))
        return N.concat(groups, axis=0)

    def encode(self, V_masked: N.Tensor, a: N.Tensor, ctx: KnowledgeContext, rng=None) -> N.Tensor:
        """Encoded tokens (L, d): one context token + pooled frame tokens."""
        tokens = self._pool_frames(V_masked)
        vis = self._linear(tokens, "emb.vis")  # (L', d)
        head = N.concat([a, self._ctx_vec(ctx)], axis=0)
        ctx_tok = N.reshape(self._linear(head, "emb.ctx"), (1, self.config.d_model))
        x = N.concat([ctx_tok, vis], axis=0)
        length = x.data.shape[0]
        x = N.add(x, self._const(self._positions[:length]))
        x = self._drop(x, rng)
        for i in range(self.config.enc_layers):
            attn_in = self._ln(x, f"enc{i}.ln1")
            q = self._linear(attn_in, f"enc{i}.attn.q")
            k = self._linear(attn_in, f"enc{i}.attn.k")
            v = self._linear(attn_in, f"enc{i}.attn.v")
            attn = N.attention(q, k, v, self.config.heads)
            x = N.add(x, self._drop(self._linear(attn, f"enc{i}.attn.o"), rng))
            ffn_in = self._ln(x, f"enc{i}.ln2")
            ffn = self._linear(N.tanh(self._linear(ffn_in, f"enc{i}.ffn.l1")), f"enc{i}.ffn.l2")
            x = N.add(x, self._drop(ffn, rng))
        return x

    # -- snippet memory ----------------------------------------------------------

    def memory_init(self, encoded: N.Tensor) -> SnippetMemoryState:
        slots = encoded.data.shape[0]
        want = self.config.memory_slots
        if want is not None and want != slots:
            raise N.ShapeMismatch(f"memory_slots {want} != encoded token count {slots}")
        return SnippetMemoryState(M=encoded, step=0)

    def memory_update(self, state: SnippetMemoryState, query: N.Tensor) -> SnippetMemoryState:
        """One gated write driven by the decoder query; slot count is preserved."""
        N.check_finite(query.data, "memory query")
        key = N.matmul(self.params["mem.wq"], query)  # (d,) -> scores against slots
        scores = N.matmul(state.M, key)  # (slots,)
        w = N.softmax(scores)
        e = N.sigmoid(N.matmul(query, self.params["mem.we"]))
        u = N.tanh(N.matmul(query, self.params["mem.wa"]))
        return SnippetMemoryState(M=memory_write(state.M, w, e, u), step=state.step + 1)

    # -- decoder -------------------------------------------------------------------

    def decoder_step(
        self, prefix_ids, state: SnippetMemoryState, rng=None, return_positions: bool = False
    ):
        """Distribution over the next token given the prefix; memory written once.

        prefix_ids must start with BOS and stay within the sentence cap.
        With return_positions, also returns the per-position distributions
        (useful for checking the causal mask).
        """
        ids = list(prefix_ids)
        if not ids or ids[0] != BOS_ID:
            raise ValueError("decoder prefix must start with BOS")
        if len(ids) > self.config.max_sentence_len + 1:
            raise ValueError(
                f"prefix length {len(ids)} exceeds sentence cap {self.config.max_sentence_len}"
            )
        length = len(ids)
        x = N.embedding(self.params["tok.emb"], np.asarray(ids, dtype=np.intp))
        x = N.add(x, self._const(self._positions[:length]))
        x = self._drop(x, rng)
        for i in range(self.config.dec_layers):
            sa_in = self._ln(x, f"dec{i}.ln1")
            q = self._linear(sa_in, f"dec{i}.self.q")
            k = self._linear(sa_in, f"dec{i}.self.k")
            v = self._linear(sa_in, f"dec{i}.self.v")
            attn = N.attention(q, k, v, self.config.heads, causal=True)
            x = N.add(x, self._drop(self._linear(attn, f"dec{i}.self.o"), rng))
            ca_in = self._ln(x, f"dec{i}.ln2")
            qc = self._linear(ca_in, f"dec{i}.cross.q")
            kc = self._linear(state.M, f"dec{i}.cross.k")
            vc = self._linear(state.M, f"dec{i}.cross.v")
            cross = N.attention(qc, kc, vc, self.config.heads)
            x = N.add(x, self._drop(self._linear(cross, f"dec{i}.cross.o"), rng))
            ffn_in = self._ln(x, f"dec{i}.ln3")
            ffn = self._linear(N.tanh(self._linear(ffn_in, f"dec{i}.ffn.l1")), f"dec{i}.ffn.l2")
            x = N.add(x, self._drop(ffn, rng))
        q_last = N.reshape(N.narrow(x, 0, length - 1, 1), (self.config.d_model,))
        logits = self._linear(q_last, "out")
        dist = N.softmax(logits)
        new_state = self.memory_update(state, q_last)
        if return_positions:
            all_dists = N.softmax(self._linear(x, "out"))
            return dist, new_state, all_dists
        return dist, new_state
