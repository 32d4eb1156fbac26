"""Neural building blocks: attention, layer norm, GCN propagation,
perceiver-style resampling, and gated cross-attention fusion.

The fusion layer computes new_text = gca(vision, text) + gca(graph, text)
+ text, where each gca term is a tanh-gated delta with no internal
residual; with gates at their zero initialization the whole stack is an
exact identity on the text stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, NumericError, ShapeError
from . import autodiff as ad
from .autodiff import Tensor


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row to zero mean / unit variance, then scale and shift."""
    centered = ad.sub(x, ad.mean_axis(x, axis=-1))
    var = ad.mean_axis(ad.mul(centered, centered), axis=-1)
    inv = ad.power(ad.add(var, eps), -0.5)
    return ad.add(ad.mul(ad.mul(centered, inv), gamma), beta)


def attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: np.ndarray | None = None,
    n_heads: int = 1,
) -> Tensor:
    """softmax(q k^T / sqrt(d)) v with row-wise softmax.

    mask, when given, is added to the score matrix before the softmax
    (large negative entries disable positions). n_heads > 1 splits the
    model width into equal column slices attended independently and
    re-concatenated. Raises ShapeError on dimension mismatch and
    NumericError on non-finite inputs.
    """
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ShapeError("attention expects 2-d q, k, v")
    if q.data.shape[1] != k.data.shape[1]:
        raise ShapeError(f"q/k dims differ: {q.data.shape} vs {k.data.shape}")
    if k.data.shape[0] != v.data.shape[0]:
        raise ShapeError(f"k/v row counts differ: {k.data.shape} vs {v.data.shape}")
    if k.data.shape[0] < 1:
        raise InvalidInputError("attention needs at least one key")
    for name, t in (("q", q), ("k", k), ("v", v)):
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"attention input {name} holds non-finite values")
    d = q.data.shape[1]
    if n_heads < 1 or d % n_heads or v.data.shape[1] % n_heads:
        raise ShapeError(f"{n_heads} heads do not divide widths {d}/{v.data.shape[1]}")
    if n_heads == 1:
        return _attention_head(q, k, v, mask)
    dq, dv = d // n_heads, v.data.shape[1] // n_heads
    heads = [
        _attention_head(
            ad.slice_cols(q, h * dq, (h + 1) * dq),
            ad.slice_cols(k, h * dq, (h + 1) * dq),
            ad.slice_cols(v, h * dv, (h + 1) * dv),
            mask,
        )
        for h in range(n_heads)
    ]
    return ad.concat_cols(heads)


def _attention_head(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None) -> Tensor:
    scale = 1.0 / math.sqrt(q.data.shape[1])
    scores = ad.mul(ad.matmul(q, _transpose(k)), scale)
    if mask is not None:
        scores = ad.add(scores, ad.constant(mask))
    return ad.matmul(ad.softmax_rows(scores), v)


def _transpose(t: Tensor) -> Tensor:
    out = Tensor(t.data.T.copy(), _check=False)

    def backward(g):
        if t.requires_grad:
            t.accumulate(g.T)

    return ad._record(out, (t,), backward)


@dataclass
class GcaBlock:
    """Parameters of one gated cross-attention block.

    Both gates start at exactly zero, so a fresh block contributes a zero
    delta and the enclosing fusion layer is an identity map.
    """

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    w1: Tensor
    w2: Tensor
    ln_gamma: Tensor
    ln_beta: Tensor
    g_attn: Tensor
    g_ff: Tensor

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, requires_grad: bool = True) -> "GcaBlock":
        scale = 1.0 / math.sqrt(d)

        def w(rows: int, cols: int) -> Tensor:
            return Tensor(rng.normal(0.0, scale, size=(rows, cols)), requires_grad)

        return cls(
            wq=w(d, d),
            wk=w(d, d),
            wv=w(d, d),
            wo=w(d, d),
            w1=w(d, 4 * d),
            w2=w(4 * d, d),
            ln_gamma=Tensor(np.ones(d), requires_grad),
            ln_beta=Tensor(np.zeros(d), requires_grad),
            g_attn=Tensor(0.0, requires_grad),
            g_ff=Tensor(0.0, requires_grad),
        )

    def params(self) -> list[Tensor]:
        return [
            self.wq, self.wk, self.wv, self.wo, self.w1, self.w2,
            self.ln_gamma, self.ln_beta, self.g_attn, self.g_ff,
        ]


def gca(
    context: Tensor,
    target: Tensor,
    block: GcaBlock,
    n_heads: int = 1,
    internal_residual: bool = False,
) -> Tensor:
    """Gated cross-attention.

    Default form is the residual-free delta
        tanh(g_attn) * attn(LN(target) Wq, context Wk, context Wv) Wo
      + tanh(g_ff)   * FFW(LN(target))
    whose residual is added by the caller, so the fusion sum does not
    double-count the text stream. internal_residual=True switches to the
    sequential form (target + gated attention, then + gated FFW) for
    ablation.
    """
    if context.data.shape[1] != target.data.shape[1]:
        raise ShapeError(
            f"context/target model dims differ: {context.data.shape} vs {target.data.shape}"
        )
    normed = layer_norm(target, block.ln_gamma, block.ln_beta)
    attn = attention(
        ad.matmul(normed, block.wq),
        ad.matmul(context, block.wk),
        ad.matmul(context, block.wv),
        n_heads=n_heads,
    )
    attn_delta = ad.mul(ad.tanh(block.g_attn), ad.matmul(attn, block.wo))
    if not internal_residual:
        ff = ad.matmul(ad.relu(ad.matmul(normed, block.w1)), block.w2)
        return ad.add(attn_delta, ad.mul(ad.tanh(block.g_ff), ff))
    mid = ad.add(target, attn_delta)
    mid_normed = layer_norm(mid, block.ln_gamma, block.ln_beta)
    ff = ad.matmul(ad.relu(ad.matmul(mid_normed, block.w1)), block.w2)
    return ad.add(mid, ad.mul(ad.tanh(block.g_ff), ff))


def fusion_layer(
    x_vision: Tensor,
    z_graph: Tensor,
    e_prev: Tensor,
    vision_block: GcaBlock,
    graph_block: GcaBlock,
    n_heads: int = 1,
) -> Tensor:
    """One fusion step: gca(X, E) + gca(Z, E) + E."""
    return ad.add(
        ad.add(
            gca(x_vision, e_prev, vision_block, n_heads=n_heads),
            gca(z_graph, e_prev, graph_block, n_heads=n_heads),
        ),
        e_prev,
    )


@dataclass
class ResamplerBlock:
    """Projection + feed-forward parameters of the latent resampler."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    w1: Tensor
    w2: Tensor

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, requires_grad: bool = True) -> "ResamplerBlock":
        scale = 1.0 / math.sqrt(d)

        def w(rows: int, cols: int) -> Tensor:
            return Tensor(rng.normal(0.0, scale, size=(rows, cols)), requires_grad)

        return cls(w(d, d), w(d, d), w(d, d), w(d, d), w(d, 4 * d), w(4 * d, d))

    def params(self) -> list[Tensor]:
        return [self.wq, self.wk, self.wv, self.wo, self.w1, self.w2]


def resample(visual_features: Tensor, latents: Tensor, block: ResamplerBlock) -> Tensor:
    """Map n visual feature rows onto the fixed latent token set.

    latents' = latents + attn(latents Wq, [visual; latents] Wk/Wv) Wo,
    then a feed-forward residual. Output row count always equals the
    latent count, independent of n.
    """
    if visual_features.data.ndim != 2 or visual_features.data.shape[0] < 1:
        raise InvalidInputError("resample needs at least one input feature row")
    if visual_features.data.shape[1] != latents.data.shape[1]:
        raise ShapeError(
            f"feature dim {visual_features.data.shape} does not match latents "
            f"{latents.data.shape}"
        )
    kv = ad.concat_rows(visual_features, latents)
    attn = attention(
        ad.matmul(latents, block.wq),
        ad.matmul(kv, block.wk),
        ad.matmul(kv, block.wv),
    )
    stage1 = ad.add(latents, ad.matmul(attn, block.wo))
    ff = ad.matmul(ad.relu(ad.matmul(stage1, block.w1)), block.w2)
    return ad.add(stage1, ff)


def gcn_forward(features: Tensor, norm_adj: Tensor, weights: list[Tensor]) -> Tensor:
    """Stacked graph convolutions: H <- norm_adj @ H @ W per layer.

    ReLU is applied between layers but not after the last one.
    """
    n = features.data.shape[0]
    if norm_adj.data.shape != (n, n):
        raise ShapeError(
            f"adjacency {norm_adj.data.shape} does not match {n} feature rows"
        )
    h = features
    for idx, w in enumerate(weights):
        if w.data.shape[0] != h.data.shape[1]:
            raise ShapeError(
                f"gcn layer {idx}: weight {w.data.shape} does not chain with "
                f"features {h.data.shape}"
            )
        h = ad.matmul(ad.matmul(norm_adj, h), w)
        if idx < len(weights) - 1:
            h = ad.relu(h)
    return h
