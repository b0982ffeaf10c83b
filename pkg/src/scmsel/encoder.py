"""Toy transformer encoders producing fixed-size utterance vectors.

Two independently parameterized encoders are used, one for dialogue
contexts and one for candidate responses. Blocks are post-norm: self
attention, residual layer norm, tanh feed-forward, residual layer norm.
Attention projections carry no biases; per-head projection matrices are
stored packed as column blocks of one d x d matrix.
"""

from __future__ import annotations

import math

import numpy as np

from scmsel.errors import ConfigError
from scmsel import tensor as T
from scmsel.tensor import Tensor

INIT_SIGMA = 0.02


def _weight(rng, shape, name):
    return Tensor(rng.normal(0.0, INIT_SIGMA, size=shape),
                  requires_grad=True, name=name)


def _proj(rng, shape, name):
    """Projection matrix with fan-in scaled init.

    At desk scale the encoders train from scratch, and sigma = 1/sqrt(fan_in)
    keeps the content signal at the same order as the residual stream; a flat
    0.02 leaves the CLS output dominated by its input-independent components.
    """
    return Tensor(rng.normal(0.0, shape[0] ** -0.5, size=shape),
                  requires_grad=True, name=name)


def _gain(shape, name):
    return Tensor(np.ones(shape), requires_grad=True, name=name)


def _zeros(shape, name):
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


class BlockParams:
    """One transformer block: packed attention projections + FFN + norms."""

    def __init__(self, rng, d: int, dim_ffd: int, prefix: str):
        self.w_q = _proj(rng, (d, d), f"{prefix}.w_q")
        self.w_k = _proj(rng, (d, d), f"{prefix}.w_k")
        self.w_v = _proj(rng, (d, d), f"{prefix}.w_v")
        self.w_o = _proj(rng, (d, d), f"{prefix}.w_o")
        self.ffn_w1 = _proj(rng, (d, dim_ffd), f"{prefix}.ffn_w1")
        self.ffn_b1 = _zeros(dim_ffd, f"{prefix}.ffn_b1")
        self.ffn_w2 = _proj(rng, (dim_ffd, d), f"{prefix}.ffn_w2")
        self.ffn_b2 = _zeros(d, f"{prefix}.ffn_b2")
        self.ln1_g = _gain(d, f"{prefix}.ln1_g")
        self.ln1_b = _zeros(d, f"{prefix}.ln1_b")
        self.ln2_g = _gain(d, f"{prefix}.ln2_g")
        self.ln2_b = _zeros(d, f"{prefix}.ln2_b")

    def named(self):
        return [(t.name, t) for t in (
            self.w_q, self.w_k, self.w_v, self.w_o,
            self.ffn_w1, self.ffn_b1, self.ffn_w2, self.ffn_b2,
            self.ln1_g, self.ln1_b, self.ln2_g, self.ln2_b,
        )]


class EncoderParams:
    def __init__(self, rng, vocab_size: int, d: int, n_layers: int,
                 heads: int, dim_ffd: int, max_len: int, prefix: str):
        if d % heads:
            raise ConfigError(f"model width {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.max_len = max_len
        self.tok_emb = _weight(rng, (vocab_size, d), f"{prefix}.tok_emb")
        self.pos_emb = _weight(rng, (max_len, d), f"{prefix}.pos_emb")
        self.layers = [
            BlockParams(rng, d, dim_ffd, f"{prefix}.block{i}")
            for i in range(n_layers)
        ]

    def named(self):
        out = [(self.tok_emb.name, self.tok_emb),
               (self.pos_emb.name, self.pos_emb)]
        for layer in self.layers:
            out.extend(layer.named())
        return out


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, block: BlockParams,
                         heads: int, p: float = 0.0, rng=None,
                         train: bool = False) -> Tensor:
    """Scaled dot-product attention with `heads` parallel heads.

    q, k, v are (L, d); head h works on columns [h*dk, (h+1)*dk) of the
    projected matrices, dk = d / heads.
    """
    d = q.shape[1]
    if d % heads:
        raise ConfigError(f"model width {d} not divisible by {heads} heads")
    dk = d // heads
    scale = 1.0 / math.sqrt(dk)
    qp = T.matmul(q, block.w_q)
    kp = T.matmul(k, block.w_k)
    vp = T.matmul(v, block.w_v)
    outs = []
    for h in range(heads):
        lo, hi = h * dk, (h + 1) * dk
        qh = T.slice_cols(qp, lo, hi)
        kh = T.slice_cols(kp, lo, hi)
        vh = T.slice_cols(vp, lo, hi)
        scores = T.affine(T.matmul(qh, T.transpose(kh)), scale)
        probs = T.softmax_rows(scores)
        probs = T.dropout(probs, p, rng, train)
        outs.append(T.matmul(probs, vh))
    return T.matmul(T.concat_last(outs), block.w_o)


def transformer_block(x: Tensor, block: BlockParams, heads: int,
                      p: float = 0.0, rng=None, train: bool = False) -> Tensor:
    a = multi_head_attention(x, x, x, block, heads, p=p, rng=rng, train=train)
    y = T.layer_norm_residual(x, a, block.ln1_g, block.ln1_b)
    h = T.tanh(T.add(T.matmul(y, block.ffn_w1), block.ffn_b1))
    h = T.dropout(h, p, rng, train)
    f = T.add(T.matmul(h, block.ffn_w2), block.ffn_b2)
    return T.layer_norm_residual(y, f, block.ln2_g, block.ln2_b)


def encode(ids: np.ndarray, params: EncoderParams, pool: str = "cls",
           p: float = 0.0, rng=None, train: bool = False) -> Tensor:
    """Run ids through the encoder; pool is one of cls / mean / states.

    cls returns the first-position vector, mean the average over positions
    (debug aid), states the full (L, d) matrix for the poly head.
    """
    length = len(ids)
    x = T.add(T.embedding_lookup(params.tok_emb, ids),
              T.embedding_lookup(params.pos_emb, np.arange(length)))
    x = T.dropout(x, p, rng, train)
    for block in params.layers:
        x = transformer_block(x, block, params.heads, p=p, rng=rng, train=train)
    if pool == "cls":
        return T.row(x, 0)
    if pool == "mean":
        avg = Tensor(np.full((1, length), 1.0 / length))
        return T.reshape(T.matmul(avg, x), (params.d,))
    if pool == "states":
        return x
    raise ConfigError(f"unknown pooling mode {pool!r}")


class PolyHead:
    """Learned code vectors that summarize context token states."""

    def __init__(self, rng, poly_m: int, d: int, prefix: str = "poly"):
        if poly_m < 1:
            raise ConfigError(f"poly_m must be >= 1, got {poly_m}")
        self.codes = _weight(rng, (poly_m, d), f"{prefix}.codes")
        self.d = d

    def named(self):
        return [(self.codes.name, self.codes)]


def poly_aggregate(states: Tensor, head: PolyHead, u_r: Tensor) -> Tensor:
    """Candidate-conditioned context vector from token states.

    Codes attend over token states (scaled dot-product), then the candidate
    vector attends over the resulting code summaries. Returns shape (d,).
    """
    scale = 1.0 / math.sqrt(head.d)
    w1 = T.softmax_rows(T.affine(T.matmul(head.codes, T.transpose(states)), scale))
    summaries = T.matmul(w1, states)
    q = T.reshape(u_r, (1, head.d))
    w2 = T.softmax_rows(T.affine(T.matmul(q, T.transpose(summaries)), scale))
    return T.reshape(T.matmul(w2, summaries), (head.d,))
