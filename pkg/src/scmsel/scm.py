"""Candidate-set comparison stage.

Candidates are first made context-aware, then a small transformer runs over
the candidate axis so every candidate sees the others, and finally a gate
blends each original candidate vector with its comparison-enriched version.
No positional encodings are used over candidates: they form a set, and the
whole stage is equivariant under permutation of the candidate rows.

Ablation tags: "full", "no_context_aware" (comparison consumes raw candidate
vectors), "no_gate" (comparison output is the final representation).
"""

from __future__ import annotations

import numpy as np

from scmsel.encoder import BlockParams, _proj, _gain, _zeros, transformer_block
from scmsel.errors import ConfigError, ShapeError
from scmsel import tensor as T
from scmsel.tensor import Tensor

ABLATIONS = ("full", "no_context_aware", "no_gate")


class ScmParams:
    def __init__(self, rng, d: int, n_layers: int, heads: int, dim_ffd: int,
                 prefix: str = "scm"):
        if n_layers < 1:
            raise ConfigError(f"comparison stage needs >= 1 layer, got {n_layers}")
        if d % heads:
            raise ConfigError(f"model width {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.ca_w = _proj(rng, (2 * d, d), f"{prefix}.ca_w")
        self.ca_b = _zeros(d, f"{prefix}.ca_b")
        self.blocks = [
            BlockParams(rng, d, dim_ffd, f"{prefix}.block{i}")
            for i in range(n_layers)
        ]
        self.gate_w = _proj(rng, (3 * d, d), f"{prefix}.gate_w")
        self.gate_b = _zeros(d, f"{prefix}.gate_b")
        self.fuse_g = _gain(d, f"{prefix}.fuse_g")
        self.fuse_b = _zeros(d, f"{prefix}.fuse_b")

    def named(self):
        out = [(self.ca_w.name, self.ca_w), (self.ca_b.name, self.ca_b)]
        for block in self.blocks:
            out.extend(block.named())
        out.extend([
            (self.gate_w.name, self.gate_w), (self.gate_b.name, self.gate_b),
            (self.fuse_g.name, self.fuse_g), (self.fuse_b.name, self.fuse_b),
        ])
        return out


def _context_rows(u_c: Tensor, m: int) -> Tensor:
    """Tile a single context vector to m rows, or pass (m, d) through."""
    if u_c.data.ndim == 1:
        return T.tile_rows(u_c, m)
    if u_c.shape[0] != m:
        raise ShapeError(
            f"context rows {u_c.shape} do not match candidate count {m}")
    return u_c


def context_aware(u_c: Tensor, u_r: Tensor, params: ScmParams) -> Tensor:
    """H_i = tanh(W [u_c | u_r_i] + b), squeezing 2d to d."""
    uc = _context_rows(u_c, u_r.shape[0])
    joint = T.concat_last([uc, u_r])
    return T.tanh(T.add(T.matmul(joint, params.ca_w), params.ca_b))


def compare(h: Tensor, params: ScmParams, p: float = 0.0, rng=None,
            train: bool = False) -> Tensor:
    """Run the comparison transformer over the candidate axis."""
    x = h
    for block in params.blocks:
        x = transformer_block(x, block, params.heads, p=p, rng=rng, train=train)
    return x


def gate_fuse(u_c: Tensor, u_r: Tensor, o: Tensor, params: ScmParams) -> Tensor:
    """Blend each candidate with its comparison output through a gate.

    g_i = sigmoid(W [u_r_i | u_c | o_i] + b); the fused vector
    g_i*u_r_i + (1-g_i)*o_i is then layer-normalized with the fusion affine.
    """
    uc = _context_rows(u_c, u_r.shape[0])
    joint = T.concat_last([u_r, uc, o])
    g = T.sigmoid(T.add(T.matmul(joint, params.gate_w), params.gate_b))
    kept = T.mul(g, u_r)
    swapped = T.mul(T.affine(g, -1.0, 1.0), o)
    return T.layer_norm_residual(kept, swapped, params.fuse_g, params.fuse_b)


def scm_forward(u_c: Tensor, u_r: Tensor, params: ScmParams,
                ablation: str = "full", p: float = 0.0, rng=None,
                train: bool = False) -> Tensor:
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}, expected one of "
                          f"{ABLATIONS}")
    if ablation == "no_context_aware":
        h = u_r
    else:
        h = context_aware(u_c, u_r, params)
    o = compare(h, params, p=p, rng=rng, train=train)
    if ablation == "no_gate":
        return o
    return gate_fuse(u_c, u_r, o, params)
