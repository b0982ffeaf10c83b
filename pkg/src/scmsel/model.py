"""Full selection models: encoder pair, optional poly head, optional
comparison stage, and the plumbing that turns token ids into degrees.

Model kinds: "bi" scores candidates against one context vector; "poly"
builds a candidate-conditioned context vector from token states via learned
codes. Either kind can run with the comparison stage on or off.
"""

from __future__ import annotations

import numpy as np

from scmsel.encoder import EncoderParams, PolyHead, encode, poly_aggregate
from scmsel.errors import ConfigError
from scmsel.ranking import score
from scmsel.scm import ScmParams, scm_forward
from scmsel import tensor as T
from scmsel.tensor import Tensor

KINDS = ("bi", "poly")


class SelectionModel:
    def __init__(self, vocab_size: int, kind: str = "bi", use_scm: bool = True,
                 d: int = 64, enc_layers: int = 2, enc_heads: int = 4,
                 enc_ffd: int = 128, max_len: int = 256, poly_m: int = 16,
                 scm_layers: int = 4, scm_heads: int = 8, scm_ffd: int = 512,
                 dropout: float = 0.1, seed: int = 50):
        if kind not in KINDS:
            raise ConfigError(f"unknown model kind {kind!r}")
        self.kind = kind
        self.use_scm = use_scm
        self.d = d
        self.max_len = max_len
        self.dropout = dropout
        self.seed = seed

        # Both towers start from identical weights (the desk-scale analogue
        # of initializing both encoders from one pretrained checkpoint) and
        # then fine-tune separately.
        rng = np.random.default_rng([seed, 0])
        self.ctx = EncoderParams(rng, vocab_size, d, enc_layers, enc_heads,
                                 enc_ffd, max_len, prefix="ctx")
        self.rsp = EncoderParams(np.random.default_rng([seed, 0]), vocab_size,
                                 d, enc_layers, enc_heads, enc_ffd, max_len,
                                 prefix="rsp")
        self.poly = PolyHead(rng, poly_m, d) if kind == "poly" else None
        self.scm = (ScmParams(rng, d, scm_layers, scm_heads, scm_ffd)
                    if use_scm else None)

    # -- parameter registry --

    def encoder_named(self):
        """Encoder-group parameters (both encoders plus the poly codes)."""
        out = self.ctx.named() + self.rsp.named()
        if self.poly is not None:
            out += self.poly.named()
        return out

    def scm_named(self):
        return self.scm.named() if self.scm is not None else []

    def named_parameters(self):
        return self.encoder_named() + self.scm_named()

    # -- encoding --

    def encode_context(self, ids: np.ndarray, p: float = 0.0, rng=None,
                       train: bool = False):
        """Context vector (bi) or full token states (poly)."""
        pool = "states" if self.kind == "poly" else "cls"
        return encode(ids, self.ctx, pool=pool, p=p, rng=rng, train=train)

    def encode_response(self, ids: np.ndarray, p: float = 0.0, rng=None,
                        train: bool = False) -> Tensor:
        return encode(ids, self.rsp, pool="cls", p=p, rng=rng, train=train)

    def context_rows(self, enc_ctx, u_rs: Tensor) -> Tensor:
        """Per-candidate context representation used by the comparison
        stage and by scoring.

        bi: the single (d,) vector. poly: an (m, d) matrix whose row i is
        the context attended through the codes by candidate i.
        """
        if self.kind == "bi":
            return enc_ctx
        rows = [poly_aggregate(enc_ctx, self.poly, T.row(u_rs, i))
                for i in range(u_rs.shape[0])]
        return T.stack_rows(rows)

    def degrees(self, ctx_ids: np.ndarray, cand_ids: list,
                ablation: str = "full", p: float = 0.0, rng=None,
                train: bool = False) -> Tensor:
        """Scores for one context against its own candidate list."""
        u_rs = T.stack_rows([
            self.encode_response(ids, p=p, rng=rng, train=train)
            for ids in cand_ids
        ])
        enc_ctx = self.encode_context(ctx_ids, p=p, rng=rng, train=train)
        u_c = self.context_rows(enc_ctx, u_rs)
        if self.use_scm:
            f = scm_forward(u_c, u_rs, self.scm, ablation=ablation,
                            p=p, rng=rng, train=train)
        else:
            f = u_rs
        return score(u_c, f)
