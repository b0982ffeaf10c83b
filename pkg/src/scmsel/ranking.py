"""Scoring, listwise loss, in-batch-negative training, and selection."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from scmsel.errors import ConfigError, DataError, NumericError
from scmsel.optim import Adam
from scmsel.scm import scm_forward
from scmsel import tensor as T
from scmsel.tensor import Tensor, backward, no_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 16
    epochs: int = 5
    seed: int = 50
    lr_encoder: float = 5e-5
    lr_scm: float = 5e-4
    warmup_ratio: float = 0.1
    clip: float = 1.0
    dropout: float = 0.1
    ablation: str = "full"

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(
                f"batch_size {self.batch_size} < 2 leaves no negatives")


def score(u_c: Tensor, f: Tensor) -> Tensor:
    """degrees_i = f_i . u_c (row i of u_c in per-candidate mode)."""
    m = f.shape[0]
    rows = T.tile_rows(u_c, m) if u_c.data.ndim == 1 else u_c
    return T.rowwise_dot(f, rows)


def listwise_loss(degrees: Tensor, gold: int) -> Tensor:
    """-log softmax(degrees)[gold]."""
    m = degrees.shape[0]
    if not 0 <= gold < m:
        raise IndexError(f"gold index {gold} out of range for {m} candidates")
    logp = T.log_softmax_rows(T.reshape(degrees, (1, m)))
    return T.affine(T.reshape(T.gather_rows(logp, np.array([gold])), ()), -1.0)


def in_batch_forward(model, ctx_ids: list, rsp_ids: list,
                     ablation: str = "full", p: float = 0.0, rng=None,
                     train: bool = False) -> tuple[Tensor, Tensor]:
    """Score every context in the batch against all batch responses.

    Returns (degrees (B, B), mean loss). Responses are encoded once and the
    comparison stage runs per context over the shared candidate set; the
    gold for row i is column i.
    """
    b = len(ctx_ids)
    u_rs = T.stack_rows([
        model.encode_response(ids, p=p, rng=rng, train=train)
        for ids in rsp_ids
    ])
    rows = []
    for i in range(b):
        enc_ctx = model.encode_context(ctx_ids[i], p=p, rng=rng, train=train)
        u_c = model.context_rows(enc_ctx, u_rs)
        if model.use_scm:
            f = scm_forward(u_c, u_rs, model.scm, ablation=ablation,
                            p=p, rng=rng, train=train)
        else:
            f = u_rs
        rows.append(score(u_c, f))
    degrees = T.stack_rows(rows)
    logp = T.log_softmax_rows(degrees)
    gold = T.gather_rows(logp, np.arange(b))
    loss = T.affine(T.mean_all(gold), -1.0)
    return degrees, loss


def fit(model, vocab, sessions, cfg: TrainConfig, epoch_callback=None):
    """Train with in-batch negatives; returns the loss curve.

    The curve is a list of (epoch, step, loss) rows, one per optimization
    step. Batches whose gold responses collide are skipped with a warning
    (the diagonal label would be ambiguous). epoch_callback(epoch) fires
    after each completed epoch, letting callers snapshot parameters.
    """
    if not sessions:
        raise DataError("empty training set")
    ctx_ids = [vocab.encode(s.turns, model.max_len) for s in sessions]
    rsp_ids = [vocab.encode([s.response], model.max_len) for s in sessions]
    keys = [" ".join(s.response.split()) for s in sessions]

    n = len(sessions)
    batches_per_epoch = max(1, n // cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    opt = Adam(
        {"encoder": (model.encoder_named(), cfg.lr_encoder),
         "scm": (model.scm_named(), cfg.lr_scm)},
        clip=cfg.clip, total_steps=total_steps, warmup_ratio=cfg.warmup_ratio,
    )
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    drop_rng = np.random.default_rng([cfg.seed, 2])

    curve = []
    step = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                continue
            batch_keys = [keys[j] for j in batch]
            if len(set(batch_keys)) < len(batch_keys):
                log.warning("skipping batch with duplicate gold responses")
                continue
            _, loss = in_batch_forward(
                model,
                [ctx_ids[j] for j in batch],
                [rsp_ids[j] for j in batch],
                ablation=cfg.ablation, p=cfg.dropout, rng=drop_rng, train=True,
            )
            value = float(loss.data)
            if np.isnan(value):
                raise NumericError(
                    f"NaN loss at epoch {epoch} step {step}; aborting")
            opt.zero_grad()
            backward(loss)
            opt.step()
            curve.append((epoch, step, value))
            step += 1
        if epoch_callback is not None:
            epoch_callback(epoch)
    return curve


def select(model, ctx_ids: np.ndarray, cand_ids: list,
           ablation: str = "full") -> tuple[np.ndarray, np.ndarray]:
    """Rank candidates for one context, highest degree first.

    Ties break toward the lower candidate index. Returns (order, degrees).
    """
    if not cand_ids:
        raise DataError("select needs at least one candidate")
    with no_grad():
        degrees = model.degrees(ctx_ids, cand_ids, ablation=ablation).data
    order = np.lexsort((np.arange(len(cand_ids)), -degrees))
    return order, degrees
