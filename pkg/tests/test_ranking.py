"""Scoring, loss, in-batch training, and selection tests."""

import logging
import math

import numpy as np
import pytest

from scmsel.errors import ConfigError, DataError, NumericError
from scmsel.model import SelectionModel
from scmsel.ranking import (TrainConfig, fit, in_batch_forward, listwise_loss,
                            score, select)
from scmsel import tensor as T
from scmsel.tensor import Tensor, backward
from scmsel.vocab import Vocabulary
from scmsel.data import Session


def tiny_model(kind="bi", use_scm=True, vocab_size=40, seed=50):
    return SelectionModel(vocab_size, kind=kind, use_scm=use_scm, d=16,
                          enc_layers=1, enc_heads=2, enc_ffd=12, max_len=24,
                          poly_m=4, scm_layers=1, scm_heads=2, scm_ffd=12,
                          seed=seed)


# -- score --


def test_score_hand_case():
    u_c = Tensor(np.array([1.0, 0.0]))
    f = Tensor(np.array([[2.0, 0.0], [0.0, 3.0]]))
    assert np.array_equal(score(u_c, f).data, np.array([2.0, 0.0]))


def test_score_zero_context():
    f = Tensor(np.random.default_rng(0).normal(size=(4, 8)))
    assert np.abs(score(Tensor(np.zeros(8)), f).data).max() == 0.0


def test_score_matches_loop_oracle():
    rng = np.random.default_rng(1)
    u_c = rng.normal(size=8)
    f = rng.normal(size=(5, 8))
    want = np.array([sum(f[i, j] * u_c[j] for j in range(8)) for i in range(5)])
    got = score(Tensor(u_c), Tensor(f)).data
    assert np.abs(got - want).max() < 1e-12


def test_score_per_candidate_context_rows():
    rng = np.random.default_rng(2)
    u_c = rng.normal(size=(5, 8))
    f = rng.normal(size=(5, 8))
    got = score(Tensor(u_c), Tensor(f)).data
    want = (f * u_c).sum(axis=1)
    assert np.abs(got - want).max() < 1e-12


# -- listwise loss --


def test_loss_uniform_is_log_m():
    for m in (2, 10, 50):
        loss = listwise_loss(Tensor(np.zeros(m)), 0)
        assert abs(float(loss.data) - math.log(m)) < 1e-12


def test_loss_saturated_gold_is_tiny():
    degrees = np.zeros(10)
    degrees[3] = 30.0
    assert float(listwise_loss(Tensor(degrees), 3).data) < 1e-12


def test_loss_two_way_hand_value():
    loss = listwise_loss(Tensor(np.array([1.0, 0.0])), 0)
    assert abs(float(loss.data) - math.log(1 + math.exp(-1))) < 1e-12


def test_loss_shift_invariance():
    rng = np.random.default_rng(3)
    degrees = rng.normal(size=12) * 3
    base = float(listwise_loss(Tensor(degrees), 4).data)
    for c in (-100.0, -1.0, 0.5, 100.0):
        shifted = float(listwise_loss(Tensor(degrees + c), 4).data)
        assert abs(shifted - base) < 1e-10


def test_loss_rejects_bad_gold():
    with pytest.raises(IndexError):
        listwise_loss(Tensor(np.zeros(3)), 3)


def test_train_config_rejects_batch_of_one():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1)


# -- in-batch forward --


def ids_for(vocab, texts, max_len=24):
    return [vocab.encode([t], max_len) for t in texts]


def test_in_batch_matrix_matches_independent_calls():
    vocab = Vocabulary.from_texts(["a b c d e f g h"])
    model = tiny_model()
    ctx = ids_for(vocab, ["a b c", "d e"])
    rsp = ids_for(vocab, ["f g", "h a"])
    degrees, _ = in_batch_forward(model, ctx, rsp)
    for i in range(2):
        row = model.degrees(ctx[i], rsp).data
        assert np.abs(degrees.data[i] - row).max() < 1e-12


def test_in_batch_shape_and_loss_diagonal():
    vocab = Vocabulary.from_texts(["a b c d e f"])
    model = tiny_model(use_scm=False)
    ctx = ids_for(vocab, ["a", "b", "c"])
    rsp = ids_for(vocab, ["d", "e", "f"])
    degrees, loss = in_batch_forward(model, ctx, rsp)
    assert degrees.shape == (3, 3)
    logits = degrees.data
    want = 0.0
    for i in range(3):
        e = np.exp(logits[i] - logits[i].max())
        want -= math.log(e[i] / e.sum())
    assert abs(float(loss.data) - want / 3) < 1e-12


def test_in_batch_no_gate_keeps_shape():
    vocab = Vocabulary.from_texts(["a b c d"])
    model = tiny_model()
    ctx = ids_for(vocab, ["a", "b"])
    rsp = ids_for(vocab, ["c", "d"])
    degrees, _ = in_batch_forward(model, ctx, rsp, ablation="no_gate")
    assert degrees.shape == (2, 2)


def test_gradient_reaches_both_parameter_groups():
    vocab = Vocabulary.from_texts(["a b c d e"])
    for kind in ("bi", "poly"):
        model = tiny_model(kind=kind)
        ctx = ids_for(vocab, ["a b", "c"])
        rsp = ids_for(vocab, ["d", "e"])
        _, loss = in_batch_forward(model, ctx, rsp)
        backward(loss)
        enc = max(float(np.abs(t.grad).max())
                  for _, t in model.encoder_named() if t.grad is not None)
        cmp_ = max(float(np.abs(t.grad).max())
                   for _, t in model.scm_named() if t.grad is not None)
        assert enc > 0 and cmp_ > 0


# -- fit --


def toy_corpus(n=24):
    """Tiny separable corpus: response repeats its context's key token."""
    words = ["red", "blue", "green", "lime", "pink", "teal"]
    out = []
    for i in range(n):
        w = words[i % len(words)]
        out.append(Session(turns=[f"{w} question {i}"],
                           response=f"{w} answer {i}"))
    return out


def test_fit_lr_zero_changes_nothing():
    sessions = toy_corpus()
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in sessions])
    model = tiny_model(vocab_size=len(vocab))
    before = {n: t.data.copy() for n, t in model.named_parameters()}
    cfg = TrainConfig(batch_size=8, epochs=1, lr_encoder=0.0, lr_scm=0.0,
                      dropout=0.0)
    fit(model, vocab, sessions, cfg)
    for n, t in model.named_parameters():
        assert np.array_equal(before[n], t.data), n


def test_fit_same_seed_same_curve_and_params():
    sessions = toy_corpus()
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in sessions])

    def run():
        model = tiny_model(vocab_size=len(vocab))
        curve = fit(model, vocab, sessions,
                    TrainConfig(batch_size=8, epochs=2, seed=50))
        return curve, {n: t.data.copy() for n, t in model.named_parameters()}

    c1, p1 = run()
    c2, p2 = run()
    assert c1 == c2
    for n in p1:
        assert np.array_equal(p1[n], p2[n]), n


def test_fit_loss_decreases_on_easy_data():
    sessions = toy_corpus(n=48)
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in sessions])
    model = tiny_model(vocab_size=len(vocab))
    cfg = TrainConfig(batch_size=8, epochs=4, lr_encoder=1e-3, lr_scm=1e-3,
                      dropout=0.0)
    curve = fit(model, vocab, sessions, cfg)
    per_epoch = {}
    for epoch, _, loss in curve:
        per_epoch.setdefault(epoch, []).append(loss)
    first = np.mean(per_epoch[0])
    last = np.mean(per_epoch[max(per_epoch)])
    assert last < first


def test_fit_skips_duplicate_gold_batches(caplog):
    sessions = [Session(turns=[f"q {i}"], response="same answer")
                for i in range(4)]
    vocab = Vocabulary.from_texts(["q same answer 0 1 2 3"])
    model = tiny_model(vocab_size=len(vocab))
    with caplog.at_level(logging.WARNING):
        curve = fit(model, vocab, sessions, TrainConfig(batch_size=4, epochs=1))
    assert curve == []
    assert any("duplicate gold" in r.message for r in caplog.records)


def test_fit_raises_on_nan_loss():
    sessions = toy_corpus()
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in sessions])
    model = tiny_model(vocab_size=len(vocab))
    model.ctx.tok_emb.data[:] = np.nan
    with pytest.raises(NumericError, match="NaN"):
        fit(model, vocab, sessions, TrainConfig(batch_size=8, epochs=1))


def test_fit_epoch_callback_fires():
    sessions = toy_corpus()
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in sessions])
    model = tiny_model(vocab_size=len(vocab))
    seen = []
    fit(model, vocab, sessions, TrainConfig(batch_size=8, epochs=3),
        epoch_callback=seen.append)
    assert seen == [0, 1, 2]


def test_fit_rejects_empty_training_set():
    vocab = Vocabulary.from_texts(["a"])
    model = tiny_model(vocab_size=len(vocab))
    with pytest.raises(DataError):
        fit(model, vocab, [], TrainConfig())


# -- select --


class FixedModel:
    """Stub exposing only what select() touches."""

    def __init__(self, degrees):
        self._d = np.asarray(degrees, dtype=float)

    def degrees(self, ctx_ids, cand_ids, ablation="full"):
        return Tensor(self._d)


def test_select_single_candidate():
    order, degrees = select(FixedModel([0.3]), np.array([2, 3]), [np.array([2])])
    assert list(order) == [0]


def test_select_tie_breaks_by_lower_index():
    order, _ = select(FixedModel([0.2, 0.9, 0.9]), np.array([2]),
                      [np.array([2])] * 3)
    assert list(order) == [1, 2, 0]


def test_select_empty_candidates_rejected():
    with pytest.raises(DataError):
        select(FixedModel([]), np.array([2]), [])


def test_select_consistent_with_model_degrees():
    vocab = Vocabulary.from_texts(["a b c d e"])
    model = tiny_model()
    ctx = vocab.encode(["a b"], 24)
    cands = ids_for(vocab, ["c", "d", "e"])
    order, degrees = select(model, ctx, cands)
    direct = model.degrees(ctx, cands).data
    assert np.abs(degrees - direct).max() < 1e-12
    assert list(order) == list(np.argsort(-degrees, kind="stable"))
