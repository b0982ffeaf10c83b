"""End-to-end guarantees the package ships with.

One test per guarantee, so ``pytest -v`` shows exactly one PASSED/FAILED
line for each. Every test also prints a ``[acceptance] ...: PASS`` line
with the measured numbers (visible with ``-s``); on failure the assert
message carries the same numbers.

The expensive corpus runs are shared: the separable-corpus models feed the
learning, extended-protocol, and adversarial checks; the five-seed ablation
runs on the comparison corpus feed both the comparison-benefit and the
ablation-ordering checks.
"""

import math
import time

import numpy as np
import pytest

from fdcheck import assert_grads_close
from scmsel.cli import ABLATE_LABELS, ABLATE_MODES, main
from scmsel.data import (Session, extend_candidates, generate_corpus,
                         generate_separable, make_adversarial)
from scmsel.lexindex import LexicalIndex
from scmsel.metrics import EvalReport, evaluate, gold_rank, mrr, recall_at_k
from scmsel.model import SelectionModel
from scmsel.ranking import TrainConfig, fit, in_batch_forward, listwise_loss
from scmsel.scm import ABLATIONS, ScmParams, scm_forward
from scmsel.tensor import Tensor
from scmsel.vocab import Vocabulary

SEEDS = (50, 51, 52, 53, 54)


def _verdict(name: str, detail: str) -> None:
    print(f"\n[acceptance] {name}: PASS — {detail}")


# ---------------------------------------------------------------------------
# gradient correctness
# ---------------------------------------------------------------------------

def _fd_graph(kind: str) -> tuple[SelectionModel, list, list]:
    """A complete scoring graph small enough for elementwise FD checking.

    Sequences fill max_len exactly so every positional row receives
    gradient; single-character tokens keep the vocabulary (and the
    embedding table) small.
    """
    texts = ["a b c d e f", "c d e f g h", "e f g h a b", "g h a b c d"]
    vocab = Vocabulary.from_texts(texts)
    model = SelectionModel(len(vocab), kind=kind, use_scm=True, d=8,
                           enc_layers=1, enc_heads=2, enc_ffd=8, max_len=8,
                           poly_m=4, scm_layers=1, scm_heads=2, scm_ffd=8,
                           seed=50)
    ctx = [vocab.encode([t], model.max_len) for t in texts]
    rsp = [vocab.encode([t], model.max_len) for t in reversed(texts)]
    return model, ctx, rsp


def test_gradients_match_finite_differences():
    t0 = time.perf_counter()
    for kind in ("bi", "poly"):
        model, ctx, rsp = _fd_graph(kind)

        def loss():
            return in_batch_forward(model, ctx, rsp)[1]

        assert_grads_close(loss, [t for _, t in model.named_parameters()],
                           tol=1e-4)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0, f"FD check took {elapsed:.1f}s (budget 60s)"
    _verdict("gradient-correctness",
             f"bi+scm and poly+scm, every parameter, rel err < 1e-4, "
             f"{elapsed:.1f}s")


# ---------------------------------------------------------------------------
# permutation equivariance of the comparison stage
# ---------------------------------------------------------------------------

def test_comparison_stage_is_permutation_equivariant():
    rng = np.random.default_rng(7)
    d = 16
    params = ScmParams(rng, d, n_layers=2, heads=4, dim_ffd=32)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(2, 9))
        u_c = Tensor(rng.normal(size=d))
        u_r = Tensor(rng.normal(size=(m, d)))
        perm = rng.permutation(m)
        for mode in ABLATIONS:
            base = scm_forward(u_c, u_r, params, ablation=mode).data
            swapped = scm_forward(u_c, Tensor(u_r.data[perm]), params,
                                  ablation=mode).data
            worst = max(worst, float(np.abs(base[perm] - swapped).max()))
    assert worst <= 1e-9, f"equivariance gap {worst:.3e} > 1e-9"
    _verdict("permutation-equivariance",
             f"100 batches, m in 2..8, modes {ABLATIONS}, "
             f"max gap {worst:.2e}")


# ---------------------------------------------------------------------------
# listwise loss sanity
# ---------------------------------------------------------------------------

def test_listwise_loss_uniform_value_and_shift_invariance():
    worst_uniform = 0.0
    for m in (2, 10, 50):
        for c in (0.0, 3.7, -1.25):
            loss = listwise_loss(Tensor(np.full(m, c)), gold=m // 2)
            worst_uniform = max(worst_uniform,
                                abs(float(loss.data) - math.log(m)))
    assert worst_uniform <= 1e-12, (
        f"uniform-degree loss off ln(m) by {worst_uniform:.3e}")

    rng = np.random.default_rng(11)
    worst_shift = 0.0
    for _ in range(50):
        m = int(rng.integers(2, 30))
        degrees = rng.normal(scale=3.0, size=m)
        gold = int(rng.integers(m))
        base = float(listwise_loss(Tensor(degrees), gold).data)
        moved = float(listwise_loss(Tensor(degrees + 17.3), gold).data)
        worst_shift = max(worst_shift, abs(base - moved))
    assert worst_shift <= 1e-10, f"shift gap {worst_shift:.3e} > 1e-10"
    _verdict("loss-sanity",
             f"ln(m) gap {worst_uniform:.2e} (m=2,10,50), "
             f"shift gap {worst_shift:.2e}")


# ---------------------------------------------------------------------------
# metrics against a full-sort oracle
# ---------------------------------------------------------------------------

def _oracle_ranks(scores: np.ndarray, golds: np.ndarray) -> list[int]:
    ranks = []
    for row, gold in zip(scores, golds):
        order = np.argsort(-row, kind="stable")
        ranks.append(int(np.where(order == gold)[0][0]) + 1)
    return ranks


def test_metrics_match_full_sort_oracle():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        rows = int(rng.integers(1, 9))
        m = int(rng.integers(2, 51))
        scores = rng.normal(size=(rows, m))
        golds = rng.integers(m, size=rows)
        ours = [gold_rank(scores[i], int(golds[i])) for i in range(rows)]
        oracle = _oracle_ranks(scores, golds)
        assert ours == oracle
        for k in (1, 2, 5, 10):
            if k <= m:
                assert recall_at_k(ours, k) == recall_at_k(oracle, k)
        assert mrr(ours) == mrr(oracle)

    scores = rng.normal(size=(10_000, 10))
    random_mrr = mrr([gold_rank(row, 0) for row in scores])
    assert abs(random_mrr - 0.2929) <= 0.01, (
        f"random-scorer MRR {random_mrr:.4f} outside 0.2929±0.01")
    _verdict("metric-oracle",
             f"1000 matrices exact; random MRR {random_mrr:.4f} "
             f"(expected 0.2929±0.01)")


# ---------------------------------------------------------------------------
# separable corpus: learning, extended pools, adversarial swap
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def separable_runs():
    train, tests = generate_separable(11, 2000, 500)
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in train])
    runs = {}
    for label, use_scm in (("bi+scm", True), ("bi", False)):
        model = SelectionModel(len(vocab), kind="bi", use_scm=use_scm,
                               seed=50)
        t0 = time.perf_counter()
        fit(model, vocab, train, TrainConfig())
        train_s = time.perf_counter() - t0
        report = evaluate(model, vocab, tests, metadata={"model": label})
        runs[label] = (model, report, train_s)
    return {"train": train, "tests": tests, "vocab": vocab, "runs": runs}


@pytest.mark.slow
def test_bi_scm_learns_separable_corpus(separable_runs):
    _, report, train_s = separable_runs["runs"]["bi+scm"]
    r1 = report.recalls[1]
    assert r1 >= 0.90, f"bi+scm R_10@1 {r1:.3f} < 0.90 after 5 epochs"
    assert train_s < 900.0, f"training took {train_s:.0f}s (budget 15 min)"
    _verdict("end-to-end-learning",
             f"bi+scm R_10@1 {r1:.3f} >= 0.90 in 5 epochs, {train_s:.0f}s")


@pytest.mark.slow
def test_extended_pools_keep_one_positive_and_get_harder(separable_runs):
    train = separable_runs["train"]
    tests = separable_runs["tests"]
    vocab = separable_runs["vocab"]
    pool, seen = [], set()
    for s in train:
        if s.response not in seen:
            seen.add(s.response)
            pool.append(s.response)
    index = LexicalIndex(pool)

    extended = {}
    for target in (50, 100):
        samples = [extend_candidates(s, index, target) for s in tests]
        for s in samples:
            labels = [c.label for c in s.candidates]
            assert len(labels) == target and sum(labels) == 1, (
                f"one-positive invariant broken at m={target}")
        extended[target] = samples

    details = []
    for label, (model, report10, _) in separable_runs["runs"].items():
        report50 = evaluate(model, vocab, extended[50],
                            metadata={"model": label})
        assert report50.recalls[1] <= report10.recalls[1] + 1e-12, (
            f"{label}: R_50@1 {report50.recalls[1]:.3f} > "
            f"R_10@1 {report10.recalls[1]:.3f}")
        details.append(f"{label} R_50@1 {report50.recalls[1]:.3f} <= "
                       f"R_10@1 {report10.recalls[1]:.3f}")
    _verdict("extended-protocol",
             "one positive on 100% of samples at m=50,100; "
             + "; ".join(details))


@pytest.mark.slow
def test_adversarial_swap_hurts_every_model(separable_runs):
    tests = separable_runs["tests"]
    vocab = separable_runs["vocab"]
    rng = np.random.default_rng([50, 3])
    adv = [make_adversarial(s, rng) for s in tests]
    for orig, swapped in zip(tests, adv):
        planted = [c for c in swapped.candidates
                   if c.provenance == "adversarial"]
        assert len(planted) == 1
        assert planted[0].text in orig.turns, (
            "adversarial candidate is not a verbatim context turn")

    details = []
    for label, (model, report10, _) in separable_runs["runs"].items():
        report_adv = evaluate(model, vocab, adv, metadata={"model": label})
        assert report_adv.recalls[1] < report10.recalls[1], (
            f"{label}: adversarial R_10@1 {report_adv.recalls[1]:.3f} not "
            f"below standard {report10.recalls[1]:.3f}")
        details.append(f"{label} {report10.recalls[1]:.3f}->"
                       f"{report_adv.recalls[1]:.3f}")
    _verdict("adversarial-protocol",
             "swap is a verbatim turn on 100% of samples; R_10@1 drops: "
             + ", ".join(details))


# ---------------------------------------------------------------------------
# comparison corpus: five-seed ablation grid
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ablate_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_ablate")
    train_p = root / "train.tsv"
    test_p = root / "test.tsv"
    generate_corpus("comparison", seed=11, n_train=2000, n_test=500,
                    train_path=train_p, test_path=test_p)
    grid = {}
    for seed in SEEDS:
        out = root / f"seed{seed}"
        code = main(["ablate", "--train", str(train_p), "--test", str(test_p),
                     "--out-dir", str(out), "--seed", str(seed)])
        assert code == 0, f"ablate run failed for seed {seed}"
        grid[seed] = {
            mode: EvalReport.from_json(
                (out / f"ablate_{mode}" / "report.json").read_text())
            for mode in ABLATE_MODES
        }
    return grid


@pytest.mark.slow
def test_comparison_stage_beats_plain_bi_encoder(ablate_runs):
    diffs = [ablate_runs[s]["full"].recalls[1]
             - ablate_runs[s]["off"].recalls[1] for s in SEEDS]
    mean = float(np.mean(diffs))
    positive = sum(d > 0 for d in diffs)
    assert mean >= 0.05, (
        f"mean R_10@1 benefit {mean:+.3f} < +0.05 (per-seed {diffs})")
    assert positive >= 4, (
        f"benefit positive on only {positive}/5 seeds (per-seed {diffs})")
    _verdict("comparison-benefit",
             f"mean R_10@1 gain {mean:+.3f} over {len(SEEDS)} seeds, "
             f"positive on {positive}/5; per-seed "
             + ", ".join(f"{d:+.3f}" for d in diffs))


@pytest.mark.slow
def test_ablation_grid_orders_full_variant_first(ablate_runs):
    for seed in SEEDS:
        for mode in ABLATE_MODES:
            report = ablate_runs[seed][mode]
            assert report.metadata["model"] == ABLATE_LABELS[mode]
    counts = {}
    for mode in ("no_context_aware", "no_gate", "off"):
        counts[ABLATE_LABELS[mode]] = sum(
            ablate_runs[s]["full"].mrr >= ablate_runs[s][mode].mrr
            for s in SEEDS)
    for label, count in counts.items():
        assert count >= 4, (
            f"full MRR >= {label} on only {count}/5 seeds")
    _verdict("ablation-structure",
             "4-variant grid present; full MRR >= ablated on "
             + ", ".join(f"{v}/5 ({k})" for k, v in counts.items()))


# ---------------------------------------------------------------------------
# bit-level reproducibility
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_same_config_and_seed_reproduce_bits(tmp_path):
    train_p = tmp_path / "train.tsv"
    test_p = tmp_path / "test.tsv"
    generate_corpus("separable", seed=13, n_train=200, n_test=50,
                    train_path=train_p, test_path=test_p)
    out = tmp_path / "run"
    argv = ["train", "--train", str(train_p), "--test", str(test_p),
            "--out-dir", str(out), "--seed", "50"]
    assert main(argv) == 0
    first_ckpt = (out / "checkpoint.bin").read_bytes()
    report_a = tmp_path / "a.json"
    report_b = tmp_path / "b.json"
    assert main(["eval", "--checkpoint", str(out / "checkpoint.bin"),
                 "--test", str(test_p), "--out", str(report_a)]) == 0
    assert main(argv) == 0
    second_ckpt = (out / "checkpoint.bin").read_bytes()
    assert main(["eval", "--checkpoint", str(out / "checkpoint.bin"),
                 "--test", str(test_p), "--out", str(report_b)]) == 0
    assert first_ckpt == second_ckpt, "checkpoint bytes differ across runs"
    assert report_a.read_bytes() == report_b.read_bytes(), (
        "evaluation reports differ across runs")
    _verdict("reproducibility",
             f"checkpoint ({len(first_ckpt)} bytes) and eval report "
             f"bit-identical across two runs")
