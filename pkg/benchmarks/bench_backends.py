"""Compare the compiled kernels against the numpy fallback.

Times each fused kernel at attention-like shapes, then a full training
step (forward, backward, optimizer) under both backends.

    python3 benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from scmsel import backend
from scmsel.cli import build_model, train_config
from scmsel.config import RunConfig
from scmsel.data import generate_separable
from scmsel.ranking import fit
from scmsel.vocab import Vocabulary


def timeit(fn, repeats: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    x = rng.standard_normal((256, 256))
    y = np.exp(x) / np.exp(x).sum(axis=1, keepdims=True)
    dy = rng.standard_normal(x.shape)
    gain = rng.standard_normal(256)
    bias = rng.standard_normal(256)
    _, xhat, inv_std = backend.active.layer_norm_fwd(x, gain, bias, 1e-5)
    p = rng.standard_normal(1 << 16)
    g = rng.standard_normal(p.size)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    return {
        "softmax_fwd": lambda: backend.active.softmax_rows_fwd(x),
        "softmax_bwd": lambda: backend.active.softmax_rows_bwd(y, dy),
        "layer_norm_fwd": lambda: backend.active.layer_norm_fwd(
            x, gain, bias, 1e-5),
        "layer_norm_bwd": lambda: backend.active.layer_norm_bwd(
            dy, xhat, inv_std, gain),
        "adam_update": lambda: backend.active.adam_update(
            p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1),
    }


def train_step_case():
    sessions, _ = generate_separable(7, 64, 1)
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in sessions])
    cfg = RunConfig(d=32, enc_layers=1, enc_heads=2, enc_ffd=32,
                    scm_layers=2, scm_heads=4, scm_ffd=64,
                    batch_size=8, epochs=1)

    def run():
        model = build_model(cfg, len(vocab))
        fit(model, vocab, sessions, train_config(cfg))

    return run


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = backend.available()
    if backends == ["python"]:
        print("compiled extension not built; timing the fallback only")

    rng = np.random.default_rng(0)
    cases = list(kernel_cases(rng).items()) + [
        ("train_epoch_64x8", train_step_case())]

    results: dict[str, dict[str, float]] = {}
    for which in backends:
        backend.use(which)
        for label, fn in cases:
            results.setdefault(label, {})[which] = timeit(fn, args.repeats)
    backend.use("auto")

    width = max(len(label) for label, _ in cases)
    header = f"{'case'.ljust(width)}  " + "  ".join(
        f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for label, _ in cases:
        row = f"{label.ljust(width)}  " + "  ".join(
            f"{results[label][b] * 1e3:>10.3f}ms" for b in backends)
        if len(backends) == 2:
            ratio = results[label]["python"] / results[label]["cython"]
            row += f"  {ratio:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
