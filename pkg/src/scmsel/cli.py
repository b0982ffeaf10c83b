"""Command-line entry points.

Commands: train, eval, ablate, sweep, synth, index. Exit codes: 0 success,
2 usage/config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from scmsel import checkpoint as ckpt
from scmsel import config as cfgmod
from scmsel.config import (EXTEND_SIZES, PINNED, SWEEP_GRID, RunConfig,
                           corpus_hash, resolve)
from scmsel.data import (generate_corpus, load_test, load_train,
                         extend_candidates, make_adversarial)
from scmsel.errors import ConfigError, DataError, NumericError
from scmsel.lexindex import LexicalIndex
from scmsel.metrics import evaluate, report_table
from scmsel.model import SelectionModel
from scmsel.ranking import TrainConfig, fit
from scmsel.vocab import Vocabulary

ABLATE_MODES = ("full", "no_context_aware", "no_gate", "off")
ABLATE_LABELS = {
    "full": "full",
    "no_context_aware": "-{context-aware}",
    "no_gate": "-gated",
    "off": "base",
}
# sweep axis -> the RunConfig field it moves
AXIS_FIELD = {"n": "scm_layers", "n_head": "scm_heads", "dim_ffd": "scm_ffd"}


def build_model(cfg: RunConfig, vocab_size: int) -> SelectionModel:
    return SelectionModel(
        vocab_size, kind=cfg.model, use_scm=cfg.scm != "off", d=cfg.d,
        enc_layers=cfg.enc_layers, enc_heads=cfg.enc_heads,
        enc_ffd=cfg.enc_ffd, max_len=cfg.max_len, poly_m=cfg.poly_m,
        scm_layers=cfg.scm_layers, scm_heads=cfg.scm_heads,
        scm_ffd=cfg.scm_ffd, dropout=cfg.dropout, seed=cfg.seed)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg.batch_size, epochs=cfg.epochs, seed=cfg.seed,
        lr_encoder=cfg.lr_encoder, lr_scm=cfg.lr_scm,
        warmup_ratio=cfg.warmup_ratio, clip=cfg.clip, dropout=cfg.dropout,
        ablation=cfg.scm if cfg.scm != "off" else "full")


def run_train(cfg: RunConfig, out_dir: Path):
    """Train one model per cfg; writes per-epoch checkpoints + loss curve."""
    sessions = load_train(cfg.train)
    vocab = Vocabulary.from_texts(
        [" ".join(s.turns) + " " + s.response for s in sessions])
    model = build_model(cfg, len(vocab))
    out_dir.mkdir(parents=True, exist_ok=True)
    config_text = cfg.to_text()
    vocab_lines = vocab.to_lines()

    def snapshot(epoch: int):
        ckpt.save(out_dir / f"checkpoint_epoch{epoch}.bin", config_text,
                  vocab_lines, model.named_parameters())

    curve = fit(model, vocab, sessions, train_config(cfg),
                epoch_callback=snapshot)
    ckpt.save(out_dir / "checkpoint.bin", config_text, vocab_lines,
              model.named_parameters())
    with open(out_dir / "loss_curve.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,step,loss\n")
        for epoch, step, loss in curve:
            fh.write(f"{epoch},{step},{loss:.10f}\n")
    return model, vocab, curve


def run_eval(model, vocab, cfg: RunConfig, test_path: str, label: str,
             extend: int | None = None, adversarial: bool = False,
             pool_path: str | None = None):
    samples, dropped = load_test(test_path)
    protocol = "standard"
    if extend is not None:
        if extend not in EXTEND_SIZES:
            raise ConfigError(
                f"--extend must be one of {EXTEND_SIZES}, got {extend}")
        pool_src = pool_path or cfg.train
        if not pool_src:
            raise ConfigError("--extend needs a response pool "
                              "(--pool or a train path in the config)")
        pool = []
        seen = set()
        for s in load_train(pool_src):
            if s.response not in seen:
                seen.add(s.response)
                pool.append(s.response)
        index = LexicalIndex(pool)
        samples = [extend_candidates(s, index, extend) for s in samples]
        protocol = f"extend{extend}"
    if adversarial:
        rng = np.random.default_rng([cfg.seed, 3])
        samples = [make_adversarial(s, rng) for s in samples]
        protocol = "adversarial"
    metadata = {
        "model": label,
        "kind": cfg.model,
        "scm": cfg.scm,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "corpus_hash": corpus_hash(test_path),
        "protocol": protocol,
        "dropped_groups": dropped,
    }
    return evaluate(model, vocab, samples,
                    ablation=cfg.scm if cfg.scm != "off" else "full",
                    metadata=metadata)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

_FLAG_FIELDS = [f.name for f in dataclasses.fields(RunConfig)]
_SCM_ONLY_FLAGS = ("scm_layers", "scm_heads", "scm_ffd", "lr_scm")


def _add_config_flags(sub):
    sub.add_argument("--config", help="key=value config file")
    for name in _FLAG_FIELDS:
        sub.add_argument(f"--{name.replace('_', '-')}", dest=name,
                         default=None)


def _coerced_flags(args) -> dict:
    out = {}
    for name in _FLAG_FIELDS:
        raw = getattr(args, name, None)
        if raw is not None:
            out[name] = cfgmod._coerce(name, str(raw))
    return out


def _resolve(args) -> RunConfig:
    return resolve(_coerced_flags(args), file_path=args.config)


def cmd_train(args) -> int:
    cfg = _resolve(args)
    if cfg.scm == "off":
        for name in _SCM_ONLY_FLAGS:
            if getattr(args, name, None) is not None:
                raise ConfigError(
                    f"--{name.replace('_', '-')} conflicts with --scm off")
    if not cfg.train:
        raise ConfigError("a train corpus is required (--train)")
    out_dir = Path(cfg.out_dir)
    _, vocab, curve = run_train(cfg, out_dir)
    last_epoch = curve[-1][0] if curve else 0
    losses = [l for e, _, l in curve if e == last_epoch]
    mean_loss = float(np.mean(losses)) if losses else float("nan")
    print(f"trained {cfg.model}+scm:{cfg.scm} for {cfg.epochs} epochs, "
          f"final-epoch mean loss {mean_loss:.4f}")
    print(f"checkpoint: {out_dir / 'checkpoint.bin'}")
    if cfg.test:
        model, vocab, cfg = _load_checkpoint(out_dir / "checkpoint.bin")
        report = run_eval(model, vocab, cfg, cfg.test,
                          label=f"{cfg.model}+{cfg.scm}")
        (out_dir / "report.json").write_text(report.to_json(),
                                             encoding="utf-8")
        print(report_table([report]))
    return 0


def _load_checkpoint(path):
    config_text, vocab_lines, params = ckpt.load(path)
    cfg = cfgmod.from_text(config_text)
    vocab = Vocabulary.from_lines(vocab_lines)
    model = build_model(cfg, len(vocab))
    ckpt.apply_params(model, params)
    return model, vocab, cfg


def cmd_eval(args) -> int:
    model, vocab, cfg = _load_checkpoint(args.checkpoint)
    if "SCM_SEED" in os.environ:
        cfg.seed = int(os.environ["SCM_SEED"])
    test_path = args.test or cfg.test
    if not test_path:
        raise ConfigError("a test corpus is required (--test)")
    report = run_eval(model, vocab, cfg, test_path,
                      label=f"{cfg.model}+{cfg.scm}", extend=args.extend,
                      adversarial=args.adversarial, pool_path=args.pool)
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(report_table([report]))
    return 0


def cmd_ablate(args) -> int:
    base = _resolve(args)
    if not base.train or not base.test:
        raise ConfigError("ablate needs both --train and --test")
    reports = []
    for mode in ABLATE_MODES:
        cfg = dataclasses.replace(base, scm=mode).validate()
        out_dir = Path(base.out_dir) / f"ablate_{mode}"
        model, vocab, _ = run_train(cfg, out_dir)
        report = run_eval(model, vocab, cfg, cfg.test,
                          label=ABLATE_LABELS[mode])
        (out_dir / "report.json").write_text(report.to_json(),
                                             encoding="utf-8")
        reports.append(report)
    table = report_table(reports)
    Path(base.out_dir, "ablate.txt").write_text(table + "\n",
                                                encoding="utf-8")
    print(table)
    return 0


def cmd_sweep(args) -> int:
    base = _resolve(args)
    if not base.train or not base.test:
        raise ConfigError("sweep needs both --train and --test")
    axis = args.axis
    if axis not in SWEEP_GRID:
        raise ConfigError(f"unknown sweep axis {axis!r}; "
                          f"choose from {sorted(SWEEP_GRID)}")
    if args.values:
        try:
            values = [int(v) for v in args.values.split(",")]
        except ValueError:
            raise ConfigError(f"bad --values list: {args.values!r}")
    else:
        values = list(SWEEP_GRID[axis])
    for v in values:
        if v not in SWEEP_GRID[axis]:
            raise ConfigError(
                f"value {v} outside supported {axis} grid {SWEEP_GRID[axis]}")
    pins = {AXIS_FIELD[a]: PINNED[a] for a in SWEEP_GRID if a != axis}
    reports = []
    for v in values:
        cfg = dataclasses.replace(base, scm="full",
                                  **{AXIS_FIELD[axis]: v}, **pins).validate()
        out_dir = Path(base.out_dir) / f"sweep_{axis}_{v}"
        model, vocab, _ = run_train(cfg, out_dir)
        report = run_eval(model, vocab, cfg, cfg.test, label=f"{axis}={v}")
        (out_dir / "report.json").write_text(report.to_json(),
                                             encoding="utf-8")
        reports.append(report)
    table = report_table(reports)
    Path(base.out_dir, f"sweep_{axis}.txt").write_text(table + "\n",
                                                       encoding="utf-8")
    print(table)
    return 0


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_path = out_dir / "train.tsv"
    test_path = out_dir / "test.tsv"
    kwargs = {}
    if args.m is not None:
        kwargs["m"] = args.m
    generate_corpus(args.kind, args.seed, args.n_train, args.n_test,
                    train_path, test_path, **kwargs)
    print(f"wrote {train_path} ({args.n_train} sessions) and "
          f"{test_path} ({args.n_test} samples)")
    return 0


def cmd_index(args) -> int:
    pool = []
    seen = set()
    for s in load_train(args.pool):
        if s.response not in seen:
            seen.add(s.response)
            pool.append(s.response)
    index = LexicalIndex(pool)
    hits = index.query(args.query, args.k,
                       exclude_texts=set(args.exclude or []))
    for text in hits:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scmsel",
        description="retrieval-based response selection with a "
                    "candidate-comparison stage")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train a model")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", help="test corpus (defaults to the one "
                                  "recorded in the checkpoint)")
    p.add_argument("--extend", type=int, default=None,
                   help=f"grow candidate sets to one of {EXTEND_SIZES}")
    p.add_argument("--adversarial", action="store_true",
                   help="swap one negative per sample for a context turn")
    p.add_argument("--pool", help="response pool for --extend "
                                  "(defaults to the train corpus)")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("ablate",
                        help="train and compare the four comparison-stage "
                             "variants under one seed")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = subs.add_parser("sweep", help="sweep one comparison-stage axis")
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_GRID))
    p.add_argument("--values", help="comma-separated values "
                                    "(default: the full grid)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--kind", required=True,
                   choices=("separable", "comparison"))
    p.add_argument("--seed", type=int, default=50)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--m", type=int, default=None,
                   help="candidates per test sample")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("index", help="query a lexical index over a "
                                      "corpus response pool")
    p.add_argument("--pool", required=True, help="train-format TSV")
    p.add_argument("--query", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--exclude", nargs="*")
    p.set_defaults(func=cmd_index)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
