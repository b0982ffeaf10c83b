"""Rank-based retrieval metrics and evaluation reports.

Ranks are pessimistic about ties: the gold candidate is placed after every
negative scoring greater than OR EQUAL to it, so reported numbers never
benefit from degenerate equal scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from scmsel.errors import DataError
from scmsel.tensor import no_grad

RECALL_KS = (1, 2, 5, 10)


def gold_rank(degrees: np.ndarray, gold: int) -> int:
    degrees = np.asarray(degrees, dtype=float)
    m = degrees.shape[0]
    if not 0 <= gold < m:
        raise IndexError(f"gold index {gold} out of range for {m} candidates")
    g = degrees[gold]
    greater = int((degrees > g).sum())
    tied = int((degrees == g).sum()) - 1  # the gold itself ties with itself
    return 1 + greater + tied


def recall_at_k(ranks, k: int) -> float:
    if len(ranks) == 0:
        raise DataError("empty rank list")
    return float(np.mean(np.asarray(ranks) <= k))


def mrr(ranks) -> float:
    if len(ranks) == 0:
        raise DataError("empty rank list")
    return float(np.mean(1.0 / np.asarray(ranks, dtype=float)))


@dataclass
class EvalReport:
    n: int                      # candidate count per sample
    recalls: dict               # k -> R_n@k
    mrr: float
    ranks: list
    sample_count: int
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "recalls": {str(k): v for k, v in sorted(self.recalls.items())},
            "mrr": self.mrr,
            "sample_count": self.sample_count,
            "ranks": list(map(int, self.ranks)),
            "metadata": self.metadata,
        }, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        return cls(n=raw["n"],
                   recalls={int(k): v for k, v in raw["recalls"].items()},
                   mrr=raw["mrr"], ranks=raw["ranks"],
                   sample_count=raw["sample_count"],
                   metadata=raw.get("metadata", {}))


def evaluate(model, vocab, samples, ablation: str = "full",
             metadata: dict | None = None) -> EvalReport:
    """Deterministic full pass over test samples in eval mode."""
    if not samples:
        raise DataError("no test samples")
    n = len(samples[0].candidates)
    ranks = []
    for sample in samples:
        if len(sample.candidates) != n:
            raise DataError("inconsistent candidate counts across samples")
        gold = sample.gold_index()
        ctx_ids = vocab.encode(sample.turns, model.max_len)
        cand_ids = [vocab.encode([c.text], model.max_len)
                    for c in sample.candidates]
        with no_grad():
            degrees = model.degrees(ctx_ids, cand_ids, ablation=ablation)
        ranks.append(gold_rank(degrees.data, gold))
    recalls = {k: recall_at_k(ranks, k) for k in RECALL_KS if k <= n}
    return EvalReport(n=n, recalls=recalls, mrr=mrr(ranks), ranks=ranks,
                      sample_count=len(samples), metadata=metadata or {})


def report_table(reports: list[EvalReport], label_key: str = "model") -> str:
    """Aligned text table, one row per report.

    The R_n@10 column appears only when sets are larger than 10.
    """
    if not reports:
        return ""
    n = reports[0].n
    ks = [k for k in RECALL_KS if k < n or (k == 10 and n > 10)]
    ks = [k for k in ks if k in reports[0].recalls]
    header = ["model"] + [f"R_{n}@{k}" for k in ks] + ["MRR"]
    rows = [header]
    for rep in reports:
        label = str(rep.metadata.get(label_key, "?"))
        rows.append([label] + [f"{rep.recalls[k]:.4f}" for k in ks]
                    + [f"{rep.mrr:.4f}"])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
    return "\n".join(lines)
