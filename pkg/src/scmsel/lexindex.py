"""Inverted index with BM25 scoring over a response pool.

Used to mine extra negatives for large-candidate-set evaluation. Scoring
uses k1=1.2, b=0.75 and the smoothed nonnegative idf log(1 + (N-df+0.5) /
(df+0.5)); ties break toward the lower document id.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

from scmsel.errors import DataError

K1 = 1.2
B = 0.75


class LexicalIndex:
    def __init__(self, pool: list[str]):
        if not pool:
            raise DataError("empty response pool")
        self.docs = list(pool)
        self._lengths = []
        self._postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
        for doc_id, text in enumerate(self.docs):
            toks = text.split()
            self._lengths.append(len(toks))
            for tok, tf in sorted(Counter(toks).items()):
                self._postings[tok].append((doc_id, tf))
        self._avg_len = sum(self._lengths) / len(self._lengths)

    def __len__(self) -> int:
        return len(self.docs)

    def _idf(self, tok: str) -> float:
        df = len(self._postings.get(tok, ()))
        n = len(self.docs)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))

    def scores(self, query: str) -> dict[int, float]:
        """BM25 score per matching document id."""
        acc: dict[int, float] = defaultdict(float)
        for tok in sorted(set(query.split())):
            postings = self._postings.get(tok)
            if not postings:
                continue
            idf = self._idf(tok)
            for doc_id, tf in postings:
                norm = K1 * (1 - B + B * self._lengths[doc_id] / self._avg_len)
                acc[doc_id] += idf * tf * (K1 + 1) / (tf + norm)
        return acc

    def query(self, text: str, k: int, exclude_texts=frozenset()) -> list[str]:
        """Top-k documents for the query, skipping excluded texts.

        Documents that match no query token score 0 but can still be
        returned to honor k; ordering is score descending then doc id
        ascending.
        """
        exclude = set(exclude_texts)
        allowed = [i for i, d in enumerate(self.docs) if d not in exclude]
        if k > len(allowed):
            raise DataError(
                f"asked for {k} documents but only {len(allowed)} are "
                f"available after exclusions")
        acc = self.scores(text)
        ranked = sorted(allowed, key=lambda i: (-acc.get(i, 0.0), i))
        return [self.docs[i] for i in ranked[:k]]
