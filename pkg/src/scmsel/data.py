"""Corpus ingestion, synthetic corpus generators, and test-set surgery.

Corpus files are TSV: ``label<TAB>turn_1<TAB>...<TAB>turn_n<TAB>response``.
The train split keeps only label-1 lines (negatives are supplied in-batch at
training time). The test split groups consecutive lines sharing a context
into one sample with one gold and m-1 negatives; groups without exactly one
positive are dropped and counted.

Two synthetic generators are shipped. "separable" draws context and gold
from one topic vocabulary and negatives from other topics, so bag-of-words
similarity already separates gold from negatives. "comparison" builds
near-duplicate candidate sets: all candidates share a carrier sentence and
differ in a single key token that the context determines, so a scorer must
contrast candidates against each other to find the gold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from scmsel.errors import DataError


@dataclass
class Session:
    turns: list[str]
    response: str


@dataclass
class Candidate:
    text: str
    label: int
    provenance: str = "original"


@dataclass
class TestSample:
    __test__ = False  # keep pytest from collecting this as a test class

    turns: list[str]
    candidates: list[Candidate] = field(default_factory=list)

    def gold_index(self) -> int:
        golds = [i for i, c in enumerate(self.candidates) if c.label == 1]
        if len(golds) != 1:
            raise DataError(
                f"sample must have exactly one positive, found {len(golds)}")
        return golds[0]


# ---------------------------------------------------------------------------
# TSV corpus io
# ---------------------------------------------------------------------------


def _parse_line(line: str, lineno: int):
    parts = line.rstrip("\n").split("\t")
    if len(parts) < 3 or parts[0] not in ("0", "1"):
        raise DataError(f"malformed corpus line {lineno}: {line!r}")
    if any(not p.strip() for p in parts[1:]):
        raise DataError(f"empty field on corpus line {lineno}")
    return int(parts[0]), parts[1:-1], parts[-1]


def load_train(path) -> list[Session]:
    """Label-1 lines become Sessions; negatives are ignored."""
    sessions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            label, turns, response = _parse_line(line, lineno)
            if label == 1:
                sessions.append(Session(turns=turns, response=response))
    if not sessions:
        raise DataError(f"no positive lines in {path}")
    return sessions


def load_test(path) -> tuple[list[TestSample], int]:
    """Group consecutive same-context lines; returns (samples, dropped).

    A group is dropped (and counted) unless it has exactly one positive.
    """
    samples = []
    dropped = 0
    cur_turns = None
    cur: list[Candidate] = []

    def flush():
        nonlocal dropped
        if cur_turns is None:
            return
        positives = sum(c.label for c in cur)
        if positives == 1:
            samples.append(TestSample(turns=list(cur_turns),
                                      candidates=list(cur)))
        else:
            dropped += 1

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            label, turns, response = _parse_line(line, lineno)
            if turns != cur_turns:
                flush()
                cur_turns = turns
                cur = []
            cur.append(Candidate(text=response, label=label))
    flush()
    return samples, dropped


def save_train(path, sessions: list[Session]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write("\t".join(["1"] + s.turns + [s.response]) + "\n")


def save_test(path, samples: list[TestSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            for cand in sample.candidates:
                fh.write("\t".join([str(cand.label)] + sample.turns
                                   + [cand.text]) + "\n")


# ---------------------------------------------------------------------------
# synthetic corpora
# ---------------------------------------------------------------------------


def _topic_words(topic: int, count: int) -> list[str]:
    return [f"t{topic}w{k}" for k in range(count)]


def _sentence(rng, words, lo, hi) -> str:
    n = int(rng.integers(lo, hi + 1))
    return " ".join(rng.choice(words, size=n))


def generate_separable(seed: int, n_train: int, n_test: int,
                       n_topics: int = 20, m: int = 10,
                       words_per_topic: int = 10):
    """Topic-coherent sessions; negatives come from foreign topics.

    The response always echoes one word from the context, so gold and
    context share vocabulary both at the topic level and lexically.
    """
    if n_topics < 2:
        raise DataError(f"need at least 2 topics, got {n_topics}")
    rng = np.random.default_rng(seed)
    vocab = [_topic_words(t, words_per_topic) for t in range(n_topics)]

    def session(topic):
        n_turns = int(rng.integers(1, 3))
        turns = [_sentence(rng, vocab[topic], 4, 7) for _ in range(n_turns)]
        words = _sentence(rng, vocab[topic], 4, 7).split()
        ctx_words = " ".join(turns).split()
        words[int(rng.integers(len(words)))] = \
            ctx_words[int(rng.integers(len(ctx_words)))]
        return Session(turns=turns, response=" ".join(words))

    train = [session(int(rng.integers(n_topics))) for _ in range(n_train)]

    tests = []
    for _ in range(n_test):
        topic = int(rng.integers(n_topics))
        s = session(topic)
        gold_pos = int(rng.integers(m))
        cands = []
        for j in range(m):
            if j == gold_pos:
                cands.append(Candidate(text=s.response, label=1))
            else:
                other = int(rng.integers(n_topics - 1))
                if other >= topic:
                    other += 1
                cands.append(Candidate(
                    text=_sentence(rng, vocab[other], 4, 7), label=0))
        tests.append(TestSample(turns=s.turns, candidates=cands))
    return train, tests


_CARRIER = "alpha bravo charlie delta echo foxtrot golf hotel"


def generate_comparison(seed: int, n_train: int, n_test: int,
                        n_keys: int = 40, m: int = 10, n_tags: int = 20):
    """Near-duplicate candidate sets disambiguated by one key token.

    Every candidate in a test set shares one carrier sentence and one
    filler token; only the ``lock`` token differs, and the context names
    the paired ``key`` that determines the gold lock. Context and
    candidate vocabularies are disjoint, so bag-of-words similarity sits
    at chance and the association itself has to be learned.

    Two choices make the training signal match the test condition:

    - a single shared carrier means in-batch negatives are themselves
      near-duplicates of the gold, so in-batch training rewards exactly
      the key-level discrimination the test measures;
    - the filler is determined by a paired ``tag`` token in the context,
      so two sessions can only collide on a whole response when context
      and response are both identical — such batches are skipped as
      duplicates instead of training on a false negative.
    """
    if n_keys < m:
        raise DataError(f"need n_keys >= m, got {n_keys} < {m}")
    if n_tags < 1:
        raise DataError(f"need at least 1 tag, got {n_tags}")
    rng = np.random.default_rng(seed)

    def context(k, t):
        return [f"front desk asks key{k} under tag{t}",
                f"please give key{k} now"]

    def response(k, t):
        return f"{_CARRIER} lock{k} fill{t}"

    train = []
    for _ in range(n_train):
        k = int(rng.integers(n_keys))
        t = int(rng.integers(n_tags))
        train.append(Session(turns=context(k, t), response=response(k, t)))

    tests = []
    for _ in range(n_test):
        gold_key = int(rng.integers(n_keys))
        t = int(rng.integers(n_tags))
        others = [k for k in range(n_keys) if k != gold_key]
        rng.shuffle(others)
        ks = [gold_key] + others[:m - 1]
        slots = rng.permutation(m)
        cands: list[Candidate] = [None] * m
        for slot, k in zip(slots, ks):
            cands[slot] = Candidate(text=response(k, t),
                                    label=int(k == gold_key))
        tests.append(TestSample(turns=context(gold_key, t),
                                candidates=cands))
    return train, tests


GENERATORS = {"separable": generate_separable, "comparison": generate_comparison}


def generate_corpus(kind: str, seed: int, n_train: int, n_test: int,
                    train_path, test_path, **kwargs):
    if kind not in GENERATORS:
        raise DataError(f"unknown corpus kind {kind!r}; "
                        f"choose from {sorted(GENERATORS)}")
    train, tests = GENERATORS[kind](seed, n_train, n_test, **kwargs)
    save_train(train_path, train)
    save_test(test_path, tests)
    return train, tests


# ---------------------------------------------------------------------------
# candidate-set surgery
# ---------------------------------------------------------------------------


def extend_candidates(sample: TestSample, index, target_m: int) -> TestSample:
    """Append mined negatives from the index until |candidates| = target_m.

    Mined texts are disjoint from the sample's existing candidates. The
    query is the joined context turns.
    """
    have = len(sample.candidates)
    if target_m <= have:
        raise DataError(
            f"target size {target_m} not above current {have}")
    exclude = {c.text for c in sample.candidates}
    mined = index.query(" ".join(sample.turns), target_m - have,
                        exclude_texts=exclude)
    cands = list(sample.candidates) + [
        Candidate(text=t, label=0, provenance="mined") for t in mined
    ]
    return TestSample(turns=list(sample.turns), candidates=cands)


def make_adversarial(sample: TestSample, rng) -> TestSample:
    """Swap one random negative for one random context turn."""
    negatives = [i for i, c in enumerate(sample.candidates) if c.label == 0]
    if not negatives or not sample.turns:
        raise DataError("adversarial swap needs >= 1 negative and >= 1 turn")
    pick = negatives[int(rng.integers(len(negatives)))]
    turn = sample.turns[int(rng.integers(len(sample.turns)))]
    cands = list(sample.candidates)
    cands[pick] = Candidate(text=turn, label=0, provenance="adversarial")
    return TestSample(turns=list(sample.turns), candidates=cands)


# ---------------------------------------------------------------------------
# mined-candidate cache (JSON lines)
# ---------------------------------------------------------------------------


def save_extended(path, samples: list[TestSample], target_m: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, sample in enumerate(samples):
            fh.write(json.dumps({
                "sample_id": i,
                "target_m": target_m,
                "candidates": [c.text for c in sample.candidates],
                "labels": [c.label for c in sample.candidates],
                "provenance": [c.provenance for c in sample.candidates],
            }, sort_keys=True) + "\n")


def load_extended(path, base: list[TestSample]) -> list[TestSample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            sample = base[rec["sample_id"]]
            cands = [Candidate(text=t, label=l, provenance=p)
                     for t, l, p in zip(rec["candidates"], rec["labels"],
                                        rec["provenance"])]
            out.append(TestSample(turns=list(sample.turns), candidates=cands))
    return out
