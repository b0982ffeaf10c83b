"""Whitespace tokenizer with character fallback and reserved control ids.

Reserved ids (fixed, in order): <pad>=0, <unk>=1, <cls>=2, <sep>=3, <eot>=4.
Content tokens get dense ids from 5 upward, assigned in sorted token order so
the same corpus always yields the same table. A token missing from the table
falls back to its characters; characters of every known token are included
at build time, so <unk> only appears for characters never seen at all.
"""

from __future__ import annotations

import numpy as np

from scmsel.errors import DataError

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
SEP_ID = 3
EOT_ID = 4
RESERVED = ("<pad>", "<unk>", "<cls>", "<sep>", "<eot>")


class Vocabulary:
    def __init__(self, tokens):
        """tokens: iterable of content tokens (reserved strings excluded)."""
        self._id = {tok: i for i, tok in enumerate(RESERVED)}
        for tok in sorted(set(tokens) - set(RESERVED)):
            self._id[tok] = len(self._id)

    @classmethod
    def from_texts(cls, texts) -> "Vocabulary":
        toks = set()
        for text in texts:
            for tok in text.split():
                toks.add(tok)
                toks.update(tok)  # characters, for OOV fallback at query time
        return cls(toks)

    def __len__(self) -> int:
        return len(self._id)

    def __contains__(self, tok) -> bool:
        return tok in self._id

    def tokenize(self, text: str) -> list[int]:
        """Whole-token ids where known, per-character ids otherwise."""
        ids = []
        for tok in text.split():
            hit = self._id.get(tok)
            if hit is not None:
                ids.append(hit)
            else:
                ids.extend(self._id.get(ch, UNK_ID) for ch in tok)
        return ids

    def encode(self, turns: list[str], max_len: int) -> np.ndarray:
        """Join turns with <eot>, keep the newest max_len-2 ids, wrap.

        Output is [<cls>, ...content..., <sep>] of length at most max_len.
        """
        content: list[int] = []
        for k, turn in enumerate(turns):
            if k:
                content.append(EOT_ID)
            content.extend(self.tokenize(turn))
        content = content[-(max_len - 2):]
        return np.array([CLS_ID] + content + [SEP_ID], dtype=np.intp)

    # -- flat text form (embedded in checkpoints) --

    def to_lines(self) -> list[str]:
        return [f"{tok}\t{i}" for tok, i in sorted(self._id.items())]

    @classmethod
    def from_lines(cls, lines) -> "Vocabulary":
        vocab = cls.__new__(cls)
        vocab._id = {}
        for line in lines:
            if not line:
                continue
            try:
                tok, raw = line.split("\t")
                vocab._id[tok] = int(raw)
            except ValueError:
                raise DataError(f"bad vocabulary line: {line!r}")
        for i, tok in enumerate(RESERVED):
            if vocab._id.get(tok) != i:
                raise DataError(f"vocabulary is missing reserved token {tok!r}")
        ids = sorted(vocab._id.values())
        if ids != list(range(len(ids))):
            raise DataError("vocabulary ids are not dense")
        return vocab
