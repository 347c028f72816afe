"""Tokenizers that expose per-token character ranges.

Both tokenizers report, for every produced token, the half-open range of
character offsets (Unicode scalar values) in the source text that the token
covers. Special tokens (PAD/BOS/EOS) carry the empty range (0, 0), so they
can never overlap a character-offset span annotation.

Teacher and student always share a tokenizer. The byte tokenizer is the
default (any text works, vocab 256 + 3 specials); the whitespace tokenizer
serves closed-vocabulary synthetic corpora.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Encoding",
    "ByteTokenizer",
    "WhitespaceTokenizer",
    "tokenizer_to_dict",
    "tokenizer_from_dict",
]


@dataclass
class Encoding:
    """One tokenized text: ids, per-token char ranges, real-token count."""

    ids: np.ndarray  # int64 [seq]
    char_ranges: list[tuple[int, int]] = field(repr=False)
    n_tokens: int = 0  # leading non-padded count (right padding only)

    def __init__(self, ids, char_ranges, n_tokens):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.char_ranges = list(char_ranges)
        self.n_tokens = int(n_tokens)

    @property
    def mask(self) -> np.ndarray:
        m = np.zeros(self.ids.shape[0], dtype=bool)
        m[: self.n_tokens] = True
        return m


def _pad_encoding(ids: list[int], ranges: list[tuple[int, int]], pad_id: int, max_len: int | None) -> Encoding:
    n = len(ids)
    if max_len is not None:
        if n > max_len:  # truncate the tail; spans past the cut get dropped downstream
            ids = ids[:max_len]
            ranges = ranges[:max_len]
            n = max_len
        ids = ids + [pad_id] * (max_len - n)
        ranges = ranges + [(0, 0)] * (max_len - n)
    return Encoding(ids, ranges, n)


class ByteTokenizer:
    """UTF-8 byte tokenizer: ids 0..255 are byte values, then PAD/BOS/EOS.

    A multi-byte character contributes one token per byte; each of those
    tokens reports the producing character's range (idx, idx+1).
    """

    pad_id = 256
    bos_id = 257
    eos_id = 258
    vocab_size = 259

    def encode(self, text: str, max_len: int | None = None, add_bos: bool = True, add_eos: bool = True) -> Encoding:
        ids: list[int] = []
        ranges: list[tuple[int, int]] = []
        if add_bos:
            ids.append(self.bos_id)
            ranges.append((0, 0))
        for i, ch in enumerate(text):
            for b in ch.encode("utf-8"):
                ids.append(b)
                ranges.append((i, i + 1))
        if add_eos:
            ids.append(self.eos_id)
            ranges.append((0, 0))
        return _pad_encoding(ids, ranges, self.pad_id, max_len)

    def decode(self, ids) -> str:
        data = bytes(int(i) for i in np.asarray(ids).reshape(-1) if 0 <= int(i) < 256)
        return data.decode("utf-8", errors="replace")


class WhitespaceTokenizer:
    """Closed-vocabulary whitespace tokenizer for synthetic corpora.

    ids: 0=PAD, 1=BOS, 2=EOS, then one id per vocabulary word in the order
    given at construction. Unknown words are rejected (the vocabulary is the
    corpus contract, not a heuristic).
    """

    pad_id = 0
    bos_id = 1
    eos_id = 2

    def __init__(self, words: list[str]):
        if len(set(words)) != len(words):
            raise ValueError("duplicate words in vocabulary")
        self.words = list(words)
        self._word_to_id = {w: i + 3 for i, w in enumerate(self.words)}
        self.vocab_size = 3 + len(self.words)

    def encode(self, text: str, max_len: int | None = None, add_bos: bool = True, add_eos: bool = True) -> Encoding:
        ids: list[int] = []
        ranges: list[tuple[int, int]] = []
        if add_bos:
            ids.append(self.bos_id)
            ranges.append((0, 0))
        pos = 0
        n = len(text)
        while pos < n:
            if text[pos].isspace():
                pos += 1
                continue
            end = pos
            while end < n and not text[end].isspace():
                end += 1
            word = text[pos:end]
            if word not in self._word_to_id:
                raise ValueError(f"word not in vocabulary: {word!r}")
            ids.append(self._word_to_id[word])
            ranges.append((pos, end))
            pos = end
        if add_eos:
            ids.append(self.eos_id)
            ranges.append((0, 0))
        return _pad_encoding(ids, ranges, self.pad_id, max_len)

    def decode(self, ids) -> str:
        out = []
        for i in np.asarray(ids).reshape(-1):
            i = int(i)
            if i >= 3 and i < self.vocab_size:
                out.append(self.words[i - 3])
        return " ".join(out)


def tokenizer_to_dict(tok) -> dict:
    if isinstance(tok, ByteTokenizer):
        return {"kind": "byte"}
    if isinstance(tok, WhitespaceTokenizer):
        return {"kind": "whitespace", "words": tok.words}
    raise TypeError(f"unknown tokenizer type: {type(tok).__name__}")


def tokenizer_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "byte":
        return ByteTokenizer()
    if kind == "whitespace":
        return WhitespaceTokenizer(d["words"])
    raise ValueError(f"unknown tokenizer kind: {kind!r}")
