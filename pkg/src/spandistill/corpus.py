"""Prompt/response corpus files and their tokenized batch form.

A corpus is JSONL, one object per line: {"sample_id", "prompt", "response"}.
The text a model sees (and the text span annotations refer to) is always
`render_text`: prompt and response joined by the separator — there is exactly
one rendering, shared by training, evaluation, and span alignment.
"""

import json
from dataclasses import dataclass

import numpy as np

from .tokenizers import Encoding

SEPARATOR = " | "


@dataclass
class CorpusSample:
    sample_id: str
    prompt: str
    response: str

    def validate(self):
        if not self.sample_id:
            raise ValueError("sample_id is empty")
        if not self.prompt:
            raise ValueError(f"sample {self.sample_id}: prompt is empty")
        if not self.response:
            raise ValueError(f"sample {self.sample_id}: response is empty")


def render_text(sample: CorpusSample) -> str:
    return f"{sample.prompt}{SEPARATOR}{sample.response}"


def read_corpus(path: str) -> list[CorpusSample]:
    samples = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {e}") from None
            extra = set(obj) - {"sample_id", "prompt", "response"}
            if extra:
                raise ValueError(f"{path}:{lineno}: unknown fields {sorted(extra)}")
            try:
                sample = CorpusSample(**obj)
                sample.validate()
            except (TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if sample.sample_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate sample_id {sample.sample_id!r}")
            seen.add(sample.sample_id)
            samples.append(sample)
    if not samples:
        raise ValueError(f"{path}: corpus is empty")
    return samples


def write_corpus(path: str, samples: list[CorpusSample]):
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            s.validate()
            f.write(json.dumps(
                {"sample_id": s.sample_id, "prompt": s.prompt, "response": s.response},
                ensure_ascii=False,
            ) + "\n")


@dataclass
class Batch:
    """Tokenized samples padded to a common length, plus loss targets.

    tokens/padding_mask are [B, S]; targets[b, t] is the token that should
    follow position t (next-token shift), and loss_mask selects the target
    positions that count — the last real position of each row predicts EOS,
    positions at or beyond the final real token predict nothing.
    """

    sample_ids: list[str]
    texts: list[str]
    encodings: list[Encoding]
    tokens: np.ndarray
    padding_mask: np.ndarray
    targets: np.ndarray
    loss_mask: np.ndarray


def _response_token_start(enc: Encoding, text: str, prompt: str) -> int:
    """Index of the first token whose characters lie inside the response."""
    boundary = len(prompt) + len(SEPARATOR)
    for i, (s, e) in enumerate(enc.char_ranges):
        if s >= boundary and e > s:
            return i
    return enc.n_tokens  # response entirely truncated away


def make_batch(tokenizer, samples: list[CorpusSample], max_len: int, loss_on: str = "all") -> Batch:
    """Encode and right-pad a list of samples into one training batch.

    loss_on="all" trains on every next-token position; "response" restricts
    the loss to targets inside the response segment (instruction style).
    """
    if loss_on not in ("all", "response"):
        raise ValueError(f"loss_on must be 'all' or 'response', got {loss_on!r}")
    texts = [render_text(s) for s in samples]
    encs = [tokenizer.encode(t, max_len) for t in texts]
    width = max(e.n_tokens for e in encs)
    # encode() pads every row to max_len; the batch only needs the widest row
    encs = [Encoding(e.ids[:width], e.char_ranges[:width], e.n_tokens) for e in encs]

    B = len(samples)
    tokens = np.full((B, width), tokenizer.pad_id, dtype=np.int64)
    padding = np.zeros((B, width), dtype=bool)
    targets = np.zeros((B, width), dtype=np.int64)
    loss_mask = np.zeros((B, width), dtype=bool)
    for b, (sample, text, enc) in enumerate(zip(samples, texts, encs)):
        n = enc.n_tokens
        tokens[b] = enc.ids
        padding[b, :n] = True
        targets[b, : n - 1] = enc.ids[1:n]
        lo = 0
        if loss_on == "response":
            # predictions start one position before the first response token
            lo = max(0, _response_token_start(enc, text, sample.prompt) - 1)
        loss_mask[b, lo : n - 1] = True
    if not loss_mask.any():
        raise ValueError("batch has no loss positions (all responses truncated?)")
    return Batch(
        sample_ids=[s.sample_id for s in samples],
        texts=texts,
        encodings=encs,
        tokens=tokens,
        padding_mask=padding,
        targets=targets,
        loss_mask=loss_mask,
    )
