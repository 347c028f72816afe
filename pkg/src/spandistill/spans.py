"""Character-offset span annotations and their resolution to model tokens.

Annotations come from an external extractor as JSONL, one object per line:

    {"sample_id": "...", "text": "...",
     "words":   [{"start_char": 0, "end_char": 3}, ...],
     "phrases": [{"start_char": 0, "end_char": 7, "label": "NP"}, ...]}

Offsets are Unicode scalar values, half-open, within one granularity the
spans are sorted and non-overlapping, and phrase labels are NP or VP. That
file format is the entire contract with the extractor.

A model token belongs to a span iff their character ranges overlap by at
least one character. Resolved spans are inclusive token index ranges; spans
that catch zero tokens (whitespace-only, or truncated away) are dropped and
counted, and resolved ranges that overlap are merged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from spandistill import tensor as T
from spandistill.tensor import Tensor

__all__ = [
    "SpanAnnotation",
    "TokenSpanMap",
    "SpanTensors",
    "align_spans",
    "span_representations",
    "span_weights",
    "read_annotations",
    "write_annotations",
]

PHRASE_LABELS = ("NP", "VP")
WEIGHT_FLOOR = 1e-12


@dataclass
class SpanAnnotation:
    """Word and phrase spans for one text sample, in character offsets."""

    sample_id: str
    text: str
    words: list[tuple[int, int]]
    phrases: list[tuple[int, int, str]]

    def validate(self):
        n = len(self.text)
        for kind, spans in (("words", self.words), ("phrases", self.phrases)):
            prev_end = -1
            for i, span in enumerate(spans):
                start, end = span[0], span[1]
                if not (0 <= start < end <= n):
                    raise ValueError(
                        f"{self.sample_id}: {kind}[{i}] = ({start}, {end}) out of bounds "
                        f"for text of length {n}"
                    )
                if start < prev_end:
                    raise ValueError(
                        f"{self.sample_id}: {kind}[{i}] overlaps or precedes its neighbor"
                    )
                prev_end = end
                if kind == "phrases" and span[2] not in PHRASE_LABELS:
                    raise ValueError(
                        f"{self.sample_id}: phrases[{i}] has label {span[2]!r}, "
                        f"expected one of {PHRASE_LABELS}"
                    )
        return self


@dataclass
class TokenSpanMap:
    """Spans resolved to inclusive model-token index ranges."""

    granularity: str  # "word" | "phrase"
    spans: list[tuple[int, int]] = field(default_factory=list)
    dropped_count: int = 0

    def __len__(self):
        return len(self.spans)


@dataclass
class SpanTensors:
    """Per-layer span representations and their normalized weights."""

    reps: Tensor  # [N_sp, d]
    weights: Tensor  # [N_sp], sums to 1


def _resolve(
    char_spans: list[tuple[int, int]],
    token_char_ranges: list[tuple[int, int]],
    padding_mask: np.ndarray,
    granularity: str,
) -> TokenSpanMap:
    resolved: list[tuple[int, int]] = []
    dropped = 0
    for start, end in char_spans:
        hit = [
            t
            for t, (ts, te) in enumerate(token_char_ranges)
            if padding_mask[t] and ts < te and max(ts, start) < min(te, end)
        ]
        if not hit:
            dropped += 1
            continue
        resolved.append((min(hit), max(hit)))
    # merge token ranges that ended up overlapping (or duplicated)
    resolved.sort()
    merged: list[tuple[int, int]] = []
    for s, e in resolved:
        if merged and s <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], e))
        else:
            merged.append((s, e))
    return TokenSpanMap(granularity=granularity, spans=merged, dropped_count=dropped)


def align_spans(
    ann: SpanAnnotation,
    text: str,
    token_char_ranges: list[tuple[int, int]],
    padding_mask: np.ndarray,
) -> dict[str, TokenSpanMap]:
    """Resolve one sample's word and phrase spans to token index ranges.

    `text` is the string that was tokenized; it must equal the annotated
    text, otherwise the offsets are meaningless and the call is rejected.
    """
    if text != ann.text:
        raise ValueError(
            f"{ann.sample_id}: annotation text differs from tokenized text "
            f"({ann.text[:40]!r}... vs {text[:40]!r}...)"
        )
    padding_mask = np.asarray(padding_mask, dtype=bool)
    if padding_mask.shape[0] != len(token_char_ranges):
        raise T.ShapeError(
            f"padding mask length {padding_mask.shape[0]} != "
            f"token count {len(token_char_ranges)}"
        )
    return {
        "word": _resolve(ann.words, token_char_ranges, padding_mask, "word"),
        "phrase": _resolve(
            [(s, e) for s, e, _ in ann.phrases], token_char_ranges, padding_mask, "phrase"
        ),
    }


def span_representations(H: Tensor, token_weights: Tensor, span_map: TokenSpanMap) -> Tensor:
    """Weighted average of each span's token states: one [N_sp, d] tensor.

    H: [seq, d] states of one sample; token_weights: [seq]. Every span's
    total weight must exceed 1e-12 (a zero-weight span has no defined
    representation).
    """
    if H.ndim != 2:
        raise T.ShapeError(f"span_representations expects [seq, d], got shape {H.shape}")
    if token_weights.shape != (H.shape[0],):
        raise T.ShapeError(
            f"token weights shape {token_weights.shape} != seq length {H.shape[0]}"
        )
    if not span_map.spans:
        raise ValueError("span map is empty; nothing to represent")
    rows = []
    for s, e in span_map.spans:
        w = token_weights[s : e + 1]
        total = T.sum_(w)
        if float(total.data) <= WEIGHT_FLOOR:
            raise ValueError(
                f"span ({s}, {e}) has total token weight {float(total.data):.3e} <= {WEIGHT_FLOOR}"
            )
        if s == e:  # weights cancel; the span IS the token state
            rows.append(H[s : s + 1])
            continue
        weighted = T.sum_(T.mul(T.reshape(w, (e - s + 1, 1)), H[s : e + 1]), axis=0)
        rows.append(T.reshape(T.div(weighted, total), (1, H.shape[1])))
    return T.concat(rows, axis=0)


def span_weights(teacher_token_weights: Tensor, span_map: TokenSpanMap) -> Tensor:
    """Per-span weights: sum of constituent token weights, normalized to 1.

    The token weights come from the teacher at the mapped layer, so the
    result is a constant with respect to the student.
    """
    if not span_map.spans:
        raise ValueError("span map is empty; no weights to compute")
    raw = []
    for s, e in span_map.spans:
        raw.append(T.reshape(T.sum_(teacher_token_weights[s : e + 1]), (1,)))
    stacked = T.concat(raw, axis=0)
    total = T.sum_(stacked)
    if float(total.data) <= WEIGHT_FLOOR:
        raise ValueError("all span weights are zero; cannot normalize")
    return T.div(stacked, total)


# ---------------------------------------------------------------------------
# JSONL reading/writing


def _ann_to_obj(ann: SpanAnnotation) -> dict:
    return {
        "sample_id": ann.sample_id,
        "text": ann.text,
        "words": [{"start_char": s, "end_char": e} for s, e in ann.words],
        "phrases": [
            {"start_char": s, "end_char": e, "label": lab} for s, e, lab in ann.phrases
        ],
    }


def _ann_from_obj(obj: dict) -> SpanAnnotation:
    return SpanAnnotation(
        sample_id=str(obj["sample_id"]),
        text=obj["text"],
        words=[(int(w["start_char"]), int(w["end_char"])) for w in obj.get("words", [])],
        phrases=[
            (int(p["start_char"]), int(p["end_char"]), str(p["label"]))
            for p in obj.get("phrases", [])
        ],
    ).validate()


def read_annotations(path: str) -> list[SpanAnnotation]:
    """Parse and validate a span JSONL file; errors carry the line number."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(_ann_from_obj(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    return out


def write_annotations(path: str, anns: list[SpanAnnotation]):
    with open(path, "w", encoding="utf-8") as f:
        for ann in anns:
            f.write(json.dumps(_ann_to_obj(ann), ensure_ascii=False) + "\n")
