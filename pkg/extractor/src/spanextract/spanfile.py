"""The span-annotation JSONL format: records, writer, and validator.

One object per line:

    {"sample_id": "...", "text": "...",
     "words":   [{"start_char": 0, "end_char": 3}, ...],
     "phrases": [{"start_char": 0, "end_char": 7, "label": "NP"}, ...]}

Offsets are Unicode scalar values, half-open, 0 <= start < end <= len(text);
within each granularity spans are sorted and non-overlapping; phrase labels
are NP or VP. This file format is the whole contract with the consumer, so
the validator re-checks everything from the raw bytes and reports every
violation it finds (with line numbers, and with both indices when two spans
overlap) instead of stopping at the first.
"""

import json
from dataclasses import dataclass, field

PHRASE_LABELS = ("NP", "VP")


@dataclass
class SpanRecord:
    """Word and phrase spans for one text sample, in character offsets."""

    sample_id: str
    text: str
    words: list[tuple[int, int]]
    phrases: list[tuple[int, int, str]]


def record_errors(rec: SpanRecord) -> list[str]:
    """Invariant violations for one record, empty when it is well-formed."""
    errors = []
    n = len(rec.text)
    for kind, spans in (("words", rec.words), ("phrases", rec.phrases)):
        for i, span in enumerate(spans):
            start, end = span[0], span[1]
            if not (0 <= start < end <= n):
                errors.append(
                    f"{kind}[{i}] = ({start}, {end}) out of bounds "
                    f"for text of length {n}"
                )
            if kind == "phrases" and span[2] not in PHRASE_LABELS:
                errors.append(
                    f"phrases[{i}] has label {span[2]!r}, "
                    f"expected one of {PHRASE_LABELS}"
                )
        for i in range(1, len(spans)):
            ps, pe = spans[i - 1][0], spans[i - 1][1]
            s, e = spans[i][0], spans[i][1]
            if s < ps:
                errors.append(
                    f"{kind}[{i}] = ({s}, {e}) out of order "
                    f"after {kind}[{i - 1}] = ({ps}, {pe})"
                )
            elif s < pe:
                errors.append(
                    f"{kind}[{i}] = ({s}, {e}) overlaps "
                    f"{kind}[{i - 1}] = ({ps}, {pe})"
                )
    return errors


def _record_to_obj(rec: SpanRecord) -> dict:
    return {
        "sample_id": rec.sample_id,
        "text": rec.text,
        "words": [{"start_char": s, "end_char": e} for s, e in rec.words],
        "phrases": [
            {"start_char": s, "end_char": e, "label": lab} for s, e, lab in rec.phrases
        ],
    }


def _record_from_obj(obj: dict) -> SpanRecord:
    return SpanRecord(
        sample_id=str(obj["sample_id"]),
        text=obj["text"],
        words=[(int(w["start_char"]), int(w["end_char"])) for w in obj.get("words", [])],
        phrases=[
            (int(p["start_char"]), int(p["end_char"]), str(p["label"]))
            for p in obj.get("phrases", [])
        ],
    )


def write_records(path: str, records: list[SpanRecord]):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(_record_to_obj(rec), ensure_ascii=False) + "\n")


def read_records(path: str) -> list[SpanRecord]:
    """Parse a span JSONL file; the first malformed line raises with its
    line number. Use validate_path to collect every problem instead."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(_record_from_obj(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
    return out


@dataclass
class ValidationReport:
    path: str
    records: int = 0
    words: int = 0
    phrases: int = 0
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        state = "ok" if self.ok else f"{len(self.errors)} error(s)"
        return (
            f"{self.path}: {self.records} record(s), {self.words} word span(s), "
            f"{self.phrases} phrase span(s) — {state}"
        )


def validate_path(path: str) -> ValidationReport:
    """Check every line of a span JSONL file against the format contract."""
    report = ValidationReport(path=path)
    seen_ids: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = _record_from_obj(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                report.errors.append(f"line {lineno}: malformed record: {e}")
                continue
            report.records += 1
            report.words += len(rec.words)
            report.phrases += len(rec.phrases)
            if rec.sample_id in seen_ids:
                report.errors.append(
                    f"line {lineno}: duplicate sample_id {rec.sample_id!r} "
                    f"(first seen on line {seen_ids[rec.sample_id]})"
                )
            else:
                seen_ids[rec.sample_id] = lineno
            for problem in record_errors(rec):
                report.errors.append(f"line {lineno} ({rec.sample_id}): {problem}")
    return report
