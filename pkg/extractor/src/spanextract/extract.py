"""Corpus-to-spans driver and the extraction manifest.

A corpus is JSONL with {"sample_id", "prompt", "response"} per line; the
annotated text is prompt and response joined by " | ", exactly the rendering
the consumer trains on. Each side is chunked separately, so no word or
phrase ever crosses the separator (which is punctuation, not a word).

Output order matches input order. A sample whose chunking fails is still
emitted — words only, empty phrase list — and counted in the manifest's
`skipped`; extraction never drops a sample_id. The manifest is a companion
JSON file at `<output>.manifest.json` recording the chunker version and
counts, with paths exactly as passed in, so identical invocations produce
byte-identical outputs and manifests.
"""

import json
from dataclasses import asdict, dataclass

from spanextract.chunker import CHUNKER_VERSION, chunk_segment, word_ranges
from spanextract.spanfile import SpanRecord, write_records

SEPARATOR = " | "


@dataclass
class CorpusSample:
    sample_id: str
    prompt: str
    response: str


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
                sample = CorpusSample(
                    sample_id=str(obj["sample_id"]),
                    prompt=str(obj["prompt"]),
                    response=str(obj["response"]),
                )
            except KeyError as e:
                raise ValueError(f"{path}:{lineno}: missing field {e}") from None
            if not sample.sample_id:
                raise ValueError(f"{path}:{lineno}: sample_id is empty")
            if sample.sample_id in seen:
                raise ValueError(
                    f"{path}:{lineno}: duplicate sample_id {sample.sample_id!r}"
                )
            seen.add(sample.sample_id)
            samples.append(sample)
    if not samples:
        raise ValueError(f"{path}: corpus is empty")
    return samples


def render_text(sample: CorpusSample) -> str:
    return f"{sample.prompt}{SEPARATOR}{sample.response}"


def annotate_sample(sample: CorpusSample) -> tuple[SpanRecord, bool]:
    """One sample's span record, plus whether phrase extraction was skipped.

    The two sides are chunked independently with the response offsets
    shifted past the separator. If chunking raises, the record keeps its
    word offsets (plain whitespace segmentation never fails) and an empty
    phrase list, and the skip flag is set.
    """
    text = render_text(sample)
    shift = len(sample.prompt) + len(SEPARATOR)
    try:
        p_words, p_phrases = chunk_segment(sample.prompt, base=0)
        r_words, r_phrases = chunk_segment(sample.response, base=shift)
        record = SpanRecord(
            sample_id=sample.sample_id,
            text=text,
            words=p_words + r_words,
            phrases=p_phrases + r_phrases,
        )
        return record, False
    except Exception:
        words = [
            (s, e)
            for s, e in word_ranges(text)
            if any(ch.isalnum() for ch in text[s:e])
        ]
        return SpanRecord(sample.sample_id, text, words, []), True


@dataclass
class Manifest:
    """What one extraction run produced: inputs, chunker pin, and counts."""

    corpus: str
    output: str
    chunker: str
    samples: int
    words: int
    nps: int
    vps: int
    skipped: int

    def write(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")


def manifest_path(out_path: str) -> str:
    return out_path + ".manifest.json"


def extract_corpus(corpus_path: str, out_path: str) -> Manifest:
    """Annotate every corpus sample, in order; write spans and manifest."""
    samples = read_corpus(corpus_path)
    records = []
    skipped = 0
    for sample in samples:
        record, skip = annotate_sample(sample)
        records.append(record)
        skipped += skip
    write_records(out_path, records)
    manifest = Manifest(
        corpus=corpus_path,
        output=out_path,
        chunker=CHUNKER_VERSION,
        samples=len(records),
        words=sum(len(r.words) for r in records),
        nps=sum(1 for r in records for *_, lab in r.phrases if lab == "NP"),
        vps=sum(1 for r in records for *_, lab in r.phrases if lab == "VP"),
        skipped=skipped,
    )
    manifest.write(manifest_path(out_path))
    return manifest
