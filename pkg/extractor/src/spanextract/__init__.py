"""Offline sidecar that chunks a prompt/response corpus into NP/VP spans.

The output is span-annotation JSONL — one record per corpus sample with word
and phrase character offsets — plus a manifest recording the chunker version
and counts. The JSONL file is the entire interface to the consumer; nothing
here imports from it or is imported by it.
"""

from spanextract.chunker import CHUNKER_VERSION, annotate_text
from spanextract.extract import Manifest, extract_corpus
from spanextract.spanfile import SpanRecord, read_records, validate_path, write_records

__all__ = [
    "CHUNKER_VERSION",
    "Manifest",
    "SpanRecord",
    "annotate_text",
    "extract_corpus",
    "read_records",
    "validate_path",
    "write_records",
]
