#!/usr/bin/env python3
"""Export a model's hidden states to the binary dump format, read them back,
and run the span-geometry probe offline — no model in sight.

This is the analyzer workflow: one machine runs the forward passes once, any
other process can re-derive span geometry from the dump alone.
"""

import json
import os
import tempfile

import numpy as np

from spandistill.corpus import read_corpus
from spandistill.dump import export_hidden, import_hidden, to_trace
from spandistill.losses import dsa_total, resolve_span_maps
from spandistill.model import load_checkpoint
from spandistill.schedule import build_schedule
from spandistill.spans import align_spans, read_annotations
from spandistill.train import match_annotations

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOY = os.path.join(REPO, "data", "toy")

teacher, tokenizer, _ = load_checkpoint(os.path.join(TOY, "teacher.ckpt"))
student, _, _ = load_checkpoint(os.path.join(TOY, "student.ckpt"))
samples = read_corpus(os.path.join(REPO, "data/corpora/grammar.jsonl"))[:8]
ann_by_id = match_annotations(
    read_corpus(os.path.join(REPO, "data/corpora/grammar.jsonl")),
    read_annotations(os.path.join(REPO, "data/spans/grammar_spans.jsonl")),
)

# every sample padded to one width so the imported records stack into a batch
width = max(tokenizer.encode(s.prompt + " | " + s.response, None).n_tokens for s in samples)
encs = [tokenizer.encode(s.prompt + " | " + s.response, width) for s in samples]
batch_samples = [(np.array(e.ids), np.array(e.mask, bool)) for e in encs]

print(f"=== 1. export: {len(samples)} samples through both models ===")
paths = {}
for name, model in (("teacher", teacher), ("student", student)):
    paths[name] = os.path.join(tempfile.mkdtemp(prefix="dump_"), f"{name}.bin")
    header = export_hidden(model, batch_samples, paths[name])
    size = os.path.getsize(paths[name])
    print(f"{name}: {json.dumps(header)} ({size} bytes)")

print("\n=== 2. import and validate ===")
traces = {}
for name in ("teacher", "student"):
    header, records = import_hidden(paths[name])
    traces[name] = to_trace(records)
    print(f"{name}: {len(records)} records, "
          f"{header['n_layers'] + 1} state arrays of width {header['d_model']}")

print("\n=== 3. span geometry straight from the dumps ===")
sched = build_schedule(student.config.n_layers, teacher.config.n_layers, 1, 2)
span_maps = []
for s, e in zip(samples, encs):
    ann = ann_by_id[s.sample_id]
    span_maps.append(align_spans(ann, ann.text, e.char_ranges, e.mask))
resolved = resolve_span_maps(span_maps, sched)
offline, per_layer = dsa_total(traces["student"], traces["teacher"], resolved, sched,
                               span_pool="teacher")

t_trace = teacher.forward(np.stack([t for t, _ in batch_samples]),
                          np.stack([m for _, m in batch_samples]))
s_trace = student.forward(np.stack([t for t, _ in batch_samples]),
                          np.stack([m for _, m in batch_samples]))
live, _ = dsa_total(s_trace, t_trace, resolved, sched, span_pool="teacher")

print(f"dsa from imported f32 dumps: {offline.item():.9f}")
print(f"dsa from live f64 forwards:  {live.item():.9f}")
print(f"difference: {abs(offline.item() - live.item()):.2e} (f32 storage rounding)")
