#!/usr/bin/env python3
"""Look at what the span-geometry loss actually measures, using the shipped
toy checkpoints — no training involved.

For one held-out sample: build the saliency-weighted span representations at
the top scheduled layer, print both models' pairwise cosine-distance matrices,
then print the per-layer discrepancy table for the whole held-out split.
"""

import os

import numpy as np

from spandistill.config import parse_config
from spandistill.corpus import read_corpus
from spandistill.model import load_checkpoint
from spandistill.saliency import token_weights
from spandistill.schedule import build_schedule
from spandistill.spans import align_spans, read_annotations, span_representations
from spandistill.train import match_annotations, probe_dsa, split_corpus
from spandistill.tensor import Tensor

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TOY = os.path.join(REPO, "data", "toy")

import json

with open(os.path.join(TOY, "toy_config.json"), encoding="utf-8") as f:
    raw = json.load(f)
raw["corpus_path"] = os.path.join(REPO, raw["corpus_path"])
raw["spans_path"] = os.path.join(REPO, raw["spans_path"])
cfg = parse_config(raw)

teacher, tokenizer, _ = load_checkpoint(os.path.join(TOY, "teacher.ckpt"))
student, _, _ = load_checkpoint(os.path.join(TOY, "student.ckpt"))
samples = read_corpus(cfg.corpus_path)
_, held = split_corpus(samples, cfg.heldout_fraction, cfg.seed)
ann_by_id = match_annotations(samples, read_annotations(cfg.spans_path))

sample = held[0]
ann = ann_by_id[sample.sample_id]
print(f"sample {sample.sample_id}: {ann.text!r}")

enc = tokenizer.encode(ann.text, student.config.max_seq_len)
maps = align_spans(ann, ann.text, enc.char_ranges, enc.mask)
phrase_map = maps["phrase"]
labels = [label for (_, _, label) in ann.phrases]
print(f"phrase spans (token ranges): "
      f"{[f'{lab}{sp}' for lab, sp in zip(labels, phrase_map.spans)]}\n")

sched = build_schedule(student.config.n_layers, teacher.config.n_layers,
                       cfg.stride, cfg.budget, word_count=cfg.word_count)
entry = sched.entries[-1]  # the top scheduled layer compares phrases
tokens = np.array(enc.ids)[None, :]
mask = np.array(enc.mask, bool)[None, :]
t_trace = teacher.forward(tokens, mask)
s_trace = student.forward(tokens, mask)

w_t = token_weights(t_trace.hidden_states[entry.teacher_layer], mask).weights
u_t = span_representations(t_trace.hidden_states[entry.teacher_layer][0], w_t[0], phrase_map)
u_s = span_representations(s_trace.hidden_states[entry.student_layer][0], w_t[0], phrase_map)


def cos_dist_matrix(u):
    unit = u.data / np.linalg.norm(u.data, axis=-1, keepdims=True)
    return 1.0 - unit @ unit.T


def show(name, d):
    print(f"{name} pairwise cosine distances between phrase representations:")
    for row in d:
        print("   " + " ".join(f"{v:6.3f}" for v in row))


show(f"teacher layer {entry.teacher_layer}", cos_dist_matrix(u_t))
show(f"student layer {entry.student_layer}", cos_dist_matrix(u_s))
print("\nThe span-geometry loss penalizes the squared gaps between these two "
      "matrices, weighted by saliency.\n")

print("per-layer discrepancy over the whole held-out split:")
rows = probe_dsa(cfg, os.path.join(TOY, "teacher.ckpt"),
                 os.path.join(TOY, "student.ckpt"), os.devnull)
print(f"{'student layer':>13}  {'teacher layer':>13}  {'granularity':>11}  {'mean dsa':>9}")
for r in rows:
    print(f"{r['student_layer']:>13}  {r['teacher_layer']:>13}  "
          f"{r['granularity']:>11}  {r['mean_dsa']:>9.6f}")
