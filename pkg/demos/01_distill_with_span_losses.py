#!/usr/bin/env python3
"""Distill a 2-layer student from a 4-layer teacher, with and without the
span-geometry losses, and compare what each student learned.

Runs at a reduced scale (one seed, a shorter teacher schedule) so the whole
story takes a few minutes. The full three-seed comparison lives in the
acceptance suite; `python3 -m pytest tests/test_acceptance.py -k desk_scale -s`
runs it.
"""

import os
import tempfile

from spandistill.config import default_config, parse_config
from spandistill.train import distill, train_teacher

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

work = tempfile.mkdtemp(prefix="spandistill_demo_")
print(f"working under {work}\n")

raw = default_config()
raw.update(
    corpus_path=os.path.join(REPO, "data/corpora/grammar.jsonl"),
    spans_path=os.path.join(REPO, "data/spans/grammar_spans.jsonl"),
    teacher_epochs=24,      # most of the copy skill; the default 32 is the real run
    eval_every=10_000,      # final metrics only
    out_dir=os.path.join(work, "teacher"),
)

print("=== 1. teacher: 4 layers, d=64, trained to copy the prompt ===")
metrics = train_teacher(parse_config(raw))
final = metrics["final"]
print(f"teacher held-out: ce {final['heldout_ce']:.4f}, "
      f"accuracy {final['heldout_accuracy']:.3f}, rouge-l {final['rouge_l_f1']:.3f}\n")
teacher_ckpt = os.path.join(work, "teacher", "teacher.ckpt")

students = {}
for tag, (ld, lh) in (("span losses on", (2.0, 0.2)), ("plain kl", (0.0, 0.0))):
    print(f"=== 2. student ({tag}): 2 layers, d=32 ===")
    cfg = parse_config({**raw, "lambda_dsa": ld, "lambda_hid": lh,
                        "out_dir": os.path.join(work, tag.replace(" ", "_"))})
    students[tag] = distill(cfg, teacher_ckpt)["final"]
    print()

print("=== 3. comparison on the held-out split ===")
print(f"{'':>16}  {'heldout ce':>10}  {'accuracy':>8}  {'mean dsa':>9}")
for tag, final in students.items():
    print(f"{tag:>16}  {final['heldout_ce']:>10.4f}  {final['heldout_accuracy']:>8.3f}  "
          f"{final['mean_dsa']:>9.6f}")

span, plain = students["span losses on"], students["plain kl"]
dsa_ratio = plain["mean_dsa"] / span["mean_dsa"]
ce_delta = 100.0 * (span["heldout_ce"] / plain["heldout_ce"] - 1.0)
print(f"\nThe span-trained student's pairwise span geometry sits {dsa_ratio:.1f}x "
      f"closer to the teacher's, with a held-out cross-entropy change of "
      f"{ce_delta:+.1f}% relative to the plain-kl student.")
