#!/usr/bin/env python3
"""Regenerate every checked-in data asset.

Outputs (all under the repository root):
  data/corpora/grammar.jsonl + data/spans/grammar_spans.jsonl
      320 synthetic copy-task samples with machine-generated gold spans.
  data/corpora/fables.jsonl + data/spans/fables_spans.jsonl (+ its manifest)
      14 plain-English fable retellings; the span file is produced by the
      spanextract sidecar (extractor/), so its chunk boundaries are whatever
      the pinned chunker version emits.
  data/toy/{toy_config.json, teacher.ckpt, student.ckpt, pinned_metrics.json}
      Miniature checkpoints for the eval regression test; metrics are pinned
      from the run that produced them.

Deterministic: running this twice produces byte-identical files.
"""

import argparse
import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "extractor", "src"))

from spandistill.config import parse_config
from spandistill.corpus import CorpusSample, write_corpus
from spandistill.grammar import gen_corpus
from spandistill.spans import write_annotations
from spandistill.train import distill, evaluate, split_corpus, train_teacher
from spanextract.extract import extract_corpus

GRAMMAR_SEED = 0
GRAMMAR_SIZE = 320

FABLES = [
    ("aesop-01",
     "the hare laughed at the slow tortoise",
     "but the tortoise won the long race"),
    ("aesop-02",
     "a fox saw a crow with a piece of cheese",
     "and he wanted the cheese for himself"),
    ("aesop-03",
     "the lion spared the small mouse",
     "and the mouse freed the lion from the net"),
    ("aesop-04",
     "the boy cried wolf too many times",
     "so nobody came when the wolf was real"),
    ("aesop-05",
     "the ant stored grain all summer",
     "while the grasshopper sang in the sun"),
    ("aesop-06",
     "a thirsty crow found a tall jug",
     "and dropped small stones until the water rose"),
    ("aesop-07",
     "the dog saw his shadow in the stream",
     "and dropped his bone into the water"),
    ("aesop-08",
     "the wind and the sun made a wager",
     "over which of them could move the traveler"),
    ("aesop-09",
     "the goose laid a golden egg each day",
     "but the greedy farmer wanted more gold"),
    ("aesop-10",
     "the wolf wore the skin of a sheep",
     "and walked among the flock unseen"),
    ("aesop-11",
     "a small mouse ran over the face of the lion",
     "and woke the great beast from his sleep"),
    ("aesop-12",
     "the fox called the high grapes sour",
     "because he could not reach them"),
    ("aesop-13",
     "the tortoise carried his house on his back",
     "and he was safe wherever he went"),
    ("aesop-14",
     "the miller and his son led their donkey",
     "and tried to please every stranger on the road"),
]

TOY_OVERRIDES = {
    "teacher": {"n_layers": 2, "d_model": 16, "n_heads": 2, "max_seq_len": 40},
    "student": {"n_layers": 2, "d_model": 8, "n_heads": 2, "max_seq_len": 40},
    "teacher_epochs": 6,
    "distill_epochs": 2,
    "eval_every": 1000,
    "seed": 0,
}


def build_grammar(root: str):
    samples, anns = gen_corpus(np.random.default_rng(GRAMMAR_SEED), GRAMMAR_SIZE)
    write_corpus(os.path.join(root, "data/corpora/grammar.jsonl"), samples)
    write_annotations(os.path.join(root, "data/spans/grammar_spans.jsonl"), anns)
    print(f"grammar corpus: {len(samples)} samples")


def build_fables(root: str):
    samples = [CorpusSample(sid, p, r) for sid, p, r in FABLES]
    write_corpus(os.path.join(root, "data/corpora/fables.jsonl"), samples)
    # run the extractor from the repo root so the manifest records the same
    # repo-relative paths no matter where the checkout lives
    cwd = os.getcwd()
    os.chdir(root)
    try:
        manifest = extract_corpus("data/corpora/fables.jsonl",
                                  "data/spans/fables_spans.jsonl")
    finally:
        os.chdir(cwd)
    print(f"fables corpus: {manifest.samples} samples, {manifest.nps} NP / "
          f"{manifest.vps} VP chunks ({manifest.chunker}, "
          f"{manifest.skipped} skipped)")


def build_toy(root: str):
    from spandistill.config import default_config

    toy_dir = os.path.join(root, "data/toy")
    raw = default_config()
    raw.update(TOY_OVERRIDES)
    raw.update(
        corpus_path="data/corpora/grammar.jsonl",
        spans_path="data/spans/grammar_spans.jsonl",
        out_dir="data/toy",  # placeholder; runs below override it
    )
    with open(os.path.join(toy_dir, "toy_config.json"), "w", encoding="utf-8") as f:
        json.dump(raw, f, indent=2, sort_keys=True)
        f.write("\n")

    scratch = os.path.join(root, "runs", "toy_build")
    cfg = parse_config({**raw, "corpus_path": os.path.join(root, raw["corpus_path"]),
                        "spans_path": os.path.join(root, raw["spans_path"]),
                        "out_dir": os.path.join(scratch, "teacher")})
    train_teacher(cfg)
    teacher_ckpt = os.path.join(scratch, "teacher", "teacher.ckpt")

    cfg2 = parse_config({**cfg.to_dict(), "out_dir": os.path.join(scratch, "student")})
    distill(cfg2, teacher_ckpt)
    student_ckpt = os.path.join(scratch, "student", "student.ckpt")

    import shutil

    shutil.copy(teacher_ckpt, os.path.join(toy_dir, "teacher.ckpt"))
    shutil.copy(student_ckpt, os.path.join(toy_dir, "student.ckpt"))

    # pin exactly what `eval` computes: metrics on the held-out split
    from spandistill.model import load_checkpoint
    from spandistill.corpus import read_corpus

    samples = read_corpus(cfg.corpus_path)
    _, held = split_corpus(samples, cfg.heldout_fraction, cfg.seed)
    pinned = {}
    for role, ckpt in (("teacher", teacher_ckpt), ("student", student_ckpt)):
        model, tokenizer, _ = load_checkpoint(ckpt)
        pinned[role] = evaluate(model, tokenizer, held, model.config.max_seq_len)
    with open(os.path.join(toy_dir, "pinned_metrics.json"), "w", encoding="utf-8") as f:
        json.dump(pinned, f, indent=2, sort_keys=True)
        f.write("\n")
    print("toy checkpoints pinned:",
          {r: round(m["heldout_ce"], 4) for r, m in pinned.items()})


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default=os.path.join(os.path.dirname(__file__), ".."),
                    help="repository root (default: the script's parent)")
    args = ap.parse_args()
    root = os.path.abspath(args.root)
    for sub in ("data/corpora", "data/spans", "data/toy"):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    build_grammar(root)
    build_fables(root)
    build_toy(root)


if __name__ == "__main__":
    main()
