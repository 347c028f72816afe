"""Teacher pretraining, distillation, evaluation, and the span-geometry probe.

Every run is a pure function of (config, seed): RNG streams for model init,
projector init, and data order are spawned separately from the config seed, so
changing λ coefficients cannot perturb the student's initialization or batch
order. Run directories always hold the resolved config, the layer schedule,
the per-step loss stream, and final metrics.
"""

import json
import math
import os
from dataclasses import asdict

import numpy as np

from . import tensor as T
from .tensor import Tape, Tensor
from .config import RunConfig, save_config
from .corpus import SEPARATOR, CorpusSample, make_batch, read_corpus, render_text
from .losses import Projector, total_loss
from .model import ModelConfig, TinyTransformer, load_checkpoint, save_checkpoint
from .optim import Adam, cosine_lr
from .rouge import rouge_l
from .schedule import build_schedule
from .spans import align_spans, read_annotations
from .tokenizers import ByteTokenizer, WhitespaceTokenizer


def make_tokenizer(kind: str, samples: list[CorpusSample]):
    """Byte tokenizer is corpus-independent; whitespace derives its closed
    vocabulary from the rendered corpus texts."""
    if kind == "byte":
        return ByteTokenizer()
    words = set()
    for s in samples:
        words.update(render_text(s).split())
    return WhitespaceTokenizer(sorted(words))


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    model_ss, proj_ss, data_ss = np.random.SeedSequence(seed).spawn(3)
    return {
        "model": np.random.default_rng(model_ss),
        "projector": np.random.default_rng(proj_ss),
        "data": np.random.default_rng(data_ss),
    }


def split_corpus(
    samples: list[CorpusSample], heldout_fraction: float, seed: int
) -> tuple[list[CorpusSample], list[CorpusSample]]:
    """Deterministic shuffle-and-cut; the split depends only on the seed."""
    order = np.random.default_rng(np.random.SeedSequence((seed, 0xC0))).permutation(len(samples))
    n_held = int(round(len(samples) * heldout_fraction))
    held_idx = set(order[:n_held].tolist())
    train = [s for i, s in enumerate(samples) if i not in held_idx]
    held = [s for i, s in enumerate(samples) if i in held_idx]
    if not train:
        raise ValueError("heldout_fraction leaves no training samples")
    return train, held


def match_annotations(samples: list[CorpusSample], annotations) -> dict[str, object]:
    """Pair corpus and span files by sample_id; any mismatch is an error
    naming the first offending id on either side."""
    by_id = {}
    for ann in annotations:
        by_id[ann.sample_id] = ann
    for s in samples:
        if s.sample_id not in by_id:
            raise ValueError(f"corpus sample {s.sample_id!r} has no span annotation")
    corpus_ids = {s.sample_id for s in samples}
    for ann_id in by_id:
        if ann_id not in corpus_ids:
            raise ValueError(f"span annotation {ann_id!r} has no corpus sample")
    return by_id


def batch_span_maps(batch, ann_by_id) -> list[dict]:
    maps = []
    for sid, text, enc, pad_row in zip(
        batch.sample_ids, batch.texts, batch.encodings, batch.padding_mask
    ):
        maps.append(align_spans(ann_by_id[sid], text, enc.char_ranges, pad_row))
    return maps


def iter_batches(tokenizer, samples, batch_size, max_len, loss_on, order=None):
    idx = np.arange(len(samples)) if order is None else order
    for lo in range(0, len(idx), batch_size):
        chunk = [samples[i] for i in idx[lo : lo + batch_size]]
        yield make_batch(tokenizer, chunk, max_len, loss_on)


def _write_jsonl_line(f, obj: dict):
    f.write(json.dumps(obj, sort_keys=True) + "\n")
    f.flush()


def _nan_abort(out_dir: str, step: int, batch, report) -> RuntimeError:
    dump_path = os.path.join(out_dir, "nan_dump.json")
    with open(dump_path, "w", encoding="utf-8") as f:
        json.dump(
            {"step": step, "sample_ids": batch.sample_ids, "report": asdict(report) if report else None},
            f, sort_keys=True, indent=2,
        )
    return RuntimeError(f"non-finite loss at step {step}; dump written to {dump_path}")


def ce_loss(model: TinyTransformer, batch) -> Tensor:
    trace = model.forward(batch.tokens, batch.padding_mask)
    return T.cross_entropy(trace.logits, batch.targets, batch.loss_mask)


def train_teacher(cfg: RunConfig) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_config(os.path.join(cfg.out_dir, "config.json"), cfg)
    samples = read_corpus(cfg.corpus_path)
    tokenizer = make_tokenizer(cfg.tokenizer, samples)
    train, held = split_corpus(samples, cfg.heldout_fraction, cfg.seed)
    streams = rng_streams(cfg.seed)

    mc = ModelConfig(vocab_size=tokenizer.vocab_size, **cfg.teacher)
    model = TinyTransformer(mc, streams["model"])
    opt = Adam(model.params, cfg.lr)
    steps_per_epoch = math.ceil(len(train) / cfg.batch_size)
    total_steps = max(1, cfg.teacher_epochs * steps_per_epoch)

    sched = build_schedule(
        cfg.student["n_layers"], cfg.teacher["n_layers"], cfg.stride, cfg.budget,
        word_count=cfg.word_count, explicit_layers=cfg.explicit_layers,
    )
    with open(os.path.join(cfg.out_dir, "schedule.txt"), "w", encoding="utf-8") as f:
        f.write(sched.describe() + "\n")

    epoch_ce = []
    step = 0
    with open(os.path.join(cfg.out_dir, "losses.jsonl"), "w", encoding="utf-8") as stream:
        for epoch in range(cfg.teacher_epochs):
            order = streams["data"].permutation(len(train))
            ce_sum, pos_sum = 0.0, 0
            # LM pretraining trains on every next-token position
            for batch in iter_batches(tokenizer, train, cfg.batch_size, mc.max_seq_len, "all", order):
                tape = Tape()
                with tape:
                    loss = ce_loss(model, batch)
                val = loss.item()
                if not np.isfinite(val):
                    raise _nan_abort(cfg.out_dir, step, batch, None)
                tape.backward(loss)
                opt.lr = cosine_lr(step, total_steps, cfg.lr)
                opt.step()
                opt.zero_grad()
                n_pos = int(batch.loss_mask.sum())
                ce_sum += val * n_pos
                pos_sum += n_pos
                _write_jsonl_line(stream, {"step": step, "ce": val, "lr": opt.lr})
                step += 1
            epoch_ce.append(ce_sum / pos_sum)
            print(f"epoch {epoch}: train ce {epoch_ce[-1]:.4f}")

    final = evaluate(model, tokenizer, held, mc.max_seq_len) if held else {}
    metrics = {"epoch_ce": epoch_ce, "steps": step, "final": final}
    with open(os.path.join(cfg.out_dir, "metrics.json"), "w", encoding="utf-8") as f:
        json.dump(metrics, f, sort_keys=True, indent=2)
    save_checkpoint(os.path.join(cfg.out_dir, "teacher.ckpt"), model, tokenizer,
                    extra={"role": "teacher"})
    return metrics


def evaluate(model, tokenizer, samples, max_len, rouge_samples: int = 32) -> dict:
    """Held-out response cross-entropy, next-token accuracy, and ROUGE-L of
    greedy continuations against reference responses."""
    if not samples:
        raise ValueError("evaluate: no samples")
    ce_sum, pos_sum, hits = 0.0, 0, 0
    for batch in iter_batches(tokenizer, samples, 16, max_len, "response"):
        trace = model.forward(batch.tokens, batch.padding_mask)
        ce = T.cross_entropy(trace.logits, batch.targets, batch.loss_mask)
        n_pos = int(batch.loss_mask.sum())
        ce_sum += ce.item() * n_pos
        pos_sum += n_pos
        pred = np.argmax(trace.logits.data, axis=-1)
        hits += int(((pred == batch.targets) & batch.loss_mask).sum())
    ce = ce_sum / pos_sum

    result = {
        "heldout_ce": ce,
        "heldout_ppl": float(np.exp(ce)),
        "heldout_accuracy": hits / pos_sum,
    }
    if rouge_samples > 0:
        f1_sum, n_gen = 0.0, 0
        for s in samples[:rouge_samples]:
            prefix = tokenizer.encode(s.prompt + SEPARATOR.rstrip(), None, add_eos=False)
            ref_len = tokenizer.encode(s.response, None).n_tokens
            ids = model.generate(prefix.ids[: prefix.n_tokens], ref_len + 4, stop_id=tokenizer.eos_id)
            continuation = ids[prefix.n_tokens :]
            cand_words = tokenizer.decode(continuation).split()
            out = rouge_l(cand_words, s.response.split())
            f1_sum += out["f1"]
            n_gen += 1
        result["rouge_l_f1"] = f1_sum / n_gen
    return result


def mean_dsa_over(samples, teacher, student, tokenizer, ann_by_id, sched, max_len,
                  span_pool="own", batch_size=16) -> tuple[float, dict[int, float]]:
    """Dataset-mean DSA per scheduled layer (teacher/student both frozen)."""
    from .losses import dsa_total, resolve_span_maps

    layer_sums = {e.student_layer: 0.0 for e in sched}
    n_total = 0
    for batch in iter_batches(tokenizer, samples, batch_size, max_len, "all"):
        t_trace = teacher.forward(batch.tokens, batch.padding_mask)
        s_trace = student.forward(batch.tokens, batch.padding_mask)
        span_maps = batch_span_maps(batch, ann_by_id)
        resolved = resolve_span_maps(span_maps, sched)
        _, per_layer = dsa_total(s_trace, t_trace, resolved, sched, span_pool=span_pool)
        B = batch.tokens.shape[0]
        for layer, val in per_layer.items():
            layer_sums[layer] += val * B
        n_total += B
    per_layer = {layer: s / n_total for layer, s in layer_sums.items()}
    return sum(per_layer.values()) / len(per_layer), per_layer


def distill(cfg: RunConfig, teacher_ckpt: str) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_config(os.path.join(cfg.out_dir, "config.json"), cfg)
    teacher, tokenizer, _ = load_checkpoint(teacher_ckpt)
    teacher.set_trainable(False)
    kind = "byte" if isinstance(tokenizer, ByteTokenizer) else "whitespace"
    if kind != cfg.tokenizer:
        raise ValueError(
            f"config tokenizer {cfg.tokenizer!r} != teacher checkpoint tokenizer {kind!r}"
        )

    samples = read_corpus(cfg.corpus_path)
    train, held = split_corpus(samples, cfg.heldout_fraction, cfg.seed)
    needs_spans = cfg.lambda_dsa > 0 or cfg.lambda_hid > 0
    ann_by_id = None
    if cfg.spans_path:
        ann_by_id = match_annotations(samples, read_annotations(cfg.spans_path))
    elif needs_spans:
        raise ValueError("spans_path is required when lambda_dsa or lambda_hid is positive")

    streams = rng_streams(cfg.seed)
    mc = ModelConfig(vocab_size=tokenizer.vocab_size, **cfg.student)
    if mc.max_seq_len != teacher.config.max_seq_len:
        raise ValueError(
            f"student max_seq_len {mc.max_seq_len} != teacher {teacher.config.max_seq_len}"
        )
    student = TinyTransformer(mc, streams["model"])
    sched = build_schedule(
        mc.n_layers, teacher.config.n_layers, cfg.stride, cfg.budget,
        word_count=cfg.word_count, explicit_layers=cfg.explicit_layers,
    )
    with open(os.path.join(cfg.out_dir, "schedule.txt"), "w", encoding="utf-8") as f:
        f.write(sched.describe() + "\n")
    projectors = Projector(sched, mc.d_model, teacher.config.d_model, streams["projector"])

    opt_model = Adam(student.params, cfg.lr)
    opt_proj = Adam(projectors.named_parameters(), cfg.projector_lr)
    steps_per_epoch = math.ceil(len(train) / cfg.batch_size)
    total_steps = max(1, cfg.distill_epochs * steps_per_epoch)
    teacher_before = {k: v.copy() for k, v in teacher.state_arrays().items()}

    counters: dict[str, int] = {}
    eval_history = []
    step = 0
    with open(os.path.join(cfg.out_dir, "losses.jsonl"), "w", encoding="utf-8") as stream:
        for epoch in range(cfg.distill_epochs):
            order = streams["data"].permutation(len(train))
            for batch in iter_batches(
                tokenizer, train, cfg.batch_size, mc.max_seq_len, cfg.loss_on, order
            ):
                t_trace = teacher.forward(batch.tokens, batch.padding_mask)
                span_maps = batch_span_maps(batch, ann_by_id) if (ann_by_id and needs_spans) else None
                tape = Tape()
                with tape:
                    s_trace = student.forward(batch.tokens, batch.padding_mask)
                    total, report = total_loss(
                        base_kind=cfg.base_kind,
                        teacher=teacher, teacher_trace=t_trace,
                        student=student, student_trace=s_trace,
                        target_mask=batch.loss_mask, schedule=sched,
                        span_maps=span_maps, projectors=projectors,
                        lambda_dsa=cfg.lambda_dsa, lambda_hid=cfg.lambda_hid,
                        alpha=cfg.alpha, span_pool=cfg.span_pool,
                        step=step, counters=counters,
                    )
                if not np.isfinite(report.total):
                    raise _nan_abort(cfg.out_dir, step, batch, report)
                tape.backward(total)
                opt_model.lr = cosine_lr(step, total_steps, cfg.lr)
                opt_proj.lr = cosine_lr(step, total_steps, cfg.projector_lr)
                opt_model.step()
                opt_proj.step()
                opt_model.zero_grad()
                opt_proj.zero_grad()
                _write_jsonl_line(stream, {**asdict(report), "lr": opt_model.lr})
                step += 1
                if held and step % cfg.eval_every == 0:
                    ev = evaluate(student, tokenizer, held, mc.max_seq_len, rouge_samples=0)
                    eval_history.append({"step": step, "heldout_ce": ev["heldout_ce"]})
                    print(f"step {step}: heldout ce {ev['heldout_ce']:.4f}")

    teacher_after = teacher.state_arrays()
    for name, before in teacher_before.items():
        if not np.array_equal(before, teacher_after[name]):
            raise RuntimeError(f"teacher parameter {name} changed during distillation")

    final = evaluate(student, tokenizer, held, mc.max_seq_len) if held else {}
    if held and ann_by_id:
        mean_dsa, per_layer = mean_dsa_over(
            held, teacher, student, tokenizer, ann_by_id, sched, mc.max_seq_len, cfg.span_pool
        )
        final["mean_dsa"] = mean_dsa
        final["per_layer_dsa"] = {str(k): v for k, v in per_layer.items()}
    metrics = {
        "eval_history": eval_history,
        "counters": counters,
        "steps": step,
        "final": final,
    }
    with open(os.path.join(cfg.out_dir, "metrics.json"), "w", encoding="utf-8") as f:
        json.dump(metrics, f, sort_keys=True, indent=2)
    save_checkpoint(os.path.join(cfg.out_dir, "student.ckpt"), student, tokenizer,
                    extra={"role": "student"})
    return metrics


def probe_dsa(cfg: RunConfig, teacher_ckpt: str, student_ckpt: str, out_csv: str) -> list[dict]:
    """Per-layer DSA table on the held-out split, written as plot-ready CSV."""
    teacher, tokenizer, _ = load_checkpoint(teacher_ckpt)
    student, tokenizer_s, _ = load_checkpoint(student_ckpt)
    if type(tokenizer) is not type(tokenizer_s):
        raise ValueError("teacher and student checkpoints use different tokenizers")
    samples = read_corpus(cfg.corpus_path)
    _, held = split_corpus(samples, cfg.heldout_fraction, cfg.seed)
    if not held:
        held = samples
    if not cfg.spans_path:
        raise ValueError("spans_path is required for the span-geometry probe")
    ann_by_id = match_annotations(samples, read_annotations(cfg.spans_path))
    sched = build_schedule(
        student.config.n_layers, teacher.config.n_layers, cfg.stride, cfg.budget,
        word_count=cfg.word_count, explicit_layers=cfg.explicit_layers,
    )
    _, per_layer = mean_dsa_over(
        held, teacher, student, tokenizer, ann_by_id, sched,
        student.config.max_seq_len, cfg.span_pool,
    )
    rows = [
        {
            "student_layer": e.student_layer,
            "teacher_layer": e.teacher_layer,
            "granularity": e.granularity,
            "mean_dsa": per_layer[e.student_layer],
        }
        for e in sched
    ]
    with open(out_csv, "w", encoding="utf-8") as f:
        f.write("student_layer,teacher_layer,granularity,mean_dsa\n")
        for r in rows:
            f.write(f"{r['student_layer']},{r['teacher_layer']},{r['granularity']},{r['mean_dsa']!r}\n")
    return rows
