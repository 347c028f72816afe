"""Acceptance gates. One test per release criterion; the conftest summary
prints a PASS/FAIL line for each at the end of the run.

The desk-scale test trains real models on the shipped corpus and takes a few
minutes; everything else is seconds.
"""

import json
import os
import time

import numpy as np
import pytest

from spandistill import tensor as T
from spandistill.config import default_config, parse_config
from spandistill.corpus import read_corpus, write_corpus
from spandistill.grammar import gen_corpus
from spandistill.losses import (
    Projector,
    dsa_layer,
    dsa_total,
    fdd_der,
    fdd_traj,
    hid_loss,
    kd_forward_kl,
    resolve_span_maps,
    skew_kl,
    skew_rkl,
)
from spandistill.model import ForwardTrace, ModelConfig, TinyTransformer
from spandistill.rouge import rouge_l
from spandistill.saliency import token_weights
from spandistill.schedule import build_schedule, map_layer, select_layers
from spandistill.spans import TokenSpanMap, span_representations, write_annotations
from spandistill.tensor import Tape, Tensor, finite_diff_check
from spandistill.train import distill, train_teacher

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GRAMMAR = os.path.join(REPO, "data/corpora/grammar.jsonl")
GRAMMAR_SPANS = os.path.join(REPO, "data/spans/grammar_spans.jsonl")
FABLES = os.path.join(REPO, "data/corpora/fables.jsonl")
FABLES_SPANS = os.path.join(REPO, "data/spans/fables_spans.jsonl")


# --- small builders -------------------------------------------------------


def tiny_pair(seed, d_t=8, d_s=4, vocab=9, seq=6):
    rng = np.random.default_rng(seed)
    teacher = TinyTransformer(
        ModelConfig(n_layers=2, d_model=d_t, n_heads=2, vocab_size=vocab, max_seq_len=seq), rng
    )
    student = TinyTransformer(
        ModelConfig(n_layers=2, d_model=d_s, n_heads=2, vocab_size=vocab, max_seq_len=seq), rng
    )
    teacher.set_trainable(False)
    return teacher, student


def spanned_setup(seed, seq=8, vocab=12):
    rng = np.random.default_rng(seed)
    teacher, student = tiny_pair(seed, vocab=vocab, seq=seq)
    tokens = rng.integers(3, vocab, size=(2, seq))
    mask = np.ones((2, seq), bool)
    mask[0, seq - 2 :] = False
    tokens[0, seq - 2 :] = 0
    t_trace = teacher.forward(tokens, mask)
    s_trace = student.forward(tokens, mask)
    span_maps = []
    for b in range(2):
        hi = seq - 3 if b == 0 else seq - 1
        span_maps.append({
            "word": TokenSpanMap("word", [(1, 1), (2, 2), (3, 3), (4, hi)]),
            "phrase": TokenSpanMap("phrase", [(1, 2), (3, hi)]),
        })
    sched = build_schedule(2, 2, 1, 2)
    return teacher, student, t_trace, s_trace, span_maps, sched, mask


class _LogProbPassthrough:
    def project_to_vocab(self, h):
        return h


def _trace_of(states):
    tensors = [Tensor(s) for s in states]
    return ForwardTrace(tensors, tensors[-1], np.ones(states[0].shape[:2], dtype=bool))


def _grad_builders(seed):
    """(closure, probe) per loss; the closure swaps the probe object into the
    structure the loss reads so the tape's gradient lands on it."""
    rng = np.random.default_rng(seed)
    mask23 = np.ones((2, 3), bool)

    out = {}
    p = Tensor(rng.standard_normal((2, 3, 6)))
    q0 = Tensor(rng.standard_normal((2, 3, 6)))
    out["kd_forward_kl"] = (lambda x: kd_forward_kl(p, x, mask23), q0)

    ps = T.softmax(Tensor(rng.standard_normal((2, 3, 6))))
    qs0 = Tensor(rng.dirichlet(np.ones(6), size=(2, 3)))
    out["skew_kl"] = (lambda x: skew_kl(ps, x, 0.1, mask23), qs0)
    out["skew_rkl"] = (lambda x: skew_rkl(ps, x, 0.1, mask23), qs0)

    teacher, student = tiny_pair(seed)
    tokens = rng.integers(1, 9, size=(1, 5))
    t_trace = teacher.forward(tokens)
    s_trace = student.forward(tokens)
    sched22 = build_schedule(2, 2, 1, 2)
    mask15 = np.ones((1, 5), bool)

    def traj(x):
        s_trace.hidden_states[1] = x
        return fdd_traj(teacher, t_trace, student, s_trace, sched22, mask15)

    out["fdd_traj"] = (traj, s_trace.hidden_states[1])

    m = _LogProbPassthrough()
    y0 = rng.standard_normal((1, 3, 5))
    der_t = _trace_of([y0, y0 + rng.standard_normal((1, 3, 5))])
    der_s = _trace_of([y0, y0 + rng.standard_normal((1, 3, 5))])
    sched11 = build_schedule(1, 1, 1, 1)

    def der(x):
        der_s.hidden_states[1] = x
        return fdd_der(m, der_t, m, der_s, sched11, np.ones((1, 3), bool))

    out["fdd_der"] = (der, der_s.hidden_states[1])

    _, _, st_trace, ss_trace, span_maps, sched, _ = spanned_setup(seed)
    resolved = resolve_span_maps(span_maps, sched)

    def dsa(x):
        ss_trace.hidden_states[1] = x
        val, _ = dsa_total(ss_trace, st_trace, resolved, sched, span_pool="own")
        return val

    out["dsa_total"] = (dsa, ss_trace.hidden_states[1])

    proj = Projector(sched, 4, 8, np.random.default_rng(seed + 7))
    pad = ss_trace.padding_mask
    cover = []
    for per_sample_idx in range(len(sched.entries)):
        c = np.zeros_like(pad)
        for b, span_map in enumerate(resolved[per_sample_idx]):
            for s, e in span_map.spans:
                c[b, s : e + 1] = True
        cover.append(c)
    t_weights = {
        e.teacher_layer: token_weights(st_trace.hidden_states[e.teacher_layer], pad).weights
        for e in sched
    }

    def hid(x):
        proj.mats[1] = x
        return hid_loss(ss_trace.hidden_states, st_trace.hidden_states, proj,
                        t_weights, cover, sched)

    out["hid_loss"] = (hid, proj.mats[1])
    return out


# --- criteria -------------------------------------------------------------


def test_gradient_suite():
    """Every loss: finite-difference rel. error < 1e-5 on 5 instances, < 2 min."""
    start = time.time()
    names = list(_grad_builders(0))
    for name in names:
        for seed in range(5):
            f, probe = _grad_builders(seed)[name]
            if seed == 0:  # the check must not pass vacuously
                leaf = Tensor(probe.data.copy(), requires_grad=True)
                tape = Tape()
                with tape:
                    y = f(leaf)
                tape.backward(y)
                assert np.abs(leaf.grad).max() > 1e-7, f"{name}: zero gradient"
            err = finite_diff_check(f, probe, eps=1e-5)
            assert err < 1e-5, f"{name} seed {seed}: rel err {err:.3e}"
    elapsed = time.time() - start
    assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s"


def test_oracle_suite():
    """Vectorized kernels match independently coded scalar references."""
    rng = np.random.default_rng(31)

    def naive_dsa(u_s, u_t, w):
        def cos_dist(a, b):
            num = sum(x * y for x, y in zip(a, b))
            na = sum(x * x for x in a)
            nb = sum(y * y for y in b)
            return 1.0 - num / (np.sqrt(na) * np.sqrt(nb))

        acc = 0.0
        for i in range(len(w)):
            for j in range(i + 1, len(w)):
                acc += w[i] * w[j] * (cos_dist(u_s[i], u_s[j]) - cos_dist(u_t[i], u_t[j])) ** 2
        return acc

    for n_sp in (2, 5, 12, 30, 50):
        u_s = rng.standard_normal((n_sp, 6))
        u_t = rng.standard_normal((n_sp, 6))
        w = np.abs(rng.standard_normal(n_sp)) + 0.05
        w /= w.sum()
        got = dsa_layer(Tensor(u_s), Tensor(u_t), Tensor(w)).item()
        assert abs(got - naive_dsa(u_s, u_t, w)) <= 1e-12, f"N_sp={n_sp}"

    def oracle_weights(H, mask):
        seq, d = H.shape
        hat = np.zeros_like(H)
        for t in range(seq):
            mu = sum(H[t]) / d
            sigma = np.sqrt(sum((v - mu) ** 2 for v in H[t]) / d)
            if mask[t]:
                hat[t] = H[t] / sigma
        scores = np.zeros((seq, seq))
        for s in range(seq):
            for t in range(seq):
                scores[s, t] = sum(hat[s, j] * hat[t, j] for j in range(d)) / np.sqrt(d)
        alpha = np.zeros((seq, seq))
        for s in range(seq):
            row = np.full(seq, -np.inf)
            for t in range(seq):
                if t != s and mask[t]:
                    row[t] = scores[s, t]
            e = np.exp(row - row.max())
            alpha[s] = e / e.sum()
        n_real = int(mask.sum())
        return np.array([
            sum(alpha[s, t] for s in range(seq) if mask[s]) / n_real for t in range(seq)
        ])

    for seed in range(3):
        r = np.random.default_rng(100 + seed)
        H = r.standard_normal((1, 7, 5))
        mask = np.ones((1, 7), bool)
        mask[0, 5:] = False
        got = token_weights(Tensor(H), mask).weights.data[0]
        want = oracle_weights(H[0], mask[0])
        assert np.abs(got - want).max() <= 1e-12, f"saliency seed {seed}"

    for seed in range(3):
        r = np.random.default_rng(200 + seed)
        H = r.standard_normal((8, 5))
        w = np.abs(r.standard_normal(8)) + 0.05
        spans = [(0, 1), (2, 2), (3, 6)]
        got = span_representations(Tensor(H), Tensor(w), TokenSpanMap("word", spans)).data
        for k, (s, e) in enumerate(spans):
            num = np.zeros(5)
            den = 0.0
            for t in range(s, e + 1):
                num += w[t] * H[t]
                den += w[t]
            assert np.abs(got[k] - num / den).max() <= 1e-14, f"span reps seed {seed}"


def test_invariant_suite(tmp_path):
    """Weight normalization, geometry invariances, λ=0 reduction, determinism."""
    rng = np.random.default_rng(77)

    # token weights: masked rows sum to one; two tokens split evenly
    H = rng.standard_normal((2, 6, 5))
    mask = np.ones((2, 6), bool)
    mask[1, 4:] = False
    w = token_weights(Tensor(H), mask).weights.data
    assert abs(w[0].sum() - 1.0) <= 1e-10
    assert abs(w[1, :4].sum() - 1.0) <= 1e-10
    assert np.all(w[1, 4:] == 0.0)
    w2 = token_weights(Tensor(rng.standard_normal((1, 2, 5))), np.ones((1, 2), bool)).weights.data
    assert np.abs(w2 - 0.5).max() <= 1e-10

    # DSA: invariant to rotation and positive per-span scaling; zero at identity
    u_s = rng.standard_normal((6, 5))
    u_t = rng.standard_normal((6, 5))
    sw = np.abs(rng.standard_normal(6)) + 0.05
    sw /= sw.sum()
    base = dsa_layer(Tensor(u_s), Tensor(u_t), Tensor(sw)).item()
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    rotated = dsa_layer(Tensor(u_s @ q), Tensor(u_t @ q), Tensor(sw)).item()
    assert abs(base - rotated) <= 1e-10
    scales = np.abs(rng.standard_normal(6)) + 0.1
    scaled = dsa_layer(Tensor(u_s * scales[:, None]), Tensor(u_t), Tensor(sw)).item()
    assert abs(base - scaled) <= 1e-10
    assert dsa_layer(Tensor(u_s), Tensor(u_s.copy()), Tensor(sw)).item() == 0.0

    # FDD derivative: positively scaled deltas are indistinguishable
    y0 = rng.standard_normal((1, 3, 5))
    delta = rng.standard_normal((1, 3, 5))
    m = _LogProbPassthrough()
    out = fdd_der(m, _trace_of([y0, y0 + delta]), m, _trace_of([y0, y0 + 2.5 * delta]),
                  build_schedule(1, 1, 1, 1), np.ones((1, 3), bool))
    assert abs(out.item()) <= 1e-10

    # λ=0 reduction and full-run determinism on a miniature end-to-end world
    samples, anns = gen_corpus(np.random.default_rng(5), 20)
    corpus = str(tmp_path / "c.jsonl")
    spans = str(tmp_path / "s.jsonl")
    write_corpus(corpus, samples)
    write_annotations(spans, anns)
    base_cfg = {
        "teacher": {"n_layers": 2, "d_model": 16, "n_heads": 2, "max_seq_len": 28},
        "student": {"n_layers": 2, "d_model": 8, "n_heads": 2, "max_seq_len": 28},
        "batch_size": 5, "teacher_epochs": 2, "distill_epochs": 1,
        "eval_every": 1000, "seed": 1, "corpus_path": corpus, "spans_path": spans,
        "out_dir": str(tmp_path / "teacher"),
    }
    train_teacher(parse_config(base_cfg))
    ckpt = str(tmp_path / "teacher" / "teacher.ckpt")

    outs = {}
    for tag, overrides in (
        ("zero_spans", {"lambda_dsa": 0.0, "lambda_hid": 0.0}),
        ("zero_plain", {"lambda_dsa": 0.0, "lambda_hid": 0.0, "spans_path": None}),
        ("zero_again", {"lambda_dsa": 0.0, "lambda_hid": 0.0}),
    ):
        cfg = parse_config({**base_cfg, **overrides, "out_dir": str(tmp_path / tag)})
        distill(cfg, ckpt)
        outs[tag] = cfg.out_dir

    def blob(tag, name):
        with open(os.path.join(outs[tag], name), "rb") as f:
            return f.read()

    # span machinery with λ=0 leaves no trace on the trajectory
    for name in ("losses.jsonl", "student.ckpt"):
        assert blob("zero_spans", name) == blob("zero_plain", name), name
    # identical config+seed reproduces every output byte
    for name in ("losses.jsonl", "student.ckpt", "metrics.json"):
        assert blob("zero_spans", name) == blob("zero_again", name), name


def test_schedule_reproduction():
    """The three published layer lists and the depth-mapping example."""
    assert select_layers(12, 3, 3) == [6, 9, 12]
    assert select_layers(24, 2, 6) == [14, 16, 18, 20, 22, 24]
    assert select_layers(24, 2, 5) == [16, 18, 20, 22, 24]
    assert map_layer(6, 12, 48) == 24
    sched = build_schedule(12, 48, 3, 3, word_count=1)
    assert sched.student_layers() == [6, 9, 12]
    assert [e.teacher_layer for e in sched] == [map_layer(l, 12, 48) for l in (6, 9, 12)]


def test_fixture_corpora_shipped_and_aligned():
    """Shipped grammar + text fixtures parse, validate, and align 1:1."""
    from spandistill.spans import align_spans, read_annotations
    from spandistill.train import make_tokenizer, match_annotations

    for corpus_path, spans_path, n_expected in (
        (GRAMMAR, GRAMMAR_SPANS, 320),
        (FABLES, FABLES_SPANS, 14),
    ):
        samples = read_corpus(corpus_path)
        assert len(samples) == n_expected, corpus_path
        by_id = match_annotations(samples, read_annotations(spans_path))
        tok = make_tokenizer("whitespace", samples)
        for s in samples:
            ann = by_id[s.sample_id]
            ann.validate()
            enc = tok.encode(ann.text, 40)
            maps = align_spans(ann, ann.text, enc.char_ranges, enc.mask)
            assert maps["word"].dropped_count == 0, s.sample_id
            assert maps["phrase"].dropped_count == 0, s.sample_id
    for name in ("teacher.ckpt", "student.ckpt", "toy_config.json", "pinned_metrics.json"):
        assert os.path.exists(os.path.join(REPO, "data/toy", name)), name


def test_desk_scale_distillation_effect(tmp_path):
    """Teacher >95% held-out copy accuracy; span losses lower held-out DSA on
    ≥2/3 seeds without hurting cross-entropy by more than +2%; ≤30 min."""
    start = time.time()
    raw = default_config()
    raw.update(corpus_path=GRAMMAR, spans_path=GRAMMAR_SPANS,
               out_dir=str(tmp_path / "teacher"))
    teacher_cfg = parse_config(raw)
    teacher_metrics = train_teacher(teacher_cfg)
    acc = teacher_metrics["final"]["heldout_accuracy"]
    assert acc > 0.95, f"teacher held-out accuracy {acc:.4f}"
    ckpt = os.path.join(teacher_cfg.out_dir, "teacher.ckpt")

    finals = {}
    for seed in (0, 1, 2):
        for tag, (ld, lh) in (("mta", (2.0, 0.2)), ("base", (0.0, 0.0))):
            cfg = parse_config({**raw, "seed": seed, "lambda_dsa": ld, "lambda_hid": lh,
                                "eval_every": 10_000,
                                "out_dir": str(tmp_path / f"{tag}_{seed}")})
            finals[(tag, seed)] = distill(cfg, ckpt)["final"]

    dsa_wins = sum(
        finals[("mta", s)]["mean_dsa"] < finals[("base", s)]["mean_dsa"] for s in (0, 1, 2)
    )
    mta_ce = np.mean([finals[("mta", s)]["heldout_ce"] for s in (0, 1, 2)])
    base_ce = np.mean([finals[("base", s)]["heldout_ce"] for s in (0, 1, 2)])
    elapsed = time.time() - start

    for s in (0, 1, 2):
        print(f"seed {s}: mean_dsa {finals[('mta', s)]['mean_dsa']:.6f} (mta) vs "
              f"{finals[('base', s)]['mean_dsa']:.6f} (base); "
              f"ce {finals[('mta', s)]['heldout_ce']:.4f} vs "
              f"{finals[('base', s)]['heldout_ce']:.4f}")
    print(f"teacher acc {acc:.4f}; dsa lower on {dsa_wins}/3 seeds; "
          f"ce {mta_ce:.4f} vs {base_ce:.4f}; {elapsed:.0f}s")

    assert dsa_wins >= 2, f"DSA lower on only {dsa_wins}/3 seeds"
    assert mta_ce <= 1.02 * base_ce, f"ce {mta_ce:.4f} vs base {base_ce:.4f} exceeds +2%"
    assert elapsed < 1800.0, f"experiment took {elapsed:.0f}s"


def test_rouge_l_unit_values():
    """Identical → 1.0; disjoint → 0.0; the two-of-three overlap → F1 0.8."""
    assert rouge_l(["a", "b", "c"], ["a", "b", "c"])["f1"] == 1.0
    assert rouge_l(["x", "y"], ["a", "b", "c"])["f1"] == 0.0
    out = rouge_l("the cat".split(), "the cat sat".split())
    assert out["precision"] == 1.0
    assert out["recall"] == 2.0 / 3.0
    assert out["f1"] == 0.8
