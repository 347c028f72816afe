"""Distillation objectives.

Base objectives: token-wise forward KL on final logits, skew KL / skew
reverse KL against teacher-student mixtures, and the layer-trajectory pair
(intermediate-distribution KL plus finite-difference cosine alignment).

Structural objectives: span-geometry alignment (pairwise cosine-distance
matching between span representations at scheduled layer pairs) and
projected hidden-state alignment (weighted cosine distance between linearly
projected student token states and teacher token states on span-covered
tokens).

All primitives are differentiable in every argument; the orchestrator
`total_loss` detaches teacher-derived inputs so gradients reach only the
student and the projectors. Token-level divergences are means (not sums)
over the masked positions, so the loss coefficients keep their meaning
across sequence lengths and batch sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spandistill import tensor as T
from spandistill.tensor import Tensor
from spandistill.model import TinyTransformer, ForwardTrace
from spandistill.saliency import token_weights
from spandistill.schedule import LayerSchedule
from spandistill.spans import TokenSpanMap, span_representations, span_weights

__all__ = [
    "Projector",
    "LossReport",
    "kd_forward_kl",
    "skew_kl",
    "skew_rkl",
    "fdd_traj",
    "fdd_der",
    "dsa_layer",
    "dsa_total",
    "hid_loss",
    "total_loss",
    "resolve_span_maps",
    "BASE_KINDS",
]

BASE_KINDS = ("kl", "skew_kl", "skew_rkl", "fdd")
NORM_FLOOR = 1e-12


class Projector:
    """One learnable [d_student, d_teacher] matrix per scheduled layer."""

    def __init__(self, schedule: LayerSchedule, d_student: int, d_teacher: int,
                 rng: np.random.Generator):
        bound = float(np.sqrt(6.0 / (d_student + d_teacher)))
        self.mats: dict[int, Tensor] = {}
        for entry in schedule:
            self.mats[entry.student_layer] = Tensor(
                rng.uniform(-bound, bound, size=(d_student, d_teacher)),
                requires_grad=True,
            )

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"proj.layer{l}": w for l, w in sorted(self.mats.items())}

    def zero_grad(self):
        for w in self.mats.values():
            w.grad = None


@dataclass
class LossReport:
    """Scalar values of every loss term for one step; re-sums to `total`."""

    base: float
    dsa: float
    hid: float
    traj: float
    der: float
    total: float
    per_layer_dsa: dict[int, float] = field(default_factory=dict)
    step: int = 0


def _masked_token_mean(per_token: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of per_token [B,S] over positions where mask is True."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != per_token.shape:
        raise T.ShapeError(
            f"mask shape {mask.shape} != per-token shape {per_token.shape}"
        )
    n = int(mask.sum())
    if n == 0:
        raise ValueError("loss mask selects no positions")
    return T.div(T.sum_(T.mul(per_token, mask.astype(np.float64))), float(n))


def kd_forward_kl(p_logits: Tensor, q_logits: Tensor, target_mask: np.ndarray) -> Tensor:
    """Token-wise KL(p || q) from logits, averaged over masked positions."""
    if p_logits.shape != q_logits.shape:
        raise T.ShapeError(
            f"logit shapes differ: {p_logits.shape} vs {q_logits.shape}"
        )
    logp = T.log_softmax(p_logits, axis=-1)
    logq = T.log_softmax(q_logits, axis=-1)
    per_token = T.sum_(T.mul(T.exp(logp), T.sub(logp, logq)), axis=-1)
    return _masked_token_mean(per_token, target_mask)


def _check_alpha(alpha: float):
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")


def skew_kl(p: Tensor, q: Tensor, alpha: float, target_mask: np.ndarray) -> Tensor:
    """KL(p || alpha*p + (1-alpha)*q) on probability tensors [..., V].

    p and q must be valid distributions (strictly positive) per position.
    """
    _check_alpha(alpha)
    mix = T.add(T.mul(alpha, p), T.mul(1.0 - alpha, q))
    per_token = T.sum_(T.mul(p, T.sub(T.log(p), T.log(mix))), axis=-1)
    return _masked_token_mean(per_token, target_mask)


def skew_rkl(p: Tensor, q: Tensor, alpha: float, target_mask: np.ndarray) -> Tensor:
    """KL(q || (1-alpha)*p + alpha*q) on probability tensors [..., V]."""
    _check_alpha(alpha)
    mix = T.add(T.mul(1.0 - alpha, p), T.mul(alpha, q))
    per_token = T.sum_(T.mul(q, T.sub(T.log(q), T.log(mix))), axis=-1)
    return _masked_token_mean(per_token, target_mask)


def _layer_logprobs(model: TinyTransformer, trace: ForwardTrace, layer: int) -> Tensor:
    if not (0 <= layer < len(trace.hidden_states)):
        raise ValueError(
            f"layer {layer} outside trace with {len(trace.hidden_states)} states"
        )
    return model.project_to_vocab(trace.hidden_states[layer])


def fdd_traj(
    teacher: TinyTransformer,
    teacher_trace: ForwardTrace,
    student: TinyTransformer,
    student_trace: ForwardTrace,
    schedule: LayerSchedule,
    target_mask: np.ndarray,
) -> Tensor:
    """Sum over scheduled layers of masked token-mean KL between the
    intermediate vocabulary distributions (each through its model's head)."""
    total = Tensor(0.0)
    for entry in schedule:
        y_t = _layer_logprobs(teacher, teacher_trace, entry.teacher_layer)
        y_s = _layer_logprobs(student, student_trace, entry.student_layer)
        per_token = T.sum_(T.mul(T.exp(y_t), T.sub(y_t, y_s)), axis=-1)
        total = T.add(total, _masked_token_mean(per_token, target_mask))
    return total


def fdd_der(
    teacher: TinyTransformer,
    teacher_trace: ForwardTrace,
    student: TinyTransformer,
    student_trace: ForwardTrace,
    schedule: LayerSchedule,
    target_mask: np.ndarray,
    counters: dict | None = None,
) -> Tensor:
    """Sum over scheduled layers of masked token-mean cosine distance between
    layer-to-layer changes of the vocabulary log-distributions.

    The change at layer l is against the true adjacent layer l-1 (layer 0 is
    the embedding output, so l-1 always exists). Tokens where either change
    has norm below 1e-12 are skipped and counted.
    """
    target_mask = np.asarray(target_mask, dtype=bool)
    total = Tensor(0.0)
    for entry in schedule:
        dy_t = T.sub(
            _layer_logprobs(teacher, teacher_trace, entry.teacher_layer),
            _layer_logprobs(teacher, teacher_trace, entry.teacher_layer - 1),
        )
        dy_s = T.sub(
            _layer_logprobs(student, student_trace, entry.student_layer),
            _layer_logprobs(student, student_trace, entry.student_layer - 1),
        )
        norms_t = np.sqrt((dy_t.data * dy_t.data).sum(-1))
        norms_s = np.sqrt((dy_s.data * dy_s.data).sum(-1))
        degenerate = (norms_t < NORM_FLOOR) | (norms_s < NORM_FLOOR)
        keep = target_mask & ~degenerate
        n_skipped = int((target_mask & degenerate).sum())
        if counters is not None and n_skipped:
            counters["der_skipped_tokens"] = counters.get("der_skipped_tokens", 0) + n_skipped
        n_keep = int(keep.sum())
        if n_keep == 0:
            continue
        # make the skipped tokens' vectors safe for the norm, then zero them out
        fill = np.broadcast_to(degenerate[..., None], dy_t.shape)
        dy_t_safe = T.masked_fill(dy_t, fill, 1.0)
        dy_s_safe = T.masked_fill(dy_s, fill, 1.0)
        cos = T.cosine_similarity(dy_t_safe, dy_s_safe, axis=-1)
        per_token = T.sub(1.0, cos)
        total = T.add(total, T.div(T.sum_(T.mul(per_token, keep.astype(np.float64))), float(n_keep)))
    return total


def dsa_layer(
    u_student: Tensor,
    u_teacher: Tensor,
    span_w: Tensor,
    counters: dict | None = None,
) -> Tensor:
    """Weighted squared mismatch of pairwise cosine distances between span
    representations: sum over pairs i<j of w_i w_j (d_S(i,j) - d_T(i,j))^2.

    Teacher representations and span weights are treated as constants, so
    the gradient reaches only the student representations. Fewer than two
    spans leaves no pairs: returns 0 and counts the degenerate call.
    """
    n = u_student.shape[0]
    if u_teacher.shape[0] != n or span_w.shape != (n,):
        raise T.ShapeError(
            f"span count mismatch: student {u_student.shape[0]}, "
            f"teacher {u_teacher.shape[0]}, weights {span_w.shape[0]}"
        )
    if n < 2:
        if counters is not None:
            counters["dsa_degenerate_span_sets"] = counters.get("dsa_degenerate_span_sets", 0) + 1
        return Tensor(0.0)

    def distance_matrix(u: Tensor) -> Tensor:
        unit = T.div(u, T.norm(u, axis=-1, keepdims=True))
        return T.sub(1.0, T.matmul(unit, T.transpose(unit)))

    d_s = distance_matrix(u_student)
    d_t = distance_matrix(u_teacher.detach())
    diff = T.sub(d_s, d_t)
    w = span_w.data  # constants by contract
    pair_w = np.triu(w[:, None] * w[None, :], k=1)
    return T.sum_(T.mul(T.mul(diff, diff), pair_w))


def resolve_span_maps(
    span_maps: list[dict[str, TokenSpanMap]],
    schedule: LayerSchedule,
    counters: dict | None = None,
) -> list[list[TokenSpanMap]]:
    """Pick each (entry, sample) span map by the entry's granularity.

    A phrase-level entry on a sample with no resolvable phrases falls back
    to that sample's word spans (counted), keeping the pair set defined.
    """
    resolved: list[list[TokenSpanMap]] = []
    for entry in schedule:
        per_sample = []
        for maps in span_maps:
            m = maps[entry.granularity]
            if entry.granularity == "phrase" and len(m) == 0:
                m = maps["word"]
                if counters is not None:
                    counters["phrase_fallbacks"] = counters.get("phrase_fallbacks", 0) + 1
            per_sample.append(m)
        resolved.append(per_sample)
    return resolved


def dsa_total(
    student_trace: ForwardTrace,
    teacher_trace: ForwardTrace,
    resolved_maps: list[list[TokenSpanMap]],
    schedule: LayerSchedule,
    span_pool: str = "own",
    counters: dict | None = None,
    teacher_weight_cache: dict[int, Tensor] | None = None,
) -> tuple[Tensor, dict[int, float]]:
    """Mean over scheduled layers of the batch-mean span-geometry loss.

    `span_pool` picks the weights used to pool student span representations:
    "own" uses the student's saliency at its layer, "teacher" reuses the
    teacher's weights at the mapped layer. Teacher pooling and the per-span
    weights always come from the teacher at the mapped layer.
    """
    if len(schedule) == 0:
        raise ValueError("empty layer schedule")
    if span_pool not in ("own", "teacher"):
        raise ValueError(f"span_pool must be 'own' or 'teacher', got {span_pool!r}")
    pad = student_trace.padding_mask
    batch = pad.shape[0]
    cache = teacher_weight_cache if teacher_weight_cache is not None else {}
    per_layer: dict[int, float] = {}
    total = Tensor(0.0)
    for idx, entry in enumerate(schedule):
        h_s = student_trace.hidden_states[entry.student_layer]
        h_t = teacher_trace.hidden_states[entry.teacher_layer]
        if entry.teacher_layer not in cache:
            cache[entry.teacher_layer] = token_weights(
                h_t, pad, entry.teacher_layer, "teacher"
            ).weights.detach()
        w_t = cache[entry.teacher_layer]
        if span_pool == "own":
            w_pool = token_weights(h_s, pad, entry.student_layer, "student").weights
        else:
            w_pool = w_t
        layer_acc = Tensor(0.0)
        for b in range(batch):
            span_map = resolved_maps[idx][b]
            if len(span_map) < 2:
                if counters is not None:
                    counters["dsa_degenerate_span_sets"] = (
                        counters.get("dsa_degenerate_span_sets", 0) + 1
                    )
                continue
            u_s = span_representations(h_s[b], w_pool[b], span_map)
            u_t = span_representations(h_t[b], w_t[b], span_map)
            w_sp = span_weights(w_t[b], span_map)
            layer_acc = T.add(layer_acc, dsa_layer(u_s, u_t, w_sp, counters))
        layer_mean = T.div(layer_acc, float(batch))
        per_layer[entry.student_layer] = layer_mean.item()
        total = T.add(total, layer_mean)
    return T.div(total, float(len(schedule))), per_layer


def hid_loss(
    student_states: list[Tensor],
    teacher_states: list[Tensor],
    projectors: Projector,
    teacher_token_weights: dict[int, Tensor],
    span_masks: list[np.ndarray],
    schedule: LayerSchedule,
    counters: dict | None = None,
) -> Tensor:
    """Projected hidden-state alignment, batch-mean of the per-sample sums.

    Per scheduled layer: project the student states through that layer's
    matrix, take 1 - cosine against the teacher states at the mapped layer,
    weight each span-covered token by the teacher's token weight there, and
    sum. Tokens where either vector has norm below 1e-12 are skipped and
    counted.
    """
    total = Tensor(0.0)
    any_tokens = False
    for idx, entry in enumerate(schedule):
        h_s = student_states[entry.student_layer]
        h_t = teacher_states[entry.teacher_layer].detach()
        w_l = projectors.mats[entry.student_layer]
        if w_l.shape[0] != h_s.shape[-1] or w_l.shape[1] != h_t.shape[-1]:
            raise T.ShapeError(
                f"projector for layer {entry.student_layer} has shape {w_l.shape}, "
                f"states need ({h_s.shape[-1]}, {h_t.shape[-1]})"
            )
        m = np.asarray(span_masks[idx], dtype=bool)
        if not m.any():
            continue
        any_tokens = True
        proj = T.matmul(h_s, w_l)  # [B, S, d_T]
        norms_p = np.sqrt((proj.data * proj.data).sum(-1))
        norms_t = np.sqrt((h_t.data * h_t.data).sum(-1))
        degenerate = (norms_p < NORM_FLOOR) | (norms_t < NORM_FLOOR)
        n_skipped = int((m & degenerate).sum())
        if counters is not None and n_skipped:
            counters["hid_skipped_tokens"] = counters.get("hid_skipped_tokens", 0) + n_skipped
        keep = m & ~degenerate
        fill = np.broadcast_to(degenerate[..., None], proj.shape)
        cos = T.cosine_similarity(
            T.masked_fill(proj, fill, 1.0), T.masked_fill(h_t, fill, 1.0), axis=-1
        )
        w_tok = teacher_token_weights[entry.teacher_layer].detach()
        weighted = T.mul(T.mul(T.sub(1.0, cos), w_tok), keep.astype(np.float64))
        total = T.add(total, T.div(T.sum_(weighted), float(h_s.shape[0])))
    if not any_tokens:
        raise ValueError("no span-covered tokens at any scheduled layer")
    return total


def total_loss(
    *,
    base_kind: str,
    teacher: TinyTransformer,
    teacher_trace: ForwardTrace,
    student: TinyTransformer,
    student_trace: ForwardTrace,
    target_mask: np.ndarray,
    schedule: LayerSchedule,
    span_maps: list[dict[str, TokenSpanMap]] | None = None,
    projectors: Projector | None = None,
    lambda_dsa: float = 0.0,
    lambda_hid: float = 0.0,
    alpha: float = 0.1,
    span_pool: str = "own",
    step: int = 0,
    counters: dict | None = None,
) -> tuple[Tensor, LossReport]:
    """Compose the full objective; returns (differentiable total, report).

    With both coefficients zero the structural terms are not evaluated at
    all, so the objective — and therefore the whole training trajectory —
    is exactly the base method's.
    """
    if base_kind not in BASE_KINDS:
        raise ValueError(f"base_kind must be one of {BASE_KINDS}, got {base_kind!r}")
    if lambda_dsa < 0 or lambda_hid < 0:
        raise ValueError("loss coefficients must be non-negative")

    p_logits = teacher_trace.logits.detach()
    q_logits = student_trace.logits
    traj = der = None
    if base_kind == "kl":
        base = kd_forward_kl(p_logits, q_logits, target_mask)
    elif base_kind == "skew_kl":
        base = skew_kl(T.softmax(p_logits).detach(), T.softmax(q_logits), alpha, target_mask)
    elif base_kind == "skew_rkl":
        base = skew_rkl(T.softmax(p_logits).detach(), T.softmax(q_logits), alpha, target_mask)
    else:  # fdd: token KL plus the two trajectory terms
        base = kd_forward_kl(p_logits, q_logits, target_mask)
        traj = fdd_traj(teacher, teacher_trace, student, student_trace, schedule, target_mask)
        der = fdd_der(teacher, teacher_trace, student, student_trace, schedule, target_mask, counters)

    total = base
    if traj is not None:
        total = T.add(T.add(total, traj), der)

    resolved: list[list[TokenSpanMap]] | None = None
    teacher_weights: dict[int, Tensor] = {}
    if lambda_dsa > 0 or lambda_hid > 0:
        if span_maps is None:
            raise ValueError("structural losses require span maps")
        resolved = resolve_span_maps(span_maps, schedule, counters)

    dsa_value = Tensor(0.0)
    per_layer: dict[int, float] = {}
    if lambda_dsa > 0:
        dsa_value, per_layer = dsa_total(
            student_trace, teacher_trace, resolved, schedule,
            span_pool, counters, teacher_weights,
        )
        total = T.add(total, T.mul(lambda_dsa, dsa_value))

    hid_value = Tensor(0.0)
    if lambda_hid > 0:
        if projectors is None:
            raise ValueError("lambda_hid > 0 requires projectors")
        pad = student_trace.padding_mask
        span_cover = []
        for per_sample in resolved:
            cover = np.zeros_like(pad)
            for b, span_map in enumerate(per_sample):
                for s, e in span_map.spans:
                    cover[b, s : e + 1] = True
            span_cover.append(cover)
        for entry in schedule:
            if entry.teacher_layer not in teacher_weights:
                teacher_weights[entry.teacher_layer] = token_weights(
                    teacher_trace.hidden_states[entry.teacher_layer],
                    pad, entry.teacher_layer, "teacher",
                ).weights.detach()
        hid_value = hid_loss(
            student_trace.hidden_states, teacher_trace.hidden_states,
            projectors, teacher_weights, span_cover, schedule, counters,
        )
        total = T.add(total, T.mul(lambda_hid, hid_value))

    report = LossReport(
        base=base.item(),
        dsa=dsa_value.item(),
        hid=hid_value.item(),
        traj=traj.item() if traj is not None else 0.0,
        der=der.item() if der is not None else 0.0,
        total=total.item(),
        per_layer_dsa=per_layer,
        step=step,
    )
    return total, report
