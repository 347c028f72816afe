"""Key-layer selection, student-to-teacher layer mapping, and granularity.

Students are supervised at a strided top-down subset of their layers:
starting at the top layer and stepping down by a fixed stride until the
budget is exhausted. Each selected student layer is paired with the teacher
layer at the same relative depth (floor of the proportional index, never
layer 0), and the lowest selected layer(s) align word spans while the rest
align phrase spans.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "ScheduleEntry",
    "LayerSchedule",
    "select_layers",
    "map_layer",
    "assign_granularity",
    "build_schedule",
]

GRANULARITIES = ("word", "phrase")


@dataclass(frozen=True)
class ScheduleEntry:
    student_layer: int
    teacher_layer: int
    granularity: str  # "word" | "phrase"


@dataclass(frozen=True)
class LayerSchedule:
    entries: tuple[ScheduleEntry, ...]
    stride: int
    budget: int

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def student_layers(self) -> list[int]:
        return [e.student_layer for e in self.entries]

    def describe(self) -> str:
        lines = [f"layer schedule (stride={self.stride}, budget={self.budget}):"]
        for e in self.entries:
            lines.append(
                f"  student layer {e.student_layer:>3} -> teacher layer {e.teacher_layer:>3}  [{e.granularity}]"
            )
        return "\n".join(lines)


def select_layers(n_student_layers: int, stride: int, budget: int) -> list[int]:
    """Top-down strided selection: {N, N-k, ..., N-(M-1)k}, ascending."""
    if stride < 1 or budget < 1:
        raise ValueError(f"stride and budget must be positive, got k={stride}, M={budget}")
    lowest = n_student_layers - (budget - 1) * stride
    if lowest < 1:
        raise ValueError(
            f"budget {budget} at stride {stride} reaches layer {lowest} "
            f"below layer 1 in a {n_student_layers}-layer model"
        )
    return sorted(n_student_layers - j * stride for j in range(budget))


def map_layer(student_layer: int, n_student_layers: int, n_teacher_layers: int) -> int:
    """Proportional depth map: floor(l * N_T / N_S), clamped to at least 1."""
    if not (1 <= student_layer <= n_student_layers):
        raise ValueError(
            f"student layer {student_layer} outside [1, {n_student_layers}]"
        )
    return max(1, (student_layer * n_teacher_layers) // n_student_layers)


def assign_granularity(
    student_layers: list[int],
    n_student_layers: int,
    n_teacher_layers: int,
    word_count: int = 1,
    stride: int = 1,
) -> LayerSchedule:
    """Mark the lowest `word_count` selected layers as word-level, rest phrase."""
    if not (0 <= word_count <= len(student_layers)):
        raise ValueError(
            f"word_count {word_count} outside [0, {len(student_layers)}]"
        )
    layers = sorted(student_layers)
    entries = tuple(
        ScheduleEntry(
            student_layer=l,
            teacher_layer=map_layer(l, n_student_layers, n_teacher_layers),
            granularity="word" if i < word_count else "phrase",
        )
        for i, l in enumerate(layers)
    )
    return LayerSchedule(entries=entries, stride=stride, budget=len(layers))


def build_schedule(
    n_student_layers: int,
    n_teacher_layers: int,
    stride: int,
    budget: int,
    word_count: int = 1,
    explicit_layers: list[int] | None = None,
) -> LayerSchedule:
    """Standard path: strided selection; `explicit_layers` overrides it
    (for hand-set schedules that no single (stride, budget) rule produces)."""
    if explicit_layers is not None:
        layers = sorted(set(explicit_layers))
        if not layers:
            raise ValueError("explicit layer list is empty")
        if layers[0] < 1 or layers[-1] > n_student_layers:
            raise ValueError(
                f"explicit layers {layers} outside [1, {n_student_layers}]"
            )
    else:
        layers = select_layers(n_student_layers, stride, budget)
    return assign_granularity(
        layers, n_student_layers, n_teacher_layers, word_count, stride
    )
