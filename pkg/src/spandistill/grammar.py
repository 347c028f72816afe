"""A tiny deterministic sentence grammar with machine-generated gold spans.

Sentences are flat chunk sequences — subject NP, verb (the VP chunk), and an
optional prepositional object NP — so phrase boundaries are known at
generation time and never overlap. Each corpus sample is a copy task:

    <sentence> | <sentence>

The response is a verbatim copy of the prompt, so every response token is
greedy-decodable from the prefix and teacher quality is directly measurable
as next-token accuracy.
"""

import numpy as np

from .corpus import SEPARATOR, CorpusSample, render_text
from .spans import SpanAnnotation

DETS = ("the", "a")
ADJS = ("red", "old", "tiny")
NOUNS = ("cat", "dog", "bird", "fox", "mat", "box")
VERBS = ("sat", "ran", "saw", "hid")
PREPS = ("on", "under", "near")
SEPARATOR_WORD = SEPARATOR.strip()


def vocabulary() -> list[str]:
    """Every word the grammar can emit, in sorted order."""
    return sorted(set(DETS + ADJS + NOUNS + VERBS + PREPS + (SEPARATOR_WORD,)))


def _gen_np(rng: np.random.Generator) -> list[str]:
    words = [DETS[rng.integers(len(DETS))]]
    if rng.random() < 0.5:
        words.append(ADJS[rng.integers(len(ADJS))])
    words.append(NOUNS[rng.integers(len(NOUNS))])
    return words


def gen_sentence(rng: np.random.Generator) -> tuple[list[str], list[tuple[int, int, str]]]:
    """One sentence as (words, phrases); phrases are (start, end, label) over
    word indices with end exclusive."""
    subj = _gen_np(rng)
    verb = VERBS[rng.integers(len(VERBS))]
    words = list(subj)
    phrases = [(0, len(subj), "NP")]
    phrases.append((len(words), len(words) + 1, "VP"))
    words.append(verb)
    if rng.random() < 0.6:
        words.append(PREPS[rng.integers(len(PREPS))])
        obj = _gen_np(rng)
        phrases.append((len(words), len(words) + len(obj), "NP"))
        words.extend(obj)
    return words, phrases


def _char_ranges(words: list[str], offset: int) -> list[tuple[int, int]]:
    ranges = []
    pos = offset
    for w in words:
        ranges.append((pos, pos + len(w)))
        pos += len(w) + 1  # single space between words
    return ranges


def gen_sample(rng: np.random.Generator, sample_id: str) -> tuple[CorpusSample, SpanAnnotation]:
    """One copy-task sample plus its gold span annotation over the full text."""
    words, phrases = gen_sentence(rng)
    prompt = " ".join(words)
    sample = CorpusSample(sample_id=sample_id, prompt=prompt, response=prompt)
    text = render_text(sample)

    word_spans = []
    phrase_spans = []
    for offset in (0, len(prompt) + len(SEPARATOR)):  # prompt copy, response copy
        ranges = _char_ranges(words, offset)
        word_spans.extend(ranges)
        for s, e, label in phrases:
            phrase_spans.append((ranges[s][0], ranges[e - 1][1], label))
    ann = SpanAnnotation(sample_id=sample_id, text=text, words=word_spans, phrases=phrase_spans)
    ann.validate()
    return sample, ann


def gen_corpus(
    rng: np.random.Generator, n: int, prefix: str = "syn"
) -> tuple[list[CorpusSample], list[SpanAnnotation]]:
    if n <= 0:
        raise ValueError(f"corpus size must be positive, got {n}")
    samples, annotations = [], []
    for i in range(n):
        sample, ann = gen_sample(rng, f"{prefix}-{i:05d}")
        samples.append(sample)
        annotations.append(ann)
    return samples, annotations
