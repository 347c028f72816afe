"""ROUGE-L: longest-common-subsequence precision/recall/F1 over token sequences."""

from typing import Sequence


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence, O(len(a)*len(b)) DP."""
    if not a or not b:
        return 0
    # one-row DP; prev holds the row for a[:i], cur for a[:i+1]
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence, reference: Sequence) -> dict[str, float]:
    """LCS-based precision, recall and F1 (beta=1).

    Sequences may hold any hashable/comparable items (word strings, token ids).
    The reference must be nonempty; an empty candidate scores zero across the
    board. F1 is computed as 2*LCS/(|candidate|+|reference|), the exact
    harmonic mean of P and R, evaluated with a single division.
    """
    if len(reference) == 0:
        raise ValueError("rouge_l: reference sequence is empty")
    if len(candidate) == 0:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    lcs = lcs_length(candidate, reference)
    return {
        "precision": lcs / len(candidate),
        "recall": lcs / len(reference),
        "f1": (2 * lcs) / (len(candidate) + len(reference)),
    }
