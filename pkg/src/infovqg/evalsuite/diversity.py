"""Generation strength and inventiveness over sets of questions."""

from __future__ import annotations

from typing import Iterable

from ..errors import DataError


def question_key(q) -> tuple:
    """Identity used for set metrics: the lowercased token sequence."""
    tokens = q.split() if isinstance(q, str) else q
    return tuple(str(t).lower() for t in tokens)


def _unique(qs: Iterable) -> set:
    return {question_key(q) for q in qs}


def diversity_strength(generated: Iterable, ground_truth: Iterable) -> float:
    """Unique generated questions as a percentage of unique ground-truth questions."""
    gt = _unique(ground_truth)
    if not gt:
        raise DataError("ground-truth question set is empty")
    return 100.0 * len(_unique(generated)) / len(gt)


def diversity_inventiveness(generated: Iterable, training_questions: Iterable) -> float:
    """Percentage of unique generated questions never seen in training."""
    gen = _unique(generated)
    if not gen:
        raise DataError("generated question set is empty")
    return 100.0 * len(gen - _unique(training_questions)) / len(gen)
