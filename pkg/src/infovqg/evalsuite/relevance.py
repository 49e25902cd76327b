"""Oracle relevance of generated questions against synthetic scenes."""

from __future__ import annotations

from typing import Optional, Sequence

from ..corpus import Vocabulary, collate, to_examples
from ..synthworld import Scene, WorldConfig, check_relevance


def relevance_from_questions(questions: Sequence, scenes: Sequence, categories: Sequence[str],
                             config: WorldConfig = WorldConfig()) -> tuple:
    """Percent answerable, and percent answerable in the requested category.

    ``questions[k]`` may be a single question or a list of questions for the
    k-th (scene, category) pair.
    """
    answerable = on_category = total = 0
    for qs, scene, cat in zip(questions, scenes, categories):
        if isinstance(scene, dict):
            scene = Scene.from_dict(scene)
        if isinstance(qs, str) or (qs and isinstance(qs[0], str)):
            qs = [qs]
        for q in qs:
            v = check_relevance(q, scene, config)
            total += 1
            answerable += v.answerable
            on_category += v.answerable and v.matched_category == cat
    if total == 0:
        return 0.0, 0.0
    return 100.0 * answerable / total, 100.0 * on_category / total


def generate_for_records(model, vocab: Vocabulary, records: Sequence[dict],
                         categories: Sequence[str], space: Optional[str] = None,
                         n: int = 1, seed: int = 0, batch_size: int = 256) -> list:
    """Questions (as strings) per record: one mean decode if ``n == 1``, else ``n`` samples."""
    space = space or model.variant.inference_space
    examples = to_examples(records, vocab, categories)
    out = []
    for start in range(0, len(examples), batch_size):
        batch = collate(examples[start:start + batch_size], model.dims.num_categories)
        if n == 1:
            out.extend([vocab.decode(q)] for q in model.decode_mean(batch, space))
        else:
            rows = model.sample(batch, n, seed + start, space)
            out.extend([vocab.decode(q) for q in row] for row in rows)
    return out


def relevance_rates(model, vocab: Vocabulary, records: Sequence[dict], categories: Sequence[str],
                    n_per: int = 1, space: Optional[str] = None,
                    world: WorldConfig = WorldConfig(), seed: int = 0) -> tuple:
    """Decode questions for each (scene, requested category) record and score them."""
    questions = generate_for_records(model, vocab, records, categories, space, n_per, seed)
    return relevance_from_questions(questions, [r["scene"] for r in records],
                                    [r["category"] for r in records], world)
