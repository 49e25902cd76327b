"""Per-checkpoint metric reports shaped like the language/MI/relevance and diversity tables."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Optional, Sequence

from ..corpus import to_examples
from ..synthworld import WorldConfig
from .diversity import diversity_inventiveness, diversity_strength, question_key
from .language import bleu_n, cider
from .probe import ProbeConfig, extract_codes, probe_accuracy
from .relevance import generate_for_records, relevance_from_questions

TABLE_COLUMNS = ("variant", "space", "bleu1", "bleu2", "bleu3", "bleu4", "cider",
                 "probe_answer_acc", "probe_category_acc",
                 "relevance_image_pct", "relevance_category_pct")
DIVERSITY_COLUMNS = ("variant", "space", "category", "strength", "inventiveness")


def language_and_relevance(ckpt, records: Sequence[dict], space: str,
                           world: WorldConfig = WorldConfig()) -> tuple:
    """Mean-decode one question per record; returns (metrics, generated questions)."""
    model = ckpt.model()
    gen = generate_for_records(model, ckpt.vocab, records, ckpt.categories, space)
    cands = [g[0] for g in gen]
    refs = [r["question"] for r in records]
    metrics = {f"bleu{n}": bleu_n(cands, refs, n) for n in range(1, 5)}
    metrics["cider"] = cider(cands, refs)
    img, cat = relevance_from_questions(cands, [r["scene"] for r in records],
                                        [r["category"] for r in records], world)
    metrics["relevance_image_pct"] = img
    metrics["relevance_category_pct"] = cat
    return metrics, cands


def category_diversity(ckpt, records: Sequence[dict], training_questions: Sequence[str],
                       space: Optional[str] = None, n_draws: int = 20, seed: int = 0) -> dict:
    """Strength and inventiveness per requested category from sampled latents."""
    model = ckpt.model()
    gen = generate_for_records(model, ckpt.vocab, records, ckpt.categories, space, n_draws, seed)
    by_cat_gen, by_cat_gt = defaultdict(list), defaultdict(list)
    for rec, qs in zip(records, gen):
        by_cat_gen[rec["category"]].extend(qs)
        by_cat_gt[rec["category"]].append(rec["question"])
    train_keys = {question_key(q) for q in training_questions}
    return {c: {"strength": diversity_strength(by_cat_gen[c], by_cat_gt[c]),
                "inventiveness": diversity_inventiveness(by_cat_gen[c], train_keys)}
            for c in ckpt.categories if by_cat_gt.get(c)}


def probe_space(ckpt, train_records: Sequence[dict], test_records: Sequence[dict], space: str,
                config: ProbeConfig = ProbeConfig()) -> dict:
    """Category and answer probe accuracies for one latent space."""
    tr = to_examples(train_records, ckpt.vocab, ckpt.categories)
    te = to_examples(test_records, ckpt.vocab, ckpt.categories)
    x_tr, c_tr, a_tr = extract_codes(ckpt, tr, space)
    x_te, c_te, a_te = extract_codes(ckpt, te, space)
    cat = probe_accuracy(x_tr, c_tr, x_te, c_te, config, num_classes=len(ckpt.categories))
    ans = probe_accuracy(x_tr, a_tr, x_te, a_te, config)
    return {"probe_category_acc": cat.accuracy, "probe_category_chance": cat.chance,
            "probe_answer_acc": ans.accuracy, "probe_answer_chance": ans.chance}


def evaluate_checkpoint(ckpt, test_records: Sequence[dict], training_questions: Sequence[str],
                        world: WorldConfig = WorldConfig(), spaces: Optional[Sequence[str]] = None,
                        n_draws: int = 20, seed: int = 0) -> dict:
    """Language, relevance and diversity metrics for each requested space."""
    spaces = list(spaces or ckpt.variant.spaces)
    out = {"variant": ckpt.variant.name, "spaces": {}}
    for space in spaces:
        metrics, questions = language_and_relevance(ckpt, test_records, space, world)
        metrics["diversity"] = category_diversity(ckpt, test_records, training_questions,
                                                  space, n_draws, seed)
        out["spaces"][space] = metrics
        out.setdefault("questions", {})[space] = questions
    return out


def table_rows(reports: Sequence[dict]) -> list:
    """Flatten report dicts into one row per (variant, space)."""
    rows = []
    for rep in reports:
        for space, m in rep["spaces"].items():
            rows.append({c: m.get(c, "") for c in TABLE_COLUMNS} | {"variant": rep["variant"],
                                                                    "space": space})
    return rows


def diversity_rows(reports: Sequence[dict]) -> list:
    rows = []
    for rep in reports:
        for space, m in rep["spaces"].items():
            for cat, d in m.get("diversity", {}).items():
                rows.append({"variant": rep["variant"], "space": space, "category": cat, **d})
    return rows


def write_csv(rows: Sequence[dict], columns: Sequence[str], path) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()})


def merge_reports(paths: Sequence) -> list:
    """Load per-variant JSON reports; probe results are merged into matching spaces."""
    merged = {}
    for p in paths:
        rep = json.loads(Path(p).read_text())
        entry = merged.setdefault(rep["variant"], {"variant": rep["variant"], "spaces": {}})
        for space, m in rep.get("spaces", {}).items():
            entry["spaces"].setdefault(space, {}).update(m)
    return list(merged.values())
