"""Vocabulary, tokenization, dataset loading and padded batching."""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
import torch

from .errors import DataError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")


class Vocabulary:
    """Immutable token <-> id mapping with fixed special ids 0-3."""

    def __init__(self, tokens: Sequence[str]):
        tokens = tuple(tokens)
        if tokens[:4] != SPECIALS:
            tokens = SPECIALS + tuple(t for t in tokens if t not in SPECIALS)
        if len(set(tokens)) != len(tokens):
            raise DataError("vocabulary tokens must be unique")
        self._tokens = tokens
        self._index = {t: i for i, t in enumerate(tokens)}

    @property
    def id_to_token(self) -> tuple:
        return self._tokens

    @property
    def token_to_id(self) -> dict:
        return dict(self._index)

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._tokens == other._tokens

    def __hash__(self):
        return hash(self._tokens)

    def __repr__(self):
        return f"Vocabulary(size={len(self)})"

    def words(self) -> set:
        return set(self._tokens[4:])

    def encode(self, text: str) -> list:
        return [BOS] + [self._index.get(t, UNK) for t in text.split()] + [EOS]

    def decode(self, ids: Iterable[int]) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == EOS:
                break
            if i in (PAD, BOS):
                continue
            out.append(self._tokens[i])
        return " ".join(out)

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(list(self._tokens)).encode()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(list(self._tokens)) + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(json.loads(Path(path).read_text()))


def build_vocabulary(texts: Iterable[str], min_count: int = 1) -> Vocabulary:
    """Frequency-ordered vocabulary over whitespace tokens.

    ``texts`` may be plain strings or dataset records, whose question and
    answer fields are both counted.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    seen_any = False
    for item in texts:
        seen_any = True
        if isinstance(item, dict):
            parts = (item["question"], item["answer"])
        else:
            parts = (item,)
        for p in parts:
            counts.update(p.split())
    if not seen_any or not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in SPECIALS),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(SPECIALS + tuple(kept))


def encode_text(s: str, vocab: Vocabulary) -> list:
    return vocab.encode(s)


def decode_text(ids: Iterable[int], vocab: Vocabulary) -> str:
    return vocab.decode(ids)


@dataclass
class QAExample:
    features: np.ndarray
    question: list
    answer: list
    category: int
    id: str = ""
    scene: Optional[dict] = None

    def __post_init__(self):
        if len(self.question) < 3 or len(self.answer) < 3:
            raise DataError(f"example {self.id!r}: question and answer need BOS, a token and EOS")


def read_jsonl(path) -> list:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    records = []
    with path.open() as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: {e}") from None
    return records


def to_examples(records: Sequence[dict], vocab: Vocabulary, categories: Sequence[str]) -> list:
    cat_index = {c: i for i, c in enumerate(categories)}
    out = []
    for r in records:
        for key in ("features", "question", "answer", "category"):
            if r.get(key) is None:
                raise DataError(f"record {r.get('id')!r} is missing {key!r}")
        if r["category"] not in cat_index:
            raise DataError(f"record {r.get('id')!r} has unknown category {r['category']!r}")
        out.append(QAExample(
            features=np.asarray(r["features"], dtype=np.float32),
            question=vocab.encode(r["question"]),
            answer=vocab.encode(r["answer"]),
            category=cat_index[r["category"]],
            id=r.get("id", ""),
            scene=r.get("scene"),
        ))
    return out


def split_train_val(records: Sequence, seed: int, val_fraction: float = 0.2) -> tuple:
    """Deterministic shuffled split; 80/20 by default."""
    idx = np.random.default_rng(seed).permutation(len(records))
    n_val = int(round(len(records) * val_fraction))
    val = sorted(idx[:n_val].tolist())
    train = sorted(idx[n_val:].tolist())
    return [records[i] for i in train], [records[i] for i in val]


@dataclass
class Batch:
    features: torch.Tensor          # (B, D)
    question: torch.Tensor          # (B, Lq), PAD on the right
    question_lengths: torch.Tensor  # (B,)
    answer: torch.Tensor            # (B, La)
    answer_lengths: torch.Tensor    # (B,)
    category_onehot: torch.Tensor   # (B, C)
    category: torch.Tensor          # (B,)

    def __len__(self):
        return self.features.shape[0]

    def to(self, dtype) -> "Batch":
        """Cast the real-valued fields (used for float64 gradient checks)."""
        return Batch(self.features.to(dtype), self.question, self.question_lengths,
                     self.answer, self.answer_lengths, self.category_onehot.to(dtype),
                     self.category)


def _pad(seqs: Sequence[Sequence[int]], width: Optional[int] = None) -> torch.Tensor:
    width = max(len(s) for s in seqs) if width is None else width
    out = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = torch.as_tensor(s, dtype=torch.long)
    return out


def collate(examples: Sequence[QAExample], num_categories: int,
            question_width: Optional[int] = None) -> Batch:
    cats = torch.tensor([e.category for e in examples], dtype=torch.long)
    return Batch(
        features=torch.from_numpy(np.stack([e.features for e in examples]).astype(np.float32)),
        question=_pad([e.question for e in examples], question_width),
        question_lengths=torch.tensor([len(e.question) for e in examples]),
        answer=_pad([e.answer for e in examples]),
        answer_lengths=torch.tensor([len(e.answer) for e in examples]),
        category_onehot=torch.nn.functional.one_hot(cats, num_categories).float(),
        category=cats,
    )


def make_batches(examples: Sequence[QAExample], batch_size: int, seed: int,
                 num_categories: int, epoch: int = 0, shuffle: bool = True) -> Iterator[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.arange(len(examples))
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(len(examples))
    for start in range(0, len(examples), batch_size):
        yield collate([examples[i] for i in order[start:start + batch_size]], num_categories)
